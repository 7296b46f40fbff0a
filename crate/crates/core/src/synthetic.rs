//! Seeded synthetic domain-adaptation problems with a known structured
//! dictionary.
//!
//! Each sample is `U_d·b + W_c·a + ξ`: a domain part shared by all samples of
//! a domain, a class part drawn around a class-specific mean, and Gaussian
//! noise. The target domain dictionary is the source one rotated by a fixed
//! angle, which is the domain shift.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::solver::LabeledTensorSet;
use crate::tensor::{stack_last_all, DenseTensor, FactorMatrix, TensorDictionary};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub source_per_class: usize,
    pub target_per_class: usize,
    /// Standard deviation of the additive noise.
    pub noise: f64,
    /// Rotation angle (radians) from the source to the target dictionary.
    pub shift: f64,
    /// Minimum distance between class code means, in units of the
    /// within-class standard deviation `√(E‖a − μ_c‖²) = √ΠJ`.
    pub separation: f64,
    /// Scale of the shared domain code mean.
    pub domain_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            class_count: 3,
            dims: vec![8, 8],
            ranks: vec![3, 3],
            source_per_class: 30,
            target_per_class: 30,
            noise: 0.05,
            shift: 0.5,
            separation: 5.0,
            domain_scale: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleSpec(msg));
        if self.class_count == 0 {
            return bad("class_count must be positive".into());
        }
        if self.dims.is_empty() || self.dims.len() != self.ranks.len() {
            return bad(format!("dims {:?} and ranks {:?} must be nonempty and equal length", self.dims, self.ranks));
        }
        for (m, (&i, &j)) in self.dims.iter().zip(&self.ranks).enumerate() {
            if j == 0 || j > i {
                return bad(format!("rank {j} on mode {m} must lie in 1..={i}"));
            }
            if self.shift != 0.0 && 2 * j > i {
                return bad(format!("a domain shift on mode {m} needs 2·rank ≤ extent, got {j} and {i}"));
            }
        }
        let budget: usize = self.dims.iter().zip(&self.ranks).map(|(i, j)| i / j).product();
        if self.class_count > budget {
            return bad(format!(
                "{} classes need disjoint subspaces but dims {:?} with ranks {:?} hold only {budget}",
                self.class_count, self.dims, self.ranks
            ));
        }
        if self.source_per_class == 0 {
            return bad("source_per_class must be positive".into());
        }
        for (name, v) in [
            ("noise", self.noise),
            ("shift", self.shift),
            ("separation", self.separation),
            ("domain_scale", self.domain_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Generated source and target sets plus the generating dictionaries.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub source: LabeledTensorSet,
    pub target: LabeledTensorSet,
    /// True target labels, `1..=C`.
    pub truth: Vec<usize>,
    pub u_source: TensorDictionary,
    pub u_target: TensorDictionary,
    pub w_class: Vec<TensorDictionary>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let qr = gaussian(rng, n, n).qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

fn gaussian_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>, sd: f64) -> DenseTensor {
    DenseTensor::from_fn(dims, |_| sd * rng.sample::<f64, _>(StandardNormal))
}

fn factor(m: DMatrix<f64>) -> FactorMatrix {
    FactorMatrix::new(m).expect("columns come from an orthogonal matrix")
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let modes = spec.dims.len();

    let mut w_factors = vec![Vec::with_capacity(modes); spec.class_count];
    let mut us_factors = Vec::with_capacity(modes);
    let mut ut_factors = Vec::with_capacity(modes);
    // Class c takes column window `digit_m(c)` of a random basis on each mode,
    // with digits in mixed radix ⌊I_m/J_m⌋. Distinct classes differ on at
    // least one mode, so their Kronecker subspaces are orthogonal.
    let mut place = 1;
    for (&i, &j) in spec.dims.iter().zip(&spec.ranks) {
        let basis = random_orthogonal(&mut rng, i);
        let windows = i / j;
        for (c, w) in w_factors.iter_mut().enumerate() {
            let start = (c / place) % windows * j;
            w.push(factor(basis.columns(start, j).into_owned()));
        }
        place *= windows;
        let frame = random_orthogonal(&mut rng, i);
        let us = frame.columns(0, j).into_owned();
        let ut = if spec.shift == 0.0 {
            us.clone()
        } else {
            &us * spec.shift.cos() + frame.columns(j, j) * spec.shift.sin()
        };
        us_factors.push(factor(us));
        ut_factors.push(factor(ut));
    }
    let w_class: Vec<TensorDictionary> = w_factors.into_iter().map(TensorDictionary::new).collect();
    let u_source = TensorDictionary::new(us_factors);
    let u_target = TensorDictionary::new(ut_factors);

    let code_dims = spec.ranks.clone();
    let atoms: usize = code_dims.iter().product();
    let mut class_means: Vec<DenseTensor> = (0..spec.class_count)
        .map(|_| gaussian_tensor(&mut rng, code_dims.clone(), 1.0))
        .collect();
    let mut min_gap = f64::INFINITY;
    for a in 0..spec.class_count {
        for b in a + 1..spec.class_count {
            min_gap = min_gap.min(class_means[a].sub(&class_means[b])?.frobenius_norm());
        }
    }
    let wanted = spec.separation * (atoms as f64).sqrt();
    if min_gap.is_finite() && min_gap > 0.0 {
        let k = wanted / min_gap;
        class_means.iter_mut().for_each(|m| *m = m.scale(k));
    } else {
        let norm = class_means[0].frobenius_norm().max(f64::MIN_POSITIVE);
        class_means[0] = class_means[0].scale(wanted / norm);
    }
    let domain_mean = gaussian_tensor(&mut rng, code_dims.clone(), spec.domain_scale);

    let draw = |rng: &mut ChaCha8Rng, u: &TensorDictionary, c: usize| -> Result<DenseTensor> {
        let b = domain_mean.add(&gaussian_tensor(rng, code_dims.clone(), 1.0))?;
        let a = class_means[c].add(&gaussian_tensor(rng, code_dims.clone(), 1.0))?;
        let with_unit = |t: &DenseTensor| t.with_unit_last();
        let clean = u.decode(&with_unit(&b))?.add(&w_class[c].decode(&with_unit(&a))?)?;
        clean.add(&gaussian_tensor(rng, clean.dims().to_vec(), spec.noise))
    };

    let mut source_parts = Vec::new();
    let mut source_labels = Vec::new();
    for c in 0..spec.class_count {
        for _ in 0..spec.source_per_class {
            source_parts.push(draw(&mut rng, &u_source, c)?);
            source_labels.push(c + 1);
        }
    }
    let mut target_parts = Vec::new();
    let mut truth = Vec::new();
    for c in 0..spec.class_count {
        for _ in 0..spec.target_per_class {
            target_parts.push(draw(&mut rng, &u_target, c)?);
            truth.push(c + 1);
        }
    }
    let mut order: Vec<usize> = (0..target_parts.len()).collect();
    order.shuffle(&mut rng);
    let target_parts: Vec<DenseTensor> = order.iter().map(|&k| target_parts[k].clone()).collect();
    let truth: Vec<usize> = order.iter().map(|&k| truth[k]).collect();

    let stack = |parts: &[DenseTensor]| -> Result<DenseTensor> {
        if parts.is_empty() {
            let mut dims = spec.dims.clone();
            dims.push(0);
            Ok(DenseTensor::zeros(dims))
        } else {
            stack_last_all(parts)
        }
    };
    let source = LabeledTensorSet::new(stack(&source_parts)?, Some(source_labels), spec.class_count)?;
    let target = LabeledTensorSet::unlabeled(stack(&target_parts)?, spec.class_count)?;
    Ok(SyntheticData { source, target, truth, u_source, u_target, w_class })
}
