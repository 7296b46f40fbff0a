//! Block updates of the alternating optimizer.

use nalgebra::DMatrix;

use crate::eigen::eig_sym_topk;
use crate::error::{Error, Result};
use crate::hooi::{hooi, mode_gram};
use crate::tensor::{
    mode_flatten, mode_product, multi_product_leading, multi_product_leading_skip, stack_last,
    DenseTensor, FactorMatrix, TensorDictionary,
};

use super::{
    fit_dictionary, refresh_means, split_last, stack_groups, ClassUpdateRule, Codes,
    LabeledTensorSet, MeanPairing, SdtdlModel,
};

/// Squared norm of the projection of `stack` onto `dict` (its retained energy).
fn retained(dict: &TensorDictionary, stack: &DenseTensor) -> Result<f64> {
    Ok(dict.encode(stack)?.frobenius_norm_sq())
}

/// Fits a domain dictionary to stacked residuals. The incumbent dictionary is
/// kept when HOOI from its HOSVD start lands on a worse local optimum.
fn refit_domain(
    stack: &DenseTensor,
    incumbent: &TensorDictionary,
    model: &SdtdlModel,
) -> Result<TensorDictionary> {
    let fresh = fit_dictionary(stack, &model.hyper)?;
    if retained(&fresh, stack)? < retained(incumbent, stack)? {
        Ok(incumbent.clone())
    } else {
        Ok(fresh)
    }
}

fn domain_update(
    groups: &[DenseTensor],
    class_codes: &[DenseTensor],
    incumbent: &TensorDictionary,
    model: &SdtdlModel,
) -> Result<(TensorDictionary, Vec<DenseTensor>)> {
    let residuals = groups
        .iter()
        .zip(&model.w_class)
        .zip(class_codes)
        .map(|((x, w), a)| x.sub(&w.decode(a)?))
        .collect::<Result<Vec<_>>>()?;
    let stacked = stack_groups(&residuals)?;
    let dict = refit_domain(&stacked, incumbent, model)?;
    let sizes: Vec<usize> = groups.iter().map(DenseTensor::last_extent).collect();
    let codes = split_last(&dict.encode(&stacked)?, &sizes);
    Ok((dict, codes))
}

/// Source-dictionary update: the class contributions are removed from every
/// source sample, all classes are stacked and the best rank-`J` Tucker
/// approximation of that residual gives `U_s` and the domain codes.
pub fn update_domain_source(
    source: &LabeledTensorSet,
    model: &SdtdlModel,
    codes: &Codes,
) -> Result<(TensorDictionary, Vec<DenseTensor>)> {
    domain_update(&source.class_tensors()?, &codes.source_class, &model.u_source, model)
}

/// Target-dictionary update on the selected target samples. `θ` scales this
/// subproblem uniformly and so does not change its minimizer.
pub fn update_domain_target(
    target_selected: &LabeledTensorSet,
    model: &SdtdlModel,
    codes: &Codes,
) -> Result<(TensorDictionary, Vec<DenseTensor>)> {
    domain_update(
        &target_selected.class_tensors()?,
        &codes.target_class,
        &model.u_target,
        model,
    )
}

/// Sample-mode mixing matrix of the class-dictionary eigenproblem:
///
/// ```text
/// [ (1−√λ)·I_ns         (√λ/n_s)·1·1ᵀ    ]
/// [ (√λ/n_t)·1·1ᵀ       (√θ−√λ)·I_nt     ]
/// ```
pub fn build_phi(n_s: usize, n_t: usize, theta: f64, lambda: f64) -> Result<DMatrix<f64>> {
    if n_s == 0 || n_t == 0 {
        return Err(Error::shape(format!("class block sizes must be positive, got ({n_s}, {n_t})")));
    }
    let sl = lambda.sqrt();
    let n = n_s + n_t;
    Ok(DMatrix::from_fn(n, n, |i, j| match (i < n_s, j < n_s) {
        (true, true) => if i == j { 1.0 - sl } else { 0.0 },
        (true, false) => sl / n_s as f64,
        (false, true) => sl / n_t as f64,
        (false, false) => if i == j { theta.sqrt() - sl } else { 0.0 },
    }))
}

/// Fallback for a class without selected target samples: `(1−√λ)·I_ns`.
pub fn build_phi_source_only(n_s: usize, lambda: f64) -> DMatrix<f64> {
    DMatrix::identity(n_s, n_s) * (1.0 - lambda.sqrt())
}

/// Exact sample-mode quadratic form `Q` of the class objective.
///
/// With codes `c_i = ⟦z_i; Wᵀ⟧` the class objective equals
/// `const − Σ_ij Q_ij ⟨c_i, c_j⟩` where `Q = D − λ·KᵀK`, `D` weights source
/// samples by 1 and target samples by `θ`, and `K` maps codes to their
/// deviations from the paired class means.
pub fn sample_quadratic_form(
    n_s: usize,
    n_t: usize,
    theta: f64,
    lambda: f64,
    pairing: MeanPairing,
) -> DMatrix<f64> {
    let n = n_s + n_t;
    let is_src = |i: usize| i < n_s;
    let k = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { 1.0 } else { 0.0 };
        match (pairing, is_src(i), is_src(j)) {
            (MeanPairing::Cross, true, false) => -1.0 / n_t as f64,
            (MeanPairing::Cross, false, true) => -1.0 / n_s as f64,
            (MeanPairing::SameDomain, true, true) => diag - 1.0 / n_s as f64,
            (MeanPairing::SameDomain, false, false) => diag - 1.0 / n_t as f64,
            _ => diag,
        }
    });
    // the cross term vanishes when one side is empty
    let k = if pairing == MeanPairing::Cross && (n_s == 0 || n_t == 0) {
        DMatrix::zeros(n, n)
    } else {
        k
    };
    let d = DMatrix::from_fn(n, n, |i, j| match (i == j, is_src(i)) {
        (true, true) => 1.0,
        (true, false) => theta,
        _ => 0.0,
    });
    d - (k.transpose() * k) * lambda
}

/// Residual tensors of one class and the sample-mode mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSubproblem {
    /// Source residuals `X^c − ⟦A0^c; U_s⟧`.
    pub x_tilde: DenseTensor,
    /// Selected target residuals `Y^c − ⟦B0^c; U_t⟧`.
    pub y_tilde: DenseTensor,
    pub phi: DMatrix<f64>,
}

impl ClassSubproblem {
    pub fn new(x_tilde: DenseTensor, y_tilde: DenseTensor, theta: f64, lambda: f64) -> Result<Self> {
        let (n_s, n_t) = (x_tilde.last_extent(), y_tilde.last_extent());
        let phi = if n_t == 0 {
            build_phi_source_only(n_s, lambda)
        } else {
            build_phi(n_s, n_t, theta, lambda)?
        };
        Ok(Self { x_tilde, y_tilde, phi })
    }

    /// The stacked residual `[X̃ | Ỹ]`.
    pub fn z_tilde(&self) -> Result<DenseTensor> {
        stack_last(&self.x_tilde, &self.y_tilde)
    }
}

fn codes_for(w: &TensorDictionary, sub_x: &DenseTensor, sub_y: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    Ok((w.encode(sub_x)?, w.encode(sub_y)?))
}

/// Class-dictionary update through the `Φ`-mixed eigenproblem.
///
/// Each sweep sets `W^(m)` to the top `J_m` eigenvectors of `G^(m) G^(m)ᵀ`,
/// where `G` is `[X̃ | Ỹ]` projected by the other factors and mixed by `Φ` in
/// the sample mode. This is HOOI on `[X̃ | Ỹ] ×_{M+1} Φ`. Codes are then the
/// projections of the residuals onto the new dictionary.
pub fn update_class_dict(
    sub: &ClassSubproblem,
    ranks: &[usize],
    inner_sweeps: usize,
    tol: f64,
) -> Result<(TensorDictionary, DenseTensor, DenseTensor)> {
    let z = sub.z_tilde()?;
    let n = z.last_extent();
    if sub.phi.shape() != (n, n) {
        return Err(Error::shape(format!(
            "Φ is {:?} but the class has {} samples",
            sub.phi.shape(),
            n
        )));
    }
    let mixed = mode_product(&z, &sub.phi, z.order() - 1)?;
    let w = hooi(&mixed, ranks, true, inner_sweeps, tol)?.dictionary();
    let (a, b) = codes_for(&w, &sub.x_tilde, &sub.y_tilde)?;
    Ok((w, a, b))
}

/// Value `Σ_ij Q_ij ⟨c_i, c_j⟩` of the codes `c` (sample mode last).
fn quadratic_value(c: &DenseTensor, q: &DMatrix<f64>) -> Result<f64> {
    let qc = mode_product(c, q, c.order() - 1)?;
    Ok(c.values().iter().zip(qc.values()).map(|(a, b)| a * b).sum())
}

/// Class-dictionary update maximizing the exact quadratic form `q` from
/// [`sample_quadratic_form`] by per-mode eigenproblems. Starts from the HOSVD
/// of the residuals weighted by `√diag(q)` clipped at zero.
pub fn update_class_dict_quadratic(
    x_tilde: &DenseTensor,
    y_tilde: &DenseTensor,
    q: &DMatrix<f64>,
    ranks: &[usize],
    inner_sweeps: usize,
    tol: f64,
) -> Result<(TensorDictionary, DenseTensor, DenseTensor)> {
    let z = stack_last(x_tilde, y_tilde)?;
    let last = z.order() - 1;
    let n = z.last_extent();
    if q.shape() != (n, n) {
        return Err(Error::shape(format!("quadratic form is {:?} for {} samples", q.shape(), n)));
    }
    let weights = DMatrix::from_fn(n, n, |i, j| if i == j { q[(i, i)].max(0.0).sqrt() } else { 0.0 });
    let weighted = mode_product(&z, &weights, last)?;
    let mut factors = (0..last)
        .map(|m| eig_sym_topk(&mode_gram(&weighted, m)?, ranks[m]).map(|(_, v)| v))
        .collect::<Result<Vec<FactorMatrix>>>()?;

    let transposes = |f: &[FactorMatrix]| f.iter().map(FactorMatrix::transpose).collect::<Vec<_>>();
    let mut value = quadratic_value(&multi_product_leading(&z, &transposes(&factors))?, q)?;
    for _ in 0..inner_sweeps {
        for m in 0..last {
            let h = multi_product_leading_skip(&z, &transposes(&factors), m)?;
            let hq = mode_product(&h, q, last)?;
            let s = mode_flatten(&h, m)? * mode_flatten(&hq, m)?.transpose();
            let s = (&s + s.transpose()) * 0.5;
            factors[m] = eig_sym_topk(&s, ranks[m])?.1;
        }
        let next = quadratic_value(&multi_product_leading(&z, &transposes(&factors))?, q)?;
        let done = (next - value).abs() <= tol * value.abs().max(f64::MIN_POSITIVE);
        value = next;
        if done {
            break;
        }
    }
    let w = TensorDictionary::new(factors);
    let (a, b) = codes_for(&w, x_tilde, y_tilde)?;
    Ok((w, a, b))
}

/// One full block pass with frozen pseudo-labels: every class dictionary in
/// ascending class order, then `U_s`, then `U_t`. Codes and the stored class
/// means are refreshed along the way.
pub fn block_pass(
    model: &mut SdtdlModel,
    source: &LabeledTensorSet,
    target_selected: &LabeledTensorSet,
    codes: &mut Codes,
) -> Result<()> {
    let xs = source.class_tensors()?;
    let ys = target_selected.class_tensors()?;
    let hyper = model.hyper.clone();
    for c in 0..model.class_count() {
        let x_tilde = xs[c].sub(&model.u_source.decode(&codes.source_domain[c])?)?;
        let y_tilde = ys[c].sub(&model.u_target.decode(&codes.target_domain[c])?)?;
        let (w, a, b) = match hyper.class_rule {
            ClassUpdateRule::Phi => {
                let sub = ClassSubproblem::new(x_tilde, y_tilde, hyper.theta, hyper.lambda)?;
                update_class_dict(&sub, &hyper.ranks, hyper.inner_sweeps, hyper.tol)?
            }
            ClassUpdateRule::ExactQuadratic => {
                let q = sample_quadratic_form(
                    x_tilde.last_extent(),
                    y_tilde.last_extent(),
                    hyper.theta,
                    hyper.lambda,
                    hyper.pairing,
                );
                update_class_dict_quadratic(&x_tilde, &y_tilde, &q, &hyper.ranks, hyper.inner_sweeps, hyper.tol)?
            }
        };
        model.w_class[c] = w;
        codes.source_class[c] = a;
        codes.target_class[c] = b;
    }
    let (s, t) = refresh_means(model, codes)?;
    model.class_means_source = s;
    model.class_means_target = t;

    let (u_s, a0) = update_domain_source(source, model, codes)?;
    model.u_source = u_s;
    codes.source_domain = a0;

    let (u_t, b0) = update_domain_target(target_selected, model, codes)?;
    model.u_target = u_t;
    codes.target_domain = b0;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_identity_case() {
        let phi = build_phi(1, 1, 1.0, 0.0).unwrap();
        assert_eq!(phi, DMatrix::identity(2, 2));
    }

    #[test]
    fn phi_hand_evaluated() {
        let phi = build_phi(2, 1, 1.0, 1.0).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.5, 0.0, 0.0, 0.5, 1.0, 1.0, 0.0]);
        assert!((phi - expected).amax() <= 1e-15);
        let phi = build_phi(1, 1, 4.0, 0.25).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 1.5]);
        assert!((phi - expected).amax() <= 1e-15);
    }

    #[test]
    fn phi_rejects_empty_blocks() {
        assert!(build_phi(0, 2, 1.0, 0.5).is_err());
        assert!(build_phi(2, 0, 1.0, 0.5).is_err());
        assert_eq!(build_phi_source_only(2, 0.25), DMatrix::identity(2, 2) * 0.5);
    }

    #[test]
    fn quadratic_form_without_discriminant_is_weighting() {
        let q = sample_quadratic_form(2, 3, 4.0, 0.0, MeanPairing::Cross);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 4.0, 4.0, 4.0]));
        assert_eq!(q, d);
        assert!((q.clone() - q.transpose()).amax() == 0.0);
    }

    #[test]
    fn empty_target_falls_back_to_source_block() {
        let x = DenseTensor::from_fn(vec![2, 2, 3], |i| (i[0] + i[1] * 2 + i[2] * 3) as f64 * 0.1 + 0.2);
        let y = DenseTensor::zeros(vec![2, 2, 0]);
        let sub = ClassSubproblem::new(x, y, 2.0, 0.25).unwrap();
        assert_eq!(sub.phi, DMatrix::identity(3, 3) * 0.5);
        let (w, a, b) = update_class_dict(&sub, &[1, 1], 5, 1e-9).unwrap();
        assert_eq!(w.ranks(), vec![1, 1]);
        assert_eq!(a.dims(), &[1, 1, 3]);
        assert_eq!(b.dims(), &[1, 1, 0]);
    }
}
