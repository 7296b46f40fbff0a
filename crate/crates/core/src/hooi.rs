//! Best low multilinear-rank Tucker approximation by higher-order orthogonal
//! iteration (HOOI), initialized with the truncated HOSVD.
//!
//! Both routines work on the Gram matrix `A·Aᵀ` of each mode flattening, which
//! stays `I_m × I_m` however many samples are stacked in the other modes.
//! With `skip_last` the final (sample) mode is carried through uncompressed.

use nalgebra::DMatrix;

use crate::eigen::eig_sym_topk;
use crate::error::{Error, Result};
use crate::tensor::{multi_product_leading, multi_product_leading_skip, DenseTensor, FactorMatrix, TensorDictionary};

pub const DEFAULT_MAX_SWEEPS: usize = 20;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerResult {
    /// `J_1 × … × J_M` core, with the sample mode appended when it was skipped.
    pub core: DenseTensor,
    pub factors: Vec<FactorMatrix>,
    /// Squared core norm after initialization and after every sweep.
    pub fit_history: Vec<f64>,
}

impl TuckerResult {
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        self.dictionary().decode(&self.core)
    }

    pub fn dictionary(&self) -> TensorDictionary {
        TensorDictionary::new(self.factors.clone())
    }
}

/// Gram matrix of the mode-`mode` flattening, exactly symmetric.
pub fn mode_gram(t: &DenseTensor, mode: usize) -> Result<DMatrix<f64>> {
    if mode >= t.order() {
        return Err(Error::ModeOutOfRange { mode, order: t.order() });
    }
    let dims = t.dims();
    let left: usize = dims[..mode].iter().product();
    let extent = dims[mode];
    let right: usize = dims[mode + 1..].iter().product();
    let v = t.values();
    let mut gram = DMatrix::zeros(extent, extent);
    for l in 0..left {
        let block = &v[l * extent * right..(l + 1) * extent * right];
        for i in 0..extent {
            let ri = &block[i * right..(i + 1) * right];
            for j in i..extent {
                let rj = &block[j * right..(j + 1) * right];
                gram[(i, j)] += ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    for i in 0..extent {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    Ok(gram)
}

fn compressed_modes(t: &DenseTensor, ranks: &[usize], skip_last: bool) -> Result<usize> {
    let modes = if skip_last { t.order() - 1 } else { t.order() };
    if modes == 0 {
        return Err(Error::shape("no modes left to compress"));
    }
    if ranks.len() != modes {
        return Err(Error::shape(format!(
            "{} ranks given for {} compressed modes",
            ranks.len(),
            modes
        )));
    }
    for (mode, (&rank, &extent)) in ranks.iter().zip(t.dims()).enumerate() {
        if rank == 0 || rank > extent {
            return Err(Error::RankTooLarge { mode, rank, extent });
        }
    }
    Ok(modes)
}

fn transposes(factors: &[FactorMatrix]) -> Vec<DMatrix<f64>> {
    factors.iter().map(FactorMatrix::transpose).collect()
}

/// Truncated HOSVD: per mode, the top eigenvectors of the flattening's Gram matrix.
pub fn hosvd(t: &DenseTensor, ranks: &[usize], skip_last: bool) -> Result<TuckerResult> {
    let modes = compressed_modes(t, ranks, skip_last)?;
    let factors = (0..modes)
        .map(|m| eig_sym_topk(&mode_gram(t, m)?, ranks[m]).map(|(_, v)| v))
        .collect::<Result<Vec<_>>>()?;
    let core = multi_product_leading(t, &transposes(&factors))?;
    let fit = core.frobenius_norm_sq();
    Ok(TuckerResult { core, factors, fit_history: vec![fit] })
}

/// HOOI refinement of the HOSVD initializer.
///
/// Each sweep replaces every factor in turn by the top eigenvectors of the
/// Gram matrix of the tensor projected on all other modes. Iteration stops
/// once the relative change of the squared core norm drops below `tol`.
pub fn hooi(
    t: &DenseTensor,
    ranks: &[usize],
    skip_last: bool,
    max_sweeps: usize,
    tol: f64,
) -> Result<TuckerResult> {
    if max_sweeps == 0 {
        return Err(Error::Hyperparam("max_sweeps must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Hyperparam(format!("tol must be positive, got {tol}")));
    }
    let init = hosvd(t, ranks, skip_last)?;
    let modes = init.factors.len();
    let mut factors = init.factors;
    let mut history = init.fit_history;
    let mut core = init.core;

    for _ in 0..max_sweeps {
        for m in 0..modes {
            let partial = multi_product_leading_skip(t, &transposes(&factors), m)?;
            factors[m] = eig_sym_topk(&mode_gram(&partial, m)?, ranks[m])?.1;
        }
        core = multi_product_leading(t, &transposes(&factors))?;
        let fit = core.frobenius_norm_sq();
        let prev = *history.last().unwrap();
        history.push(fit);
        if (fit - prev).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(TuckerResult { core, factors, fit_history: history })
}
