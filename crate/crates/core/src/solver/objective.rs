use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

use super::{Codes, LabeledTensorSet, MeanPairing, SdtdlModel};

/// Mean code over the trailing sample mode.
pub fn class_means(codes: &DenseTensor) -> Result<DenseTensor> {
    if codes.last_extent() == 0 {
        return Err(Error::EmptyClass(0));
    }
    codes.mean_last()
}

/// Squared distance between two class-conditional code means.
pub fn mmd_term(mean_a: &DenseTensor, mean_b: &DenseTensor) -> Result<f64> {
    Ok(mean_a.sub(mean_b)?.frobenius_norm_sq())
}

/// `‖codes − mean‖²` with the mean replicated along the sample mode.
fn scatter_about(codes: &DenseTensor, mean: &DenseTensor) -> Result<f64> {
    Ok(codes.sub_broadcast_last(mean)?.frobenius_norm_sq())
}

/// Discriminant term of one class; zero for a domain without samples.
pub(crate) fn discriminant(a: &DenseTensor, b: &DenseTensor, pairing: MeanPairing) -> Result<f64> {
    let (ns, nt) = (a.last_extent(), b.last_extent());
    match pairing {
        MeanPairing::Cross => {
            if ns == 0 || nt == 0 {
                return Ok(0.0);
            }
            let (ma, mb) = (a.mean_last()?, b.mean_last()?);
            Ok(scatter_about(a, &mb)? + scatter_about(b, &ma)?)
        }
        MeanPairing::SameDomain => {
            let mut total = 0.0;
            if ns > 0 {
                total += scatter_about(a, &a.mean_last()?)?;
            }
            if nt > 0 {
                total += scatter_about(b, &b.mean_last()?)?;
            }
            Ok(total)
        }
    }
}

fn check_codes(codes: &Codes, classes: usize) -> Result<()> {
    let lens = [
        codes.source_domain.len(),
        codes.source_class.len(),
        codes.target_domain.len(),
        codes.target_class.len(),
    ];
    if lens.iter().any(|&l| l != classes) {
        return Err(Error::shape(format!("codes cover {lens:?} classes, expected {classes}")));
    }
    Ok(())
}

/// Full training objective: per class, source fidelity plus `θ`-weighted
/// target fidelity plus `λ` times the discriminant term. Class means are taken
/// from `codes`, not from the model.
pub fn objective(
    model: &SdtdlModel,
    source: &LabeledTensorSet,
    target_selected: &LabeledTensorSet,
    codes: &Codes,
) -> Result<f64> {
    let hyper = &model.hyper;
    check_codes(codes, model.class_count())?;
    let xs = source.class_tensors()?;
    let ys = target_selected.class_tensors()?;
    let mut total = 0.0;
    for c in 0..model.class_count() {
        let w = &model.w_class[c];
        let source_fit = xs[c]
            .sub(&model.u_source.decode(&codes.source_domain[c])?)?
            .sub(&w.decode(&codes.source_class[c])?)?;
        total += source_fit.frobenius_norm_sq();
        if ys[c].last_extent() > 0 {
            let target_fit = ys[c]
                .sub(&model.u_target.decode(&codes.target_domain[c])?)?
                .sub(&w.decode(&codes.target_class[c])?)?;
            total += hyper.theta * target_fit.frobenius_norm_sq();
        }
        total += hyper.lambda
            * discriminant(&codes.source_class[c], &codes.target_class[c], hyper.pairing)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_mean_is_the_sample() {
        let t = DenseTensor::from_fn(vec![2, 2, 1], |i| (i[0] + 2 * i[1]) as f64);
        let m = class_means(&t).unwrap();
        assert_eq!(m, t.slice_last(0));
    }

    #[test]
    fn opposite_samples_average_to_zero() {
        let a = DenseTensor::from_fn(vec![3, 1], |i| i[0] as f64 + 1.0);
        let both = crate::tensor::stack_last(&a, &a.scale(-1.0)).unwrap();
        assert_eq!(class_means(&both).unwrap().frobenius_norm(), 0.0);
        assert!(class_means(&DenseTensor::zeros(vec![3, 0])).is_err());
    }

    #[test]
    fn mmd_basics() {
        let a = DenseTensor::from_fn(vec![2, 2], |i| (i[0] * 2 + i[1]) as f64 - 1.5);
        assert_eq!(mmd_term(&a, &a).unwrap(), 0.0);
        let zero = DenseTensor::zeros(vec![2, 2]);
        assert_eq!(mmd_term(&a, &zero).unwrap(), a.frobenius_norm_sq());
    }

    #[test]
    fn cross_pairing_with_coincident_means_is_scatter() {
        let a = DenseTensor::new(vec![1, 2], vec![1.0, 3.0]).unwrap();
        let b = DenseTensor::new(vec![1, 2], vec![0.0, 4.0]).unwrap();
        // both means are 2; scatter is 1 + 1 + 4 + 4
        assert_eq!(discriminant(&a, &b, MeanPairing::Cross).unwrap(), 10.0);
        assert_eq!(discriminant(&a, &b, MeanPairing::SameDomain).unwrap(), 10.0);
        let empty = DenseTensor::zeros(vec![1, 0]);
        assert_eq!(discriminant(&a, &empty, MeanPairing::Cross).unwrap(), 0.0);
        assert_eq!(discriminant(&a, &empty, MeanPairing::SameDomain).unwrap(), 2.0);
    }
}
