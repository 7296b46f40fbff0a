//! Reference classifier without adaptation: nearest source class centroid in
//! the raw sample space.

use crate::error::{Error, Result};
use crate::solver::LabeledTensorSet;
use crate::tensor::DenseTensor;

pub use crate::solver::accuracy;

/// Labels each target sample with the class whose source mean is closest in
/// Frobenius norm; ties go to the lowest class id.
pub fn nearest_centroid(source: &LabeledTensorSet, target: &LabeledTensorSet) -> Result<Vec<usize>> {
    if source.sample_dims() != target.sample_dims() {
        return Err(Error::shape(format!(
            "source samples are {:?} but target samples are {:?}",
            source.sample_dims(),
            target.sample_dims()
        )));
    }
    let centroids = source
        .class_tensors()?
        .iter()
        .enumerate()
        .map(|(c, x)| {
            if x.last_extent() == 0 {
                Err(Error::EmptyClass(c + 1))
            } else {
                x.mean_last()
            }
        })
        .collect::<Result<Vec<DenseTensor>>>()?;
    let mut dist = vec![vec![0.0; centroids.len()]; target.len()];
    for (c, m) in centroids.iter().enumerate() {
        let d = target.samples().sub_broadcast_last(m)?.last_mode_sq_norms();
        for (j, v) in d.into_iter().enumerate() {
            dist[j][c] = v;
        }
    }
    Ok(dist
        .iter()
        .map(|row| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] < row[best] {
                    best = c;
                }
            }
            best + 1
        })
        .collect())
}

/// Accuracy per class id `1..=class_count`; `None` for classes absent from
/// `truth`.
pub fn per_class_accuracy(predicted: &[usize], truth: &[usize], class_count: usize) -> Vec<Option<f64>> {
    (1..=class_count)
        .map(|c| {
            let (hits, total) = predicted
                .iter()
                .zip(truth)
                .filter(|(_, &t)| t == c)
                .fold((0usize, 0usize), |(h, n), (p, _)| (h + usize::from(*p == c), n + 1));
            (total > 0).then(|| hits as f64 / total as f64)
        })
        .collect()
}
