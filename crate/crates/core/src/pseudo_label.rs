//! Target-label prediction from reconstruction fidelity and centroid
//! deviation, and confidence-ranked sample selection.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::solver::{LabeledTensorSet, SdtdlModel};

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    /// Predicted class per target sample, `1..=C`.
    pub labels: Vec<usize>,
    /// Largest combined probability per sample.
    pub combined_conf: Vec<f64>,
    pub fidelity_probs: DMatrix<f64>,
    pub centroid_probs: DMatrix<f64>,
    pub selected: Vec<bool>,
}

impl PseudoLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }
}

/// Per-sample scores: squared fidelity error `e_jc` and squared centroid
/// distance `d_jc`, each `N_t × C`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetScores {
    pub errors: DMatrix<f64>,
    pub distances: DMatrix<f64>,
}

/// Codes each target sample by orthonormal projection: domain code onto `U_t`
/// (skipped while the model's target dictionary is inactive), then the
/// residual onto every `W_c`.
pub fn target_scores(model: &SdtdlModel, target: &LabeledTensorSet) -> Result<TargetScores> {
    let dims = model.sample_dims();
    if target.sample_dims() != dims.as_slice() {
        return Err(Error::shape(format!(
            "model expects samples of dims {:?}, got {:?}",
            dims,
            target.sample_dims()
        )));
    }
    let y = target.samples();
    let n = target.len();
    let classes = model.class_count();
    let residual = if model.use_target_dictionary {
        let b0 = model.u_target.encode(y)?;
        y.sub(&model.u_target.decode(&b0)?)?
    } else {
        y.clone()
    };
    let mut errors = DMatrix::zeros(n, classes);
    let mut distances = DMatrix::zeros(n, classes);
    for c in 0..classes {
        let w = &model.w_class[c];
        let code = w.encode(&residual)?;
        let fit = residual.sub(&w.decode(&code)?)?;
        let deviation = code.sub_broadcast_last(&model.class_means_source[c])?;
        for (j, e) in fit.last_mode_sq_norms().into_iter().enumerate() {
            errors[(j, c)] = e;
        }
        for (j, d) in deviation.last_mode_sq_norms().into_iter().enumerate() {
            distances[(j, c)] = d;
        }
    }
    Ok(TargetScores { errors, distances })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Row-wise `softmax(−e_jc / σ_j)` with `σ_j` the median of row `j`.
///
/// A zero median falls back to the row mean; a row of all-zero scores
/// becomes uniform.
pub fn probs_from_scores(scores: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, classes) = scores.shape();
    let mut probs = DMatrix::zeros(n, classes);
    for j in 0..n {
        let row: Vec<f64> = scores.row(j).iter().copied().collect();
        let mut sorted = row.clone();
        let mut sigma = median(&mut sorted);
        if !(sigma > 0.0) {
            sigma = row.iter().sum::<f64>() / classes as f64;
        }
        if !(sigma > 0.0) {
            probs.row_mut(j).fill(1.0 / classes as f64);
            continue;
        }
        let lowest = row.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = row.iter().map(|e| (-(e - lowest) / sigma).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (c, w) in weights.iter().enumerate() {
            probs[(j, c)] = w / total;
        }
    }
    probs
}

/// Class probabilities from the reconstruction error on each class dictionary.
pub fn fidelity_probs(target: &LabeledTensorSet, model: &SdtdlModel) -> Result<DMatrix<f64>> {
    Ok(probs_from_scores(&target_scores(model, target)?.errors))
}

/// Class probabilities from the distance of each class code to the source
/// class mean.
pub fn centroid_probs(target: &LabeledTensorSet, model: &SdtdlModel) -> Result<DMatrix<f64>> {
    Ok(probs_from_scores(&target_scores(model, target)?.distances))
}

/// Labels from `γ·fid + (1−γ)·cen`; the most probable class wins, ties going
/// to the lowest class id. No sample is selected yet.
pub fn predict(fid: &DMatrix<f64>, cen: &DMatrix<f64>, gamma: f64) -> Result<PseudoLabels> {
    if fid.shape() != cen.shape() {
        return Err(Error::shape(format!(
            "probability matrices {:?} and {:?} differ",
            fid.shape(),
            cen.shape()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Hyperparam(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let combined = fid * gamma + cen * (1.0 - gamma);
    let mut labels = Vec::with_capacity(combined.nrows());
    let mut conf = Vec::with_capacity(combined.nrows());
    for row in combined.row_iter() {
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        labels.push(best + 1);
        conf.push(row[best]);
    }
    Ok(PseudoLabels {
        selected: vec![false; labels.len()],
        labels,
        combined_conf: conf,
        fidelity_probs: fid.clone(),
        centroid_probs: cen.clone(),
    })
}

/// Number of samples admitted for a selection ratio.
pub fn selection_size(n: usize, delta: f64) -> usize {
    ((delta * n as f64).round() as usize).min(n)
}

/// Marks the `round(δ·N)` most confident samples, ties going to the lower
/// sample index. Selection is global, not per class.
pub fn select(pl: &PseudoLabels, delta: f64) -> PseudoLabels {
    let mut order: Vec<usize> = (0..pl.len()).collect();
    order.sort_by(|&a, &b| pl.combined_conf[b].total_cmp(&pl.combined_conf[a]));
    let mut selected = vec![false; pl.len()];
    for &j in order.iter().take(selection_size(pl.len(), delta)) {
        selected[j] = true;
    }
    PseudoLabels { selected, ..pl.clone() }
}

/// Predicts and selects with the model's own `γ` and `δ`.
pub fn label_targets(model: &SdtdlModel, target: &LabeledTensorSet) -> Result<PseudoLabels> {
    let scores = target_scores(model, target)?;
    let fid = probs_from_scores(&scores.errors);
    let cen = probs_from_scores(&scores.distances);
    let pl = predict(&fid, &cen, model.hyper.gamma)?;
    Ok(select(&pl, model.hyper.delta))
}
