//! The structured dictionary model and its alternating optimizer.
//!
//! A source sample of class `c` is modelled as `⟦A0; U_s⟧ + ⟦A_c; W_c⟧` and a
//! target sample as `⟦B0; U_t⟧ + ⟦B_c; W_c⟧`. Fitting alternates between the
//! class dictionaries, the source dictionary and the target dictionary while
//! pseudo-labels for the target set are re-estimated every outer iteration.

mod objective;
mod update;

pub use objective::{class_means, mmd_term, objective};
pub use update::{
    block_pass, build_phi, build_phi_source_only, sample_quadratic_form, update_class_dict,
    update_class_dict_quadratic, update_domain_source, update_domain_target, ClassSubproblem,
};

use crate::error::{Error, Result};
use crate::hooi::{hooi, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::pseudo_label::{self, PseudoLabels};
use crate::tensor::{stack_last_all, DenseTensor, TensorDictionary};

/// How the discriminant term pairs class codes with class means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanPairing {
    /// Source codes against the target mean and target codes against the
    /// source mean. This is the canonical model.
    #[default]
    Cross,
    /// Each domain's codes against its own mean (non-canonical).
    SameDomain,
}

/// How each class dictionary is re-estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassUpdateRule {
    /// Eigenvectors of `G Gᵀ` where the sample mode is mixed by the block
    /// matrix from [`build_phi`]. This is the canonical update.
    #[default]
    Phi,
    /// Eigenvectors of the exact quadratic form of the class objective in the
    /// sample mode ([`sample_quadratic_form`]). Non-canonical.
    ExactQuadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Weight of the target-domain fidelity term.
    pub theta: f64,
    /// Weight of the discriminant term.
    pub lambda: f64,
    /// Mix between fidelity and centroid probabilities.
    pub gamma: f64,
    /// Fraction of target samples admitted as pseudo-labeled training data.
    pub delta: f64,
    /// Multilinear ranks `J_1..J_M` shared by all dictionaries.
    pub ranks: Vec<usize>,
    pub max_outer_iters: usize,
    /// Sweep budget of every inner HOOI-style solve.
    pub inner_sweeps: usize,
    /// Relative tolerance of the inner solves.
    pub tol: f64,
    pub pairing: MeanPairing,
    pub class_rule: ClassUpdateRule,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::object_preset()
    }
}

impl Hyperparams {
    /// Object-recognition setting (3-way CONV feature tensors).
    pub fn object_preset() -> Self {
        Self {
            theta: 20.0,
            lambda: 0.1,
            gamma: 0.25,
            delta: 0.8,
            ranks: vec![6, 6, 28],
            max_outer_iters: 10,
            inner_sweeps: DEFAULT_MAX_SWEEPS,
            tol: DEFAULT_TOL,
            pairing: MeanPairing::Cross,
            class_rule: ClassUpdateRule::Phi,
        }
    }

    /// Digit-recognition setting.
    pub fn digit_preset() -> Self {
        Self {
            theta: 10.0,
            lambda: 1.0,
            gamma: 0.2,
            delta: 0.8,
            ranks: vec![7, 7, 30],
            ..Self::object_preset()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "object" => Some(Self::object_preset()),
            "digit" => Some(Self::digit_preset()),
            _ => None,
        }
    }

    pub fn with_ranks(mut self, ranks: Vec<usize>) -> Self {
        self.ranks = ranks;
        self
    }

    /// Checks value ranges and that the ranks fit the sample extents.
    pub fn validate(&self, sample_dims: &[usize]) -> Result<()> {
        let bad = |msg: String| Err(Error::Hyperparam(msg));
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad(format!("theta must be > 0, got {}", self.theta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("delta must lie in (0, 1], got {}", self.delta));
        }
        if self.inner_sweeps == 0 {
            return bad("inner_sweeps must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if self.ranks.len() != sample_dims.len() {
            return bad(format!(
                "{} ranks given for order-{} samples",
                self.ranks.len(),
                sample_dims.len()
            ));
        }
        for (mode, (&rank, &extent)) in self.ranks.iter().zip(sample_dims).enumerate() {
            if rank == 0 || rank > extent {
                return Err(Error::RankTooLarge { mode, rank, extent });
            }
        }
        Ok(())
    }
}

/// Samples stacked along a trailing sample mode, optionally labeled `1..=C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTensorSet {
    samples: DenseTensor,
    labels: Option<Vec<usize>>,
    class_count: usize,
}

impl LabeledTensorSet {
    pub fn new(samples: DenseTensor, labels: Option<Vec<usize>>, class_count: usize) -> Result<Self> {
        if samples.order() < 2 {
            return Err(Error::shape("sample sets need at least one data mode plus the sample mode"));
        }
        if class_count == 0 {
            return Err(Error::Labels("class count must be positive".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != samples.last_extent() {
                return Err(Error::Labels(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    samples.last_extent()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > class_count) {
                return Err(Error::Labels(format!("label {bad} outside 1..={class_count}")));
            }
        }
        Ok(Self { samples, labels, class_count })
    }

    pub fn unlabeled(samples: DenseTensor, class_count: usize) -> Result<Self> {
        Self::new(samples, None, class_count)
    }

    pub fn samples(&self) -> &DenseTensor {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.samples.last_extent()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extents of one sample, `I_1..I_M`.
    pub fn sample_dims(&self) -> &[usize] {
        &self.samples.dims()[..self.samples.order() - 1]
    }

    /// Sample indices of each class (index 0 holds class 1), ascending.
    pub fn class_indices(&self) -> Result<Vec<Vec<usize>>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Labels("sample set is unlabeled".into()))?;
        let mut groups = vec![Vec::new(); self.class_count];
        for (i, &l) in labels.iter().enumerate() {
            groups[l - 1].push(i);
        }
        Ok(groups)
    }

    /// Samples of each class stacked along the sample mode.
    pub fn class_tensors(&self) -> Result<Vec<DenseTensor>> {
        Ok(self
            .class_indices()?
            .iter()
            .map(|idx| self.samples.select_last(idx))
            .collect())
    }

    /// The listed samples, relabeled with `labels`.
    pub fn subset(&self, indices: &[usize], labels: Vec<usize>) -> Result<Self> {
        Self::new(self.samples.select_last(indices), Some(labels), self.class_count)
    }
}

/// Learned structured dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct SdtdlModel {
    pub u_source: TensorDictionary,
    pub u_target: TensorDictionary,
    pub w_class: Vec<TensorDictionary>,
    /// Mean class code of the source samples of each class.
    pub class_means_source: Vec<DenseTensor>,
    /// Mean class code of the selected target samples of each class (zero when
    /// no target sample of the class was selected).
    pub class_means_target: Vec<DenseTensor>,
    pub hyper: Hyperparams,
    /// Whether predictions subtract the target-domain reconstruction. Off
    /// until the first outer iteration has run.
    pub use_target_dictionary: bool,
}

impl SdtdlModel {
    pub fn class_count(&self) -> usize {
        self.w_class.len()
    }

    pub fn sample_dims(&self) -> Vec<usize> {
        self.u_source.extents()
    }

    pub fn max_orthonormality_error(&self) -> f64 {
        std::iter::once(&self.u_source)
            .chain(std::iter::once(&self.u_target))
            .chain(&self.w_class)
            .map(TensorDictionary::max_orthonormality_error)
            .fold(0.0, f64::max)
    }
}

/// Coefficient tensors grouped by class (index 0 holds class 1). Each entry
/// is `J_1 × … × J_M × n` with samples in ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Codes {
    pub source_domain: Vec<DenseTensor>,
    pub source_class: Vec<DenseTensor>,
    pub target_domain: Vec<DenseTensor>,
    pub target_class: Vec<DenseTensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub objective: f64,
    pub n_selected: usize,
    pub accuracy: Option<f64>,
}

/// Everything needed to continue alternating updates with frozen labels.
#[derive(Debug, Clone)]
pub struct TrainingState {
    pub model: SdtdlModel,
    /// Selected target samples carrying their pseudo-labels.
    pub target_selected: LabeledTensorSet,
    pub codes: Codes,
    pub pseudo: PseudoLabels,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: SdtdlModel,
    pub labels: PseudoLabels,
    pub history: Vec<HistoryRow>,
}

fn check_inputs(source: &LabeledTensorSet, target: &LabeledTensorSet, hyper: &Hyperparams) -> Result<()> {
    if source.labels().is_none() {
        return Err(Error::Labels("source set must be labeled".into()));
    }
    if source.sample_dims() != target.sample_dims() {
        return Err(Error::shape(format!(
            "source samples are {:?} but target samples are {:?}",
            source.sample_dims(),
            target.sample_dims()
        )));
    }
    if source.class_count() != target.class_count() {
        return Err(Error::Labels(format!(
            "source has {} classes, target {}",
            source.class_count(),
            target.class_count()
        )));
    }
    hyper.validate(source.sample_dims())?;
    for (c, idx) in source.class_indices()?.iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::EmptyClass(c + 1));
        }
    }
    Ok(())
}

/// Runs HOOI with the solver's inner settings on a stack of residuals.
pub(crate) fn fit_dictionary(stack: &DenseTensor, hyper: &Hyperparams) -> Result<TensorDictionary> {
    Ok(hooi(stack, &hyper.ranks, true, hyper.inner_sweeps, hyper.tol)?.dictionary())
}

/// Splits a stacked tensor back into consecutive groups of the given sizes.
pub(crate) fn split_last(t: &DenseTensor, sizes: &[usize]) -> Vec<DenseTensor> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&n| {
            let idx: Vec<usize> = (start..start + n).collect();
            start += n;
            t.select_last(&idx)
        })
        .collect()
}

pub(crate) fn stack_groups(groups: &[DenseTensor]) -> Result<DenseTensor> {
    stack_last_all(groups)
}

/// Selected target samples with their pseudo-labels, in ascending index order.
pub fn selected_subset(target: &LabeledTensorSet, pseudo: &PseudoLabels) -> Result<LabeledTensorSet> {
    let idx: Vec<usize> = (0..pseudo.selected.len()).filter(|&j| pseudo.selected[j]).collect();
    let labels = idx.iter().map(|&j| pseudo.labels[j]).collect();
    target.subset(&idx, labels)
}

/// Class codes of target samples under the current dictionaries: the domain
/// code is the orthonormal projection onto `U_t` and the class code the
/// projection of the remaining residual onto `W_c`.
pub fn refresh_target_codes(
    model: &SdtdlModel,
    target_selected: &LabeledTensorSet,
    codes: &mut Codes,
) -> Result<()> {
    let groups = target_selected.class_tensors()?;
    codes.target_domain.clear();
    codes.target_class.clear();
    for (c, y) in groups.iter().enumerate() {
        let b0 = model.u_target.encode(y)?;
        let residual = y.sub(&model.u_target.decode(&b0)?)?;
        codes.target_class.push(model.w_class[c].encode(&residual)?);
        codes.target_domain.push(b0);
    }
    Ok(())
}

/// Recomputes the class means stored in the model from the current codes.
pub(crate) fn refresh_means(model: &SdtdlModel, codes: &Codes) -> Result<(Vec<DenseTensor>, Vec<DenseTensor>)> {
    let ranks = &model.hyper.ranks;
    let source = codes
        .source_class
        .iter()
        .enumerate()
        .map(|(c, a)| class_means(a).map_err(|_| Error::EmptyClass(c + 1)))
        .collect::<Result<Vec<_>>>()?;
    let target = codes
        .target_class
        .iter()
        .map(|b| {
            if b.last_extent() == 0 {
                Ok(DenseTensor::zeros(ranks.clone()))
            } else {
                class_means(b)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((source, target))
}

fn set_means(model: &mut SdtdlModel, codes: &Codes) -> Result<()> {
    let (s, t) = refresh_means(model, codes)?;
    model.class_means_source = s;
    model.class_means_target = t;
    Ok(())
}

/// Initialization: class dictionaries from the source classes, the source
/// dictionary from the remaining residuals, target labels predicted without
/// the target dictionary, then the target dictionary from the selected
/// targets.
pub fn initialize(
    source: &LabeledTensorSet,
    target: &LabeledTensorSet,
    hyper: &Hyperparams,
) -> Result<TrainingState> {
    check_inputs(source, target, hyper)?;
    let class_count = source.class_count();
    let source_groups = source.class_tensors()?;

    let mut w_class = Vec::with_capacity(class_count);
    let mut source_class = Vec::with_capacity(class_count);
    for x in &source_groups {
        let w = fit_dictionary(x, hyper)?;
        source_class.push(w.encode(x)?);
        w_class.push(w);
    }

    let residuals = source_groups
        .iter()
        .zip(&w_class)
        .zip(&source_class)
        .map(|((x, w), a)| x.sub(&w.decode(a)?))
        .collect::<Result<Vec<_>>>()?;
    let stacked = stack_groups(&residuals)?;
    let u_source = fit_dictionary(&stacked, hyper)?;
    let sizes: Vec<usize> = source_groups.iter().map(DenseTensor::last_extent).collect();
    let source_domain = split_last(&u_source.encode(&stacked)?, &sizes);

    let sample_dims = source.sample_dims().to_vec();
    let identity = TensorDictionary::new(
        sample_dims
            .iter()
            .zip(&hyper.ranks)
            .map(|(&i, &j)| {
                crate::tensor::FactorMatrix::new(nalgebra::DMatrix::identity(i, j))
            })
            .collect::<Result<Vec<_>>>()?,
    );
    let mut model = SdtdlModel {
        u_source,
        u_target: identity,
        w_class,
        class_means_source: Vec::new(),
        class_means_target: vec![DenseTensor::zeros(hyper.ranks.clone()); class_count],
        hyper: hyper.clone(),
        use_target_dictionary: false,
    };
    let mut codes = Codes {
        source_domain,
        source_class,
        target_domain: Vec::new(),
        target_class: Vec::new(),
    };
    model.class_means_source = refresh_means(&model, &codes)?.0;

    let pseudo = pseudo_label::label_targets(&model, target)?;
    let target_selected = selected_subset(target, &pseudo)?;

    let target_groups = target_selected.class_tensors()?;
    let target_class = target_groups
        .iter()
        .zip(&model.w_class)
        .map(|(y, w)| w.encode(y))
        .collect::<Result<Vec<_>>>()?;
    let target_residuals = target_groups
        .iter()
        .zip(&model.w_class)
        .zip(&target_class)
        .map(|((y, w), b)| y.sub(&w.decode(b)?))
        .collect::<Result<Vec<_>>>()?;
    let stacked = stack_groups(&target_residuals)?;
    model.u_target = fit_dictionary(&stacked, hyper)?;
    let sizes: Vec<usize> = target_groups.iter().map(DenseTensor::last_extent).collect();
    codes.target_domain = split_last(&model.u_target.encode(&stacked)?, &sizes);
    codes.target_class = target_class;
    set_means(&mut model, &codes)?;

    Ok(TrainingState { model, target_selected, codes, pseudo })
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / predicted.len() as f64
}

/// Fits the structured dictionary and pseudo-labels the target set.
///
/// `truth`, when given, is used only to fill the accuracy column of the
/// history. Iteration stops once the pseudo-labels stop changing or after
/// `max_outer_iters` outer iterations.
pub fn fit(
    source: &LabeledTensorSet,
    target: &LabeledTensorSet,
    hyper: &Hyperparams,
    truth: Option<&[usize]>,
) -> Result<FitOutput> {
    if let Some(truth) = truth {
        if truth.len() != target.len() {
            return Err(Error::Labels(format!(
                "{} truth labels for {} target samples",
                truth.len(),
                target.len()
            )));
        }
    }
    let acc = |p: &PseudoLabels| truth.map(|t| accuracy(&p.labels, t));

    let mut state = initialize(source, target, hyper)?;
    let mut history = vec![HistoryRow {
        iter: 0,
        objective: objective(&state.model, source, &state.target_selected, &state.codes)?,
        n_selected: state.target_selected.len(),
        accuracy: acc(&state.pseudo),
    }];

    for iter in 1..=hyper.max_outer_iters {
        state.model.use_target_dictionary = true;
        let training = pseudo_label::label_targets(&state.model, target)?;
        state.target_selected = selected_subset(target, &training)?;
        refresh_target_codes(&state.model, &state.target_selected, &mut state.codes)?;
        block_pass(&mut state.model, source, &state.target_selected, &mut state.codes)?;

        state.pseudo = pseudo_label::label_targets(&state.model, target)?;
        history.push(HistoryRow {
            iter,
            objective: objective(&state.model, source, &state.target_selected, &state.codes)?,
            n_selected: state.target_selected.len(),
            accuracy: acc(&state.pseudo),
        });
        if state.pseudo.labels == training.labels {
            break;
        }
    }

    Ok(FitOutput { model: state.model, labels: state.pseudo, history })
}
