//! Structured discriminative tensor dictionary learning (SDTDL) for
//! unsupervised domain adaptation.
//!
//! Labeled source tensors and unlabeled target tensors are explained by a
//! structured dictionary: one domain dictionary per domain (`U_s`, `U_t`) plus
//! one class dictionary `W_c` per class shared across domains. Target labels
//! are inferred by reconstruction-based pseudo-labeling.
//!
//! Tensors use a row-major layout (first index slowest); see [`tensor`].

pub mod baseline;
pub mod eigen;
pub mod error;
pub mod hooi;
pub mod io;
pub mod pseudo_label;
pub mod solver;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use hooi::{hooi, hosvd, TuckerResult};
pub use pseudo_label::PseudoLabels;
pub use solver::{fit, FitOutput, Hyperparams, LabeledTensorSet, SdtdlModel};
pub use tensor::{DenseTensor, FactorMatrix, TensorDictionary};
