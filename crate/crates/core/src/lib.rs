//! Concept-based explainability on activation matrices.
//!
//! The pipeline factors class activations `A ≈ U Vᵀ` into a concept dictionary
//! `V` and per-sample loadings `U` ([`extraction`]), scores the factorisation
//! ([`metrics`]), attributes a head's logit to concepts ([`attribution`]),
//! measures how faithful those attributions are ([`faithfulness`]) and turns
//! local importances into per-class strategy summaries ([`strategy`]).
//!
//! Numerical code is generic over [`Scalar`] (`f32`/`f64`); the `*64` aliases
//! below are the instantiations the CLI and file formats use.

pub mod attribution;
pub mod error;
pub mod extraction;
pub mod faithfulness;
pub mod head;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod strategy;
mod scalar;

pub use error::{Error, Result};
pub use head::{evaluate_head, AffineLayer, Head, HeadKind, HeadOutput};
pub use model::{reconstruct, ActivationMatrix, ConceptDictionary, ExtractionMethod, Loadings};
pub use numerics::{Matrix, SeededRng};
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type ActivationMatrix64 = ActivationMatrix<f64>;
pub type ConceptDictionary64 = ConceptDictionary<f64>;
pub type Loadings64 = Loadings<f64>;
pub type Head64 = Head<f64>;
pub type ImportanceMatrix64 = attribution::ImportanceMatrix<f64>;
pub type FidelityCurve64 = faithfulness::FidelityCurve<f64>;
