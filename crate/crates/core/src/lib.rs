//! Multi-target masking for multi-aspect sentiment: data handling, the
//! masker and its baselines, training, evaluation and rationale extraction.

pub mod checkpoint;
pub mod decorrelate;
pub mod error;
pub mod eval;
pub mod io;
pub mod layers;
pub mod model;
pub mod params;
pub mod rationale;
pub mod synth;
pub mod text;
pub mod training;

pub use error::{CoreError, Result};
pub use model::{DocInput, ForwardOutput, LossParts, Model, ModelConfig, ModelKind, MultiMask};
pub use params::{Graph, ParamId, ParamStore};
