//! Concept-bottleneck classification with credal concept intervals.
//!
//! An ensemble of low-rank heads over a frozen embedding predicts each concept;
//! head disagreement gives an interval and an epistemic score, a separate head
//! predicts aleatoric ambiguity, and the intervals are propagated exactly
//! through a linear classifier for decision making and routing.

pub mod ablate;
pub mod config;
pub mod credal;
pub mod data;
pub mod decide;
pub mod error;
pub mod heads;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod schedule;
pub mod synth;
pub mod train;

pub use config::{AleMode, AleTarget, DropoutSpacing, TrainConfig};
pub use credal::{aggregate, interval_width, CredalReport};
pub use data::{load_dataset, save_dataset, ConceptValue, Dataset, Example};
pub use decide::{LogitBounds, Quadrant};
pub use error::{CredalError, Result};
pub use model::{load_model, persist_model, EnsembleModel};
