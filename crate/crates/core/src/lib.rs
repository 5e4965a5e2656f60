//! Full-sum (CTC-style) training criteria on toy models: exact alignment
//! counting over label topologies, log-space forward-backward, analytic
//! gradients, Viterbi-based peakiness analysis and the experiment drivers
//! built on top of them.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod landscape;
pub mod losses;
pub mod matrix;
pub mod models;
pub mod signals;
pub mod topology;
pub mod training;
pub mod verify;

pub use analysis::PeakinessReport;
pub use error::{Error, Result};
pub use exec::Exec;
pub use landscape::{Grid, GridSweep, Landscape, LandscapeLoss, Region};
pub use losses::{LossKind, PriorMode, SoftAlignment};
pub use matrix::Matrix;
pub use models::{EmissionTable, ModelDims, ModelKind, ModelSpec, PosteriorTable};
pub use signals::InputSequence;
pub use topology::{Alignment, LabelTopology, Quantifier};
pub use training::{ExperimentResult, Task, TrainConfig};
