//! Remaining-useful-life prediction with a bi-directional adversarial
//! network pair operating in a learned conditional space.

pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{BaceRulModel, Variant};
pub use trainer::{train, TrainConfig, TrainReport};
