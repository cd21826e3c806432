//! Daily OHLCV price prediction: boosted regression trees, a multilayer
//! perceptron, an averaging ensemble and a k-NN date forecaster, with
//! sliding-window validation and declarative run files.

pub mod ensemble;
pub mod error;
pub mod gbt;
pub mod knn;
pub mod learner;
pub mod market_data;
pub mod matrix;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod validation;
pub mod windowing;

pub use error::{Error, ErrorClass, Result};
pub use learner::{LearnerConfig, Regressor, TrainedModel};
pub use market_data::{Attribute, CsvSchema, OhlcvRecord, PriceSeries};
pub use matrix::Matrix;
pub use metrics::{PerformanceVector, ResidualSummary};
pub use windowing::WindowedExampleSet;
