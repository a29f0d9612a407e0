//! Shallow random forests as distance-weighted regressors.
//!
//! A small forest of depth-limited trees is fitted once; predictions then
//! weight every training response by a Gaussian kernel of a tree-induced
//! distance to the query. Two distances are provided: the MRCA (most recent
//! common ancestor) distance and the Breiman distance (one minus the leaf
//! co-occurrence proximity). The weights also give a weighted empirical CDF,
//! hence conditional quantiles.
//!
//! ```
//! use kernelforest::{generate, FittedModel, ForestParams, PredictionConfig, ScenarioKind, SeedSpec};
//!
//! let train = generate(ScenarioKind::Friedman1, 300, 10, SeedSpec(1)).unwrap();
//! let model = FittedModel::fit(&train, &ForestParams::default(), SeedSpec(2), 0.2).unwrap();
//! let cfg = PredictionConfig::ranbu(0.2).unwrap();
//! let x = train.row(0);
//! let mean = model.predict_mean(x, &cfg).unwrap();
//! let median = model.predict_quantile(x, &cfg, 0.5).unwrap();
//! assert!(mean.is_finite() && median.is_finite());
//! ```

pub mod bench;
pub mod data_synth;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod forest;
pub mod metrics;
pub mod model_io;
mod par;
pub mod predictor;
pub mod rng;

pub use data_synth::{generate, scenario_mean, ScenarioKind};
pub use dataset::Dataset;
pub use distance::{breiman_distance, forest_mrca_distance, mrca_tree_distance, DistanceKind};
pub use error::{Error, Result};
pub use forest::{fit_forest, Forest, ForestParams, LeafMatrix, Tree};
pub use predictor::{kernel_weights, FittedModel, PredictionConfig, DEFAULT_BANDWIDTH};
pub use rng::SeedSpec;
