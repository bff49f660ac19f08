//! Spatio-temporal activity-center POI recommendation.
//!
//! The crate is `no_std` (it only needs `alloc`) and holds the algorithmic
//! pieces: temporal state assignment and chronological splitting, sparse
//! visit-frequency matrices, great-circle geometry and the power-law distance
//! model, greedy activity-center allocation with the center/context scores,
//! the Poisson factor model and its trainer, score fusion with ablations and
//! baselines, and top-N ranking metrics.
//!
//! File formats, the experiment runner and the command line live in the
//! companion `stacp` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod centers;
pub mod error;
pub mod factorization;
pub mod geo;
pub mod ingest;
pub mod metrics;
pub mod recommender;
pub mod rng;

pub use centers::{
    allocate_centers, allocate_regions, context_score, state_center_score, ActivityCenter,
    CenterConfig, ContextConfig, Region, UserCenters,
};
pub use error::Error;
pub use factorization::{
    gradient, objective, temporal_config, train, train_observed, train_temporal, FactorModel, Gradient,
    TemporalModelSet, TrainConfig, TrainReport,
};
pub use geo::{fit_power_law, haversine_km, powerlaw_score, GeoPoint, PowerLawModel};
pub use ingest::{
    build_matrix, chronological_split, Catalog, CheckIn, DatasetSplit, InteractionMatrix,
    SplitRatios, StatePolicy, TemporalState,
};
pub use metrics::{ndcg_at, precision_at, recall_at};
pub use recommender::{
    baseline_score, baseline_user_scores, top_n, training_mask, Ablation, Baseline,
    BaselineInputs, FusionInputs, Recommendation, ScoreComponents,
};

/// Distance floor in kilometers applied wherever a distance is inverted or logged.
pub const DIST_EPS_KM: f64 = 0.01;

pub type Result<T> = core::result::Result<T, Error>;
