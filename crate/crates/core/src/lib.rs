//! Exact leave-p-out cross-validation for the k-nearest-neighbor
//! classifier, the risk/moment/concentration envelopes that govern it, and
//! a Monte-Carlo harness that verifies every envelope empirically.
//!
//! The central object is [`lpo::lpo_exact`]: the average classification
//! error over all `C(n, p)` train/test splits, computed in
//! `O(n (k+p) k)` by conditioning on neighbor ranks instead of enumerating
//! splits. A rational-arithmetic enumeration oracle, a U-statistic block
//! decomposition, a closed-form bound catalogue, a simulation harness, and
//! a k-selection routine are built around it.

pub mod bounds;
pub mod dataset;
pub mod error;
pub mod lpo;
pub mod neighbors;
pub mod seeding;
pub mod select;
pub mod ustat;
pub mod verify;

pub use dataset::{Dataset, LabeledPoint};
pub use error::{Error, Result};
pub use lpo::{l1o, lpo_bruteforce, lpo_exact, EstimateMethod, LpOEstimate, PerPointError};
pub use neighbors::{build_neighbor_table, knn_classify, knn_predict_query, NeighborTable};
pub use select::{select_k, SelectionCurve};
pub use ustat::{hoeffding_block_estimate, incomplete_ustat_estimate, kernel_h, BlockStatistic};
pub use verify::{
    conditional_error, empirical_campaign, sample_dataset, stability_experiment, stone_counter,
    tail_experiment, CampaignConfig, DistributionSpec, ReplicationReport, RiskMethod,
};
