//! Competing-risks survival modelling with additive correlated gamma
//! frailties, Monte-Carlo p-value combination, biomarker cutpoint search and
//! a clustered simulation engine.

// negated comparisons like `!(v > 0.0)` are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coxph;
pub mod dataset;
pub mod error;
pub mod frailty;
pub mod pcombine;
pub mod simulate;
pub mod stepfn;
pub mod threshold;

pub use dataset::{ClusterSummary, CompetingRisksDataset, SurvivalRecord};
pub use error::{Error, Result};
pub use stepfn::StepFunction;
