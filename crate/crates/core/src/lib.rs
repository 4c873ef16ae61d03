//! Distributed L1-regularized logistic regression by block-coordinate
//! descent.
//!
//! Features are split into disjoint blocks, one per worker. Each outer
//! iteration every worker minimizes its block of a quadratic model of the
//! objective (the Hessian restricted to its block diagonal) with one cycle
//! of coordinate descent, the block directions are summed with a single
//! all-reduce of size `n + p`, and a line search over cached margins picks
//! the step. [`regpath`] runs the solver along a warm-started λ schedule.

pub mod data;
pub mod driver;
pub mod error;
pub mod glm;
pub mod ingest;
pub mod line_search;
pub mod metrics;
pub mod oracle;
pub mod reduction;
pub mod regpath;
pub mod subproblem;
pub mod synth;

pub use data::{nnz, FeaturePosting, FeatureShard, LabelVector, ModelState};
pub use driver::{fit, fit_local, FitOutcome, FitReport, SolverConfig, Termination};
pub use error::{Error, ErrorKind, Result};
pub use line_search::LineSearchConfig;
pub use reduction::{LocalGroup, ReductionGroup, TcpGroup, TcpOptions};
pub use regpath::{lambda_max, regularization_path, PathConfig, PathPoint};
