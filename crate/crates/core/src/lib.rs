//! Scoring functions for jointly eliciting quantiles and Expected-Shortfall
//! type functionals, with tools to check where those scores are consistent.
//!
//! The crate covers
//!
//! * a small distribution model with exact CDFs, quantiles and lower partial
//!   moments ([`Distribution`]);
//! * the target functional `T = (quantiles, spectral ES)` ([`FunctionalSpec`]);
//! * the quantile / ES score family and its expected values ([`ScoreSpec`]);
//! * polyhedral action domains and path certificates ([`Domain`]);
//! * numerical consistency checks and Osband-type diagnostics.

pub mod config;
pub mod consistency;
pub mod distributions;
pub mod domains;
pub mod error;
pub mod format;
pub mod functionals;
pub mod lp;
pub mod osband;
pub mod quadrature;
pub mod scores;

pub use distributions::{Distribution, Side};
pub use consistency::{check_consistency, figure1_grid, order_sensitivity_k, reproduce_counterexample};
pub use domains::{certify_domain, construct_path, verify_path, w_sweep, Domain, PathOutcome, PathSequence};
pub use error::{Error, Result};
pub use functionals::{evaluate_t, FunctionalSpec};
pub use osband::{analytic_h, identification_eval, path_integral_diff, pointwise_path_diff, psd_scan, recover_h, vbar};
pub use scores::{
    b_bound, c_bound, eval_score, expected_score, score_diff_decomposition, Interval, ScoreDiffDecomposition, ScoreFn,
    ScoreSpec,
};
