//! Moderate-deviation machinery for martingales with finite-support conditional laws.
//!
//! ```
//! use martdev_core::{certify, choose_tilt, estimate_tail_tilted, make_rademacher, Engine, TailEvent};
//!
//! let model = make_rademacher(400)?;
//! let cert = certify(&model)?;
//! let lambda = choose_tilt(&model, 3.0)?.lambda;
//! let engine = Engine::new(0)?;
//! let est = estimate_tail_tilted(&model, TailEvent::Above(3.0), lambda, 10_000, 7, &engine)?;
//! // exact binomial tail 1.1241e-3
//! assert!((est.p_hat - 1.1241e-3).abs() < 4.0 * est.std_err);
//! assert_eq!(cert.eps_n, 0.1);
//! # Ok::<(), martdev_core::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod coupling;
pub mod error;
pub mod event;
pub mod mixing;
pub mod models;
pub mod montecarlo;
pub mod rng;
pub mod tilt;
pub mod verify;

pub use error::{Error, Result};
pub use event::TailEvent;
pub use mixing::{
    berbee_couple, beta_coefficient, block_decompose, covariance_bound_check,
    mixing_tail_experiment, psi_bar_coefficient, stationary_dist, MarkovChain, MarkovChainSpec,
    MixingCertificate, MixingReport,
};
pub use models::{
    certify, certify_with, make_heavy_left, make_rademacher, make_regime_switch, make_two_point,
    sample_path, Atom, Certificate, Comparison, ConditionalLaw, DeltaConvention, HistorySummary,
    MartingaleModel, ModelSpec, Path,
};
pub use montecarlo::{
    estimate_tail_plain, estimate_tail_tilted, mdp_scan, ratio_report, Engine, RatioReport,
    TailEstimate,
};
pub use tilt::{
    choose_tilt, drift_step, sample_tilted_path, solve_saddle_lower, solve_saddle_upper, tilt_law,
    SaddleSolution, TiltChoice, TiltedLaw, TiltedModel, TiltedPath,
};
