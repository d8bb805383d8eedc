//! Discrete-time social influence dynamics and their inverse problem.
//!
//! A recipient's opinion moves toward (or away from) the accounts it follows
//! in proportion to the opinion gap, scaled by per-tie weights. This crate
//! simulates that map ([`dynamics`]), recovers the weights from observed
//! trajectories with through-origin least squares ([`identify`]), turns raw
//! timestamped observations into kernel-aligned series ([`kernelize`]) and
//! generates ground-truth cohorts to test the recovery against ([`synth`]).
//! [`cli`] backs the `influence-ode` binary.
//!
//! ```
//! use influence_ode::synth::{gen_dataset, evaluate_recovery, SynthConfig};
//! use influence_ode::identify::fit_cohort;
//!
//! let config = SynthConfig { n_recipients: 5, influencer_count_mean: 4.0, ..Default::default() };
//! let data = gen_dataset(&config).unwrap();
//! let cohort = fit_cohort(&data.network, &data.series);
//! let recovery = evaluate_recovery(&data.true_weights, &cohort.weights()).unwrap();
//! assert!(recovery.max_abs_error < 1e-8);
//! ```

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod identify;
pub mod io;
pub mod kernelize;
pub mod synth;

pub use error::{Error, Result};
