//! Synthetic retail loan portfolio generator.
//!
//! Fixed-installment loans are sampled from parametric distributions and
//! then driven month by month through a banded migration matrix. A cyclic
//! macro variable shifts the matrix toward delinquency for the accounts a
//! crisis rule selects, and a linear scorecard decides which accounts take
//! which transition. The crate also derives behavioral features, default
//! labels and the usual portfolio risk reports.
//!
//! ```no_run
//! use loansim_core::{config::Preset, engine::run_simulation};
//!
//! let layout = Preset::BehCase.layout().with_volume_scale(0.01);
//! let out = run_simulation(&layout).unwrap();
//! println!("{} transaction rows", out.transactions.len());
//! ```

pub mod abt;
pub mod analytics;
pub mod checks;
pub mod config;
pub mod engine;
mod error;
pub mod io;
mod par;
pub mod population;
pub mod stochastic;

pub use error::Error;
