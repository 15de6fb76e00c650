//! Discrete-time fast terminal sliding mode (FTSM) control of mirror-based
//! pointing heads.
//!
//! - [`model`]: decoupled second-order axis model and its Euler discretization
//! - [`sysid`]: simulation-error least-squares identification and NRMSE
//! - [`sliding`]: sliding surfaces, FTSM/TSM laws, reaching-condition monitor
//! - [`mpc`]: unconstrained receding-horizon baseline
//! - [`harness`]: scenarios, closed-loop runs, ISE/settling metrics, comparisons
//! - [`cli`]: command-line front end

pub mod cli;
pub mod harness;
pub mod model;
pub mod mpc;
pub mod sliding;
pub mod sysid;

pub use model::{PlantParams, PlantState};
pub use sliding::FtsmGains;
