//! Design tools and a fixed-step switching simulator for a synchronous-frame
//! PI current-regulated induction machine fed by a two-level PWM inverter.
//!
//! Module map:
//! - [`params`]: machine constants, base system, steady-state equivalent circuit
//! - [`machine`]: qd flux-linkage model and torque
//! - [`inverter`]: switch-state voltages, duty computation, sawtooth comparison
//! - [`regulator`]: PI pair, slip calculator, frame transformations
//! - [`design`]: plant transfer function, cancelling PI gains, Bode and margins
//! - [`sim`] and [`metrics`]: closed-loop runs and derived figures
//! - [`io`]: configuration, CSV and key-value output

pub mod design;
pub mod error;
pub mod inverter;
pub mod io;
pub mod machine;
pub mod metrics;
pub mod params;
pub mod regulator;
pub mod sim;

pub use error::{Error, Result};
