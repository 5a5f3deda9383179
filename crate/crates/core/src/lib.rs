//! Infrared-absorption NV magnetometry in an optical cavity.
//!
//! The NV⁻ centre is an eight-level open quantum system whose steady state
//! sets the singlet population difference probed at 1042 nm. A Fabry-Pérot
//! cavity turns that absorption into a change in reflected power, and the
//! resulting resonance fixes the photon and spin shot-noise limits.

pub mod cavity;
pub mod constants;
pub mod error;
pub mod lindblad;
pub mod model;
pub mod odmr;
pub mod optimizer;
pub mod sensitivity;
pub mod validation;

pub use constants::PhysicalConstants;
pub use error::{Error, Result};
pub use lindblad::{DensityMatrix, Liouvillian};
pub use model::{RateTable, SpinParams};
