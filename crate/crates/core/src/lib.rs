pub mod adjoint;
pub mod calculus;
pub mod cli;
pub mod error;
pub mod expr;
pub mod forward;
pub mod mittag_leffler;
pub mod optimize;
pub mod scenario;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
