pub mod control;
pub mod demography;
pub mod equilibria;
pub mod error;
pub mod harness;
pub mod ode;
pub mod pide;
pub mod quadrature;
pub mod rk;

pub use error::{Error, Result};
