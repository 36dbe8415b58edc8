pub mod cli;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod norms;
mod quadrature;
pub mod radon;
mod raymarch;
pub mod reconstruct;
pub mod tensor_inversion;
pub mod transport;

pub use error::{Error, Result};
