pub mod elgamal;
pub mod error;
pub mod filter;
pub mod fixed_point;
pub mod group;
pub mod protocol;
pub mod vss;
pub mod wire;

pub use error::{Error, Result};
