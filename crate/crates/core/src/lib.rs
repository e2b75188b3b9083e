pub mod adversary;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod params;
pub mod protocols;
pub mod qlin;
pub mod simkernel;
pub mod verify;

pub use error::{Error, Result};
