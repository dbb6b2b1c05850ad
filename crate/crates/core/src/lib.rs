pub mod bench;
pub mod cli;
pub mod error;
pub mod h2metric;
pub mod linalg;
pub mod optcond;
pub mod par;
pub mod rng;
pub mod scalarfun;
pub mod spectra;
pub mod structopt;
pub mod sysmodel;
pub mod wirtinger;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
