pub mod baselines;
pub mod data;
pub mod distill;
pub mod ensemble;
pub mod error;
pub mod framework;
pub mod numeric;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

use std::fmt;

/// Identity of a participant in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
