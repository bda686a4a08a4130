//! Fluctuation-theory, MANERIC and GENERIC structures of the zero-range
//! process on a finite complete graph, with numerical certificates.

pub mod drift;
pub mod error;
pub mod eta;
pub mod flows;
pub mod geometry;
pub mod hamiltonian;
pub mod mft;
pub mod ode;
mod quad;
pub mod quadratise;
pub mod sim;
pub mod sweep;
pub mod zero_range;

pub use error::{Error, Result};
pub use eta::Eta;
pub use geometry::{NodeSet, State};
pub use zero_range::ZeroRangeModel;
