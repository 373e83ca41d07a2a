//! Free group equations: partition tables, generalized equations, elimination.

pub mod elim;
pub mod eqsys;
pub mod error;
pub mod geq;
pub mod gog;
pub mod oracle;
pub mod periodic;
pub mod quadr;
pub mod transform;
pub mod word;

pub use error::{Error, Result};
