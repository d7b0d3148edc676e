//! Random trees grown by exploration walks from a uniform vertex.

pub mod constants;
pub mod ext;
pub mod growth;
pub mod harness;
pub mod io;
pub mod observables;
pub mod pmf;
pub mod rng;
pub mod stats;
pub mod walk;

pub use ext::Ext;
pub use pmf::{PmfError, StepDistribution};
