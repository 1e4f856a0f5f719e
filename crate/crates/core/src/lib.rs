//! Contextuality and interference-phase analysis for finite contextual
//! behaviors.
//!
//! The crate answers a handful of related questions about tables of
//! per-context outcome statistics:
//!
//! * [`embedding`]: do the tables extend to one joint distribution over all
//!   observables (a global Boolean event algebra)?
//! * [`projection`]: how does a relative gluing phase between two branch
//!   contributions turn into an interference term, and what phase does an
//!   observed total imply?
//! * [`intervention`]: contexts as operations on one shared state; order
//!   effects and non-commutativity.
//! * [`holonomy`]: phases accumulated by transition maps around loops of
//!   contexts.
//! * [`bookkeeping`]: entropy and mutual-information cost of simulating a
//!   behavior classically with an explicit context memory.
//! * [`nonlocality`]: bipartite no-signalling, local decompositions, CHSH.
//! * [`tradeoff`]: seeded simulation of interference versus context memory.

pub mod bookkeeping;
pub mod embedding;
pub mod error;
pub mod exact;
pub mod holonomy;
pub mod hull;
pub mod intervention;
pub mod io;
pub mod lp;
pub mod nonlocality;
pub mod projection;
pub mod report;
pub mod scenario;
pub mod tradeoff;

pub use error::{Error, Result};
pub use scenario::{Behavior, Context, Distribution, Observable, Scenario, DEFAULT_TOL};
