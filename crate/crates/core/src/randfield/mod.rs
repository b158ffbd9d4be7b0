//! Random and quasi-random sampling: conditional simulation, Latin hypercube
//! and Sobol designs, and named seed streams.

mod lhs;
mod seeds;
mod simulate;
mod sobol;

pub use lhs::{lhs_maximin, lhs_maximin_with, lhs_random, maximin_score, LHS_CANDIDATES};
pub use seeds::SeedStreams;
pub use simulate::{read_ensemble, simulate, write_ensemble, EnsembleHeader, SimulationEnsemble};
pub use sobol::{sobol_points, SOBOL_MAX_DIM};
