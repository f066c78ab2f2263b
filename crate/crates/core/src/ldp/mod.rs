//! Monte Carlo experiments tying walk simulation to the variational
//! constants.

pub mod confine;
pub mod fold;
pub mod rate;
pub mod stats;
pub mod tail;

pub use confine::{confinement_probe, ConfinementRecord};
pub use fold::{periodization_stopping_check, FoldRecord};
pub use rate::{rate_extraction, RateFit};
pub use tail::{tail_point, tail_probability_mc, ExperimentRecord, RSchedule, TailPoint};
