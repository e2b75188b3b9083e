//! Joint-state engine: registers, unitaries, isometries, instruments and measurements.

mod metrics;
mod sampling;
mod state;

pub use metrics::{fidelity, fidelity_with_pure, trace_distance};
pub use sampling::{enumerate_outcomes, trial_rng, OutcomeSource, ScriptedOutcomes};
pub use state::{GlobalState, RegisterLabel};
