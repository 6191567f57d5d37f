//! Session orchestration, simulated users and synthetic benchmarks.

pub mod session;
pub mod simulate;
pub mod synth;

pub use session::{
    replay_session, run_session, Review, Schedule, ScribbleSource, SessionEvent, SessionLog, SessionOutcome,
    SessionState, SimulatedUser, StageTiming, Submission,
};
pub use simulate::{connected_components, error_components, simulate_scribbles, MIN_COMPONENT};
pub use synth::{generate_synthetic_stack, Corruption, SynthSpec, SyntheticCase};
