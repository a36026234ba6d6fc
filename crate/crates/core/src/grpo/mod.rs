//! Unlearning by group relative policy optimization.
//!
//! Each outer iteration freezes a reference policy; each batch freezes an
//! "old" policy, samples a group of `W` answers per query, rewards every
//! answer with the forbidden-phrase reward, normalizes rewards within the
//! group into advantages, and then takes `inner_updates` ascent steps on the
//! clipped surrogate with a per-token KL penalty toward the reference.

mod config;
mod group;
mod surrogate;
mod train;
mod trace;

pub use config::{StepSchedule, TrainConfig};
pub use group::{compute_advantages, kl_estimate, sample_group, score_group, GroupSample};
pub use surrogate::{SurrogateEval, SurrogateObjective};
pub use train::{purge_train, NoopObserver, Observer, PurgeFailure, PurgeRun};
pub use trace::{read_trace, write_trace, StepRecord, TraceRecord, TrainTrace, TRACE_FORMAT};
