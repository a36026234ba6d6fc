//! A desk-scale laboratory for unlearning as a verifiable reward.
//!
//! The pieces, bottom up:
//!
//! * [`corpus`]: vocabularies, datasets, probing and the synthetic forget corpus.
//! * [`policy`]: an order-k logit-table language model with exact gradients.
//! * [`matcher`]: forbidden-phrase automaton and the binary reward.
//! * [`grpo`]: the group-relative policy optimization unlearning loop.
//! * [`baselines`]: in-context, gradient-ascent, DPO, NPO and rejection-tuning unlearning.
//! * [`theory`]: empirical checks of the suppression, utility, proxy and regret bounds.
//! * [`eval`]: recall, utility, fluency and membership metrics.
//! * [`fixture`] and [`pipeline`]: the standard toy world and end-to-end wiring.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod grpo;
pub mod matcher;
pub mod pipeline;
pub mod policy;
pub mod seed;
pub mod theory;

pub use error::{Error, ErrorClass, Result};
