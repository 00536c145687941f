//! Simulation and estimation toolkit for a two-score model of content
//! consumption, in which every option carries both an *enrichment* value (how
//! good it is for the user) and a *temptation* value (how likely the user is
//! to pick it), and the two need not agree.
//!
//! The crate provides:
//!
//! - the ground-truth behavioral model: latent user/option representations,
//!   choice and feedback scores, a deterministic choice rule over a slate plus
//!   an off-platform outside option, and rating emission ([`model`]);
//! - synthetic world generators for three outside-option scenarios, with
//!   Gaussian or heavy-tailed (Johnson S_U) item populations ([`synth`]);
//! - recommendation policies: a locally greedy maximizer of expected
//!   conditional enrichment (with perfect or estimated information) and four
//!   myopic ranking baselines ([`policy`]);
//! - joint estimation of the model from ratings and click logs by minibatch
//!   SGD on a weighted rating + ranking loss, plus a plain rating
//!   factorization baseline ([`estimation`]);
//! - an experiment harness with warm-up/policy phases, common-random-number
//!   replication, enrichment metrics, a consumption histogram, and a
//!   brute-force policy-tree oracle for validating the greedy policy
//!   ([`harness`]);
//! - construction of a simulation sandbox from a MovieLens-format ratings
//!   file, including chronology-respecting click-history reconstruction
//!   ([`movielens`]), and report/file I/O ([`report`]).
//!
//! All randomness flows through explicitly seeded ChaCha streams; every
//! entry point is deterministic given its seed. See [`rng`].

#![forbid(unsafe_code)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod model;
pub mod movielens;
pub mod policy;
pub mod report;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
