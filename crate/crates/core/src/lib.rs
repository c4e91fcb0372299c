//! Data redaction for trained image classifiers.
//!
//! A deployed model forgets an individual training record through a handful
//! of optimizer steps on a batch holding that record under a deliberately
//! wrong label plus a few correctly labelled records of its true class. A
//! shadow-model membership-inference attack decides when to stop: once the
//! attack's log-odds for the record drop below zero, the record no longer
//! looks like training data.
//!
//! Modules:
//! - [`nn`]: from-scratch CNN engine (conv, batch-norm, pooling, dense, Adam)
//!   with a versioned checkpoint format.
//! - [`data`]: CIFAR-10 and synthetic datasets, seeded half splits.
//! - [`mia`]: per-class logistic-regression attacks trained on shadow models.
//! - [`redaction`]: label-poisoned incremental retraining, request queues and
//!   accuracy recovery.
//! - [`eval`]: attack ensembles, Target/Remove/Redact comparison, batch-size
//!   sweeps and timing.

pub mod data;
pub mod error;
pub mod eval;
pub mod jobs;
pub mod mia;
pub mod nn;
pub mod redaction;
pub mod seed;

pub use error::{Error, Result};
