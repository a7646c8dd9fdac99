//! Mining of comparative sentences from biomedical abstracts, disentangled
//! result labels with an involutive antonym vocabulary, adversarial
//! order-reversal augmentation, a small from-scratch transformer encoder
//! pre-trained to predict the removed comparative label, and the non-neural
//! baselines and evaluation protocol around it.
//!
//! Data-parallel stages (mining, batch gradients, permutation tests,
//! nearest-neighbor search) run on rayon when the default `parallel` feature
//! is enabled and degrade to sequential loops without it; results are
//! identical either way.

pub mod adversarial;
pub mod baselines;
pub mod corpus;
pub mod dataset;
pub mod disentangle;
pub mod error;
pub mod eval;
pub mod exec;
pub mod jsonl;
pub mod mine;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
