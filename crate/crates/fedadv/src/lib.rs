//! Adversarial training and federated simulation toolkit.
//!
//! The crate is organized around a small from-scratch f64 network engine so
//! that every gradient an attack or a training loop consumes is checkable
//! against finite differences:
//!
//! - [`activation`]: the eleven pluggable activation functions.
//! - [`nn`]: tensors-over-flat-parameters network engine, soft-target cross
//!   entropy, SGD with momentum, the step learning-rate schedule, and the
//!   mini residual classifier builder.
//! - [`attack`]: FGSM, BIM/PGD, DeepFool, Carlini-Wagner L2, and Gaussian
//!   noise, all clipped to the pixel box.
//! - [`data`]: CIFAR-10 binary records, synthetic Gaussian-blob images,
//!   soft labels, and the train-time augmentation pipeline.
//! - [`partition`]: IID and non-IID client splits plus the shared-pool
//!   mechanism for mixing globally shared IID data into client sets.
//! - [`fed`]: federated rounds of local adversarial training with
//!   size-weighted model averaging.
//! - [`eval`]: natural and under-attack accuracy.
//! - [`regression`]: log-linear least squares for accuracy-vs-sharing
//!   curves.
//! - [`config`] / [`report`]: TOML experiment configs, JSON/CSV reports,
//!   and the versioned binary model format.
//!
//! Determinism contract: every stochastic step draws from an RNG stream
//! derived from the experiment seed plus a structural path (see [`rng`]), so
//! a run is reproducible bit for bit, serial or parallel.
//!
//! The `examples/` directory is the guided tour; each file exercises one
//! capability end to end (`cargo run --release --example <name>`).

pub mod activation;
pub mod attack;
pub mod check;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fed;
pub mod nn;
pub mod partition;
pub mod regression;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
