//! Self-supervised seq2point load disaggregation.
//!
//! The crate covers the whole pipeline: meter-file ingestion and 1-minute
//! resampling ([`data`]), a small reverse-mode network toolkit ([`nn`]), ADAM
//! training with early stopping ([`optim`]), the S2p and Bi-GRU architectures
//! ([`models`]), pretext/downstream/zero-shot orchestration ([`pipeline`]) and
//! MAE/SAE/EpD evaluation ([`metrics`], [`report`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
