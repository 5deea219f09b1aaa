//! Psychologically-aware student-state pipeline.
//!
//! The crate covers the full desk-scale loop: deterministic synthetic corpus
//! generation, text preprocessing with trainable token embeddings, prosodic
//! feature extraction (pitch, intensity, speech rate, MFCCs), knowledge-graph
//! triple scoring with prompt rendering, a two-layer BiLSTM-with-attention
//! classifier over four psychological dimensions trained with focal loss,
//! an evaluation harness with unimodal baselines, and an adaptive feedback
//! policy with closed-loop threshold recalibration.
//!
//! Everything is a pure function of (inputs, seed): repeated runs produce
//! byte-identical artifacts.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod fusion;
pub mod kg;
pub mod linalg;
pub mod prosody;
pub mod rng;
pub mod textproc;
pub mod verify;

pub use error::{Error, Result};
