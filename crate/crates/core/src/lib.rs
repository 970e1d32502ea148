//! Degree-distribution diagnostics for open-world knowledge-graph link
//! prediction.
//!
//! The crate is `no_std` (with `alloc`) and contains the algorithmic core:
//! graph structure statistics, connected-subgraph sampling, stage-one
//! embedding training and ranking evaluation, embedding-quality analysis,
//! variance-based sensitivity and correlation statistics, and stage-two
//! mapper training with per-degree-group instrumentation. File formats,
//! parallel execution and the command line live in the `degscope` crate.

#![no_std]

extern crate alloc;

use alloc::vec::Vec;

pub mod error;
pub mod graph;
pub mod kge;
pub mod mapper;
pub mod numeric;
pub mod quality;
pub mod rank;
pub mod sampler;
pub mod stats;
pub mod structure;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{DegreeVector, EntityId, GraphBuilder, KnowledgeGraph, RelationId, Triple};
pub use structure::StructuralCharacteristics;

/// Maps a pure function over a slice, preserving order.
///
/// Core algorithms that are embarrassingly parallel take an executor so the
/// std companion crate can plug in a thread pool. Results must not depend on
/// the executor.
pub trait Executor: Sync {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}
