//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Graph`] is built fresh for every batch. Parameters live in a
//! [`ParamStore`] and are copied into the graph as leaves; after
//! [`Graph::backward`] their gradients are folded back with
//! [`ParamStore::accumulate`] and applied by [`Adam`].

mod checkpoint;
mod gradcheck;
mod graph;
mod matrix;
mod optim;
mod params;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointHeader, FORMAT_VERSION};
pub use gradcheck::{
    analytic_gradients, compare_gradients, finite_diff_check, numeric_gradients, relative_error, GradCheckError,
    GradCheckReport, ParamCheck,
};
pub use graph::{Gradients, Graph, GraphError, Node, Op, Result, Var};
pub use matrix::Matrix;
pub use optim::{Adam, AdamConfig, StepOutcome};
pub use params::{ParamError, ParamId, ParamStore};
