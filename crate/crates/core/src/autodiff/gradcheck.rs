//! Central finite-difference verification of analytic gradients.

use std::error::Error as StdError;

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use super::params::ParamStore;

type BoxError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError {
    #[error("loss builder failed: {0}")]
    Build(BoxError),
    #[error("loss builder is not deterministic: {first} then {second} at identical parameters")]
    NonDeterministic { first: f64, second: f64 },
    #[error("backward failed: {0}")]
    Backward(#[from] super::graph::GraphError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    /// max over coordinates of `|analytic - numeric| / max(1, |numeric|)`
    pub max_rel_error: f64,
    pub coordinates: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.params.iter().all(|p| p.max_rel_error < tolerance)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

fn eval_loss<F, E>(store: &ParamStore, build: &mut F) -> Result<f64, GradCheckError>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var, E>,
    E: Into<BoxError>,
{
    let mut graph = Graph::new();
    let root = build(store, &mut graph).map_err(|e| GradCheckError::Build(e.into()))?;
    Ok(graph.value(root).item())
}

/// Analytic gradient of the built loss for every parameter of `store`.
pub fn analytic_gradients<F, E>(store: &ParamStore, build: &mut F) -> Result<Vec<Matrix>, GradCheckError>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var, E>,
    E: Into<BoxError>,
{
    let mut graph = Graph::new();
    let root = build(store, &mut graph).map_err(|e| GradCheckError::Build(e.into()))?;
    let grads = graph.backward(root)?;
    let mut out: Vec<Matrix> = store
        .ids()
        .map(|id| {
            let (r, c) = store.value(id).shape();
            Matrix::zeros(r, c)
        })
        .collect();
    for (id, var) in graph.param_vars() {
        if let Some(g) = grads.get(var) {
            out[id.index()] = g.clone();
        }
    }
    Ok(out)
}

/// Central differences `(L(θ+ε) - L(θ-ε)) / 2ε`, one coordinate at a time.
///
/// Fails if two evaluations at identical parameters disagree.
pub fn numeric_gradients<F, E>(store: &mut ParamStore, eps: f64, build: &mut F) -> Result<Vec<Matrix>, GradCheckError>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var, E>,
    E: Into<BoxError>,
{
    let first = eval_loss(store, build)?;
    let second = eval_loss(store, build)?;
    if first.to_bits() != second.to_bits() {
        return Err(GradCheckError::NonDeterministic { first, second });
    }

    let ids: Vec<_> = store.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let (r, c) = store.value(id).shape();
        let mut numeric = Matrix::zeros(r, c);
        for j in 0..r * c {
            let orig = store.value(id).data()[j];
            store.value_mut(id).data_mut()[j] = orig + eps;
            let plus = eval_loss(store, build);
            store.value_mut(id).data_mut()[j] = orig - eps;
            let minus = eval_loss(store, build);
            store.value_mut(id).data_mut()[j] = orig;
            numeric.data_mut()[j] = (plus? - minus?) / (2.0 * eps);
        }
        out.push(numeric);
    }
    Ok(out)
}

pub fn compare_gradients(store: &ParamStore, analytic: &[Matrix], numeric: &[Matrix]) -> GradCheckReport {
    let params = store
        .ids()
        .map(|id| {
            let (a, n) = (&analytic[id.index()], &numeric[id.index()]);
            let max_rel_error =
                a.data().iter().zip(n.data()).map(|(&x, &y)| relative_error(x, y)).fold(0.0, f64::max);
            ParamCheck { name: store.name(id).to_string(), max_rel_error, coordinates: a.len() }
        })
        .collect();
    GradCheckReport { params }
}

/// Compares backward() against central finite differences for every parameter.
pub fn finite_diff_check<F, E>(store: &mut ParamStore, eps: f64, mut build: F) -> Result<GradCheckReport, GradCheckError>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var, E>,
    E: Into<BoxError>,
{
    let analytic = analytic_gradients(store, &mut build)?;
    let numeric = numeric_gradients(store, eps, &mut build)?;
    Ok(compare_gradients(store, &analytic, &numeric))
}
