//! Analytic interventional queries by mechanism surgery.
//!
//! `do(Z = z)` deletes the structural equations of the intervened nodes and
//! substitutes the constants: incoming edge weights and confounder loadings
//! of every intervened node are zeroed, its bias is pinned to `z` and its
//! noise to zero. The mutilated model is still linear-Gaussian, so the
//! target's distribution comes out in closed form.
//!
//! The module does not check that a query is identifiable in the diagram:
//! answers computed from a *fitted* model are only guaranteed to match the
//! data-generating model for identifiable queries.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{symmetrize, total_influence, CglScm, GaussianDist};

/// An interventional query `P(target | do(interventions))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoQuery {
    interventions: Vec<(String, f64)>,
    target: String,
}

impl DoQuery {
    /// Rejects an empty intervention set, duplicate intervened nodes and a
    /// target that is itself intervened. Node existence is checked against
    /// the model's diagram when the query is evaluated.
    pub fn new(interventions: Vec<(String, f64)>, target: String) -> Result<Self> {
        if interventions.is_empty() {
            return Err(Error::Query("no interventions given".into()));
        }
        for (i, (node, _)) in interventions.iter().enumerate() {
            if interventions[..i].iter().any(|(other, _)| other == node) {
                return Err(Error::Query(format!("node '{node}' intervened twice")));
            }
        }
        if interventions.iter().any(|(node, _)| *node == target) {
            return Err(Error::Query(format!(
                "target '{target}' cannot be intervened on"
            )));
        }
        Ok(Self {
            interventions,
            target,
        })
    }

    pub fn interventions(&self) -> &[(String, f64)] {
        &self.interventions
    }

    pub fn target(&self) -> &str {
        &self.target
    }
}

impl fmt::Display for DoQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dos: Vec<String> = self
            .interventions
            .iter()
            .map(|(node, value)| format!("{node} = {value}"))
            .collect();
        write!(f, "P({} | do({}))", self.target, dos.join(", "))
    }
}

/// A univariate Gaussian, printed as `N(mean, variance)` to 4 decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1D {
    pub mean: f64,
    pub var: f64,
}

impl fmt::Display for Gaussian1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `+ 0.0` keeps a rounded -0.0 from printing with a sign.
        write!(f, "N({:.4}, {:.4})", self.mean + 0.0, self.var + 0.0)
    }
}

/// Joint distribution of all endogenous variables under the intervention.
/// Intervened coordinates are degenerate: mean `z`, variance 0.
pub fn interventional_dist(
    model: &CglScm,
    interventions: &[(String, f64)],
) -> Result<GaussianDist> {
    let diagram = model.diagram();
    let mut edge_weights = model.edge_weights().clone();
    let mut loadings = model.loadings().clone();
    let mut bias = model.bias().clone();
    let mut noise_var = model.noise_var().clone();
    for (node, value) in interventions {
        let j = diagram
            .node_index(node)
            .ok_or_else(|| Error::Query(format!("unknown node '{node}'")))?;
        edge_weights.column_mut(j).fill(0.0);
        loadings.column_mut(j).fill(0.0);
        bias[j] = *value;
        noise_var[j] = 0.0;
    }
    // Extra powers beyond the mutilated graph's own longest path vanish, so
    // the original path length is a safe bound.
    let b = total_influence(&edge_weights, diagram.longest_path());
    let mean = b.tr_mul(&bias);
    let cb = &loadings * &b;
    let psi_b = DMatrix::from_diagonal(&noise_var) * &b;
    let cov = symmetrize(cb.tr_mul(&cb) + b.tr_mul(&psi_b));
    GaussianDist::new(mean, cov)
}

/// Marginal of the query target under the intervention.
pub fn intervene(model: &CglScm, query: &DoQuery) -> Result<Gaussian1D> {
    let target = model
        .diagram()
        .node_index(query.target())
        .ok_or_else(|| Error::Query(format!("unknown node '{}'", query.target())))?;
    let dist = interventional_dist(model, query.interventions())?;
    let (mean, var) = dist.marginal(target);
    Ok(Gaussian1D { mean, var })
}

/// One row of a ground-truth vs. fitted query comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryComparison {
    pub query: DoQuery,
    pub original: Gaussian1D,
    pub estimated: Gaussian1D,
    pub mean_abs_delta: f64,
    /// `|Δvar| / var` relative to the original variance (absolute delta when
    /// the original variance is zero).
    pub var_rel_delta: f64,
}

/// Evaluates each query on both models and tabulates the deltas. The models
/// must share a diagram.
pub fn compare_queries(
    original: &CglScm,
    estimated: &CglScm,
    queries: &[DoQuery],
) -> Result<Vec<QueryComparison>> {
    if original.diagram() != estimated.diagram() {
        return Err(Error::Query(
            "models being compared have different diagrams".into(),
        ));
    }
    queries
        .iter()
        .map(|query| {
            let a = intervene(original, query)?;
            let b = intervene(estimated, query)?;
            let var_delta = (b.var - a.var).abs();
            Ok(QueryComparison {
                query: query.clone(),
                original: a,
                estimated: b,
                mean_abs_delta: (b.mean - a.mean).abs(),
                var_rel_delta: if a.var > 0.0 { var_delta / a.var } else { var_delta },
            })
        })
        .collect()
}
