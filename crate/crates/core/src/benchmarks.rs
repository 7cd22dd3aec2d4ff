//! Built-in generator models for the frontdoor and napkin benchmark graphs,
//! with their standard treatment-effect queries.

use nalgebra::{DMatrix, DVector};

use crate::graph::CausalDiagram;
use crate::model::CglScm;
use crate::query::DoQuery;

/// A named built-in benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Frontdoor,
    Napkin,
}

impl Benchmark {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "frontdoor" => Some(Self::Frontdoor),
            "napkin" => Some(Self::Napkin),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Frontdoor => "frontdoor",
            Self::Napkin => "napkin",
        }
    }

    pub fn all() -> [Benchmark; 2] {
        [Self::Frontdoor, Self::Napkin]
    }

    /// The ground-truth generator model.
    pub fn model(self) -> CglScm {
        match self {
            Self::Frontdoor => frontdoor_model(),
            Self::Napkin => napkin_model(),
        }
    }

    /// The benchmark's standard interventional queries.
    pub fn queries(self) -> Vec<DoQuery> {
        let (doers, target) = match self {
            Self::Frontdoor => (["X2", "X1"], "X3"),
            Self::Napkin => (["X3", "X1"], "X4"),
        };
        doers
            .iter()
            .map(|z| {
                DoQuery::new(vec![(z.to_string(), 1.0)], target.to_string())
                    .expect("benchmark query is well-formed")
            })
            .collect()
    }
}

/// Frontdoor graph: `X1 → X2 → X3` with one latent confounder on `(X1, X3)`.
///
/// Edge weights 0.5 and 0.9, loadings `(-0.2, 0.3)`, bias `(0.3, 0.1, 0.2)`,
/// unit noise.
pub fn frontdoor_model() -> CglScm {
    let diagram = CausalDiagram::new(
        vec!["X1".into(), "X2".into(), "X3".into()],
        vec![("X1".into(), "X2".into()), ("X2".into(), "X3".into())],
        vec![("U4".into(), vec!["X1".into(), "X3".into()])],
    )
    .expect("frontdoor diagram is valid");
    let mut edge_weights = DMatrix::zeros(3, 3);
    edge_weights[(0, 1)] = 0.5;
    edge_weights[(1, 2)] = 0.9;
    let mut loadings = DMatrix::zeros(1, 3);
    loadings[(0, 0)] = -0.2;
    loadings[(0, 2)] = 0.3;
    CglScm::new(
        diagram,
        edge_weights,
        loadings,
        DVector::from_vec(vec![0.3, 0.1, 0.2]),
        DVector::from_element(3, 1.0),
    )
    .expect("frontdoor model is valid")
}

/// Napkin graph: chain `X1 → X2 → X3 → X4` with latent confounders on
/// `(X1, X3)` and `(X1, X4)`.
///
/// Edge weights `(0.1, 0.9, 0.8)`, loadings rows `(-0.2, 0, 0.1, 0)` and
/// `(0.3, 0, 0, 0.4)`, bias `(0.8, -0.9, 0.01, -0.5)`, unit noise.
pub fn napkin_model() -> CglScm {
    let diagram = CausalDiagram::new(
        vec!["X1".into(), "X2".into(), "X3".into(), "X4".into()],
        vec![
            ("X1".into(), "X2".into()),
            ("X2".into(), "X3".into()),
            ("X3".into(), "X4".into()),
        ],
        vec![
            ("U5".into(), vec!["X1".into(), "X3".into()]),
            ("U6".into(), vec!["X1".into(), "X4".into()]),
        ],
    )
    .expect("napkin diagram is valid");
    let mut edge_weights = DMatrix::zeros(4, 4);
    edge_weights[(0, 1)] = 0.1;
    edge_weights[(1, 2)] = 0.9;
    edge_weights[(2, 3)] = 0.8;
    let mut loadings = DMatrix::zeros(2, 4);
    loadings[(0, 0)] = -0.2;
    loadings[(0, 2)] = 0.1;
    loadings[(1, 0)] = 0.3;
    loadings[(1, 3)] = 0.4;
    CglScm::new(
        diagram,
        edge_weights,
        loadings,
        DVector::from_vec(vec![0.8, -0.9, 0.01, -0.5]),
        DVector::from_element(4, 1.0),
    )
    .expect("napkin model is valid")
}
