//! Versioned, human-readable model files (TOML).
//!
//! A file carries the node list (declaration order fixes matrix order),
//! directed edges, confounders with per-child loadings, the bias vector and
//! optionally the noise variances (default: all 1). Weights, loadings and
//! `mu` may be omitted in files that only describe a diagram; loading such a
//! file as a full model is an error.

use anyhow::{bail, Context, Result};
use cgl_core::{CausalDiagram, CglScm};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecFile {
    pub format: u32,
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confounders: Vec<ConfounderSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderSpec {
    pub name: String,
    pub children: Vec<ChildSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildSpec {
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loading: Option<f64>,
}

impl ModelSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: ModelSpecFile = toml::from_str(text).context("model file is not valid TOML")?;
        if spec.format != FORMAT_VERSION {
            bail!(
                "unsupported model file format {} (this build reads format {FORMAT_VERSION})",
                spec.format
            );
        }
        Ok(spec)
    }

    /// Deterministic serialization: field order is fixed, floats print in
    /// shortest round-trip form.
    pub fn serialize(&self) -> Result<String> {
        toml::to_string_pretty(self).context("model serialization failed")
    }

    /// Structural view: weights and loadings are ignored, only names matter.
    pub fn to_diagram(&self) -> Result<CausalDiagram> {
        let edges = self
            .edges
            .iter()
            .map(|e| (e.from.clone(), e.to.clone()))
            .collect();
        let confounders = self
            .confounders
            .iter()
            .map(|c| {
                (
                    c.name.clone(),
                    c.children.iter().map(|ch| ch.node.clone()).collect(),
                )
            })
            .collect();
        Ok(CausalDiagram::new(self.nodes.clone(), edges, confounders)?)
    }

    /// Full model view: every edge weight, loading and `mu` must be present.
    pub fn to_model(&self) -> Result<CglScm> {
        let diagram = self.to_diagram()?;
        let p = diagram.n_nodes();
        let q = diagram.n_confounders();

        let mut edge_weights = DMatrix::zeros(p, p);
        for edge in &self.edges {
            let weight = edge
                .weight
                .with_context(|| format!("edge {} -> {} has no weight", edge.from, edge.to))?;
            let i = diagram.node_index(&edge.from).expect("validated");
            let j = diagram.node_index(&edge.to).expect("validated");
            edge_weights[(i, j)] = weight;
        }

        let mut loadings = DMatrix::zeros(q, p);
        for (k, conf) in self.confounders.iter().enumerate() {
            for child in &conf.children {
                let loading = child.loading.with_context(|| {
                    format!("confounder {} child {} has no loading", conf.name, child.node)
                })?;
                let j = diagram.node_index(&child.node).expect("validated");
                loadings[(k, j)] = loading;
            }
        }

        let mu = self
            .mu
            .as_ref()
            .context("model file has no mu vector")?
            .clone();
        if mu.len() != p {
            bail!("mu has length {}, expected {p}", mu.len());
        }
        let psi2 = match &self.psi2 {
            Some(v) => {
                if v.len() != p {
                    bail!("psi2 has length {}, expected {p}", v.len());
                }
                v.clone()
            }
            None => vec![1.0; p],
        };

        Ok(CglScm::new(
            diagram,
            edge_weights,
            loadings,
            DVector::from_vec(mu),
            DVector::from_vec(psi2),
        )?)
    }

    pub fn from_model(model: &CglScm) -> Self {
        let diagram = model.diagram();
        let edges = diagram
            .edges()
            .iter()
            .map(|&(i, j)| EdgeSpec {
                from: diagram.node_name(i).to_string(),
                to: diagram.node_name(j).to_string(),
                weight: Some(model.edge_weights()[(i, j)]),
            })
            .collect();
        let confounders = diagram
            .confounders()
            .iter()
            .enumerate()
            .map(|(k, conf)| ConfounderSpec {
                name: conf.name().to_string(),
                children: conf
                    .children()
                    .iter()
                    .map(|&j| ChildSpec {
                        node: diagram.node_name(j).to_string(),
                        loading: Some(model.loadings()[(k, j)]),
                    })
                    .collect(),
            })
            .collect();
        ModelSpecFile {
            format: FORMAT_VERSION,
            nodes: diagram.node_names().to_vec(),
            mu: Some(model.bias().iter().copied().collect()),
            psi2: Some(model.noise_var().iter().copied().collect()),
            edges,
            confounders,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cgl_core::benchmarks;

    #[test]
    fn model_round_trip_is_identical() {
        for model in [benchmarks::frontdoor_model(), benchmarks::napkin_model()] {
            let spec = ModelSpecFile::from_model(&model);
            let text = spec.serialize().unwrap();
            let back = ModelSpecFile::parse(&text).unwrap();
            assert_eq!(spec, back);
            let model_back = back.to_model().unwrap();
            assert_eq!(model_back.edge_weights(), model.edge_weights());
            assert_eq!(model_back.loadings(), model.loadings());
            assert_eq!(model_back.bias(), model.bias());
            assert_eq!(model_back.noise_var(), model.noise_var());
        }
    }

    #[test]
    fn serialization_is_byte_stable() {
        let spec = ModelSpecFile::from_model(&benchmarks::napkin_model());
        let once = spec.serialize().unwrap();
        let twice = ModelSpecFile::parse(&once).unwrap().serialize().unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn graph_only_file_loads_as_diagram_but_not_model() {
        let text = r#"
format = 1
nodes = ["A", "B"]

[[edges]]
from = "A"
to = "B"
"#;
        let spec = ModelSpecFile::parse(text).unwrap();
        let diagram = spec.to_diagram().unwrap();
        assert_eq!(diagram.n_nodes(), 2);
        assert!(spec.to_model().is_err());
    }

    #[test]
    fn rejects_unknown_format_version() {
        assert!(ModelSpecFile::parse("format = 99\nnodes = [\"A\"]\n").is_err());
    }

    #[test]
    fn rejects_structural_errors_from_core() {
        let text = r#"
format = 1
nodes = ["A", "B"]
mu = [0.0, 0.0]

[[edges]]
from = "A"
to = "B"
weight = 0.5

[[edges]]
from = "B"
to = "A"
weight = 0.5
"#;
        let spec = ModelSpecFile::parse(text).unwrap();
        assert!(spec.to_diagram().is_err());
    }
}
