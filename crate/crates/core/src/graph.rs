//! Causal diagrams: directed edges among named endogenous variables plus
//! latent confounders, and the structural artifacts derived from them
//! (topological order, longest path length, support masks).
//!
//! Node declaration order is significant: it fixes matrix row/column order
//! for every matrix in the crate, and it breaks ties in the topological
//! order so downstream results are reproducible.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A latent confounder with its endogenous children (at least two).
#[derive(Debug, Clone, PartialEq)]
pub struct Confounder {
    name: String,
    children: Vec<usize>,
}

impl Confounder {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Indices of the endogenous children, in declaration order.
    pub fn children(&self) -> &[usize] {
        &self.children
    }
}

/// A known causal diagram over endogenous variables, with latent confounders
/// listed explicitly by name and children (so a confounder may have more
/// than two children).
#[derive(Debug, Clone, PartialEq)]
pub struct CausalDiagram {
    nodes: Vec<String>,
    edges: Vec<(usize, usize)>,
    confounders: Vec<Confounder>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    topo_order: Vec<usize>,
}

/// Binary support masks plus the longest directed path length `d`.
///
/// `t_mask[(i, j)] = 1` iff the edge `Xᵢ → Xⱼ` exists, `b_mask[(i, j)] = 1`
/// iff `Xⱼ` is reachable from `Xᵢ` through at least one edge, and
/// `c_mask[(k, j)] = 1` iff `Xⱼ` is a child of confounder `Uₖ`. Stored as
/// 0/1 floats so they can be used directly in elementwise products.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub t_mask: DMatrix<f64>,
    pub b_mask: DMatrix<f64>,
    pub c_mask: DMatrix<f64>,
    pub d: usize,
}

impl CausalDiagram {
    /// Validates and builds a diagram.
    ///
    /// Rejects: empty or duplicate node names, edges with unknown endpoints,
    /// self-loops, duplicate edges, directed cycles (the error names a cycle
    /// witness), confounders with fewer than two distinct children, and
    /// confounder names that collide with each other or with node names.
    pub fn new(
        nodes: Vec<String>,
        edges: Vec<(String, String)>,
        confounders: Vec<(String, Vec<String>)>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Structure("diagram has no nodes".into()));
        }
        let mut index = HashMap::new();
        for (i, name) in nodes.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Structure(format!("duplicate node name '{name}'")));
            }
        }
        let lookup = |name: &str| -> Result<usize> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Structure(format!("unknown node '{name}'")))
        };

        let mut edge_idx = Vec::with_capacity(edges.len());
        let mut children = vec![Vec::new(); nodes.len()];
        let mut parents = vec![Vec::new(); nodes.len()];
        for (from, to) in &edges {
            let (i, j) = (lookup(from)?, lookup(to)?);
            if i == j {
                return Err(Error::Structure(format!("self-loop on '{from}'")));
            }
            if edge_idx.contains(&(i, j)) {
                return Err(Error::Structure(format!("duplicate edge {from} -> {to}")));
            }
            edge_idx.push((i, j));
            children[i].push(j);
            parents[j].push(i);
        }

        let mut seen_confounders = HashMap::new();
        let mut confs = Vec::with_capacity(confounders.len());
        for (k, (name, child_names)) in confounders.into_iter().enumerate() {
            if index.contains_key(&name) {
                return Err(Error::Structure(format!(
                    "confounder '{name}' collides with a node name"
                )));
            }
            if seen_confounders.insert(name.clone(), k).is_some() {
                return Err(Error::Structure(format!("duplicate confounder '{name}'")));
            }
            let mut child_idx = Vec::with_capacity(child_names.len());
            for child in &child_names {
                let j = lookup(child)?;
                if child_idx.contains(&j) {
                    return Err(Error::Structure(format!(
                        "confounder '{name}' lists child '{child}' twice"
                    )));
                }
                child_idx.push(j);
            }
            if child_idx.len() < 2 {
                return Err(Error::Structure(format!(
                    "confounder '{name}' needs at least 2 distinct children, got {}",
                    child_idx.len()
                )));
            }
            confs.push(Confounder {
                name,
                children: child_idx,
            });
        }

        let topo_order = kahn_order(&nodes, &parents, &children)?;

        Ok(Self {
            nodes,
            edges: edge_idx,
            confounders: confs,
            children,
            parents,
            topo_order,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_confounders(&self) -> usize {
        self.confounders.len()
    }

    pub fn node_names(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_name(&self, i: usize) -> &str {
        &self.nodes[i]
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    /// Directed edges as `(from, to)` index pairs, in declaration order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn confounders(&self) -> &[Confounder] {
        &self.confounders
    }

    /// Direct children of node `i`, in edge declaration order.
    pub fn children_of(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn parents_of(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    /// Deterministic topological order: Kahn's algorithm, ties broken by
    /// node declaration order.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Length in edges of the longest directed path; 0 for an edgeless graph.
    pub fn longest_path(&self) -> usize {
        let mut dist = vec![0usize; self.nodes.len()];
        for &j in &self.topo_order {
            for &i in &self.parents[j] {
                dist[j] = dist[j].max(dist[i] + 1);
            }
        }
        dist.into_iter().max().unwrap_or(0)
    }

    /// Builds the support masks. `b_mask` is the indicator of
    /// `Σ_{p=1..d} t_maskᵖ > 0`, i.e. reachability through at least one edge.
    pub fn build_masks(&self) -> MaskSet {
        let p = self.nodes.len();
        let mut t_mask = DMatrix::zeros(p, p);
        for &(i, j) in &self.edges {
            t_mask[(i, j)] = 1.0;
        }
        let d = self.longest_path();
        let mut acc = DMatrix::zeros(p, p);
        let mut power = DMatrix::identity(p, p);
        for _ in 0..d {
            power = power * &t_mask;
            acc += &power;
        }
        let b_mask = acc.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let mut c_mask = DMatrix::zeros(self.confounders.len(), p);
        for (k, conf) in self.confounders.iter().enumerate() {
            for &j in &conf.children {
                c_mask[(k, j)] = 1.0;
            }
        }
        MaskSet {
            t_mask,
            b_mask,
            c_mask,
            d,
        }
    }
}

fn kahn_order(
    nodes: &[String],
    parents: &[Vec<usize>],
    children: &[Vec<usize>],
) -> Result<Vec<usize>> {
    let n = nodes.len();
    let mut in_degree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        // Smallest unplaced index with zero remaining in-degree.
        let next = (0..n).find(|&i| !placed[i] && in_degree[i] == 0);
        let Some(i) = next else {
            return Err(Error::Structure(format!(
                "directed part has a cycle: {}",
                cycle_witness(nodes, parents, &placed)
            )));
        };
        placed[i] = true;
        order.push(i);
        for &j in &children[i] {
            in_degree[j] -= 1;
        }
    }
    Ok(order)
}

/// Walks parent pointers among unplaced nodes until one repeats, then prints
/// the closed walk along edge direction.
fn cycle_witness(nodes: &[String], parents: &[Vec<usize>], placed: &[bool]) -> String {
    let start = (0..placed.len())
        .find(|&i| !placed[i])
        .expect("a cycle node exists");
    let mut path = vec![start];
    let mut current = start;
    let repeated = loop {
        let &prev = parents[current]
            .iter()
            .find(|&&p| !placed[p])
            .expect("cycle nodes keep an unplaced parent");
        if let Some(pos) = path.iter().position(|&v| v == prev) {
            break pos;
        }
        path.push(prev);
        current = prev;
    };
    // The walk followed parents; slice off any tail and reverse so the
    // witness reads along edge direction.
    let mut cycle: Vec<usize> = path[repeated..].to_vec();
    cycle.reverse();
    cycle.push(cycle[0]);
    let names: Vec<&str> = cycle.iter().map(|&i| nodes[i].as_str()).collect();
    names.join(" -> ")
}
