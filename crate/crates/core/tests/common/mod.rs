//! Shared oracle helpers for the integration tests. Everything here is an
//! independent route: per-node simulation instead of the vectorized form,
//! explicit inverses instead of Cholesky solves, BFS instead of mask
//! algebra.
#![allow(dead_code)]

use cgl_core::{CausalDiagram, CglScm, GlScm};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn node_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("X{i}")).collect()
}

/// Random DAG on `n` nodes: a random permutation fixes a hidden order and
/// each forward pair becomes an edge with probability `edge_prob`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, edge_prob: f64) -> CausalDiagram {
    let names = node_names(n);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.gen_bool(edge_prob) {
                edges.push((names[perm[a]].clone(), names[perm[b]].clone()));
            }
        }
    }
    CausalDiagram::new(names, edges, vec![]).expect("random DAG is valid")
}

/// Random diagram with confounders: like [`random_dag`] plus up to
/// `max_confounders` confounders over random child pairs/triples.
pub fn random_diagram<R: Rng>(
    rng: &mut R,
    n: usize,
    edge_prob: f64,
    max_confounders: usize,
) -> CausalDiagram {
    let base = random_dag(rng, n, edge_prob);
    let names = base.node_names().to_vec();
    let edges: Vec<(String, String)> = base
        .edges()
        .iter()
        .map(|&(i, j)| (names[i].clone(), names[j].clone()))
        .collect();
    let n_conf = rng.gen_range(0..=max_confounders);
    let mut confounders = Vec::new();
    for k in 0..n_conf {
        let size = rng.gen_range(2..=3.min(n));
        let mut pool: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            pool.swap(i, j);
        }
        let children: Vec<String> = pool[..size].iter().map(|&i| names[i].clone()).collect();
        confounders.push((format!("U{k}"), children));
    }
    CausalDiagram::new(names, edges, confounders).expect("random diagram is valid")
}

/// Random centralized model on the diagram's support.
pub fn random_cgl<R: Rng>(rng: &mut R, diagram: &CausalDiagram) -> CglScm {
    let p = diagram.n_nodes();
    let q = diagram.n_confounders();
    let mut edge_weights = DMatrix::zeros(p, p);
    for &(i, j) in diagram.edges() {
        edge_weights[(i, j)] = rng.gen_range(-1.0..1.0);
    }
    let mut loadings = DMatrix::zeros(q, p);
    for (k, conf) in diagram.confounders().iter().enumerate() {
        for &j in conf.children() {
            loadings[(k, j)] = rng.gen_range(-1.0..1.0);
        }
    }
    let bias = DVector::from_fn(p, |_, _| rng.gen_range(-2.0..2.0));
    let noise_var = DVector::from_fn(p, |_, _| rng.gen_range(0.3..2.0));
    CglScm::new(diagram.clone(), edge_weights, loadings, bias, noise_var)
        .expect("random model respects the support")
}

/// Random general model (free confounder means/variances, noise means).
pub fn random_gl<R: Rng>(rng: &mut R, diagram: &CausalDiagram) -> GlScm {
    let p = diagram.n_nodes();
    let q = diagram.n_confounders();
    let mut edge_weights = DMatrix::zeros(p, p);
    for &(i, j) in diagram.edges() {
        edge_weights[(i, j)] = rng.gen_range(-1.0..1.0);
    }
    let mut loadings = DMatrix::zeros(q, p);
    for (k, conf) in diagram.confounders().iter().enumerate() {
        for &j in conf.children() {
            loadings[(k, j)] = rng.gen_range(-1.0..1.0);
        }
    }
    let conf_mean = DVector::from_fn(q, |_, _| rng.gen_range(-2.0..2.0));
    let conf_var = DVector::from_fn(q, |_, _| rng.gen_range(0.1..4.0));
    let bias = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
    let noise_mean = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
    let noise_var = DVector::from_fn(p, |_, _| rng.gen_range(0.1..2.0));
    GlScm::new(
        diagram.clone(),
        edge_weights,
        loadings,
        conf_mean,
        conf_var,
        bias,
        noise_mean,
        noise_var,
    )
    .expect("random general model respects the support")
}

/// Simulates the model sample-by-sample through the per-node structural
/// equations (not the vectorized form). `pinned` fixes nodes to constants,
/// emulating mechanism surgery.
pub fn simulate_per_node<R: Rng>(
    model: &CglScm,
    pinned: &[(usize, f64)],
    n: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let diagram = model.diagram();
    let p = diagram.n_nodes();
    let q = diagram.n_confounders();
    let noise_sd = model.noise_var().map(f64::sqrt);
    let mut values = DMatrix::zeros(n, p);
    let mut x = vec![0.0; p];
    for row in 0..n {
        let u: Vec<f64> = (0..q).map(|_| StandardNormal.sample(rng)).collect();
        for &i in diagram.topological_order() {
            if let Some(&(_, z)) = pinned.iter().find(|&&(node, _)| node == i) {
                x[i] = z;
                continue;
            }
            let mut value = model.bias()[i];
            for &parent in diagram.parents_of(i) {
                value += model.edge_weights()[(parent, i)] * x[parent];
            }
            for (k, item) in u.iter().enumerate() {
                value += model.loadings()[(k, i)] * item;
            }
            let e: f64 = StandardNormal.sample(rng);
            value += noise_sd[i] * e;
            x[i] = value;
        }
        for i in 0..p {
            values[(row, i)] = x[i];
        }
    }
    values
}

/// Gaussian conditioning of a joint `(U, X)` on `X = x` by explicit Schur
/// complement with a plain matrix inverse.
pub fn condition_joint_on_x(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    q: usize,
    x: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let p = mean.len() - q;
    let mean_u = mean.rows(0, q).clone_owned();
    let mean_x = mean.rows(q, p).clone_owned();
    let cov_uu = cov.view((0, 0), (q, q)).clone_owned();
    let cov_ux = cov.view((0, q), (q, p)).clone_owned();
    let cov_xx = cov.view((q, q), (p, p)).clone_owned();
    let xx_inv = cov_xx.try_inverse().expect("covariance invertible");
    let post_mean = &mean_u + &cov_ux * &xx_inv * (x - mean_x);
    let post_cov = &cov_uu - &cov_ux * &xx_inv * cov_ux.transpose();
    (post_mean, post_cov)
}

/// Central finite differences of a scalar function of a matrix, entry by
/// entry.
pub fn fd_gradient<F: FnMut(&DMatrix<f64>) -> f64>(
    mut f: F,
    at: &DMatrix<f64>,
    step: f64,
) -> DMatrix<f64> {
    let mut grad = DMatrix::zeros(at.nrows(), at.ncols());
    let mut point = at.clone();
    for i in 0..at.nrows() {
        for j in 0..at.ncols() {
            let original = point[(i, j)];
            point[(i, j)] = original + step;
            let plus = f(&point);
            point[(i, j)] = original - step;
            let minus = f(&point);
            point[(i, j)] = original;
            grad[(i, j)] = (plus - minus) / (2.0 * step);
        }
    }
    grad
}

/// Dense multivariate normal log-density via explicit inverse and
/// determinant.
pub fn mvn_logpdf_naive(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let p = mean.len() as f64;
    let inv = cov.clone().try_inverse().expect("covariance invertible");
    let det = cov.determinant();
    let centered = x - mean;
    let quad = (inv * &centered).dot(&centered);
    -0.5 * (p * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad)
}

/// Reachability by BFS over the edge list.
pub fn reachable(diagram: &CausalDiagram, from: usize) -> Vec<bool> {
    let mut seen = vec![false; diagram.n_nodes()];
    let mut stack: Vec<usize> = diagram.children_of(from).to_vec();
    while let Some(node) = stack.pop() {
        if !seen[node] {
            seen[node] = true;
            stack.extend_from_slice(diagram.children_of(node));
        }
    }
    seen
}
