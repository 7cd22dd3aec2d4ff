//! Model parameterizations and their exact Gaussian distributions.
//!
//! A centralized model draws every confounder from `N(0, 1)` and every node
//! noise from `N(0, ψ²ᵢ)`; the general form additionally allows free means
//! and variances on confounders and noises. Both solve to the same closed
//! form: with `B = I + Σ_{p=1..d} Tᵖ` (equivalently `(I − T)⁻¹` for the
//! nilpotent `T` of an acyclic diagram),
//!
//! ```text
//! X = Bᵀμ + BᵀCᵀU + Bᵀε,
//! E[X] = Bᵀμ,   Cov[X] = (CB)ᵀ(CB) + BᵀΨ²B.
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::CausalDiagram;
use crate::linalg;
use crate::sampler::Dataset;

/// Total-influence matrix `I + Σ_{p=1..d} Tᵖ` by iterated multiplication.
///
/// Exact for the nilpotent edge-weight matrix of an acyclic diagram; the
/// result has unit diagonal and determinant 1.
pub fn total_influence(edge_weights: &DMatrix<f64>, longest_path: usize) -> DMatrix<f64> {
    let p = edge_weights.nrows();
    let mut total = DMatrix::identity(p, p);
    let mut power = DMatrix::identity(p, p);
    for _ in 0..longest_path {
        power = power * edge_weights;
        total += &power;
    }
    total
}

/// A multivariate Gaussian given by mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDist {
    /// Validates symmetry (within `1e-10`) and positive semi-definiteness
    /// (eigenvalues above `−1e-10`).
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::Parameter(format!(
                "covariance is {}x{}, expected {p}x{p}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > 1e-10 {
            return Err(Error::Parameter(format!(
                "covariance asymmetry {asym:.3e} exceeds 1e-10"
            )));
        }
        if p > 0 {
            let min_eig = cov
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &v| a.min(v));
            if min_eig < -1e-10 {
                return Err(Error::Parameter(format!(
                    "covariance has eigenvalue {min_eig:.3e} below -1e-10"
                )));
            }
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal `(mean, variance)` of coordinate `i`.
    pub fn marginal(&self, i: usize) -> (f64, f64) {
        (self.mean[i], self.cov[(i, i)])
    }
}

/// Centralized model: standard-normal confounders, zero-mean node noises.
#[derive(Debug, Clone, PartialEq)]
pub struct CglScm {
    diagram: CausalDiagram,
    edge_weights: DMatrix<f64>,
    loadings: DMatrix<f64>,
    bias: DVector<f64>,
    noise_var: DVector<f64>,
}

impl CglScm {
    /// Validates shapes, mask support (entries off the edge/confounder
    /// support must be exactly zero) and strictly positive noise variances.
    pub fn new(
        diagram: CausalDiagram,
        edge_weights: DMatrix<f64>,
        loadings: DMatrix<f64>,
        bias: DVector<f64>,
        noise_var: DVector<f64>,
    ) -> Result<Self> {
        let masks = diagram.build_masks();
        check_support("edge weight", &edge_weights, &masks.t_mask)?;
        check_support("confounder loading", &loadings, &masks.c_mask)?;
        check_lengths(&diagram, &bias, &noise_var)?;
        if let Some(v) = noise_var.iter().find(|v| **v <= 0.0) {
            return Err(Error::Parameter(format!(
                "noise variances must be strictly positive, got {v}"
            )));
        }
        Ok(Self {
            diagram,
            edge_weights,
            loadings,
            bias,
            noise_var,
        })
    }

    pub fn diagram(&self) -> &CausalDiagram {
        &self.diagram
    }

    /// Direct edge weights, supported on the edge mask.
    pub fn edge_weights(&self) -> &DMatrix<f64> {
        &self.edge_weights
    }

    /// Confounder loadings, one row per confounder.
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    /// Diagonal of the node-noise covariance.
    pub fn noise_var(&self) -> &DVector<f64> {
        &self.noise_var
    }

    /// `B` for this model's edge weights.
    pub fn influence(&self) -> DMatrix<f64> {
        total_influence(&self.edge_weights, self.diagram.longest_path())
    }

    /// Exact observational distribution of the endogenous variables.
    pub fn observational_dist(&self) -> GaussianDist {
        let b = self.influence();
        let mean = b.tr_mul(&self.bias);
        let cb = &self.loadings * &b;
        let psi_b = DMatrix::from_diagonal(&self.noise_var) * &b;
        let cov = symmetrize(cb.tr_mul(&cb) + b.tr_mul(&psi_b));
        GaussianDist::new(mean, cov).expect("model covariance is symmetric PSD")
    }

    /// Joint distribution of `(U, X)`: confounders first, then nodes.
    pub fn joint_ux_dist(&self) -> GaussianDist {
        let q = self.diagram.n_confounders();
        let p = self.diagram.n_nodes();
        let obs = self.observational_dist();
        let b = self.influence();
        let cb = &self.loadings * &b;
        let mut mean = DVector::zeros(q + p);
        mean.rows_mut(q, p).copy_from(&obs.mean);
        let mut cov = DMatrix::zeros(q + p, q + p);
        cov.view_mut((0, 0), (q, q))
            .copy_from(&DMatrix::identity(q, q));
        cov.view_mut((0, q), (q, p)).copy_from(&cb);
        cov.view_mut((q, 0), (p, q)).copy_from(&cb.transpose());
        cov.view_mut((q, q), (p, p)).copy_from(&obs.cov);
        GaussianDist::new(mean, cov).expect("joint covariance is symmetric PSD")
    }

    /// Observational log-likelihood of a dataset under this model.
    pub fn log_likelihood(&self, data: &Dataset) -> Result<f64> {
        data.check_columns(&self.diagram)?;
        let obs = self.observational_dist();
        let (n, sx, sxx) = data.moment_sums();
        linalg::mvn_loglik_suff(&obs.mean, &obs.cov, n, &sx, &sxx)
    }
}

/// General linear-Gaussian model: confounders `N(μᵤ, σ²ᵤ)`, node noises
/// `N(με, ψ²)`, plus per-node biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GlScm {
    diagram: CausalDiagram,
    edge_weights: DMatrix<f64>,
    loadings: DMatrix<f64>,
    conf_mean: DVector<f64>,
    conf_var: DVector<f64>,
    bias: DVector<f64>,
    noise_mean: DVector<f64>,
    noise_var: DVector<f64>,
}

impl GlScm {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        diagram: CausalDiagram,
        edge_weights: DMatrix<f64>,
        loadings: DMatrix<f64>,
        conf_mean: DVector<f64>,
        conf_var: DVector<f64>,
        bias: DVector<f64>,
        noise_mean: DVector<f64>,
        noise_var: DVector<f64>,
    ) -> Result<Self> {
        let masks = diagram.build_masks();
        check_support("edge weight", &edge_weights, &masks.t_mask)?;
        check_support("confounder loading", &loadings, &masks.c_mask)?;
        check_lengths(&diagram, &bias, &noise_var)?;
        let q = diagram.n_confounders();
        if conf_mean.len() != q || conf_var.len() != q {
            return Err(Error::Parameter(format!(
                "confounder mean/variance must have length {q}"
            )));
        }
        if noise_mean.len() != diagram.n_nodes() {
            return Err(Error::Parameter("noise mean has wrong length".into()));
        }
        if let Some(v) = conf_var.iter().find(|v| **v <= 0.0) {
            return Err(Error::Parameter(format!(
                "confounder variances must be strictly positive, got {v}"
            )));
        }
        if let Some(v) = noise_var.iter().find(|v| **v <= 0.0) {
            return Err(Error::Parameter(format!(
                "noise variances must be strictly positive, got {v}"
            )));
        }
        Ok(Self {
            diagram,
            edge_weights,
            loadings,
            conf_mean,
            conf_var,
            bias,
            noise_mean,
            noise_var,
        })
    }

    pub fn diagram(&self) -> &CausalDiagram {
        &self.diagram
    }

    /// Exact observational distribution, derived directly from the general
    /// form: `E[X] = Bᵀ(C′ᵀμᵤ + μ′ + με)`, `Cov[X] = Bᵀ(C′ᵀΣ²C′ + Ψ²)B`.
    pub fn observational_dist(&self) -> GaussianDist {
        let b = total_influence(&self.edge_weights, self.diagram.longest_path());
        let shift = self.loadings.tr_mul(&self.conf_mean) + &self.bias + &self.noise_mean;
        let mean = b.tr_mul(&shift);
        let inner = self.loadings.tr_mul(&DMatrix::from_diagonal(&self.conf_var))
            * &self.loadings
            + DMatrix::from_diagonal(&self.noise_var);
        let cov = symmetrize(b.tr_mul(&(inner * &b)));
        GaussianDist::new(mean, cov).expect("model covariance is symmetric PSD")
    }

    /// Centralizes the model: `U′ = μᵤ + σᵤ·U` with `U ~ N(0, 1)` folds the
    /// confounder scale into the loadings (`α = α′σᵤ`) and the confounder and
    /// noise means into the per-node bias. The observational distribution is
    /// unchanged.
    pub fn centralize(&self) -> CglScm {
        let sigma = self.conf_var.map(f64::sqrt);
        let mut loadings = self.loadings.clone();
        for (k, s) in sigma.iter().enumerate() {
            loadings.row_mut(k).scale_mut(*s);
        }
        let bias = self.loadings.tr_mul(&self.conf_mean) + &self.bias + &self.noise_mean;
        CglScm::new(
            self.diagram.clone(),
            self.edge_weights.clone(),
            loadings,
            bias,
            self.noise_var.clone(),
        )
        .expect("centralizing preserves support and positivity")
    }
}

/// Converts a general model to a centralized one with the same diagram and
/// the same observational distribution.
pub fn gl_to_cgl(model: &GlScm) -> CglScm {
    model.centralize()
}

fn check_support(what: &str, m: &DMatrix<f64>, mask: &DMatrix<f64>) -> Result<()> {
    if m.shape() != mask.shape() {
        return Err(Error::Parameter(format!(
            "{what} matrix is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            mask.nrows(),
            mask.ncols()
        )));
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if mask[(i, j)] == 0.0 && m[(i, j)] != 0.0 {
                return Err(Error::Parameter(format!(
                    "{what} ({i}, {j}) = {} lies outside the diagram support",
                    m[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

fn check_lengths(diagram: &CausalDiagram, bias: &DVector<f64>, noise_var: &DVector<f64>) -> Result<()> {
    let p = diagram.n_nodes();
    if bias.len() != p {
        return Err(Error::Parameter(format!(
            "bias has length {}, expected {p}",
            bias.len()
        )));
    }
    if noise_var.len() != p {
        return Err(Error::Parameter(format!(
            "noise variance has length {}, expected {p}",
            noise_var.len()
        )));
    }
    Ok(())
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}
