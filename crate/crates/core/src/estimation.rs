//! EM estimation of a centralized model from finite observational data.
//!
//! The observed-data likelihood is maximized by alternating an exact E-step
//! (the posterior of the confounders given each sample is Gaussian with a
//! shared covariance) with an M-step that runs masked gradient ascent on the
//! influence and loading matrices followed by a closed-form bias update.
//! Gradients are multiplied elementwise by the diagram's support masks, so
//! the unit diagonal of the influence matrix and every structural zero are
//! preserved exactly.
//!
//! Node noise is fixed to unit variance during estimation; the estimand is
//! the observational distribution, not the generating parameters.
//!
//! The step size stays constant within an attempt. If an M-step cannot make
//! any progress at that step size (or anything goes non-finite), the whole
//! fit restarts with the step size halved, up to [`MAX_STEP_HALVINGS`]
//! times.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::graph::{CausalDiagram, MaskSet};
use crate::linalg;
use crate::model::symmetrize;
use crate::sampler::{self, Dataset};

/// Maximum number of step-size halvings before estimation gives up.
pub const MAX_STEP_HALVINGS: u32 = 10;

/// Objective decreases beyond this relative slack reject a gradient step.
const REJECT_SLACK: f64 = 1e-10;

/// Estimation hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Gradient-ascent step size (constant per attempt).
    pub eta: f64,
    /// Cap on outer EM iterations.
    pub max_em_iters: usize,
    /// Cap on gradient steps per inner loop.
    pub max_inner_iters: usize,
    /// Relative change of the observed log-likelihood that counts as
    /// converged.
    pub em_tol: f64,
    /// Masked gradient norm below which an inner loop stops.
    pub inner_tol: f64,
    /// Half-width of the uniform initialization of masked entries; 0 starts
    /// from the identity/zero point.
    pub init_scale: f64,
    /// Seed for the initialization draw.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            max_em_iters: 500,
            max_inner_iters: 200,
            em_tol: 1e-6,
            inner_tol: 1e-6,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Parameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.em_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::Parameter("tolerances must be positive".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Parameter("init_scale must be non-negative".into()));
        }
        if self.max_em_iters < 1 || self.max_inner_iters < 1 {
            return Err(Error::Parameter("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Gaussian posterior of the confounders given each sample: per-sample means
/// plus the covariance shared by all samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// `N × |U|`; row `i` is the posterior mean given sample `i`.
    pub means: DMatrix<f64>,
    /// `|U| × |U|` shared posterior covariance.
    pub cov: DMatrix<f64>,
}

/// Outcome of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Estimated influence matrix: unit diagonal, reachability support.
    pub influence: DMatrix<f64>,
    /// Estimated confounder loadings on the confounder support, each row
    /// sign-flipped so its first nonzero entry is non-negative.
    pub loadings: DMatrix<f64>,
    /// Estimated per-node bias.
    pub bias: DVector<f64>,
    /// Observed-data log-likelihood: entry 0 at initialization, then one
    /// entry per EM iteration.
    pub loglik_trace: Vec<f64>,
    /// Masked gradient norm at the end of each iteration's influence loop.
    pub grad_norm_influence: Vec<f64>,
    /// Masked gradient norm at the end of each iteration's loading loop.
    pub grad_norm_loadings: Vec<f64>,
    /// EM iterations actually run.
    pub iterations: usize,
    /// Whether the log-likelihood change fell below `em_tol` before the
    /// iteration cap.
    pub converged: bool,
    /// Step size of the attempt that produced this result.
    pub eta_used: f64,
}

struct DataStats {
    n: f64,
    sx: DVector<f64>,
    sxx: DMatrix<f64>,
    mean: DVector<f64>,
}

impl DataStats {
    fn from_dataset(data: &Dataset) -> Self {
        let (n, sx, sxx) = data.moment_sums();
        let mean = &sx / n;
        Self { n, sx, sxx, mean }
    }
}

/// Posterior aggregates that the M-step needs: `Σᵢ mᵢ`, `Σᵢ mᵢxᵢᵀ` and
/// `Σᵢ E[UᵢUᵢᵀ | xᵢ] = Σᵢ mᵢmᵢᵀ + n·S`.
struct PostStats {
    m_sum: DVector<f64>,
    mx_sum: DMatrix<f64>,
    second_moment: DMatrix<f64>,
}

impl PostStats {
    fn from_posterior(data: &Dataset, post: &Posterior) -> Result<Self> {
        let n = data.n_rows();
        let q = post.cov.nrows();
        if post.means.nrows() != n || post.means.ncols() != q {
            return Err(Error::Parameter(format!(
                "posterior means are {}x{}, expected {n}x{q}",
                post.means.nrows(),
                post.means.ncols()
            )));
        }
        let m_sum = post.means.row_sum().transpose();
        let mx_sum = post.means.tr_mul(data.values());
        let second_moment = symmetrize(post.means.tr_mul(&post.means) + &post.cov * n as f64);
        Ok(Self {
            m_sum,
            mx_sum,
            second_moment,
        })
    }
}

/// Initial parameters: influence `I + R∘B_mask` and loadings `S∘C_mask` with
/// `R`, `S` uniform on `[-init_scale, init_scale]` (drawn row-major over the
/// mask support, influence first), bias = column means of the data.
pub fn init_params(
    diagram: &CausalDiagram,
    data: &Dataset,
    cfg: &FitConfig,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let masks = diagram.build_masks();
    init_from_masks(&masks, &data.column_means(), cfg)
}

fn init_from_masks(
    masks: &MaskSet,
    data_mean: &DVector<f64>,
    cfg: &FitConfig,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let p = masks.t_mask.nrows();
    let q = masks.c_mask.nrows();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut ChaCha12Rng| (2.0 * sampler::unit_open(rng) - 1.0) * cfg.init_scale;
    let mut influence = DMatrix::identity(p, p);
    for i in 0..p {
        for j in 0..p {
            if masks.b_mask[(i, j)] == 1.0 {
                influence[(i, j)] = draw(&mut rng);
            }
        }
    }
    let mut loadings = DMatrix::zeros(q, p);
    for k in 0..q {
        for j in 0..p {
            if masks.c_mask[(k, j)] == 1.0 {
                loadings[(k, j)] = draw(&mut rng);
            }
        }
    }
    (influence, loadings, data_mean.clone())
}

/// Exact E-step: posterior of the confounders given each sample at the
/// current parameters, with node noise fixed to unit variance.
pub fn e_step(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    bias: &DVector<f64>,
    data: &Dataset,
) -> Result<Posterior> {
    let q = loadings.nrows();
    let w = loadings * influence;
    let sigma = w.tr_mul(&w) + influence.tr_mul(influence);
    let chol = linalg::cholesky_with_jitter(&sigma)?;
    let gain = chol.solve(&w.transpose());
    let bt_mu = influence.tr_mul(bias);
    let mut centered = data.values().clone();
    for mut row in centered.row_iter_mut() {
        row -= bt_mu.transpose();
    }
    let means = centered * &gain;
    let cov = symmetrize(DMatrix::identity(q, q) - &w * &gain);
    Ok(Posterior { means, cov })
}

/// Expected complete-data objective maximized in the M-step:
/// `−n·log|BᵀB| − Σᵢ E[(xᵢ − Bᵀμ − BᵀCᵀUᵢ)ᵀ(BᵀB)⁻¹(xᵢ − Bᵀμ − BᵀCᵀUᵢ)]`
/// with the expectation over the given posterior.
pub fn m_objective(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    bias: &DVector<f64>,
    data: &Dataset,
    post: &Posterior,
) -> Result<f64> {
    let stats = DataStats::from_dataset(data);
    let post_stats = PostStats::from_posterior(data, post)?;
    objective(influence, loadings, bias, &stats, &post_stats)
}

/// Gradients of [`m_objective`] with respect to the influence and loading
/// matrices, before masking.
pub fn m_step_gradients(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    bias: &DVector<f64>,
    data: &Dataset,
    post: &Posterior,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let stats = DataStats::from_dataset(data);
    let post_stats = PostStats::from_posterior(data, post)?;
    Ok((
        gradient_influence(influence, loadings, bias, &stats, &post_stats)?,
        gradient_loadings(influence, loadings, bias, &post_stats)?,
    ))
}

/// Closed-form bias update: `μ = (1/N) Σᵢ ((Bᵀ)⁻¹xᵢ − Cᵀmᵢ)`.
pub fn update_mu(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    data: &Dataset,
    post: &Posterior,
) -> DVector<f64> {
    let n = data.n_rows() as f64;
    let xbar = data.column_means();
    let m_bar = post.means.row_sum().transpose() / n;
    let solved = influence
        .transpose()
        .lu()
        .solve(&xbar)
        .expect("influence matrix with unit diagonal and DAG support is invertible");
    solved - loadings.tr_mul(&m_bar)
}

/// Observed-data log-likelihood at raw parameters (noise fixed to unit
/// variance), the quantity EM improves and the outer convergence criterion.
pub fn observed_loglik(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    bias: &DVector<f64>,
    data: &Dataset,
) -> Result<f64> {
    let stats = DataStats::from_dataset(data);
    loglik_stats(influence, loadings, bias, &stats)
}

/// Runs EM until the observed log-likelihood change drops below `em_tol`
/// (relative) or the iteration cap, restarting with a halved step size on
/// divergence.
pub fn fit(diagram: &CausalDiagram, data: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    data.check_columns(diagram)?;
    let masks = diagram.build_masks();
    let stats = DataStats::from_dataset(data);

    let mut eta = cfg.eta;
    let mut last_trace = Vec::new();
    for _ in 0..=MAX_STEP_HALVINGS {
        match fit_attempt(&masks, &stats, cfg, eta)? {
            Attempt::Done(result) => return Ok(result),
            Attempt::Diverged(trace) => {
                last_trace = trace;
                eta *= 0.5;
            }
        }
    }
    Err(Error::Divergence {
        message: format!(
            "no ascent possible even after {MAX_STEP_HALVINGS} step-size halvings \
             (final eta {:.3e}); pass a smaller eta",
            eta * 2.0
        ),
        trace: last_trace,
    })
}

enum Attempt {
    Done(FitResult),
    Diverged(Vec<f64>),
}

fn fit_attempt(masks: &MaskSet, stats: &DataStats, cfg: &FitConfig, eta: f64) -> Result<Attempt> {
    let (mut influence, mut loadings, mut bias) = init_from_masks(masks, &stats.mean, cfg);

    let mut trace = vec![loglik_stats(&influence, &loadings, &bias, stats)?];
    let mut grad_norm_influence = Vec::new();
    let mut grad_norm_loadings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_em_iters {
        let post = match e_step_stats(&influence, &loadings, &bias, stats) {
            Ok(post) => post,
            Err(_) => return Ok(Attempt::Diverged(trace)),
        };

        let b_norm = {
            let loadings = &loadings;
            let bias = &bias;
            match ascend_masked(
                &mut influence,
                &masks.b_mask,
                eta,
                cfg,
                &mut |b| objective(b, loadings, bias, stats, &post),
                &mut |b| gradient_influence(b, loadings, bias, stats, &post),
            )? {
                Some(norm) => norm,
                None => return Ok(Attempt::Diverged(trace)),
            }
        };

        let c_norm = {
            let influence = &influence;
            let bias = &bias;
            match ascend_masked(
                &mut loadings,
                &masks.c_mask,
                eta,
                cfg,
                &mut |c| objective(influence, c, bias, stats, &post),
                &mut |c| gradient_loadings(influence, c, bias, &post),
            )? {
                Some(norm) => norm,
                None => return Ok(Attempt::Diverged(trace)),
            }
        };

        bias = mu_from_stats(&influence, &loadings, stats, &post);

        let loglik = match loglik_stats(&influence, &loadings, &bias, stats) {
            Ok(v) if v.is_finite() => v,
            _ => return Ok(Attempt::Diverged(trace)),
        };
        let previous = *trace.last().expect("trace starts non-empty");
        trace.push(loglik);
        grad_norm_influence.push(b_norm);
        grad_norm_loadings.push(c_norm);
        iterations = iter;

        if (loglik - previous).abs() <= cfg.em_tol * (1.0 + previous.abs()) {
            converged = true;
            break;
        }
    }

    canonicalize_rows(&mut loadings);
    Ok(Attempt::Done(FitResult {
        influence,
        loadings,
        bias,
        loglik_trace: trace,
        grad_norm_influence,
        grad_norm_loadings,
        iterations,
        converged,
        eta_used: eta,
    }))
}

/// One masked gradient-ascent loop at a fixed step size. Returns the final
/// masked gradient norm, or `None` when the loop diverged: a candidate went
/// non-finite, or the very first step already decreased the objective (the
/// step size cannot ascend from here).
fn ascend_masked(
    param: &mut DMatrix<f64>,
    mask: &DMatrix<f64>,
    eta: f64,
    cfg: &FitConfig,
    objective: &mut dyn FnMut(&DMatrix<f64>) -> Result<f64>,
    gradient: &mut dyn FnMut(&DMatrix<f64>) -> Result<DMatrix<f64>>,
) -> Result<Option<f64>> {
    let mut current = objective(param)?;
    if !current.is_finite() {
        return Ok(None);
    }
    let mut accepted = false;
    let mut gnorm = 0.0;
    for _ in 0..cfg.max_inner_iters {
        let masked = gradient(param)?.component_mul(mask);
        gnorm = masked.norm();
        if gnorm <= cfg.inner_tol {
            break;
        }
        let candidate = &*param + masked * eta;
        let value = match objective(&candidate) {
            Ok(v) => v,
            Err(_) => f64::NAN,
        };
        if !value.is_finite() {
            return Ok(None);
        }
        if value < current - REJECT_SLACK * (1.0 + current.abs()) {
            if !accepted {
                return Ok(None);
            }
            break;
        }
        *param = candidate;
        current = value;
        accepted = true;
    }
    Ok(Some(gnorm))
}

/// E-step aggregates straight from sufficient statistics: with
/// `A = Σ⁻¹Wᵀ`, `Σᵢmᵢ = Aᵀ(Σxᵢ − n·Bᵀμ)`, `Σᵢmᵢxᵢᵀ = Aᵀ(Σxᵢxᵢᵀ − Bᵀμ·Σxᵢᵀ)`
/// and `Σᵢmᵢmᵢᵀ = AᵀRA` for the centered scatter `R`.
fn e_step_stats(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    bias: &DVector<f64>,
    stats: &DataStats,
) -> Result<PostStats> {
    let q = loadings.nrows();
    let w = loadings * influence;
    let sigma = w.tr_mul(&w) + influence.tr_mul(influence);
    let chol = linalg::cholesky_with_jitter(&sigma)?;
    let gain = chol.solve(&w.transpose());
    let bt_mu = influence.tr_mul(bias);

    let r_sum = &stats.sx - &bt_mu * stats.n;
    let m_sum = gain.tr_mul(&r_sum);
    let mx_sum = gain.tr_mul(&(&stats.sxx - &bt_mu * stats.sx.transpose()));
    let scatter = linalg::centered_scatter(&bt_mu, stats.n, &stats.sx, &stats.sxx);
    let mm_sum = gain.tr_mul(&scatter) * &gain;
    let cov = DMatrix::identity(q, q) - &w * &gain;
    let second_moment = symmetrize(mm_sum + cov * stats.n);
    Ok(PostStats {
        m_sum,
        mx_sum,
        second_moment,
    })
}

fn loglik_stats(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    bias: &DVector<f64>,
    stats: &DataStats,
) -> Result<f64> {
    let w = loadings * influence;
    let cov = w.tr_mul(&w) + influence.tr_mul(influence);
    let mean = influence.tr_mul(bias);
    linalg::mvn_loglik_suff(&mean, &cov, stats.n, &stats.sx, &stats.sxx)
}

fn mu_from_stats(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    stats: &DataStats,
    post: &PostStats,
) -> DVector<f64> {
    let solved = influence
        .transpose()
        .lu()
        .solve(&stats.mean)
        .expect("influence matrix with unit diagonal and DAG support is invertible");
    solved - loadings.tr_mul(&post.m_sum) / stats.n
}

fn objective(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    bias: &DVector<f64>,
    stats: &DataStats,
    post: &PostStats,
) -> Result<f64> {
    let btb = influence.tr_mul(influence);
    let chol = nalgebra::Cholesky::new(btb).ok_or_else(|| {
        Error::Numerical("BᵀB is singular; influence matrix lost invertibility".into())
    })?;
    let logdet = linalg::log_det(&chol);
    let precision = chol.inverse();
    let bt_mu = influence.tr_mul(bias);

    let scatter = linalg::centered_scatter(&bt_mu, stats.n, &stats.sx, &stats.sxx);
    let cross = &post.mx_sum - &post.m_sum * bt_mu.transpose();
    let quad_conf = loadings.tr_mul(&post.second_moment) * loadings;

    let q1 = (&precision * scatter).trace();
    let q2 = (&precision * influence.transpose() * loadings.transpose() * cross).trace();
    let q3 = (influence * &precision * influence.transpose() * quad_conf).trace();
    Ok(-stats.n * logdet - (q1 - 2.0 * q2 + q3))
}

fn gradient_influence(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    bias: &DVector<f64>,
    stats: &DataStats,
    post: &PostStats,
) -> Result<DMatrix<f64>> {
    let btb = influence.tr_mul(influence);
    let chol = nalgebra::Cholesky::new(btb).ok_or_else(|| {
        Error::Numerical("BᵀB is singular; influence matrix lost invertibility".into())
    })?;
    let precision = chol.inverse();
    let bm = influence * &precision;
    let bm_bt = &bm * influence.transpose();
    let bt_mu = influence.tr_mul(bias);

    let r_sum = &stats.sx - &bt_mu * stats.n;
    let scatter = linalg::centered_scatter(&bt_mu, stats.n, &stats.sx, &stats.sxx);
    let cross = &post.mx_sum - &post.m_sum * bt_mu.transpose();
    let quad_conf = loadings.tr_mul(&post.second_moment) * loadings;
    let ct_cross = loadings.tr_mul(&cross);

    // d/dB of −n·log|BᵀB|.
    let g_logdet = &bm * (-2.0 * stats.n);
    // d/dB of −Σ rᵢᵀ(BᵀB)⁻¹rᵢ.
    let g_resid = bias * (r_sum.transpose() * &precision) * 2.0 + &bm * &scatter * &precision * 2.0;
    // d/dB of +2Σ rᵢᵀ(BᵀB)⁻¹BᵀCᵀmᵢ.
    let g_cross = (bias * (post.m_sum.transpose() * loadings) * &bm * (-1.0)
        - &bm_bt * &ct_cross * &precision
        - &bm * cross.transpose() * loadings * &bm
        + &ct_cross * &precision)
        * 2.0;
    // d/dB of −tr(B(BᵀB)⁻¹Bᵀ·CᵀE[UUᵀ]C).
    let g_quad = &quad_conf * &bm * (-2.0) + &bm_bt * &quad_conf * &bm * 2.0;

    Ok(g_logdet + g_resid + g_cross + g_quad)
}

fn gradient_loadings(
    influence: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    bias: &DVector<f64>,
    post: &PostStats,
) -> Result<DMatrix<f64>> {
    let btb = influence.tr_mul(influence);
    let chol = nalgebra::Cholesky::new(btb).ok_or_else(|| {
        Error::Numerical("BᵀB is singular; influence matrix lost invertibility".into())
    })?;
    let precision = chol.inverse();
    let bm = influence * &precision;
    let bm_bt = &bm * influence.transpose();
    let bt_mu = influence.tr_mul(bias);
    let cross = &post.mx_sum - &post.m_sum * bt_mu.transpose();

    Ok((cross * &precision * influence.transpose() - &post.second_moment * loadings * &bm_bt)
        * 2.0)
}

/// Flips loading rows so the first nonzero entry of each row is
/// non-negative; purely cosmetic, the distribution is sign-invariant per row.
fn canonicalize_rows(loadings: &mut DMatrix<f64>) {
    for mut row in loadings.row_iter_mut() {
        let flip = row
            .iter()
            .find(|v| **v != 0.0)
            .map(|v| *v < 0.0)
            .unwrap_or(false);
        if flip {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
    }
}
