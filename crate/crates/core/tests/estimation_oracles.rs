//! Estimation-step oracles: finite differences for the analytic gradients,
//! generic Gaussian conditioning for the E-step, naive per-sample evaluation
//! and posterior Monte-Carlo for the M-objective.

mod common;

use approx::assert_relative_eq;
use cgl_core::estimation::{
    e_step, m_objective, m_step_gradients, observed_loglik, update_mu, Posterior,
};
use cgl_core::{CausalDiagram, Dataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random raw parameter point on the diagram's masks (the influence matrix
/// is free on the reachability support, like a mid-fit iterate).
fn random_point<R: Rng>(
    rng: &mut R,
    diagram: &CausalDiagram,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let masks = diagram.build_masks();
    let p = diagram.n_nodes();
    let q = diagram.n_confounders();
    let mut influence = DMatrix::identity(p, p);
    for i in 0..p {
        for j in 0..p {
            if masks.b_mask[(i, j)] == 1.0 {
                influence[(i, j)] = rng.gen_range(-0.9..0.9);
            }
        }
    }
    let mut loadings = DMatrix::zeros(q, p);
    for k in 0..q {
        for j in 0..p {
            if masks.c_mask[(k, j)] == 1.0 {
                loadings[(k, j)] = rng.gen_range(-0.9..0.9);
            }
        }
    }
    let bias = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
    (influence, loadings, bias)
}

fn small_dataset<R: Rng>(rng: &mut R, diagram: &CausalDiagram, n: usize) -> Dataset {
    let model = common::random_cgl(rng, diagram);
    let values = common::simulate_per_node(&model, &[], n, rng);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..diagram.n_nodes()).map(|j| values[(i, j)]).collect())
        .collect();
    Dataset::from_rows(diagram.node_names().to_vec(), rows).unwrap()
}

#[test]
fn gradients_match_central_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(451);
    for round in 0..12 {
        let n_nodes = rng.gen_range(2..=5);
        let diagram = common::random_diagram(&mut rng, n_nodes, 0.5, 2);
        let data = small_dataset(&mut rng, &diagram, 25);
        let (influence, loadings, bias) = random_point(&mut rng, &diagram);
        let post = e_step(&influence, &loadings, &bias, &data).unwrap();

        let (grad_b, grad_c) = m_step_gradients(&influence, &loadings, &bias, &data, &post).unwrap();

        let fd_b = common::fd_gradient(
            |b| m_objective(b, &loadings, &bias, &data, &post).unwrap(),
            &influence,
            1e-5,
        );
        let rel_b = (&grad_b - &fd_b).norm() / fd_b.norm().max(1e-8);
        assert!(rel_b < 1e-5, "round {round}: influence gradient rel err {rel_b}");

        if diagram.n_confounders() > 0 {
            let fd_c = common::fd_gradient(
                |c| m_objective(&influence, c, &bias, &data, &post).unwrap(),
                &loadings,
                1e-5,
            );
            let rel_c = (&grad_c - &fd_c).norm() / fd_c.norm().max(1e-8);
            assert!(rel_c < 1e-5, "round {round}: loading gradient rel err {rel_c}");
        }
    }
}

#[test]
fn e_step_matches_schur_conditioning() {
    // Model-based parameter points: condition the joint (U, X) on X = x.
    let mut rng = ChaCha12Rng::seed_from_u64(452);
    for _ in 0..20 {
        let n_nodes = rng.gen_range(2..=6);
        let diagram = common::random_diagram(&mut rng, n_nodes, 0.5, 2);
        if diagram.n_confounders() == 0 {
            continue;
        }
        let model = common::random_cgl(&mut rng, &diagram);
        // Unit noise: the E-step fixes ψ² = 1.
        let model = cgl_core::CglScm::new(
            diagram.clone(),
            model.edge_weights().clone(),
            model.loadings().clone(),
            model.bias().clone(),
            DVector::from_element(diagram.n_nodes(), 1.0),
        )
        .unwrap();
        let data = small_dataset(&mut rng, &diagram, 5);
        let influence = model.influence();
        let post = e_step(&influence, model.loadings(), model.bias(), &data).unwrap();

        let joint = model.joint_ux_dist();
        let q = diagram.n_confounders();
        for i in 0..data.n_rows() {
            let x = data.values().row(i).transpose();
            let (mean, cov) = common::condition_joint_on_x(&joint.mean, &joint.cov, q, &x);
            for k in 0..q {
                assert_relative_eq!(post.means[(i, k)], mean[k], epsilon = 1e-10);
            }
            assert_relative_eq!(post.cov, cov, epsilon = 1e-10);
        }
    }
}

#[test]
fn e_step_matches_schur_conditioning_at_raw_points() {
    // Mid-fit iterates are not on the model manifold; assemble the implied
    // joint directly from the raw matrices and condition it.
    let mut rng = ChaCha12Rng::seed_from_u64(453);
    for _ in 0..20 {
        let n_nodes = rng.gen_range(2..=5);
        let diagram = common::random_diagram(&mut rng, n_nodes, 0.5, 2);
        if diagram.n_confounders() == 0 {
            continue;
        }
        let data = small_dataset(&mut rng, &diagram, 4);
        let (influence, loadings, bias) = random_point(&mut rng, &diagram);
        let post = e_step(&influence, &loadings, &bias, &data).unwrap();

        let q = diagram.n_confounders();
        let p = diagram.n_nodes();
        let w = &loadings * &influence;
        let mut mean = DVector::zeros(q + p);
        mean.rows_mut(q, p).copy_from(&influence.tr_mul(&bias));
        let mut cov = DMatrix::zeros(q + p, q + p);
        cov.view_mut((0, 0), (q, q)).copy_from(&DMatrix::identity(q, q));
        cov.view_mut((0, q), (q, p)).copy_from(&w);
        cov.view_mut((q, 0), (p, q)).copy_from(&w.transpose());
        cov.view_mut((q, q), (p, p))
            .copy_from(&(w.tr_mul(&w) + influence.tr_mul(&influence)));

        for i in 0..data.n_rows() {
            let x = data.values().row(i).transpose();
            let (m, s) = common::condition_joint_on_x(&mean, &cov, q, &x);
            for k in 0..q {
                assert_relative_eq!(post.means[(i, k)], m[k], epsilon = 1e-10);
            }
            assert_relative_eq!(post.cov, s, epsilon = 1e-10);
        }
    }
}

#[test]
fn objective_matches_naive_per_sample_evaluation() {
    let mut rng = ChaCha12Rng::seed_from_u64(454);
    for _ in 0..10 {
        let n_nodes = rng.gen_range(2..=5);
        let diagram = common::random_diagram(&mut rng, n_nodes, 0.5, 2);
        let data = small_dataset(&mut rng, &diagram, 30);
        let (influence, loadings, bias) = random_point(&mut rng, &diagram);
        let post = e_step(&influence, &loadings, &bias, &data).unwrap();
        let fast = m_objective(&influence, &loadings, &bias, &data, &post).unwrap();

        // Naive route: explicit inverse, one sample at a time.
        let n = data.n_rows();
        let btb = influence.tr_mul(&influence);
        let precision = btb.clone().try_inverse().unwrap();
        let logdet = btb.determinant().ln();
        let bt_mu = influence.tr_mul(&bias);
        let w_t = (&loadings * &influence).transpose();
        let mut total = 0.0;
        for i in 0..n {
            let x = data.values().row(i).transpose();
            let r = &x - &bt_mu;
            let m_i = post.means.row(i).transpose();
            let quad_r = (&precision * &r).dot(&r);
            let cross = (&precision * &w_t * &m_i).dot(&r);
            let second = m_i.clone() * m_i.transpose() + &post.cov;
            let quad_u = (w_t.transpose() * &precision * &w_t * second).trace();
            total += quad_r - 2.0 * cross + quad_u;
        }
        let naive = -(n as f64) * logdet - total;
        assert_relative_eq!(fast, naive, max_relative = 1e-8, epsilon = 1e-8);
    }
}

#[test]
fn objective_matches_posterior_monte_carlo() {
    // Sample U from the E-step posterior and average the quadratic form.
    let mut rng = ChaCha12Rng::seed_from_u64(455);
    let model = cgl_core::benchmarks::frontdoor_model();
    let diagram = model.diagram();
    let data = small_dataset(&mut rng, &diagram.clone(), 5);
    let (influence, loadings, bias) = random_point(&mut rng, diagram);
    let post = e_step(&influence, &loadings, &bias, &data).unwrap();
    let objective = m_objective(&influence, &loadings, &bias, &data, &post).unwrap();

    let btb = influence.tr_mul(&influence);
    let precision = btb.clone().try_inverse().unwrap();
    let logdet = btb.determinant().ln();
    let bt_mu = influence.tr_mul(&bias);
    let w_t = (&loadings * &influence).transpose();
    let sd = post.cov[(0, 0)].sqrt();

    let draws = 20_000;
    let mut mc_sum = 0.0;
    let mut mc_sq = 0.0;
    for i in 0..data.n_rows() {
        let x = data.values().row(i).transpose();
        let m_i = post.means[(i, 0)];
        let mut acc = 0.0;
        let mut acc_sq = 0.0;
        for _ in 0..draws {
            let z: f64 = StandardNormal.sample(&mut rng);
            let u = m_i + sd * z;
            let r = &x - &bt_mu - &w_t * DVector::from_element(1, u);
            let quad = (&precision * &r).dot(&r);
            acc += quad;
            acc_sq += quad * quad;
        }
        mc_sum += acc / draws as f64;
        mc_sq += (acc_sq / draws as f64 - (acc / draws as f64).powi(2)) / draws as f64;
    }
    let mc_objective = -(data.n_rows() as f64) * logdet - mc_sum;
    let se = mc_sq.sqrt();
    assert!(
        (objective - mc_objective).abs() < 3.0 * se,
        "analytic {objective} vs MC {mc_objective} (se {se})"
    );
}

#[test]
fn loading_gradient_vanishes_at_grid_optimum() {
    // One confounder with two loaded entries: refine a coordinate grid to
    // the quadratic optimum and check the masked gradient there.
    let mut rng = ChaCha12Rng::seed_from_u64(456);
    let model = cgl_core::benchmarks::frontdoor_model();
    let diagram = model.diagram().clone();
    let data = small_dataset(&mut rng, &diagram, 40);
    let (influence, _, bias) = random_point(&mut rng, &diagram);
    let post = e_step(&influence, model.loadings(), &bias, &data).unwrap();

    let eval = |a: f64, b: f64| {
        let mut c = DMatrix::zeros(1, 3);
        c[(0, 0)] = a;
        c[(0, 2)] = b;
        m_objective(&influence, &c, &bias, &data, &post).unwrap()
    };
    let (mut best_a, mut best_b) = (0.0, 0.0);
    let mut width = 2.0;
    for _ in 0..40 {
        let mut best = f64::NEG_INFINITY;
        let (center_a, center_b) = (best_a, best_b);
        for da in -4..=4 {
            for db in -4..=4 {
                let a = center_a + width * da as f64 / 4.0;
                let b = center_b + width * db as f64 / 4.0;
                let value = eval(a, b);
                if value > best {
                    best = value;
                    best_a = a;
                    best_b = b;
                }
            }
        }
        width *= 0.5;
    }

    let mut c_opt = DMatrix::zeros(1, 3);
    c_opt[(0, 0)] = best_a;
    c_opt[(0, 2)] = best_b;
    let (_, grad_c) = m_step_gradients(&influence, &c_opt, &bias, &data, &post).unwrap();
    let masks = diagram.build_masks();
    let masked = grad_c.component_mul(&masks.c_mask);
    // Grid resolution bounds the distance to the true optimum.
    assert!(masked.norm() < 1e-3, "masked gradient {}", masked.norm());
}

#[test]
fn loading_gradient_is_zero_at_zero_loadings() {
    // With zero loadings the posterior means vanish, making C = 0 an exact
    // stationary point regardless of the data.
    let mut rng = ChaCha12Rng::seed_from_u64(457);
    let model = cgl_core::benchmarks::frontdoor_model();
    let diagram = model.diagram().clone();
    let data = small_dataset(&mut rng, &diagram, 50);
    let influence = model.influence();
    let zero = DMatrix::zeros(1, 3);
    let post = e_step(&influence, &zero, model.bias(), &data).unwrap();
    let (_, grad_c) = m_step_gradients(&influence, &zero, model.bias(), &data, &post).unwrap();
    assert!(grad_c.abs().max() <= 1e-12);
}

#[test]
fn loading_gradient_shrinks_on_confounderless_data() {
    // Data generated without confounding: at small nonzero loadings the
    // per-sample gradient shrinks with N. Threshold calibrated across these
    // 10 seeds at N = 50k: max observed 3.5e-4, asserted with 3x margin.
    let diagram = CausalDiagram::new(
        vec!["X1".into(), "X2".into(), "X3".into()],
        vec![("X1".into(), "X2".into()), ("X2".into(), "X3".into())],
        vec![("U4".into(), vec!["X1".into(), "X3".into()])],
    )
    .unwrap();
    let generator = cgl_core::CglScm::new(
        diagram.clone(),
        {
            let mut t = DMatrix::zeros(3, 3);
            t[(0, 1)] = 0.5;
            t[(1, 2)] = 0.9;
            t
        },
        DMatrix::zeros(1, 3),
        DVector::from_vec(vec![0.3, 0.1, 0.2]),
        DVector::from_element(3, 1.0),
    )
    .unwrap();
    let mut probe = DMatrix::zeros(1, 3);
    probe[(0, 0)] = 0.01;
    probe[(0, 2)] = 0.01;
    let influence = generator.influence();
    for seed in 0..10u64 {
        let data = cgl_core::sampler::sample(&generator, 50_000, seed);
        let post = e_step(&influence, &probe, generator.bias(), &data).unwrap();
        let (_, grad_c) =
            m_step_gradients(&influence, &probe, generator.bias(), &data, &post).unwrap();
        let per_sample = grad_c.norm() / data.n_rows() as f64;
        assert!(per_sample < 1.1e-3, "seed {seed}: per-sample ∥grad∥ {per_sample}");
    }
}

#[test]
fn update_mu_is_consistent_at_scale() {
    // True parameters and exact posteriors on a large sample put the bias
    // estimate close to the generating (0.3, 0.1, 0.2).
    let model = cgl_core::benchmarks::frontdoor_model();
    let data = cgl_core::sampler::sample(&model, 1_000_000, 30);
    let influence = model.influence();
    let post = e_step(&influence, model.loadings(), model.bias(), &data).unwrap();
    let mu = update_mu(&influence, model.loadings(), &data, &post);
    for (j, truth) in [0.3, 0.1, 0.2].into_iter().enumerate() {
        assert!((mu[j] - truth).abs() < 0.02, "mu[{j}] = {}", mu[j]);
    }
}

#[test]
fn update_mu_maximizes_the_objective_over_bias() {
    let mut rng = ChaCha12Rng::seed_from_u64(458);
    let diagram = common::random_diagram(&mut rng, 4, 0.5, 1);
    let data = small_dataset(&mut rng, &diagram, 30);
    let (influence, loadings, bias) = random_point(&mut rng, &diagram);
    let post = e_step(&influence, &loadings, &bias, &data).unwrap();
    let mu_star = update_mu(&influence, &loadings, &data, &post);
    let at_star = m_objective(&influence, &loadings, &mu_star, &data, &post).unwrap();
    for j in 0..mu_star.len() {
        for delta in [-1e-3, 1e-3] {
            let mut perturbed = mu_star.clone();
            perturbed[j] += delta;
            let value = m_objective(&influence, &loadings, &perturbed, &data, &post).unwrap();
            assert!(value <= at_star + 1e-12, "bias {j} not optimal");
        }
    }
}

#[test]
fn observed_loglik_matches_naive_density_oracle() {
    let model = cgl_core::benchmarks::frontdoor_model();
    let data = cgl_core::sampler::sample(&model, 100, 31);
    let influence = model.influence();
    let fast = observed_loglik(&influence, model.loadings(), model.bias(), &data).unwrap();

    let obs = model.observational_dist();
    let naive: f64 = (0..data.n_rows())
        .map(|i| {
            let x = data.values().row(i).transpose();
            common::mvn_logpdf_naive(&obs.mean, &obs.cov, &x)
        })
        .sum();
    assert_relative_eq!(fast, naive, epsilon = 1e-8, max_relative = 1e-10);

    // Same oracle backs the model-level likelihood.
    assert_relative_eq!(
        model.log_likelihood(&data).unwrap(),
        naive,
        epsilon = 1e-8,
        max_relative = 1e-10
    );
}

#[test]
fn generating_model_dominates_perturbed_model() {
    let model = cgl_core::benchmarks::frontdoor_model();
    let data = cgl_core::sampler::sample(&model, 10_000, 32);
    let influence = model.influence();
    let at_truth = observed_loglik(&influence, model.loadings(), model.bias(), &data).unwrap();
    let mut perturbed = influence.clone();
    perturbed[(0, 1)] += 0.5;
    perturbed[(1, 2)] += 0.5;
    perturbed[(0, 2)] += 0.5;
    let off = observed_loglik(&perturbed, model.loadings(), model.bias(), &data).unwrap();
    assert!(at_truth > off, "{at_truth} vs {off}");
}

#[test]
fn posterior_covariance_is_dominated_by_prior() {
    let mut rng = ChaCha12Rng::seed_from_u64(459);
    for _ in 0..10 {
        let diagram = common::random_diagram(&mut rng, 4, 0.5, 2);
        if diagram.n_confounders() == 0 {
            continue;
        }
        let data = small_dataset(&mut rng, &diagram, 10);
        let (influence, loadings, bias) = random_point(&mut rng, &diagram);
        let Posterior { cov, .. } = e_step(&influence, &loadings, &bias, &data).unwrap();
        let gap = DMatrix::identity(cov.nrows(), cov.ncols()) - &cov;
        let min_eig = gap
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &v| a.min(v));
        assert!(min_eig > -1e-10, "I - S has eigenvalue {min_eig}");
    }
}
