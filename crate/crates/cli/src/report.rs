//! Benchmark report: per-query comparison rows plus fit diagnostics, as an
//! aligned text table and as JSON.

use cgl_core::query::QueryComparison;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct BenchmarkReport {
    pub benchmark: String,
    pub n: usize,
    pub seed: u64,
    pub mean_tol: f64,
    pub var_tol: f64,
    pub repaired: bool,
    pub fit: FitDiagnostics,
    pub queries: Vec<QueryRow>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub eta_used: f64,
    pub final_loglik: f64,
    pub edge_recovery_residual: f64,
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct QueryRow {
    pub query: String,
    pub original: GaussianParams,
    pub estimated: GaussianParams,
    pub mean_abs_delta: f64,
    pub var_rel_delta: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct GaussianParams {
    pub mean: f64,
    pub var: f64,
}

impl BenchmarkReport {
    pub fn new(
        benchmark: &str,
        n: usize,
        seed: u64,
        mean_tol: f64,
        var_tol: f64,
        repaired: bool,
        fit: FitDiagnostics,
        comparisons: &[QueryComparison],
    ) -> Self {
        let queries: Vec<QueryRow> = comparisons
            .iter()
            .map(|row| QueryRow {
                query: row.query.to_string(),
                original: GaussianParams {
                    mean: row.original.mean,
                    var: row.original.var,
                },
                estimated: GaussianParams {
                    mean: row.estimated.mean,
                    var: row.estimated.var,
                },
                mean_abs_delta: row.mean_abs_delta,
                var_rel_delta: row.var_rel_delta,
                pass: row.mean_abs_delta <= mean_tol && row.var_rel_delta <= var_tol,
            })
            .collect();
        let pass = queries.iter().all(|q| q.pass);
        Self {
            benchmark: benchmark.to_string(),
            n,
            seed,
            mean_tol,
            var_tol,
            repaired,
            fit,
            queries,
            pass,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "benchmark {}  n={}  seed={}  (|Δmean| ≤ {}, |Δvar|/var ≤ {})\n",
            self.benchmark, self.n, self.seed, self.mean_tol, self.var_tol
        ));
        out.push_str(&format!(
            "fit: {} iterations, converged={}, eta={:.3e}, log-likelihood={:.4}, edge residual={:.4e}{}\n",
            self.fit.iterations,
            self.fit.converged,
            self.fit.eta_used,
            self.fit.final_loglik,
            self.fit.edge_recovery_residual,
            if self.repaired { "" } else { ", repair disabled" },
        ));
        out.push_str(&format!(
            "{:<24} {:>20} {:>20} {:>9} {:>9}  {}\n",
            "query", "original", "estimated", "|Δmean|", "Δvar/var", "status"
        ));
        for row in &self.queries {
            out.push_str(&format!(
                "{:<24} {:>20} {:>20} {:>9.4} {:>9.4}  {}\n",
                row.query,
                format!("N({:.4}, {:.4})", row.original.mean, row.original.var),
                format!("N({:.4}, {:.4})", row.estimated.mean, row.estimated.var),
                row.mean_abs_delta,
                row.var_rel_delta,
                if row.pass { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "result: {}\n",
            if self.pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}
