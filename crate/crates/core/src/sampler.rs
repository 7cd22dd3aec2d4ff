//! Seeded observational sampling and dataset IO.
//!
//! Sampling is bit-reproducible across runs and platforms. One ChaCha12
//! stream is created per dataset from the 64-bit seed. For each row the
//! stream yields the confounder values first (one standard normal per
//! confounder, in declaration order) and then the node noises (one per
//! node, in declaration order). Each standard normal consumes exactly one
//! `u64`: the high 53 bits are mapped to the open interval `(0, 1)` via
//! `u = ((bits >> 11) + 0.5) · 2⁻⁵³` and pushed through the AS 241
//! (`PPND16`) rational approximation of the inverse normal CDF.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::graph::CausalDiagram;
use crate::model::CglScm;

/// A finite observational sample bound to named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    values: DMatrix<f64>,
    seed: Option<u64>,
}

impl Dataset {
    /// Builds a dataset from row-major values. Rejects empty data, ragged
    /// rows and non-finite entries.
    pub fn from_rows(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Data("dataset has no columns".into()));
        }
        if rows.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }
        let width = columns.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Data(format!(
                    "row {i} has {} values, expected {width}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i} contains non-finite value {v}")));
            }
        }
        let values = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
        Ok(Self {
            columns,
            values,
            seed: None,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Row-major `N × |X|` value matrix.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    /// Seed used for generation; `None` for external data.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Checks that columns bind 1:1, in order, to the diagram's nodes.
    pub fn check_columns(&self, diagram: &CausalDiagram) -> Result<()> {
        if self.columns != diagram.node_names() {
            return Err(Error::Data(format!(
                "dataset columns {:?} do not match diagram nodes {:?}",
                self.columns,
                diagram.node_names()
            )));
        }
        Ok(())
    }

    /// `(n, Σxᵢ, Σxᵢxᵢᵀ)` sufficient statistics.
    pub fn moment_sums(&self) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.values.nrows() as f64;
        let sx = self.values.row_sum().transpose();
        let sxx = self.values.tr_mul(&self.values);
        (n, sx, sxx)
    }

    /// Per-column means.
    pub fn column_means(&self) -> DVector<f64> {
        self.values.row_mean().transpose()
    }

    /// Writes the dataset as CSV: header row of column names, one sample per
    /// line, 17 significant digits so values round-trip exactly.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(&self.columns)
            .map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
        for i in 0..self.values.nrows() {
            let row: Vec<String> = (0..self.values.ncols())
                .map(|j| format!("{:.16e}", self.values[(i, j)]))
                .collect();
            out.write_record(&row)
                .map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::to_csv`] (or any numeric CSV
    /// with a header row).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let columns: Vec<String> = input
            .headers()
            .map_err(|e| Error::Data(format!("csv header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in input.records().enumerate() {
            let record = record.map_err(|e| Error::Data(format!("csv row {i}: {e}")))?;
            let row: Vec<f64> = record
                .iter()
                .map(|field| {
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Data(format!("csv row {i}: '{field}': {e}")))
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Self::from_rows(columns, rows)
    }
}

/// Draws `n` observational samples from the model under the documented
/// stream layout. Identical `(model, n, seed)` produce bit-identical data.
///
/// # Panics
///
/// Panics if `n == 0`.
pub fn sample(model: &CglScm, n: usize, seed: u64) -> Dataset {
    assert!(n >= 1, "sample count must be at least 1");
    let diagram = model.diagram();
    let p = diagram.n_nodes();
    let q = diagram.n_confounders();
    let b = model.influence();
    let bt = b.transpose();
    let loading_t = (model.loadings() * &b).transpose();
    let mean = b.tr_mul(model.bias());
    let noise_sd = model.noise_var().map(f64::sqrt);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut values = DMatrix::zeros(n, p);
    let mut u = DVector::zeros(q);
    let mut e = DVector::zeros(p);
    for i in 0..n {
        for k in 0..q {
            u[k] = standard_normal(&mut rng);
        }
        for j in 0..p {
            e[j] = noise_sd[j] * standard_normal(&mut rng);
        }
        let row = &mean + &loading_t * &u + &bt * &e;
        values.row_mut(i).copy_from(&row.transpose());
    }
    Dataset {
        columns: diagram.node_names().to_vec(),
        values,
        seed: Some(seed),
    }
}

/// Uniform draw on the open interval `(0, 1)` from one `u64`.
pub(crate) fn unit_open<R: RngCore>(rng: &mut R) -> f64 {
    let bits = rng.next_u64();
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    inv_norm_cdf(unit_open(rng))
}

/// Inverse standard normal CDF, AS 241 `PPND16` (Wichura 1988): a rational
/// approximation accurate to about 1e-15 over `(0, 1)`.
pub fn inv_norm_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0, 1)");
    const A: [f64; 8] = [
        3.3871328727963666080e0,
        1.3314166789178437745e2,
        1.9715909503065514427e3,
        1.3731693765509461125e4,
        4.5921953931549871457e4,
        6.7265770927008700853e4,
        3.3430575583588128105e4,
        2.5090809287301226727e3,
    ];
    const B: [f64; 7] = [
        4.2313330701600911252e1,
        6.8718700749205790830e2,
        5.3941960214247511077e3,
        2.1213794301586595867e4,
        3.9307895800092710610e4,
        2.8729085735721942674e4,
        5.2264952788528545610e3,
    ];
    const C: [f64; 8] = [
        1.42343711074968357734e0,
        4.63033784615654529590e0,
        5.76949722146069140550e0,
        3.64784832476320460504e0,
        1.27045825245236838258e0,
        2.41780725177450611770e-1,
        2.27238449892691845833e-2,
        7.74545014278341407640e-4,
    ];
    const D: [f64; 7] = [
        2.05319162663775882187e0,
        1.67638483018380384940e0,
        6.89767334985100004550e-1,
        1.48103976427480074590e-1,
        1.51986665636164571966e-2,
        5.47593808499534494600e-4,
        1.05075007164441684324e-9,
    ];
    const E: [f64; 8] = [
        6.65790464350110377720e0,
        5.46378491116411436990e0,
        1.78482653991729133580e0,
        2.96560571828504891230e-1,
        2.65321895265761230930e-2,
        1.24266094738807843860e-3,
        2.71155556874348757815e-5,
        2.01033439929228813265e-7,
    ];
    const F: [f64; 6] = [
        5.99832206555887937690e-1,
        1.36929880922735805310e-1,
        1.48753612908506148525e-2,
        7.86869131145613259100e-4,
        1.84631831751005468180e-6,
        1.42151175831644588870e-15,
    ];

    fn rational(r: f64, num: &[f64; 8], den: &[f64]) -> f64 {
        let mut n = num[7];
        for coeff in num[..7].iter().rev() {
            n = n * r + coeff;
        }
        let mut d = 0.0;
        for coeff in den.iter().rev() {
            d = d * r + coeff;
        }
        n / (d * r + 1.0)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * rational(r, &A, &B);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        rational(r - 1.6, &C, &D)
    } else {
        rational(r - 5.0, &E, &F)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}
