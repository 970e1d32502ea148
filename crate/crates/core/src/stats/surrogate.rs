//! Quadratic-polynomial ridge surrogate over standardized inputs.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure::StructuralCharacteristics;

/// Ridge penalty on all non-intercept coefficients.
pub const DEFAULT_RIDGE: f64 = 1e-4;

/// Fewest samples a surrogate is fitted on (leave-one-out needs three).
pub const MIN_SAMPLES: usize = 3;

/// One sampled subgraph: its characteristics and the measured performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub theta: StructuralCharacteristics,
    pub mrr: f64,
    pub hits10: f64,
    pub sample_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Mrr,
    Hits10,
}

impl Target {
    pub fn of(self, s: &LabeledSample) -> f64 {
        match self {
            Target::Mrr => s.mrr,
            Target::Hits10 => s.hits10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateKind {
    QuadraticPolynomial,
}

/// `y ≈ β₀ + Σ βᵢ zᵢ + Σ_{i≤j} βᵢⱼ zᵢ zⱼ` with `z = (x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub kind: SurrogateKind,
    pub input_means: Vec<f64>,
    pub input_scales: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub ridge: f64,
    pub r_squared: f64,
    /// Leave-one-out R²; absent when some sample has leverage 1.
    pub loo_r_squared: Option<f64>,
}

pub fn basis_size(d: usize) -> usize {
    1 + d + d * (d + 1) / 2
}

fn basis_into(z: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    out.extend_from_slice(z);
    for i in 0..z.len() {
        for j in i..z.len() {
            out.push(z[i] * z[j]);
        }
    }
}

impl Surrogate {
    pub fn dim(&self) -> usize {
        self.input_means.len()
    }

    fn standardize(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend(
            x.iter()
                .zip(&self.input_means)
                .zip(&self.input_scales)
                .map(|((v, m), s)| (v - m) / s),
        );
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut z = Vec::with_capacity(self.dim());
        let mut phi = Vec::with_capacity(self.coefficients.len());
        self.standardize(x, &mut z);
        basis_into(&z, &mut phi);
        crate::numeric::dot(&phi, &self.coefficients)
    }
}

pub fn fit_surrogate(samples: &[LabeledSample], target: Target) -> Result<Surrogate> {
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.theta.to_array().to_vec()).collect();
    let y: Vec<f64> = samples.iter().map(|s| target.of(s)).collect();
    fit_quadratic(&xs, &y, DEFAULT_RIDGE)
}

/// Ridge least squares on the quadratic basis. Zero-variance input columns
/// are centred but not scaled, so they vanish from the design and their
/// coefficients are pinned to zero by the penalty.
pub fn fit_quadratic(xs: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<Surrogate> {
    let n = xs.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n < MIN_SAMPLES {
        return Err(Error::FitFailed(alloc::format!(
            "insufficient samples: {n} < {MIN_SAMPLES}"
        )));
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d) {
        return Err(Error::FitFailed("ragged input rows".into()));
    }
    if xs.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::FitFailed("non-finite sample".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::FitFailed("ridge must be non-negative".into()));
    }

    let mut means = alloc::vec![0.0; d];
    let mut scales = alloc::vec![1.0; d];
    for j in 0..d {
        let col: Vec<f64> = xs.iter().map(|x| x[j]).collect();
        means[j] = crate::numeric::mean(&col).unwrap_or(0.0);
        let sd = crate::numeric::std_dev(&col).unwrap_or(0.0);
        if sd > 1e-12 * (1.0 + libm::fabs(means[j])) {
            scales[j] = sd;
        }
    }
    let mut model = Surrogate {
        kind: SurrogateKind::QuadraticPolynomial,
        input_means: means,
        input_scales: scales,
        coefficients: Vec::new(),
        ridge,
        r_squared: 0.0,
        loo_r_squared: None,
    };

    let p = basis_size(d);
    let mut design: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(d);
    for x in xs {
        let mut phi = Vec::with_capacity(p);
        model.standardize(x, &mut z);
        basis_into(&z, &mut phi);
        design.push(phi);
    }

    // normal equations (XᵀX + Λ) β = Xᵀy, intercept unpenalized
    let mut gram = alloc::vec![0.0; p * p];
    let mut rhs = alloc::vec![0.0; p];
    for (phi, &yi) in design.iter().zip(y) {
        for a in 0..p {
            rhs[a] += phi[a] * yi;
            for b in a..p {
                gram[a * p + b] += phi[a] * phi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[a * p + b] = gram[b * p + a];
        }
        if a > 0 {
            gram[a * p + a] += ridge;
        }
    }
    // a vanished column with no penalty would leave the system singular
    for a in 1..p {
        if gram[a * p + a] == 0.0 {
            gram[a * p + a] = 1.0;
        }
    }
    let chol = Cholesky::factor(&gram, p)
        .ok_or_else(|| Error::FitFailed("design is rank deficient".into()))?;
    model.coefficients = chol.solve(&rhs);

    let ybar = crate::numeric::mean(y).unwrap_or(0.0);
    let ss_tot = crate::numeric::sum(y.iter().map(|v| (v - ybar) * (v - ybar)));
    let mut ss_res = 0.0;
    let mut ss_loo = 0.0;
    let mut loo_ok = true;
    for (phi, &yi) in design.iter().zip(y) {
        let resid = yi - crate::numeric::dot(phi, &model.coefficients);
        ss_res += resid * resid;
        let leverage = crate::numeric::dot(phi, &chol.solve(phi));
        if leverage >= 1.0 - 1e-10 {
            loo_ok = false;
        } else {
            let r = resid / (1.0 - leverage);
            ss_loo += r * r;
        }
    }
    let r2 = |ss: f64| {
        if ss_tot > 0.0 {
            1.0 - ss / ss_tot
        } else if ss <= 1e-24 {
            1.0
        } else {
            0.0
        }
    };
    model.r_squared = r2(ss_res);
    model.loo_r_squared = loo_ok.then(|| r2(ss_loo));
    Ok(model)
}

/// Dense Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix.
struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

impl Cholesky {
    fn factor(a: &[f64], n: usize) -> Option<Self> {
        let mut l = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * n + i] = libm::sqrt(s);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { l, n })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }
}
