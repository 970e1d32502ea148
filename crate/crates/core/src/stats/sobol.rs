//! Sobol first-, second- and total-order indices by pick-freeze Monte Carlo.
//!
//! Two independent `N × d` uniform matrices `A` and `B` are drawn over the
//! bounds box, together with the cross matrices `AB⁽ⁱ⁾` (`A` with column `i`
//! from `B`) and `BA⁽ⁱ⁾` (`B` with column `i` from `A`). With `V` the variance
//! of the pooled `f(A), f(B)` outputs:
//!
//! - first order: `Sᵢ = R(f(B), f(AB⁽ⁱ⁾))`, pooled with the mirrored `A`, `BA⁽ⁱ⁾` pair
//! - total order: `S_Tᵢ = mean((f(A) − f(AB⁽ⁱ⁾))²) / (2V)`, pooled with the
//!   mirrored `B`, `BA⁽ⁱ⁾` pair
//! - second order: `Sᵢⱼ = R(f(BA⁽ⁱ⁾), f(AB⁽ʲ⁾)) − Sᵢ − Sⱼ`, pooled likewise
//!
//! where `R(y, z) = (mean(y·z) − m²) / (mean((y² + z²)/2) − m²)` with `m` the
//! joint mean is the pick-freeze correlation of two outputs sharing the
//! frozen inputs.
//!
//! Standard errors are the sample standard deviation of each estimator's
//! (linearised) summand over the square root of the number of summands.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::surrogate::Surrogate;
use crate::error::{Error, Result};
use crate::Executor;

/// A scalar function of a point in `R^d`.
pub trait Model: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

impl Model for Surrogate {
    fn dim(&self) -> usize {
        Surrogate::dim(self)
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.predict(x)
    }
}

/// Wraps a closure as a [`Model`].
pub struct FnModel<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for FnModel<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub first_order: Vec<f64>,
    pub first_order_se: Vec<f64>,
    pub total_order: Vec<f64>,
    pub total_order_se: Vec<f64>,
    /// Symmetric; the diagonal is empty.
    pub second_order: Vec<Vec<Option<f64>>>,
    pub second_order_se: Vec<Vec<Option<f64>>>,
    pub sample_count: usize,
    pub bounds: Vec<(f64, f64)>,
    pub total_variance: f64,
}

fn mean_and_se(terms: &[f64]) -> (f64, f64) {
    let n = terms.len() as f64;
    let m = crate::numeric::sum(terms.iter().copied()) / n;
    let var = crate::numeric::sum(terms.iter().map(|t| (t - m) * (t - m))) / (n - 1.0);
    (m, libm::sqrt(var / n))
}

/// Evaluation rows per executor task.
const CHUNK: usize = 1024;

fn evaluate<M: Model, E: Executor>(model: &M, rows: &[f64], d: usize, exec: &E) -> Vec<f64> {
    let chunks: Vec<&[f64]> = rows.chunks(CHUNK * d).collect();
    exec.map(&chunks, |c| c.chunks(d).map(|x| model.eval(x)).collect::<Vec<f64>>())
        .into_iter()
        .flatten()
        .collect()
}

/// Pick-freeze ratio over output pairs that share a subset of inputs,
/// centred on the joint mean `m`: `(mean(y·z) − m²) / (mean((y² + z²)/2) − m²)`.
/// Returns the ratio and its delta-method standard error.
fn pick_freeze(pairs: &[(&[f64], &[f64])], terms: &mut Vec<f64>) -> (f64, f64) {
    let it = || pairs.iter().flat_map(|&(y, z)| y.iter().zip(z));
    let n = it().count() as f64;
    let m = crate::numeric::sum(it().map(|(&a, &b)| a + b)) / (2.0 * n);
    let mut num = crate::numeric::CompensatedSum::new();
    let mut den = crate::numeric::CompensatedSum::new();
    for (&a, &b) in it() {
        num.add((a - m) * (b - m));
        den.add(0.5 * ((a - m) * (a - m) + (b - m) * (b - m)));
    }
    let (num, den) = (num.value() / n, den.value() / n);
    if den <= 0.0 {
        return (0.0, 0.0);
    }
    let ratio = num / den;
    // linearised summand of the ratio estimator
    terms.clear();
    terms.extend(it().map(|(&a, &b)| {
        let p = (a - m) * (b - m);
        let q = 0.5 * ((a - m) * (a - m) + (b - m) * (b - m));
        (p - ratio * q) / den
    }));
    let (_, se) = mean_and_se(terms);
    (ratio, se)
}

pub fn sobol_indices<M: Model, E: Executor>(
    model: &M,
    bounds: &[(f64, f64)],
    n: usize,
    seed: u64,
    exec: &E,
) -> Result<SobolIndices> {
    let d = model.dim();
    if bounds.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bounds.len(),
        });
    }
    if n < 64 || !n.is_power_of_two() {
        return Err(Error::InvalidConfig(alloc::format!(
            "Sobol sample budget must be a power of two >= 64 (got {n})"
        )));
    }
    if bounds
        .iter()
        .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
    {
        return Err(Error::InvalidConfig("Sobol bounds need finite lo < hi".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> Vec<f64> {
        let mut m = Vec::with_capacity(n * d);
        for _ in 0..n {
            for &(lo, hi) in bounds {
                m.push(lo + (hi - lo) * rng.random::<f64>());
            }
        }
        m
    };
    let a = draw();
    let b = draw();
    let mut fa = evaluate(model, &a, d, exec);
    let mut fb = evaluate(model, &b, d, exec);

    let cross = |base: &[f64], donor: &[f64], i: usize| -> Vec<f64> {
        let mut m = base.to_vec();
        for row in 0..n {
            m[row * d + i] = donor[row * d + i];
        }
        m
    };
    let mut f_ab: Vec<Vec<f64>> = (0..d)
        .map(|i| evaluate(model, &cross(&a, &b, i), d, exec))
        .collect();
    let mut f_ba: Vec<Vec<f64>> = (0..d)
        .map(|i| evaluate(model, &cross(&b, &a, i), d, exec))
        .collect();

    let pooled: Vec<f64> = fa.iter().chain(&fb).copied().collect();
    let mean = crate::numeric::mean(&pooled).unwrap_or(0.0);
    let var = crate::numeric::sum(pooled.iter().map(|v| (v - mean) * (v - mean))) / pooled.len() as f64;
    let scale = pooled.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    if !var.is_finite() || var <= (1e-12 * scale) * (1e-12 * scale) {
        return Err(Error::UndefinedIndices);
    }
    // centred outputs keep the product-form estimators well conditioned
    for v in fa
        .iter_mut()
        .chain(fb.iter_mut())
        .chain(f_ab.iter_mut().flatten())
        .chain(f_ba.iter_mut().flatten())
    {
        *v -= mean;
    }

    let mut first = Vec::with_capacity(d);
    let mut first_se = Vec::with_capacity(d);
    let mut total = Vec::with_capacity(d);
    let mut total_se = Vec::with_capacity(d);
    let mut terms = Vec::with_capacity(2 * n);
    for (i, fabi) in f_ab.iter().enumerate() {
        // f(B), f(AB_i) and f(A), f(BA_i) each share exactly coordinate i
        let (s, se) = pick_freeze(&[(&fb, fabi), (&fa, &f_ba[i])], &mut terms);
        first.push(s);
        first_se.push(se);
        // f(A), f(AB_i) and f(B), f(BA_i) each differ only in coordinate i
        terms.clear();
        terms.extend(fa.iter().zip(fabi).chain(fb.iter().zip(&f_ba[i])).map(|(&x, &y)| 0.5 * (x - y) * (x - y)));
        let (m, se) = mean_and_se(&terms);
        total.push(m / var);
        total_se.push(se / var);
    }

    let mut second = alloc::vec![alloc::vec![None; d]; d];
    let mut second_se = alloc::vec![alloc::vec![None; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            // f(BA_i), f(AB_j) and f(AB_i), f(BA_j) each share exactly i and j
            let (closed, se) = pick_freeze(&[(&f_ba[i], &f_ab[j]), (&f_ab[i], &f_ba[j])], &mut terms);
            let s = closed - first[i] - first[j];
            second[i][j] = Some(s);
            second[j][i] = Some(s);
            second_se[i][j] = Some(se);
            second_se[j][i] = Some(se);
        }
    }

    Ok(SobolIndices {
        first_order: first,
        first_order_se: first_se,
        total_order: total,
        total_order_se: total_se,
        second_order: second,
        second_order_se: second_se,
        sample_count: n,
        bounds: bounds.to_vec(),
        total_variance: var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Sequential;

    #[test]
    fn constant_function_is_undefined() {
        let m = FnModel {
            dim: 2,
            f: |_: &[f64]| 3.0,
        };
        assert_eq!(
            sobol_indices(&m, &[(0.0, 1.0), (0.0, 1.0)], 64, 1, &Sequential),
            Err(Error::UndefinedIndices)
        );
    }

    #[test]
    fn rejects_bad_budget_and_bounds() {
        let m = FnModel {
            dim: 1,
            f: |x: &[f64]| x[0],
        };
        assert!(sobol_indices(&m, &[(0.0, 1.0)], 100, 1, &Sequential).is_err());
        assert!(sobol_indices(&m, &[(0.0, 1.0)], 32, 1, &Sequential).is_err());
        assert!(sobol_indices(&m, &[(1.0, 1.0)], 64, 1, &Sequential).is_err());
    }

    #[test]
    fn single_input_carries_all_variance() {
        let m = FnModel {
            dim: 1,
            f: |x: &[f64]| x[0] * x[0],
        };
        let s = sobol_indices(&m, &[(0.0, 1.0)], 4096, 9, &Sequential).unwrap();
        assert!((s.first_order[0] - 1.0).abs() < 0.05);
        assert!((s.total_order[0] - 1.0).abs() < 0.05);
    }
}
