//! Pearson and Spearman correlation with Student-t p-values, optional exact
//! permutation p-values for small samples, and the entity-degree analysis.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph};

/// One correlation coefficient with its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub p_value_pearson: f64,
    pub p_value_spearman: f64,
    pub n: usize,
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation("need at least 3 paired observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite input"));
    }
    Ok(())
}

fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = crate::numeric::sum(x.iter().copied()) / n;
    let my = crate::numeric::sum(y.iter().copied()) / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

fn t_p_value(r: f64, n: usize) -> f64 {
    if libm::fabs(r) >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * libm::sqrt(df / (1.0 - r * r));
    student_t_two_sided(t, df)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_inputs(x, y)?;
    let r = pearson_r(x, y)?;
    Ok(Correlation {
        r,
        p_value: t_p_value(r, x.len()),
        n: x.len(),
    })
}

/// 1-based ranks with ties replaced by their average rank.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = alloc::vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_inputs(x, y)?;
    let r = pearson_r(&mid_ranks(x), &mid_ranks(y))?;
    Ok(Correlation {
        r,
        p_value: t_p_value(r, x.len()),
        n: x.len(),
    })
}

pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    let p = pearson(x, y)?;
    let s = spearman(x, y)?;
    Ok(CorrelationResult {
        pearson_r: p.r,
        spearman_rho: s.r,
        p_value_pearson: p.p_value,
        p_value_spearman: s.p_value,
        n: p.n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pearson,
    Spearman,
}

/// Largest sample size accepted by [`permutation_p_value`].
pub const MAX_PERMUTATION_N: usize = 12;

/// Exact two-sided permutation p-value: the fraction of all `n!` pairings
/// whose coefficient is at least as extreme as the observed one.
pub fn permutation_p_value(x: &[f64], y: &[f64], method: Method) -> Result<f64> {
    check_inputs(x, y)?;
    if x.len() > MAX_PERMUTATION_N {
        return Err(Error::InvalidConfig(alloc::format!(
            "exact permutation p-values need n <= {MAX_PERMUTATION_N}"
        )));
    }
    let (a, b) = match method {
        Method::Pearson => (x.to_vec(), y.to_vec()),
        Method::Spearman => (mid_ranks(x), mid_ranks(y)),
    };
    pearson_r(&a, &b)?;
    let n = a.len();
    let ma = crate::numeric::sum(a.iter().copied()) / n as f64;
    let mb = crate::numeric::sum(b.iter().copied()) / n as f64;
    let a: Vec<f64> = a.iter().map(|v| v - ma).collect();
    let mut b: Vec<f64> = b.iter().map(|v| v - mb).collect();
    // r is proportional to the centred cross product, so compare that directly
    let observed = libm::fabs(crate::numeric::dot(&a, &b));
    let tol = 1e-9 * (1.0 + observed);
    let mut cross = crate::numeric::dot(&a, &b);
    let mut extreme = 0u64;
    let mut total = 0u64;
    // Heap's algorithm; each swap updates the cross product in O(1)
    let mut c = alloc::vec![0usize; n];
    let mut count = |cross: f64| {
        total += 1;
        if libm::fabs(cross) >= observed - tol {
            extreme += 1;
        }
    };
    count(cross);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            cross += (a[j] - a[i]) * (b[i] - b[j]);
            b.swap(i, j);
            count(cross);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(extreme as f64 / total as f64)
}

/// Degree bin `[lo, hi]` with its mean degree and mean per-entity MRR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeBin {
    pub lo: u64,
    pub hi: u64,
    pub count: usize,
    pub mean_degree: f64,
    pub mean_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreePoint {
    pub entity: EntityId,
    pub degree: u64,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeCorrelation {
    pub unbinned: CorrelationResult,
    /// Correlation of bin means; absent with fewer than three occupied bins.
    pub binned: Option<CorrelationResult>,
    pub bins: Vec<DegreeBin>,
    pub points: Vec<DegreePoint>,
}

/// Power-of-two bin index: degree 0 gets bin 0, degrees `[2^k, 2^(k+1))` bin `k + 1`.
fn degree_bin(d: u64) -> u32 {
    if d == 0 {
        0
    } else {
        d.ilog2() + 1
    }
}

/// Correlates entity degree in `g` with mean per-entity reciprocal rank.
pub fn per_entity_degree_correlation(
    g: &KnowledgeGraph,
    per_entity_mrr: &[(EntityId, f64)],
) -> Result<DegreeCorrelation> {
    let degrees = g.degree_vector();
    let mut points = Vec::with_capacity(per_entity_mrr.len());
    for &(e, mrr) in per_entity_mrr {
        if e.index() >= degrees.len() {
            return Err(Error::UnknownEntity(alloc::format!("{}", e.0)));
        }
        points.push(DegreePoint {
            entity: e,
            degree: degrees.get(e),
            mrr,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.degree as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mrr).collect();
    let unbinned = correlate(&x, &y)?;

    let mut acc: alloc::collections::BTreeMap<u32, (u64, u64, usize, f64, f64)> =
        alloc::collections::BTreeMap::new();
    for p in &points {
        let e = acc
            .entry(degree_bin(p.degree))
            .or_insert((u64::MAX, 0, 0, 0.0, 0.0));
        e.0 = e.0.min(p.degree);
        e.1 = e.1.max(p.degree);
        e.2 += 1;
        e.3 += p.degree as f64;
        e.4 += p.mrr;
    }
    let bins: Vec<DegreeBin> = acc
        .into_values()
        .map(|(lo, hi, count, sd, sm)| DegreeBin {
            lo,
            hi,
            count,
            mean_degree: sd / count as f64,
            mean_mrr: sm / count as f64,
        })
        .collect();
    let binned = if bins.len() >= 3 {
        let bx: Vec<f64> = bins.iter().map(|b| b.mean_degree).collect();
        let by: Vec<f64> = bins.iter().map(|b| b.mean_mrr).collect();
        correlate(&bx, &by).ok()
    } else {
        None
    };
    Ok(DegreeCorrelation {
        unbinned,
        binned,
        bins,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_relations() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_eq!(pearson(&x, &y).unwrap().r, 1.0);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &y).unwrap().r, -1.0);
    }

    #[test]
    fn hand_example() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        let p = pearson(&x, &y).unwrap();
        assert_eq!(p.r, 0.8);
        assert!((p.p_value - 0.104).abs() < 5e-4, "{}", p.p_value);
        assert_eq!(spearman(&x, &y).unwrap().r, 0.8);
    }

    #[test]
    fn spearman_monotone_cases() {
        let x = [0.3, 1.0, -2.0, 4.5, 2.2];
        let y: Vec<f64> = x.iter().map(|v| libm::exp(*v)).collect();
        assert_eq!(spearman(&x, &y).unwrap().r, 1.0);
        let y: Vec<f64> = x.iter().map(|v| -v * v * v).collect();
        assert_eq!(spearman(&x, &y).unwrap().r, -1.0);
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[10.0, 20.0, 10.0, 30.0]), [1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn constant_input_is_rejected() {
        let x = [1.0, 1.0, 1.0];
        let y = [1.0, 2.0, 3.0];
        assert!(matches!(pearson(&x, &y), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(spearman(&y, &x), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn permutation_p_value_hand_example() {
        // 5! = 120 pairings; r >= 0.8 in absolute value for 2·(1 + 4 + 3)... counted by brute force below
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        let p = permutation_p_value(&x, &y, Method::Pearson).unwrap();
        let mut perms = Vec::new();
        permute(&mut [0, 1, 2, 3, 4], 0, &mut perms);
        let extreme = perms
            .iter()
            .filter(|p| {
                let yy: Vec<f64> = p.iter().map(|&i| y[i]).collect();
                libm::fabs(pearson_r(&x, &yy).unwrap()) >= 0.8 - 1e-12
            })
            .count();
        assert_eq!(perms.len(), 120);
        assert_eq!(p, extreme as f64 / 120.0);
    }

    fn permute(a: &mut [usize; 5], k: usize, out: &mut Vec<[usize; 5]>) {
        if k == a.len() {
            out.push(*a);
            return;
        }
        for i in k..a.len() {
            a.swap(k, i);
            permute(a, k + 1, out);
            a.swap(k, i);
        }
    }

    #[test]
    fn degree_correlation_rejects_constant_degrees() {
        let g = KnowledgeGraph::from_labeled([("a", "r", "b"), ("b", "r", "c"), ("c", "r", "a")]).0;
        let mrr: Vec<(EntityId, f64)> = g.entity_ids().zip([0.2, 0.5, 0.9]).collect();
        assert!(matches!(
            per_entity_degree_correlation(&g, &mrr),
            Err(Error::UndefinedCorrelation(_))
        ));
    }
}
