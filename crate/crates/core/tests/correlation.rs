use degscope_core::stats::correlation::{pearson, spearman};
use degscope_core::stats::special::student_t_two_sided;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Average rank of each value: 1 + (# strictly smaller) + (# equal others) / 2.
fn reference_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let eq = x.iter().filter(|&&w| w == v).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided tail of Student's t by Simpson integration of the density.
fn t_tail_numeric(t: f64, df: f64) -> f64 {
    let ln_c = libm::lgamma((df + 1.0) / 2.0) - libm::lgamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    // 1 − ∫_{−|t|}^{|t|} pdf, composite Simpson
    let n = 20_000;
    let (lo, hi) = (-t.abs(), t.abs());
    let h = (hi - lo) / n as f64;
    let mut s = pdf(lo) + pdf(hi);
    for i in 1..n {
        s += pdf(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - s * h / 3.0
}

#[test]
fn hand_example_is_exact() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y = [2.0, 1.0, 4.0, 3.0, 5.0];
    assert_eq!(pearson(&x, &y).unwrap().r, 0.8);
    assert_eq!(spearman(&x, &y).unwrap().r, 0.8);
}

#[test]
fn matches_reference_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let n = rng.random_range(3..300);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = if i % 2 == 0 {
            x.iter().map(|v| v * 0.5 + rng.random_range(-5.0..5.0)).collect()
        } else {
            // integer-valued with many ties
            (0..n).map(|_| rng.random_range(0..6) as f64).collect()
        };
        let p = pearson(&x, &y).unwrap();
        assert!((p.r - reference_pearson(&x, &y)).abs() < 1e-10);
        let s = spearman(&x, &y).unwrap();
        let rho = reference_pearson(&reference_ranks(&x), &reference_ranks(&y));
        assert!((s.r - rho).abs() < 1e-10, "{} vs {}", s.r, rho);
    }
}

#[test]
fn t_distribution_tail_matches_integration() {
    for &df in &[1.0, 2.0, 3.0, 7.5, 30.0, 198.0] {
        for &t in &[0.1, 0.7, 1.5, 2.5, 4.0, 10.0] {
            let a = student_t_two_sided(t, df);
            let b = t_tail_numeric(t, df);
            assert!((a - b).abs() < 1e-8, "df={df} t={t}: {a} vs {b}");
        }
    }
}
