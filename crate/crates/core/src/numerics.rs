//! Combinatorial and special-function kernels shared by all modules.
//!
//! Probability formulas downstream multiply large factorials and powers;
//! everything here works in log space or with compensated summation so that
//! only final ratios are exponentiated.

use crate::{Error, Result};
use std::sync::OnceLock;

/// Result of an adaptively truncated series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesResult {
    pub value: f64,
    /// Upper bound on the neglected tail (non-negative).
    pub tail_bound: f64,
    pub terms_used: usize,
}

const LN_FACTORIAL_TABLE_LEN: usize = 4097;

fn ln_factorial_table() -> &'static [f64; LN_FACTORIAL_TABLE_LEN] {
    static TABLE: OnceLock<[f64; LN_FACTORIAL_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0_f64; LN_FACTORIAL_TABLE_LEN];
        // Kahan summation keeps the accumulated rounding error below 1e-15
        // relative over the whole table.
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        for n in 1..LN_FACTORIAL_TABLE_LEN {
            let y = (n as f64).ln() - comp;
            let s = sum + y;
            comp = (s - sum) - y;
            sum = s;
            t[n] = sum;
        }
        t
    })
}

/// ln(n!).
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACTORIAL_TABLE_LEN {
        ln_factorial_table()[n as usize]
    } else {
        // Stirling series; for n >= 4097 the 1/n^5 term is far below 1e-16
        // relative.
        let x = n as f64 + 1.0;
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        (x - 0.5) * x.ln() - x
            + 0.5 * (2.0 * std::f64::consts::PI).ln()
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
    }
}

/// Binomial coefficient C(n, k) as a real number; 0 outside 0 <= k <= n.
pub fn binomial(n: u64, k: i64) -> f64 {
    if k < 0 || k as u64 > n {
        return 0.0;
    }
    let k = k as u64;
    let k = k.min(n - k);
    if n <= 62 {
        // exact in u128, and u128 -> f64 is exact for values below 2^53
        // (true for all n <= 62 after symmetry reduction keeps k small)
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc * (n - i) as u128 / (i + 1) as u128;
        }
        acc as f64
    } else {
        (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp()
    }
}

/// Terminating Gauss hypergeometric sum 2F1(-n, -lam; c; z) for c >= 1.
///
/// Terms are generated by the recurrence
/// t_{m+1} = t_m * (m - n)(m - lam) / ((c + m)(m + 1)) * z
/// and combined with compensated summation; for z < 0 (the detector-model
/// argument (eta-1)/eta) the terms alternate and cancellation is the concern,
/// not overflow.
pub fn hyp2f1_terminating(n: u64, lam: u64, c: u64, z: f64) -> f64 {
    debug_assert!(c >= 1);
    let m_max = n.min(lam);
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut comp = 0.0_f64;
    for m in 0..m_max {
        let mf = m as f64;
        term *= (mf - n as f64) * (mf - lam as f64) / ((c as f64 + mf) * (mf + 1.0)) * z;
        let y = term - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    sum
}

/// Minimum number of terms consumed before adaptive termination is allowed.
const MIN_TERMS: usize = 8;
const MAX_TERMS: usize = 1_000_000;

/// Adaptive summation of `term(0) + term(1) + ...` assuming the terms are
/// eventually dominated by a geometric envelope with ratio
/// `geometric_ratio_hint` times a polynomial of degree `degree_bound`.
///
/// The tail bound uses the envelope `2 |term(N)| * rho / (1 - rho)` with
/// `rho = r * exp(degree_bound / N)`: `(1 + m/N)^d <= exp(d m / N)` dominates
/// pure `n^d r^n` tails, and the factor 2 covers polynomials whose monomial
/// coefficients are not all of one sign.
pub fn sum_adaptive_poly(
    mut term: impl FnMut(usize) -> f64,
    geometric_ratio_hint: f64,
    eps_rel: f64,
    degree_bound: u32,
) -> Result<SeriesResult> {
    if !(0.0..1.0).contains(&geometric_ratio_hint) {
        return Err(Error::NonConvergence(format!(
            "ratio hint {geometric_ratio_hint} not in [0, 1)"
        )));
    }
    let r = geometric_ratio_hint;
    // enough terms for the geometric envelope alone to shrink below eps_rel
    let floor_terms = if r > 0.0 {
        (eps_rel.ln() / r.ln()).ceil().max(1.0) as usize
    } else {
        1
    };
    let min_terms = MIN_TERMS.max(floor_terms);

    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut n = 0usize;
    let last = loop {
        let t = term(n);
        let y = t - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        n += 1;
        // also require the tail envelope ratio below to be usable before
        // stopping, which forces a few extra terms when the degree bound is
        // large relative to the term count
        if n >= min_terms
            && t.abs() < eps_rel * sum.abs().max(f64::MIN_POSITIVE)
            && r * (degree_bound as f64 / n as f64).exp() < 0.999
        {
            break t;
        }
        if n >= MAX_TERMS {
            return Err(Error::NonConvergence(format!(
                "term budget of {MAX_TERMS} exhausted (ratio hint {r})"
            )));
        }
    };
    let rho = r * (degree_bound as f64 / n as f64).exp();
    let tail_bound = if r > 0.0 { 2.0 * last.abs() * rho / (1.0 - rho) } else { 0.0 };
    Ok(SeriesResult { value: sum, tail_bound, terms_used: n })
}

/// [`sum_adaptive_poly`] without polynomial growth in the terms.
pub fn sum_adaptive(
    term: impl FnMut(usize) -> f64,
    geometric_ratio_hint: f64,
    eps_rel: f64,
) -> Result<SeriesResult> {
    sum_adaptive_poly(term, geometric_ratio_hint, eps_rel, 0)
}
