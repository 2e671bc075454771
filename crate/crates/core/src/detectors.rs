//! Detector parameterization and closed-form conditional detection
//! probabilities for photon-number discriminating and threshold detectors
//! with non-unit efficiency and dark counts.
//!
//! Dark counts are modeled by a fictitious thermal mode mixed into the signal
//! at a beamsplitter of transmittance `eta`; the closed forms below eliminate
//! the thermal squeeze parameter in favour of the per-window dark-count
//! probability `p_dc`.

use crate::numerics::{binomial, hyp2f1_terminating, sum_adaptive_poly, SeriesResult};
use crate::{Error, Result};

/// One detector's effective efficiency (transmission losses folded in) and
/// dark-count probability per detection window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    eta: f64,
    p_dc: f64,
}

impl DetectorSpec {
    pub fn new(eta: f64, p_dc: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Config(format!("eta = {eta} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&p_dc) {
            return Err(Error::Config(format!("p_dc = {p_dc} outside [0, 1)")));
        }
        Ok(Self { eta, p_dc })
    }

    /// Ideal detector: unit efficiency, no dark counts.
    pub fn ideal() -> Self {
        Self { eta: 1.0, p_dc: 0.0 }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn p_dc(&self) -> f64 {
        self.p_dc
    }

    /// No click can ever occur: eta = 0 and p_dc = 0.
    pub fn is_degenerate(&self) -> bool {
        self.eta == 0.0 && self.p_dc == 0.0
    }

    /// eta = 1 with p_dc > 0 is only meaningful as a joint limit of the
    /// thermal model.
    pub fn is_singular_margin(&self) -> bool {
        self.eta == 1.0 && self.p_dc > 0.0
    }
}

/// Outcome of a threshold detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdOutcome {
    NoClick,
    Click,
}

/// Thermal squeeze parameter tanh^2(r) reproducing the spec's dark-count
/// probability: p_dc = (1 - eta) tanh^2 r / (1 - eta tanh^2 r).
pub fn thermal_r_from_pdc(spec: &DetectorSpec) -> Result<f64> {
    if spec.p_dc == 0.0 {
        return Ok(0.0);
    }
    if spec.eta == 1.0 {
        return Err(Error::SingularModel);
    }
    // invert the defining relation: tanh^2 r = p_dc / (1 - eta + eta p_dc)
    Ok(spec.p_dc / (1.0 - spec.eta + spec.eta * spec.p_dc))
}

/// Clamp applied at the singular margin eta = 1, p_dc > 0 where the closed
/// form gives b = 1 and all downstream series diverge.
const B_SINGULAR_CLAMP: f64 = 1.0 - 1e-12;

/// b = eta tanh^2 r = [1 + (1 - eta)/(eta p_dc)]^{-1}; 0 when eta = 0 or
/// p_dc = 0. At the singular margin the value is clamped just below 1.
pub fn b_param(spec: &DetectorSpec) -> f64 {
    if spec.eta == 0.0 || spec.p_dc == 0.0 {
        return 0.0;
    }
    if spec.is_singular_margin() {
        eprintln!(
            "warning: detector at the singular margin eta = 1, p_dc = {}; clamping b to {B_SINGULAR_CLAMP}",
            spec.p_dc
        );
        return B_SINGULAR_CLAMP;
    }
    1.0 / (1.0 + (1.0 - spec.eta) / (spec.eta * spec.p_dc))
}

/// G(kappa, lambda; eta, p_dc): the series
/// sum_n C(kappa, lambda) C(kappa-lambda+n, kappa-lambda) b^n
///       [2F1(-n, -lambda; kappa-lambda+1; (eta-1)/eta)]^2
/// for kappa >= lambda, and exactly 0 for kappa < lambda.
pub fn g_function(kappa: u64, lam: u64, spec: &DetectorSpec) -> Result<SeriesResult> {
    if kappa < lam {
        return Ok(SeriesResult { value: 0.0, tail_bound: 0.0, terms_used: 1 });
    }
    let b = b_param(spec);
    let lead = binomial(kappa, lam as i64);
    if b == 0.0 {
        // zero dark counts: only the n = 0 term survives
        return Ok(SeriesResult { value: lead, tail_bound: 0.0, terms_used: 1 });
    }
    let z = (spec.eta - 1.0) / spec.eta;
    let c = kappa - lam + 1;
    let term = |n: usize| {
        lead * binomial(kappa - lam + n as u64, (kappa - lam) as i64)
            * b.powi(n as i32)
            * hyp2f1_terminating(n as u64, lam, c, z).powi(2)
    };
    sum_adaptive_poly(term, b, 1e-14, (kappa + lam) as u32)
}

fn clamp_probability(p: f64) -> f64 {
    debug_assert!(
        p > -1e-12 && p < 1.0 + 1e-12,
        "probability {p} clamped by more than 1e-12"
    );
    p.clamp(0.0, 1.0)
}

/// p(q | i): probability that a photon-number discriminating detector reports
/// `q` counts given `i` incident photons.
pub fn prob_count_given_incident(q: u64, i: u64, spec: &DetectorSpec) -> Result<f64> {
    let (eta, pdc) = (spec.eta, spec.p_dc);
    if spec.is_degenerate() {
        return Ok(if q == 0 { 1.0 } else { 0.0 });
    }
    if eta == 0.0 {
        // the signal never reaches the detector: pure dark-count statistics
        return Ok(clamp_probability((1.0 - pdc) * pdc.powi(q as i32)));
    }
    if eta == 1.0 && pdc == 0.0 {
        return Ok(if q == i { 1.0 } else { 0.0 });
    }
    if pdc == 0.0 {
        // Bernoulli thinning; zero probability of q > i
        if q > i {
            return Ok(0.0);
        }
        let p = binomial(i, q as i64) * eta.powi(q as i32) * (1.0 - eta).powi((i - q) as i32);
        return Ok(clamp_probability(p));
    }
    let b = b_param(spec);
    let prefactor = (1.0 - eta) * (1.0 - pdc) / (1.0 - eta * (1.0 - pdc));
    let p = if i >= q {
        prefactor
            * (eta / (1.0 - eta)).powi(q as i32)
            * (1.0 - eta).powi(i as i32)
            * g_function(i, q, spec)?.value
    } else {
        prefactor
            * ((1.0 - eta) / eta * b).powi((q - i) as i32)
            * eta.powi(i as i32)
            * g_function(q, i, spec)?.value
    };
    Ok(clamp_probability(p))
}

/// p(outcome | i) for a threshold detector.
pub fn prob_threshold_given_incident(
    outcome: ThresholdOutcome,
    i: u64,
    spec: &DetectorSpec,
) -> f64 {
    let no_click =
        (1.0 - spec.p_dc) * (1.0 - spec.eta * (1.0 - spec.p_dc)).powi(i as i32);
    match outcome {
        ThresholdOutcome::NoClick => clamp_probability(no_click),
        ThresholdOutcome::Click => clamp_probability(1.0 - no_click),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn thermal_r_trivial_and_forward_substitution() {
        let s = DetectorSpec::new(0.5, 0.0).unwrap();
        assert_eq!(thermal_r_from_pdc(&s).unwrap(), 0.0);

        let s = DetectorSpec::new(0.0, 0.25).unwrap();
        assert_abs_diff_eq!(thermal_r_from_pdc(&s).unwrap(), 0.25, epsilon = 1e-15);

        // forward substitution of the defining relation
        let s = DetectorSpec::new(0.1, 1e-5).unwrap();
        let x = thermal_r_from_pdc(&s).unwrap();
        let back = (1.0 - 0.1) * x / (1.0 - 0.1 * x);
        assert_relative_eq!(back, 1e-5, max_relative = 1e-14);
    }

    #[test]
    fn thermal_r_singular_at_unit_efficiency() {
        let s = DetectorSpec::new(1.0, 0.3).unwrap();
        assert!(matches!(thermal_r_from_pdc(&s), Err(Error::SingularModel)));
    }

    #[test]
    fn b_param_cases() {
        assert_eq!(b_param(&DetectorSpec::new(0.5, 0.0).unwrap()), 0.0);
        assert_eq!(b_param(&DetectorSpec::new(0.0, 0.2).unwrap()), 0.0);
        // singular margin clamps just below 1
        let b = b_param(&DetectorSpec::new(1.0, 0.3).unwrap());
        assert!(b < 1.0 && b > 1.0 - 1e-11);
        // cross-check of the two routes: b = eta * tanh^2 r
        let s = DetectorSpec::new(0.1, 1e-5).unwrap();
        let via_r = 0.1 * thermal_r_from_pdc(&s).unwrap();
        assert_relative_eq!(b_param(&s), via_r, max_relative = 1e-14);
    }

    #[test]
    fn g_function_zero_below_diagonal_and_binomial_reduction() {
        let s = DetectorSpec::new(0.7, 0.01).unwrap();
        assert_eq!(g_function(2, 3, &s).unwrap().value, 0.0);
        // p_dc = 0 reduces to a binomial coefficient
        let s0 = DetectorSpec::new(0.7, 0.0).unwrap();
        assert_eq!(g_function(3, 1, &s0).unwrap().value, 3.0);
        assert_eq!(g_function(6, 4, &s0).unwrap().value, 15.0);
    }

    #[test]
    fn g_function_frozen_high_precision_value() {
        // 10^6-term direct summation at 60-digit precision
        let s = DetectorSpec::new(0.3, 1e-3).unwrap();
        let g = g_function(4, 2, &s).unwrap();
        assert_relative_eq!(g.value, 6.002389508909781, max_relative = 1e-12);
        let s2 = DetectorSpec::new(0.1, 1e-3).unwrap();
        let g2 = g_function(3, 1, &s2).unwrap();
        assert_relative_eq!(g2.value, 3.004005112559823, max_relative = 1e-12);
    }

    #[test]
    fn g_function_matches_long_direct_sum() {
        let s = DetectorSpec::new(0.1, 1e-3).unwrap();
        let g = g_function(3, 1, &s).unwrap();
        let b = b_param(&s);
        let z = (0.1 - 1.0) / 0.1;
        let mut direct = 0.0;
        for n in 0..1_000_000usize {
            let t = binomial(3, 1) * binomial(2 + n as u64, 2) * b.powi(n as i32)
                * hyp2f1_terminating(n as u64, 1, 3, z).powi(2);
            direct += t;
            if n > 50 && t < 1e-30 * direct {
                break;
            }
        }
        assert_relative_eq!(g.value, direct, max_relative = 1e-10);
    }

    #[test]
    fn g_lower_bound_when_b_positive() {
        for &(kappa, lam) in &[(1u64, 0u64), (2, 1), (3, 1), (4, 2), (5, 5)] {
            let s = DetectorSpec::new(0.3, 1e-3).unwrap();
            let g = g_function(kappa, lam, &s).unwrap();
            assert!(g.value >= binomial(kappa, lam as i64) - 1e-12);
        }
    }

    #[test]
    fn prob_count_ideal_is_kronecker() {
        let s = DetectorSpec::ideal();
        for q in 0..5 {
            for i in 0..5 {
                let p = prob_count_given_incident(q, i, &s).unwrap();
                assert_eq!(p, if q == i { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn prob_count_bernoulli_without_dark_counts() {
        let s = DetectorSpec::new(0.5, 0.0).unwrap();
        assert_abs_diff_eq!(
            prob_count_given_incident(1, 2, &s).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        // zero-dark-count support: q > i impossible
        assert_eq!(prob_count_given_incident(3, 1, &s).unwrap(), 0.0);
    }

    #[test]
    fn prob_count_branches_agree_at_q_equals_i() {
        let s = DetectorSpec::new(0.2, 1e-3).unwrap();
        for i in 0..6u64 {
            let b = b_param(&s);
            let pref = (1.0 - 0.2) * (1.0 - 1e-3) / (1.0 - 0.2 * (1.0 - 1e-3));
            let branch_a = pref
                * (0.2f64 / 0.8).powi(i as i32)
                * 0.8f64.powi(i as i32)
                * g_function(i, i, &s).unwrap().value;
            let branch_b = pref
                * (0.8 / 0.2 * b).powi(0)
                * 0.2f64.powi(i as i32)
                * g_function(i, i, &s).unwrap().value;
            assert_relative_eq!(branch_a, branch_b, max_relative = 1e-12);
        }
    }

    #[test]
    fn prob_count_normalizes() {
        // randomized grid; series truncated with geometric tail estimate
        for &eta in &[0.05, 0.3, 0.62, 0.97] {
            for &pdc in &[0.0, 1e-5, 1e-3, 0.05] {
                let s = DetectorSpec::new(eta, pdc).unwrap();
                for i in 0..=8u64 {
                    let mut sum = 0.0;
                    for q in 0..200u64 {
                        let p = prob_count_given_incident(q, i, &s).unwrap();
                        sum += p;
                        if q > i + 20 && p < 1e-16 {
                            break;
                        }
                    }
                    assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn threshold_consistency_with_count_zero() {
        for &eta in &[0.0, 0.135, 0.5, 1.0] {
            for &pdc in &[0.0, 1e-5, 0.02] {
                if eta == 1.0 && pdc > 0.0 {
                    continue; // singular margin excluded from count-side closed form
                }
                let s = DetectorSpec::new(eta, pdc).unwrap();
                for i in 0..6u64 {
                    let nc = prob_threshold_given_incident(ThresholdOutcome::NoClick, i, &s);
                    let p0 = prob_count_given_incident(0, i, &s).unwrap();
                    assert_relative_eq!(nc, p0, max_relative = 1e-12, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn threshold_examples() {
        let s = DetectorSpec::new(0.4, 0.1).unwrap();
        assert_abs_diff_eq!(
            prob_threshold_given_incident(ThresholdOutcome::NoClick, 0, &s),
            0.9,
            epsilon = 1e-15
        );
        let ideal = DetectorSpec::ideal();
        assert_eq!(prob_threshold_given_incident(ThresholdOutcome::Click, 1, &ideal), 1.0);
    }

    #[test]
    fn threshold_click_monotone() {
        let grid = [0.0, 0.1, 0.3, 0.7, 1.0];
        let pdcs = [0.0, 1e-4, 1e-2, 0.3];
        for &eta in &grid {
            for &pdc in &pdcs {
                let s = DetectorSpec::new(eta, pdc).unwrap();
                let mut prev = -1.0;
                for i in 0..8u64 {
                    let p = prob_threshold_given_incident(ThresholdOutcome::Click, i, &s);
                    assert!(p >= prev - 1e-15, "click prob not monotone in i");
                    prev = p;
                }
            }
        }
        // monotone in eta at fixed i
        for i in 0..6u64 {
            let mut prev = -1.0;
            for &eta in &grid {
                let s = DetectorSpec::new(eta, 1e-3).unwrap();
                let p = prob_threshold_given_incident(ThresholdOutcome::Click, i, &s);
                assert!(p >= prev - 1e-15);
                prev = p;
            }
        }
        // monotone in p_dc with no incident photons (pure dark-count
        // response); with incident photons the thermal admixture also raises
        // the per-photon miss probability, so monotonicity in p_dc is not a
        // model property for i >= (1 - eta)/eta
        let mut prev = -1.0;
        for &pdc in &pdcs {
            let s = DetectorSpec::new(0.3, pdc).unwrap();
            let p = prob_threshold_given_incident(ThresholdOutcome::Click, 0, &s);
            assert!(p >= prev - 1e-15);
            prev = p;
        }
    }

    #[test]
    fn degenerate_spec() {
        let s = DetectorSpec::new(0.0, 0.0).unwrap();
        assert!(s.is_degenerate());
        assert_eq!(prob_count_given_incident(0, 3, &s).unwrap(), 1.0);
        assert_eq!(prob_count_given_incident(1, 3, &s).unwrap(), 0.0);
        assert_eq!(prob_threshold_given_incident(ThresholdOutcome::Click, 5, &s), 0.0);
    }
}
