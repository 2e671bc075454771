//! Polarization rotations on the outgoing modes, four-fold coincidence
//! probabilities, visibility extraction and parameter sweeps.
//!
//! The rotation matrix element between Fock occupations is evaluated in a
//! closed binomial form derived from the Heisenberg transformation of the
//! creation operators; an independent eigendecomposition route in [`crate::oracle`]
//! cross-checks it, and the oracle value is authoritative in tests.

use crate::config::ExperimentConfig;
use crate::detectors::{prob_threshold_given_incident, ThresholdOutcome};
use crate::inference::{
    posterior_joint, readout_marginal, DetectorBank, Posterior4, Readout, TruncationControls,
};
use crate::numerics::{binomial, ln_factorial};
use crate::sources::{Occupation4, PureStateAD};
use crate::swapstate::phi_cached;
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Analyzer rotation angles, stored in real-space radians. The Bloch-sphere
/// angles driving the mode rotation are exactly twice the real-space angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleConfig {
    alpha_real: f64,
    delta_real: f64,
}

impl AngleConfig {
    pub fn new(alpha_real: f64, delta_real: f64) -> Self {
        Self { alpha_real, delta_real }
    }

    pub fn alpha_real(&self) -> f64 {
        self.alpha_real
    }

    pub fn delta_real(&self) -> f64 {
        self.delta_real
    }

    pub fn alpha_bloch(&self) -> f64 {
        2.0 * self.alpha_real
    }

    pub fn delta_bloch(&self) -> f64 {
        2.0 * self.delta_real
    }

    /// Physical waveplate angles (half the real-space rotation).
    pub fn alpha_waveplate(&self) -> f64 {
        self.alpha_real / 2.0
    }

    pub fn delta_waveplate(&self) -> f64 {
        self.delta_real / 2.0
    }
}

/// Threshold readout of the four analyzer detectors (D_a+, D_a-, D_d-, D_d+),
/// which observe the rotated modes (a_H, a_V, d_V, d_H) in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoincidencePattern(pub [ThresholdOutcome; 4]);

impl CoincidencePattern {
    pub fn from_clicks(clicks: [bool; 4]) -> Self {
        let f = |c: bool| if c { ThresholdOutcome::Click } else { ThresholdOutcome::NoClick };
        Self([f(clicks[0]), f(clicks[1]), f(clicks[2]), f(clicks[3])])
    }

    /// All 16 patterns, in binary order (a_H most significant).
    pub fn all() -> Vec<Self> {
        (0..16u8)
            .map(|bits| {
                Self::from_clicks([
                    bits & 8 != 0,
                    bits & 4 != 0,
                    bits & 2 != 0,
                    bits & 1 != 0,
                ])
            })
            .collect()
    }

    /// Anticorrelated patterns: clicks (1,0,1,0) and (0,1,0,1).
    pub fn anticorrelated() -> [Self; 2] {
        [
            Self::from_clicks([true, false, true, false]),
            Self::from_clicks([false, true, false, true]),
        ]
    }

    /// Correlated patterns: clicks (0,1,1,0) and (1,0,0,1).
    pub fn correlated() -> [Self; 2] {
        [
            Self::from_clicks([false, true, true, false]),
            Self::from_clicks([true, false, false, true]),
        ]
    }
}

/// Matrix element <h2, v2| U(theta) |h1, v1> of a two-mode polarization
/// rotation with Bloch angle theta; zero unless h1 + v1 = h2 + v2.
fn pair_amplitude(h1: u32, v1: u32, h2: u32, v2: u32, theta_bloch: f64) -> Complex64 {
    if h1 + v1 != h2 + v2 {
        return Complex64::default();
    }
    let c = (theta_bloch / 2.0).cos();
    let s = (theta_bloch / 2.0).sin();
    let ln_norm = 0.5
        * (ln_factorial(h2 as u64) + ln_factorial(v2 as u64)
            - ln_factorial(h1 as u64)
            - ln_factorial(v1 as u64));
    let norm = ln_norm.exp();
    let p_lo = h2.saturating_sub(v1);
    let p_hi = h1.min(h2);
    let mut acc = Complex64::default();
    for p in p_lo..=p_hi {
        let coeff = binomial(h1 as u64, p as i64) * binomial(v1 as u64, (h2 - p) as i64);
        let c_pow = c.powi((2 * p + v1 - h2) as i32);
        let is_pow = Complex64::new(0.0, s).powu(h1 + h2 - 2 * p);
        acc += coeff * c_pow * is_pow;
    }
    norm * acc
}

/// Amplitude <to| U_a(2 alpha) x U_d(2 delta) |from> between occupations of
/// the outgoing modes (a_H, a_V, d_V, d_H); zero unless the photon number of
/// each mode pair is conserved.
pub fn rotation_amplitude(from: Occupation4, to: Occupation4, angles: &AngleConfig) -> Complex64 {
    let [ah1, av1, dv1, dh1] = from.0;
    let [ah2, av2, dv2, dh2] = to.0;
    if ah1 + av1 != ah2 + av2 || dv1 + dh1 != dv2 + dh2 {
        return Complex64::default();
    }
    pair_amplitude(ah1, av1, ah2, av2, angles.alpha_bloch())
        * pair_amplitude(dh1, dv1, dh2, dv2, angles.delta_bloch())
}

/// Transition probability W = |amplitude|^2.
pub fn transition_prob(from: Occupation4, to: Occupation4, angles: &AngleConfig) -> f64 {
    rotation_amplitude(from, to, angles).norm_sqr()
}

/// Rotation blocks for one mode pair, indexed by pair photon total; entry
/// (h2, h1) of block T is <h2, T-h2| U |h1, T-h1>.
fn rotation_blocks(max_total: u32, theta_bloch: f64) -> Vec<DMatrix<Complex64>> {
    (0..=max_total)
        .map(|t| {
            let d = t as usize + 1;
            DMatrix::from_fn(d, d, |h2, h1| {
                pair_amplitude(h1 as u32, t - h1 as u32, h2 as u32, t - h2 as u32, theta_bloch)
            })
        })
        .collect()
}

/// A weighted list of pure states extracted from one or two posteriors, with
/// the weight lost to pruning and truncation tracked explicitly.
struct PreparedMixture {
    /// (weight, state); for union conditioning the weight already combines
    /// the two readouts' posteriors.
    items: Vec<(f64, Arc<PureStateAD>)>,
    /// truncation tail plus pruned posterior weight
    tail_bound: f64,
    max_pair_total: u32,
}

fn prepare_single(posterior: &Posterior4, prune: f64) -> PreparedMixture {
    let n = posterior.cutoff();
    let mut items = Vec::new();
    let mut pruned = 0.0;
    let mut max_pair_total = 0;
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                for l in 0..=n {
                    let occ = Occupation4::new(i, j, k, l);
                    let w = posterior.weight(occ);
                    if w <= 0.0 {
                        continue;
                    }
                    if w < prune {
                        pruned += w;
                        continue;
                    }
                    // a single outgoing side can hold every photon of the
                    // hypothesis, so the per-side rotation blocks must cover
                    // the full total
                    max_pair_total = max_pair_total.max(i + j + k + l);
                    items.push((w, phi_cached(occ)));
                }
            }
        }
    }
    PreparedMixture {
        items,
        tail_bound: posterior.tail_bound() + pruned,
        max_pair_total,
    }
}

/// Combine two posteriors (one per accepted Bell readout) into a single
/// weighted mixture: p(.|A or B) mixes the conditionals with the readouts'
/// marginal likelihoods.
fn prepare_union(
    post_a: &Posterior4,
    m_a: f64,
    post_b: &Posterior4,
    m_b: f64,
    prune: f64,
) -> Result<PreparedMixture> {
    let total = m_a + m_b;
    if total <= 0.0 {
        return Err(Error::MeaninglessConditional(
            "both accepted Bell readouts have zero probability".into(),
        ));
    }
    let (fa, fb) = (m_a / total, m_b / total);
    let n = post_a.cutoff().max(post_b.cutoff());
    let mut items = Vec::new();
    let mut pruned = 0.0;
    let mut max_pair_total = 0;
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                for l in 0..=n {
                    let occ = Occupation4::new(i, j, k, l);
                    let w = fa * post_a.weight(occ) + fb * post_b.weight(occ);
                    if w <= 0.0 {
                        continue;
                    }
                    if w < prune {
                        pruned += w;
                        continue;
                    }
                    max_pair_total = max_pair_total.max(i + j + k + l);
                    items.push((w, phi_cached(occ)));
                }
            }
        }
    }
    Ok(PreparedMixture {
        items,
        tail_bound: fa * post_a.tail_bound() + fb * post_b.tail_bound() + pruned,
        max_pair_total,
    })
}

/// Probabilities of several coincidence patterns for one weighted mixture at
/// fixed analyzer angles. Summation order is fixed, so results do not depend
/// on how callers distribute work across threads.
fn pattern_probs(
    mixture: &PreparedMixture,
    angles: &AngleConfig,
    bank: &DetectorBank,
    patterns: &[CoincidencePattern],
) -> Vec<f64> {
    let max_n = 2 * mixture.max_pair_total as usize + 1;
    // per-detector click/no-click probabilities for every incident count
    let mut p_click = [const { Vec::new() }; 4];
    let mut p_noclick = [const { Vec::new() }; 4];
    for nu in 0..4 {
        let spec = bank.spec(nu);
        p_noclick[nu] = (0..=max_n as u64)
            .map(|n| prob_threshold_given_incident(ThresholdOutcome::NoClick, n, spec))
            .collect::<Vec<f64>>();
        p_click[nu] = p_noclick[nu].iter().map(|p| 1.0 - p).collect();
    }
    let a_blocks = rotation_blocks(mixture.max_pair_total, angles.alpha_bloch());
    let d_blocks = rotation_blocks(mixture.max_pair_total, angles.delta_bloch());

    let mut out = vec![0.0f64; patterns.len()];
    let mut rotated: BTreeMap<Occupation4, Complex64> = BTreeMap::new();
    for (w, psi) in &mixture.items {
        rotated.clear();
        for (occ1, amp1) in &psi.amplitudes {
            let [ah, av, dv, dh] = occ1.0;
            let (ta, td) = (ah + av, dv + dh);
            let ma = &a_blocks[ta as usize];
            let md = &d_blocks[td as usize];
            for ah2 in 0..=ta {
                let ca = ma[(ah2 as usize, ah as usize)];
                if ca == Complex64::default() {
                    continue;
                }
                for dh2 in 0..=td {
                    let cd = md[(dh2 as usize, dh as usize)];
                    if cd == Complex64::default() {
                        continue;
                    }
                    let occ2 = Occupation4::new(ah2, ta - ah2, td - dh2, dh2);
                    *rotated.entry(occ2).or_default() += amp1 * ca * cd;
                }
            }
        }
        for (occ2, amp2) in &rotated {
            let prob = w * amp2.norm_sqr();
            if prob == 0.0 {
                continue;
            }
            let [n0, n1, n2, n3] = occ2.0;
            let ns = [n0 as usize, n1 as usize, n2 as usize, n3 as usize];
            for (slot, pat) in patterns.iter().enumerate() {
                let mut f = prob;
                for nu in 0..4 {
                    f *= match pat.0[nu] {
                        ThresholdOutcome::Click => p_click[nu][ns[nu]],
                        ThresholdOutcome::NoClick => p_noclick[nu][ns[nu]],
                    };
                }
                out[slot] += f;
            }
        }
    }
    out
}

/// Probability of one analyzer coincidence pattern given the Bell-readout
/// posterior; the analyzer detectors are threshold detectors.
pub fn coincidence_prob(
    pattern: CoincidencePattern,
    posterior: &Posterior4,
    angles: &AngleConfig,
    analysis_bank: &DetectorBank,
    trunc: &TruncationControls,
) -> Result<f64> {
    let mixture = prepare_single(posterior, trunc.eps_tail);
    Ok(pattern_probs(&mixture, angles, analysis_bank, &[pattern])[0])
}

/// The two accepted Bell readouts that herald the swapped state.
pub fn accepted_readouts() -> [Readout; 2] {
    [
        Readout::from_clicks([true, false, true, false]),
        Readout::from_clicks([false, true, false, true]),
    ]
}

/// Four-fold coincidence curves versus the d-side analyzer angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    /// d-side analyzer angles (real-space radians)
    pub deltas: Vec<f64>,
    /// P(clicks 1,0,1,0) + P(clicks 0,1,0,1)
    pub anticorr: Vec<f64>,
    /// P(clicks 0,1,1,0) + P(clicks 1,0,0,1)
    pub corr: Vec<f64>,
    /// truncation + pruning weight unaccounted for in the curves
    pub tail_bound: f64,
}

fn union_mixture(config: &ExperimentConfig) -> Result<PreparedMixture> {
    let [ra, rb] = accepted_readouts();
    let post_a = posterior_joint(&ra, config.chi, &config.bell_bank, &config.trunc)?;
    let post_b = posterior_joint(&rb, config.chi, &config.bell_bank, &config.trunc)?;
    let m_a = readout_marginal(&ra, config.chi, &config.bell_bank)?;
    let m_b = readout_marginal(&rb, config.chi, &config.bell_bank)?;
    prepare_union(&post_a, m_a, &post_b, m_b, config.trunc.eps_tail)
}

/// Conditional four-fold coincidence curves, conditioned on either accepted
/// Bell readout occurring, for the configured fixed a-side angle.
pub fn four_fold_scan(config: &ExperimentConfig, delta_grid: &[f64]) -> Result<ScanResult> {
    let mixture = union_mixture(config)?;
    let [anti_a, anti_b] = CoincidencePattern::anticorrelated();
    let [corr_a, corr_b] = CoincidencePattern::correlated();
    let patterns = [anti_a, anti_b, corr_a, corr_b];
    let points: Vec<(f64, f64)> = delta_grid
        .par_iter()
        .map(|&delta| {
            let angles = AngleConfig::new(config.alpha_real, delta);
            let p = pattern_probs(&mixture, &angles, &config.analysis_bank, &patterns);
            (p[0] + p[1], p[2] + p[3])
        })
        .collect();
    Ok(ScanResult {
        deltas: delta_grid.to_vec(),
        anticorr: points.iter().map(|p| p.0).collect(),
        corr: points.iter().map(|p| p.1).collect(),
        tail_bound: mixture.tail_bound,
    })
}

/// The mixed outgoing state conditioned on either accepted Bell readout,
/// mixing the two conditional states with the readouts' marginal likelihoods.
pub fn union_state(config: &ExperimentConfig) -> Result<crate::swapstate::MixedStateAD> {
    let [ra, rb] = accepted_readouts();
    let post_a = posterior_joint(&ra, config.chi, &config.bell_bank, &config.trunc)?;
    let post_b = posterior_joint(&rb, config.chi, &config.bell_bank, &config.trunc)?;
    let m_a = readout_marginal(&ra, config.chi, &config.bell_bank)?;
    let m_b = readout_marginal(&rb, config.chi, &config.bell_bank)?;
    let total = m_a + m_b;
    if total <= 0.0 {
        return Err(Error::MeaninglessConditional(
            "both accepted Bell readouts have zero probability".into(),
        ));
    }
    let (fa, fb) = (m_a / total, m_b / total);
    let sa = crate::swapstate::assemble_state(&post_a)?;
    let sb = crate::swapstate::assemble_state(&post_b)?;
    let mut components = Vec::with_capacity(sa.components.len() + sb.components.len());
    components.extend(sa.components.iter().map(|(w, s)| (fa * w, Arc::clone(s))));
    components.extend(sb.components.iter().map(|(w, s)| (fb * w, Arc::clone(s))));
    Ok(crate::swapstate::MixedStateAD {
        components,
        tail_bound: fa * sa.tail_bound + fb * sb.tail_bound,
    })
}

/// Visibility (Max - Min)/(Max + Min) of a sampled coincidence curve.
pub fn visibility(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::DegenerateCurve);
    }
    let max = samples.iter().cloned().fold(f64::MIN, f64::max);
    let min = samples.iter().cloned().fold(f64::MAX, f64::min);
    if max + min <= 0.0 {
        return Err(Error::DegenerateCurve);
    }
    Ok((max - min) / (max + min))
}

/// Visibility of the anticorrelated curve with the extremum locations made
/// explicit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityReport {
    pub visibility: f64,
    /// located maximum of the anticorrelated curve (real-space radians)
    pub max_delta: f64,
    /// located minimum (real-space radians)
    pub min_delta: f64,
    /// true when local refinement moved an extremum by more than 0.1 degree
    /// away from the analytic locations delta = alpha and alpha + pi/2
    pub refined_shift: bool,
    pub tail_bound: f64,
}

const REFINE_WINDOW_DEG: f64 = 2.0;
const REFINE_STEP_DEG: f64 = 0.25;

fn anticorr_at(
    mixture: &PreparedMixture,
    config: &ExperimentConfig,
    delta: f64,
) -> f64 {
    let [a, b] = CoincidencePattern::anticorrelated();
    let angles = AngleConfig::new(config.alpha_real, delta);
    let p = pattern_probs(mixture, &angles, &config.analysis_bank, &[a, b]);
    p[0] + p[1]
}

/// Visibility from the analytic extremum locations delta = alpha (maximum)
/// and delta = alpha + pi/2 (minimum), each refined by a local grid search
/// over a +-2 degree window.
pub fn visibility_refined(config: &ExperimentConfig) -> Result<VisibilityReport> {
    let mixture = union_mixture(config)?;
    let window: Vec<f64> = {
        let n = (2.0 * REFINE_WINDOW_DEG / REFINE_STEP_DEG).round() as i32;
        (0..=n)
            .map(|k| (-REFINE_WINDOW_DEG + k as f64 * REFINE_STEP_DEG).to_radians())
            .collect()
    };
    let locate = |center: f64, want_max: bool| -> (f64, f64) {
        let samples: Vec<(f64, f64)> = window
            .par_iter()
            .map(|off| {
                let d = center + off;
                (d, anticorr_at(&mixture, config, d))
            })
            .collect();
        samples
            .into_iter()
            .reduce(|best, cand| {
                let better = if want_max { cand.1 > best.1 } else { cand.1 < best.1 };
                if better { cand } else { best }
            })
            .unwrap()
    };
    let alpha = config.alpha_real;
    let (max_delta, max_val) = locate(alpha, true);
    let (min_delta, min_val) = locate(alpha + std::f64::consts::FRAC_PI_2, false);
    if max_val + min_val <= 0.0 {
        return Err(Error::DegenerateCurve);
    }
    let shift = ((max_delta - alpha).abs())
        .max((min_delta - alpha - std::f64::consts::FRAC_PI_2).abs());
    Ok(VisibilityReport {
        visibility: (max_val - min_val) / (max_val + min_val),
        max_delta,
        min_delta,
        refined_shift: shift > 0.1f64.to_radians(),
        tail_bound: mixture.tail_bound,
    })
}

/// Visibility from the two analytic extremum locations only (no refinement);
/// used by parameter sweeps where speed matters.
pub fn visibility_quick(config: &ExperimentConfig) -> Result<f64> {
    let mixture = union_mixture(config)?;
    let max_val = anticorr_at(&mixture, config, config.alpha_real);
    let min_val = anticorr_at(
        &mixture,
        config,
        config.alpha_real + std::f64::consts::FRAC_PI_2,
    );
    if max_val + min_val <= 0.0 {
        return Err(Error::DegenerateCurve);
    }
    Ok((max_val - min_val) / (max_val + min_val))
}

/// CHSH correlation parameter S = 2 sqrt(2) V.
pub fn chsh_s(v: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("visibility {v} outside [0, 1]")));
    }
    Ok(2.0 * std::f64::consts::SQRT_2 * v)
}

/// Visibility at each interaction parameter of `chi_grid`; grid points are
/// independent and evaluated in parallel with a fixed per-point summation
/// order, so results do not depend on the worker count.
pub fn visibility_vs_chi(config: &ExperimentConfig, chi_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    chi_grid
        .par_iter()
        .map(|&chi| {
            let mut c = config.clone();
            c.chi = chi;
            visibility_quick(&c).map(|v| (chi, v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::DetectorSpec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn occupations_with_total_le(max: u32) -> Vec<Occupation4> {
        let mut v = Vec::new();
        for a in 0..=max {
            for b in 0..=max {
                for c in 0..=max {
                    for d in 0..=max {
                        if a + b + c + d <= max {
                            v.push(Occupation4::new(a, b, c, d));
                        }
                    }
                }
            }
        }
        v
    }

    #[test]
    fn rotation_identity_is_kronecker() {
        let id = AngleConfig::new(0.0, 0.0);
        for from in occupations_with_total_le(3) {
            for to in occupations_with_total_le(3) {
                let a = rotation_amplitude(from, to, &id);
                if from == to {
                    assert_abs_diff_eq!(a.re, 1.0, epsilon = 1e-14);
                    assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-14);
                } else {
                    assert_abs_diff_eq!(a.norm(), 0.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn single_photon_is_spin_half_rotation() {
        // a lone a_H photon survives with probability cos^2(alpha_real)
        for alpha in [0.0, 0.3, FRAC_PI_4, 1.2] {
            let angles = AngleConfig::new(alpha, 0.0);
            let from = Occupation4::new(1, 0, 0, 0);
            let keep = transition_prob(from, from, &angles);
            assert_relative_eq!(keep, alpha.cos().powi(2), epsilon = 1e-14);
            let flip = transition_prob(from, Occupation4::new(0, 1, 0, 0), &angles);
            assert_relative_eq!(keep + flip, 1.0, max_relative = 1e-13);
            // 2x2 matrix-exponential oracle: amplitude cos(alpha_bloch/2)
            let a = rotation_amplitude(from, from, &angles);
            assert_relative_eq!(a.re, (angles.alpha_bloch() / 2.0).cos(), epsilon = 1e-14);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn transition_rows_are_normalized() {
        let angle_pairs = [
            (0.1, 0.7),
            (FRAC_PI_4, FRAC_PI_4),
            (1.3, 0.2),
            (PI / 3.0, PI / 5.0),
            (2.0, 2.9),
            (0.0, 1.0),
            (FRAC_PI_2, FRAC_PI_2),
            (2.7, 0.05),
        ];
        for (al, de) in angle_pairs {
            let angles = AngleConfig::new(al, de);
            for from in occupations_with_total_le(4) {
                let [ah, av, dv, dh] = from.0;
                let (ta, td) = (ah + av, dv + dh);
                let mut row = 0.0;
                for ah2 in 0..=ta {
                    for dh2 in 0..=td {
                        let to = Occupation4::new(ah2, ta - ah2, td - dh2, dh2);
                        row += transition_prob(from, to, &angles);
                    }
                }
                assert_abs_diff_eq!(row, 1.0, epsilon = 1e-10);
            }
        }
    }

    fn ideal_posterior(readout: [u64; 4], chi: f64) -> Posterior4 {
        posterior_joint(
            &Readout::counts(readout),
            chi,
            &DetectorBank::ideal(),
            &TruncationControls { n_max: Some(6), eps_tail: 1e-12 },
        )
        .unwrap()
    }

    #[test]
    fn vacuum_gives_certain_all_no_click() {
        let bank = DetectorBank::uniform(DetectorSpec::new(0.5, 0.0).unwrap());
        let post = posterior_joint(
            &Readout::from_clicks([false; 4]),
            0.0,
            &bank,
            &TruncationControls::default(),
        )
        .unwrap();
        let q = coincidence_prob(
            CoincidencePattern::from_clicks([false; 4]),
            &post,
            &AngleConfig::new(FRAC_PI_4, 0.3),
            &bank,
            &TruncationControls::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(q, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ideal_bell_state_anticorrelated_quarter() {
        let post = ideal_posterior([1, 0, 1, 0], 0.24);
        let q = coincidence_prob(
            CoincidencePattern::from_clicks([true, false, true, false]),
            &post,
            &AngleConfig::new(FRAC_PI_4, FRAC_PI_4),
            &DetectorBank::ideal(),
            &TruncationControls::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(q, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn all_sixteen_patterns_sum_to_one() {
        let bank = DetectorBank::uniform(DetectorSpec::new(0.135, 1e-5).unwrap());
        let trunc = TruncationControls { n_max: Some(6), eps_tail: 1e-12 };
        let post = posterior_joint(
            &Readout::from_clicks([true, false, true, false]),
            0.244949,
            &bank,
            &trunc,
        )
        .unwrap();
        let angles = AngleConfig::new(FRAC_PI_4, 0.9);
        let abank = DetectorBank::uniform(DetectorSpec::new(0.04, 3e-5).unwrap());
        let total: f64 = CoincidencePattern::all()
            .into_iter()
            .map(|p| coincidence_prob(p, &post, &angles, &abank, &trunc).unwrap())
            .sum();
        assert!((1.0 - total).abs() <= post.tail_bound() + 1e-9);
    }

    fn small_config(chi: f64, bell: DetectorSpec, analysis: DetectorSpec) -> ExperimentConfig {
        ExperimentConfig {
            chi,
            alpha_real: FRAC_PI_4,
            bell_bank: DetectorBank::uniform(bell),
            analysis_bank: DetectorBank::uniform(analysis),
            trunc: TruncationControls { n_max: Some(6), eps_tail: 1e-12 },
            threads: None,
        }
    }

    #[test]
    fn curves_are_complementary_in_the_ideal_limit() {
        let near_ideal = DetectorSpec::new(1.0, 0.0).unwrap();
        let config = small_config(0.05, near_ideal, near_ideal);
        let grid: Vec<f64> = (0..=24).map(|k| k as f64 * PI / 24.0).collect();
        let scan = four_fold_scan(&config, &grid).unwrap();
        // correlated(delta) == anticorrelated(delta + pi/2): compare shifted
        // grid indices (pi/2 is 12 steps of pi/24)
        for k in 0..=12 {
            assert_relative_eq!(
                scan.corr[k],
                scan.anticorr[k + 12],
                max_relative = 1e-6,
                epsilon = 1e-12
            );
        }
        // maximum of the anticorrelated curve sits at delta = alpha = pi/4
        let max_idx = scan
            .anticorr
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(max_idx, 6);
    }

    #[test]
    fn accepted_readouts_are_equivalent_for_uniform_banks() {
        let bank = DetectorBank::uniform(DetectorSpec::new(0.135, 1e-5).unwrap());
        let trunc = TruncationControls { n_max: Some(6), eps_tail: 1e-12 };
        let [ra, rb] = accepted_readouts();
        let post_a = posterior_joint(&ra, 0.244949, &bank, &trunc).unwrap();
        let post_b = posterior_joint(&rb, 0.244949, &bank, &trunc).unwrap();
        let abank = DetectorBank::uniform(DetectorSpec::new(0.04, 3e-5).unwrap());
        for delta in [0.2, FRAC_PI_4, 1.1] {
            let angles = AngleConfig::new(FRAC_PI_4, delta);
            for pat in CoincidencePattern::anticorrelated() {
                let qa = coincidence_prob(pat, &post_a, &angles, &abank, &trunc).unwrap();
                let qb = coincidence_prob(pat, &post_b, &angles, &abank, &trunc).unwrap();
                assert_abs_diff_eq!(qa, qb, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn visibility_trivials() {
        assert_abs_diff_eq!(visibility(&[0.3, 0.3, 0.3]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(visibility(&[0.0, 0.5, 0.2]).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(visibility(&[0.0, 0.0]), Err(Error::DegenerateCurve)));
    }

    #[test]
    fn chsh_values() {
        assert_relative_eq!(chsh_s(1.0).unwrap(), 2.0 * std::f64::consts::SQRT_2);
        assert_relative_eq!(
            chsh_s(1.0 / std::f64::consts::SQRT_2).unwrap(),
            2.0,
            max_relative = 1e-15
        );
        assert!(chsh_s(1.2).is_err());
    }

    #[test]
    fn visibility_near_one_for_good_detectors_at_small_chi() {
        let good = DetectorSpec::new(1.0, 0.0).unwrap();
        let config = small_config(0.02, good, good);
        let v = visibility_quick(&config).unwrap();
        assert!(v > 0.995, "v = {v}");
        let report = visibility_refined(&config).unwrap();
        assert_relative_eq!(report.visibility, v, max_relative = 1e-9);
        assert!(!report.refined_shift);
    }

    #[test]
    fn chi_sweep_is_deterministic_and_ordered() {
        let spec = DetectorSpec::new(0.1, 1e-5).unwrap();
        let config = small_config(0.1, spec, spec);
        let grid = [0.02, 0.05, 0.1];
        let a = visibility_vs_chi(&config, &grid).unwrap();
        let b = visibility_vs_chi(&config, &grid).unwrap();
        assert_eq!(a, b);
        for (i, (chi, v)) in a.iter().enumerate() {
            assert_eq!(*chi, grid[i]);
            assert!((0.0..=1.0).contains(v));
        }
    }
}
