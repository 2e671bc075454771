//! Brute-force truncated-Fock-space constructions used to validate every
//! closed form independently. These routines favour transparency over speed
//! and are used by the test suite and the command-line `verify` runner.

use crate::analysis::{rotation_amplitude, AngleConfig};
use crate::detectors::{
    prob_count_given_incident, thermal_r_from_pdc, DetectorSpec, ThresholdOutcome,
};
use crate::inference::{
    f_count, f_threshold, posterior_joint, DetectorBank, Outcome, Readout, TruncationControls,
};
use crate::numerics::{binomial, ln_factorial};
use crate::sources::{pdc_joint_amplitude, Occupation4, PureStateAD, SourceParams};
use crate::swapstate::{density_matrix, sector_basis, MixedStateAD};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::sync::Arc;

/// A single bosonic mode truncated to occupations 0..=n_max.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncatedMode {
    pub n_max: u32,
}

impl TruncatedMode {
    pub fn dimension(&self) -> usize {
        self.n_max as usize + 1
    }
}

/// Exact two-mode beamsplitter Fock matrix element
/// <m', n'| B_eta |m, n> with the mode-1 creation operator mapping to
/// sqrt(eta) mode1' - sqrt(1-eta) mode2' and the mode-2 operator to
/// sqrt(1-eta) mode1' + sqrt(eta) mode2'. Zero unless m + n = m' + n'.
pub fn oracle_beamsplitter(in_pair: (u32, u32), out_pair: (u32, u32), transmittance: f64) -> f64 {
    let (m, n) = in_pair;
    let (mp, np) = out_pair;
    if m + n != mp + np {
        return 0.0;
    }
    let t = transmittance.sqrt();
    let r = (1.0 - transmittance).sqrt();
    let norm = (0.5
        * (ln_factorial(mp as u64) + ln_factorial(np as u64)
            - ln_factorial(m as u64)
            - ln_factorial(n as u64)))
    .exp();
    let p_lo = mp.saturating_sub(n);
    let p_hi = m.min(mp);
    let mut acc = 0.0;
    for p in p_lo..=p_hi {
        acc += binomial(m as u64, p as i64)
            * binomial(n as u64, (mp - p) as i64)
            * t.powi(p as i32)
            * (-r).powi((m - p) as i32)
            * r.powi((mp - p) as i32)
            * t.powi((n + p - mp) as i32);
    }
    norm * acc
}

/// Thermal-mode cutoff large enough that the neglected thermal weight is
/// below 1e-13.
pub fn auto_thermal_cutoff(spec: &DetectorSpec) -> Result<u32> {
    let tau = thermal_r_from_pdc(spec)?;
    if tau == 0.0 {
        return Ok(0);
    }
    let n = ((1e-13 * (1.0 - tau)).ln() / tau.ln()).ceil().max(1.0);
    Ok(n as u32)
}

/// p(q | i) constructed explicitly: mix the signal Fock state with a thermal
/// mode on a beamsplitter of transmittance eta and project the transmitted
/// mode on |q>, tracing the reflected mode.
pub fn oracle_detector_prob(q: u64, i: u64, spec: &DetectorSpec, n_thermal: u32) -> Result<f64> {
    let tau = thermal_r_from_pdc(spec)?;
    if tau > 0.0 && tau.powi(n_thermal as i32) / (1.0 - tau) >= 1e-13 {
        return Err(Error::NonConvergence(format!(
            "thermal cutoff {n_thermal} leaves tail >= 1e-13 (tau = {tau})"
        )));
    }
    let mut p = 0.0;
    for n in 0..=n_thermal {
        let weight = (1.0 - tau) * tau.powi(n as i32);
        let total = i as u32 + n;
        if (q as u32) > total {
            continue;
        }
        let reflected = total - q as u32;
        let amp = oracle_beamsplitter((i as u32, n), (q as u32, reflected), spec.eta());
        p += weight * amp * amp;
    }
    Ok(p)
}

/// Threshold-outcome probability from the count-resolved oracle.
pub fn oracle_threshold_prob(
    outcome: ThresholdOutcome,
    i: u64,
    spec: &DetectorSpec,
    n_thermal: u32,
) -> Result<f64> {
    let no_click = oracle_detector_prob(0, i, spec, n_thermal)?;
    Ok(match outcome {
        ThresholdOutcome::NoClick => no_click,
        ThresholdOutcome::Click => 1.0 - no_click,
    })
}

/// Posterior and mixed state produced by explicit enumeration of the four
/// squeezers' pair counts.
#[derive(Debug, Clone)]
pub struct OracleSwap {
    /// posterior weights over hypothetical ideal readouts (Bayes quotient
    /// against the brute-force readout marginal); restricted to hypotheses
    /// fully captured by the pair-count box, so they sum to 1 minus the
    /// posterior mass of the omitted hypotheses
    pub weights: BTreeMap<Occupation4, f64>,
    pub state: MixedStateAD,
    /// posterior mass outside the retained hypotheses
    pub tail_estimate: f64,
}

/// Brute-force swap construction: enumerate pair counts up to `n` per
/// squeezer, mix modes b and c on the balanced beamsplitter per polarization,
/// read the ideal counts (i, j, k, l) off the output modes and weight each
/// hypothesis by the detector likelihood of the actual readout divided by the
/// brute-force readout marginal (prior times oracle likelihood summed over
/// one count index per detector).
///
/// Only hypotheses whose amplitudes are fully captured by the box
/// (i + l <= n and j + k <= n) are retained; partially captured ones carry
/// truncated norms and are counted into `tail_estimate` instead.
pub fn oracle_swap_posterior(
    readout: &Readout,
    chi: f64,
    bank: &DetectorBank,
    n: u32,
) -> Result<OracleSwap> {
    if n > 6 {
        return Err(Error::BudgetExceeded(format!(
            "oracle pair-count cutoff {n} > 6"
        )));
    }
    let src = SourceParams::new(chi)?;
    let t2 = chi.tanh().powi(2);
    let prior_tail = 1.0 - (1.0 - t2.powi(n as i32 + 1)).powi(4);
    if prior_tail > 1e-3 {
        return Err(Error::NonConvergence(format!(
            "pair-count cutoff {n} leaves prior tail {prior_tail:e} > 1e-3"
        )));
    }

    // unnormalized amplitudes of the outgoing modes per ideal readout
    let mut states: BTreeMap<Occupation4, BTreeMap<Occupation4, Complex64>> = BTreeMap::new();
    for n1 in 0..=n {
        for n2 in 0..=n {
            for n3 in 0..=n {
                for n4 in 0..=n {
                    let pdc = pdc_joint_amplitude([n1, n2, n3, n4], &src);
                    // squeezer pairings: (a_H b_H), (a_V b_V), (c_H d_H), (c_V d_V)
                    let outgoing = Occupation4::new(n1, n2, n4, n3);
                    for i in 0..=n1 + n3 {
                        let l = n1 + n3 - i;
                        // H polarization: inputs (b_H, c_H) -> outputs (b'_H, c'_H)
                        let bs_h = oracle_beamsplitter((n1, n3), (l, i), 0.5);
                        if bs_h == 0.0 {
                            continue;
                        }
                        for j in 0..=n2 + n4 {
                            let k = n2 + n4 - j;
                            let bs_v = oracle_beamsplitter((n2, n4), (k, j), 0.5);
                            if bs_v == 0.0 {
                                continue;
                            }
                            let ideal = Occupation4::new(i, j, k, l);
                            *states
                                .entry(ideal)
                                .or_default()
                                .entry(outgoing)
                                .or_default() += pdc * bs_h * bs_v;
                        }
                    }
                }
            }
        }
    }

    // likelihood of the actual readout under each hypothetical ideal count
    let likelihood = |nu: usize, count: u64| -> Result<f64> {
        let spec = bank.spec(nu);
        let cutoff = auto_thermal_cutoff(spec)?;
        match readout.0[nu] {
            Outcome::Count(q) => oracle_detector_prob(q, count, spec, cutoff),
            Outcome::Threshold(o) => oracle_threshold_prob(o, count, spec, cutoff),
        }
    };

    // brute-force readout marginal: the prior factorizes per index with
    // geometric factor tanh^2 chi, so the joint marginal is a product of
    // one-dimensional sums of prior x likelihood
    let inv_cosh2 = 1.0 / chi.cosh().powi(2);
    let horizon = if t2 > 0.0 {
        (((1e-16 * (1.0 - t2)).ln() / t2.ln()).ceil() as u64).max(4) + 4
    } else {
        1
    };
    let mut marginal = 1.0f64;
    for nu in 0..4 {
        let mut m = 0.0f64;
        for i in 0..=horizon {
            m += likelihood(nu, i)? * t2.powi(i as i32) * inv_cosh2;
        }
        marginal *= m;
    }
    if marginal <= 0.0 {
        return Err(Error::MeaninglessConditional(
            "readout has zero probability under the source prior".into(),
        ));
    }

    let mut weights: BTreeMap<Occupation4, f64> = BTreeMap::new();
    let mut components: Vec<(f64, Arc<PureStateAD>)> = Vec::new();
    let mut total = 0.0f64;
    for (ideal, amps) in &states {
        let [i, j, k, l] = ideal.0;
        if i + l > n || j + k > n {
            continue; // amplitudes only partially enumerated
        }
        let norm_sqr: f64 = amps.values().map(|a| a.norm_sqr()).sum();
        if norm_sqr <= 0.0 {
            continue;
        }
        let mut like = 1.0;
        for nu in 0..4 {
            like *= likelihood(nu, ideal.0[nu] as u64)?;
        }
        let w = like * norm_sqr / marginal;
        if w <= 0.0 {
            continue;
        }
        total += w;
        weights.insert(*ideal, w);
        let scale = 1.0 / norm_sqr.sqrt();
        let amplitudes = amps.iter().map(|(occ, a)| (*occ, a * scale)).collect();
        components.push((
            w,
            Arc::new(PureStateAD { total_photons: ideal.total(), amplitudes }),
        ));
    }
    if total <= 0.0 {
        return Err(Error::MeaninglessConditional(
            "readout has zero probability under the enumerated hypotheses".into(),
        ));
    }
    let tail_estimate = (1.0 - total).max(0.0);
    Ok(OracleSwap {
        weights,
        state: MixedStateAD { components, tail_bound: tail_estimate },
        tail_estimate,
    })
}

/// Independent rotation matrix element: exponentiate the tridiagonal
/// generator on each fixed-total two-mode block via its eigendecomposition.
pub fn oracle_rotation(from: Occupation4, to: Occupation4, angles: &AngleConfig) -> Complex64 {
    let [ah1, av1, dv1, dh1] = from.0;
    let [ah2, av2, dv2, dh2] = to.0;
    if ah1 + av1 != ah2 + av2 || dv1 + dh1 != dv2 + dh2 {
        return Complex64::default();
    }
    oracle_pair_rotation(ah1, av1, ah2, angles.alpha_bloch())
        * oracle_pair_rotation(dh1, dv1, dh2, angles.delta_bloch())
}

fn oracle_pair_rotation(h1: u32, v1: u32, h2: u32, theta_bloch: f64) -> Complex64 {
    let t = (h1 + v1) as usize;
    let d = t + 1;
    // generator J on |h, T-h>: J|h,v> = (sqrt(h(v+1))|h-1,v+1>
    //                                    + sqrt(v(h+1))|h+1,v-1>)/2
    let mut j = DMatrix::<f64>::zeros(d, d);
    for h in 0..d {
        let v = t - h;
        if h > 0 {
            j[(h - 1, h)] = 0.5 * ((h * (v + 1)) as f64).sqrt();
        }
        if v > 0 {
            j[(h + 1, h)] = 0.5 * ((v * (h + 1)) as f64).sqrt();
        }
    }
    let eig = nalgebra::SymmetricEigen::new(j);
    let mut amp = Complex64::default();
    for m in 0..d {
        let phase = Complex64::new(0.0, theta_bloch * eig.eigenvalues[m]).exp();
        amp += eig.eigenvectors[(h2 as usize, m)] * phase * eig.eigenvectors[(h1 as usize, m)];
    }
    amp
}

/// Trace distance (1/2) ||a - b||_1 of two Hermitian matrices.
pub fn trace_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let diff = a - b;
    let eig = nalgebra::SymmetricEigen::new(diff);
    0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
}

/// One verification check: a named maximum error against its tolerance.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub max_err: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_err.is_finite() && self.max_err <= self.tolerance
    }
}

fn unique_specs(config: &crate::config::ExperimentConfig) -> Vec<DetectorSpec> {
    let mut specs: Vec<DetectorSpec> = Vec::new();
    for bank in [&config.bell_bank, &config.analysis_bank] {
        for nu in 0..4 {
            let s = *bank.spec(nu);
            if !specs.contains(&s) {
                specs.push(s);
            }
        }
    }
    specs
}

/// Closed-form mixture restricted to the hypotheses an oracle swap retained,
/// so the two states can be compared component by component.
pub fn restrict_closed_form(post: &crate::inference::Posterior4, oracle: &OracleSwap) -> MixedStateAD {
    let components = oracle
        .weights
        .keys()
        .map(|occ| (post.weight(*occ), crate::swapstate::phi_cached(*occ)))
        .collect();
    MixedStateAD { components, tail_bound: post.tail_bound() }
}

/// Cross-check the closed forms against the brute-force constructions at the
/// supplied parameters, at reduced cutoffs. Returns one result per check.
pub fn run_verification(config: &crate::config::ExperimentConfig) -> Result<Vec<Check>> {
    let chi = config.chi;
    let mut checks = Vec::new();

    // detector conditional probabilities
    let mut err = 0.0f64;
    for spec in unique_specs(config) {
        let cutoff = auto_thermal_cutoff(&spec)?;
        for q in 0..=4u64 {
            for i in 0..=4u64 {
                let closed = prob_count_given_incident(q, i, &spec)?;
                let oracle = oracle_detector_prob(q, i, &spec, cutoff)?;
                err = err.max((closed - oracle).abs());
            }
        }
    }
    checks.push(Check {
        name: "detector count probabilities".into(),
        max_err: err,
        tolerance: 1e-9,
    });

    // posterior factors vs Bayes quotients built from the oracle
    let t2 = chi.tanh().powi(2);
    let mut err = 0.0f64;
    if t2 > 0.0 {
        let horizon = ((1e-16f64).ln() / t2.ln()).ceil() as u64 + 8;
        for spec in unique_specs(config) {
            let cutoff = auto_thermal_cutoff(&spec)?;
            if spec.eta() == 0.0 {
                continue;
            }
            for q in 0..=3u64 {
                let den: f64 = (0..=horizon)
                    .map(|ip| {
                        oracle_detector_prob(q, ip, &spec, cutoff).map(|p| p * t2.powi(ip as i32))
                    })
                    .sum::<Result<f64>>()?;
                for i in 0..=5u64 {
                    let oracle =
                        oracle_detector_prob(q, i, &spec, cutoff)? * t2.powi(i as i32) / den;
                    err = err.max((f_count(q, i, chi, &spec)? - oracle).abs());
                }
            }
            for o in [ThresholdOutcome::NoClick, ThresholdOutcome::Click] {
                let den: f64 = (0..=horizon)
                    .map(|ip| {
                        oracle_threshold_prob(o, ip, &spec, cutoff).map(|p| p * t2.powi(ip as i32))
                    })
                    .sum::<Result<f64>>()?;
                if den <= 0.0 {
                    continue;
                }
                for i in 0..=5u64 {
                    let oracle =
                        oracle_threshold_prob(o, i, &spec, cutoff)? * t2.powi(i as i32) / den;
                    err = err.max((f_threshold(o, i, chi, &spec)? - oracle).abs());
                }
            }
        }
    }
    checks.push(Check {
        name: "posterior factors (Bayes quotients)".into(),
        max_err: err,
        tolerance: 1e-9,
    });

    // full swap state for the accepted readout, compared on the hypotheses
    // the oracle box fully captures
    let readout = Readout::from_clicks([true, false, true, false]);
    let mut err = 0.0f64;
    if chi > 0.0 {
        let oracle = oracle_swap_posterior(&readout, chi, &config.bell_bank, 3)?;
        let trunc = TruncationControls { n_max: Some(6), eps_tail: 1e-12 };
        let post = posterior_joint(&readout, chi, &config.bell_bank, &trunc)?;
        let closed = restrict_closed_form(&post, &oracle);
        let basis = sector_basis(3, 3, 3);
        let d = trace_distance(
            &density_matrix(&closed, &basis),
            &density_matrix(&oracle.state, &basis),
        );
        err = d;
        for (occ, w) in &oracle.weights {
            err = err.max((w - post.weight(*occ)).abs());
        }
    }
    checks.push(Check {
        name: "swap posterior and mixed state".into(),
        max_err: err,
        tolerance: 1e-7,
    });

    // rotation amplitudes vs the eigendecomposition route
    let mut err = 0.0f64;
    let mut seed = 0x2545f4914f6cdd1du64;
    let mut next = move || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..8 {
        let angles = AngleConfig::new(
            next() * std::f64::consts::PI,
            next() * std::f64::consts::PI,
        );
        for from in sector_basis(3, 3, 3) {
            let [ah, av, dv, dh] = from.0;
            let (ta, td) = (ah + av, dv + dh);
            for ah2 in 0..=ta {
                for dh2 in 0..=td {
                    let to = Occupation4::new(ah2, ta - ah2, td - dh2, dh2);
                    let w1 = rotation_amplitude(from, to, &angles).norm_sqr();
                    let w2 = oracle_rotation(from, to, &angles).norm_sqr();
                    err = err.max((w1 - w2).abs());
                }
            }
        }
    }
    checks.push(Check {
        name: "rotation transition probabilities".into(),
        max_err: err,
        tolerance: 1e-10,
    });

    Ok(checks)
}
