//! Bayesian posterior over hypothetical ideal Bell readouts given an actual
//! imperfect readout, for photon-number discriminating and threshold
//! detectors with per-detector parameters.
//!
//! The posterior factorizes over the four detectors, so it is stored as four
//! 1-D factor arrays plus an exact truncation tail; the joint weight of a
//! hypothetical readout (i,j,k,l) is the product of the factors.

use crate::detectors::{b_param, g_function, DetectorSpec, ThresholdOutcome};
use crate::numerics::sum_adaptive_poly;
use crate::sources::Occupation4;
use crate::{Error, Result};

/// Four detectors ordered (c'_H, c'_V, b'_V, b'_H), matching the readout
/// letters (q, r, s, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorBank {
    specs: [DetectorSpec; 4],
}

impl DetectorBank {
    pub fn new(specs: [DetectorSpec; 4]) -> Self {
        Self { specs }
    }

    /// All four detectors identical.
    pub fn uniform(spec: DetectorSpec) -> Self {
        Self { specs: [spec; 4] }
    }

    pub fn ideal() -> Self {
        Self::uniform(DetectorSpec::ideal())
    }

    pub fn spec(&self, nu: usize) -> &DetectorSpec {
        &self.specs[nu]
    }

    pub fn specs(&self) -> &[DetectorSpec; 4] {
        &self.specs
    }
}

/// One detector's reported outcome, either a photon count or a threshold
/// click/no-click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Count(u64),
    Threshold(ThresholdOutcome),
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Count(q) => write!(f, "{q}"),
            Outcome::Threshold(ThresholdOutcome::Click) => write!(f, "click"),
            Outcome::Threshold(ThresholdOutcome::NoClick) => write!(f, "no_click"),
        }
    }
}

/// Joint Bell-measurement readout (q, r, s, t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Readout(pub [Outcome; 4]);

impl Readout {
    pub fn counts(q: [u64; 4]) -> Self {
        Self([
            Outcome::Count(q[0]),
            Outcome::Count(q[1]),
            Outcome::Count(q[2]),
            Outcome::Count(q[3]),
        ])
    }

    pub fn thresholds(o: [ThresholdOutcome; 4]) -> Self {
        Self([
            Outcome::Threshold(o[0]),
            Outcome::Threshold(o[1]),
            Outcome::Threshold(o[2]),
            Outcome::Threshold(o[3]),
        ])
    }

    /// Threshold readout from click flags.
    pub fn from_clicks(clicks: [bool; 4]) -> Self {
        let f = |c: bool| {
            Outcome::Threshold(if c { ThresholdOutcome::Click } else { ThresholdOutcome::NoClick })
        };
        Self([f(clicks[0]), f(clicks[1]), f(clicks[2]), f(clicks[3])])
    }

    /// True when all four outcomes belong to the same detector family.
    pub fn is_homogeneous(&self) -> bool {
        let count = |o: &Outcome| matches!(o, Outcome::Count(_));
        self.0.iter().all(count) || !self.0.iter().any(|o| count(o))
    }
}

impl std::fmt::Display for Readout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

/// Truncation policy for the posterior's per-index photon-number cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationControls {
    /// Explicit per-index cutoff; `None` selects the default policy.
    pub n_max: Option<u32>,
    /// Target bound for each factor's truncation tail (divided by 4 across
    /// the factors).
    pub eps_tail: f64,
}

impl Default for TruncationControls {
    fn default() -> Self {
        Self { n_max: None, eps_tail: 1e-12 }
    }
}

pub const N_MAX_FLOOR: u32 = 6;
pub const N_MAX_CEILING: u32 = 24;

/// Default cutoff: smallest N whose geometric tail with ratio tanh^2(chi)
/// falls below eps/4, clamped to [6, 24]. tanh^2(chi) dominates the decay
/// ratio of every posterior factor (count, click and no-click alike), so the
/// bound is conservative for all detector parameters.
pub fn default_cutoff(chi: f64, eps_tail: f64) -> u32 {
    let r = chi.tanh().powi(2);
    if r == 0.0 {
        return N_MAX_FLOOR;
    }
    let mut n = N_MAX_FLOOR;
    while n < N_MAX_CEILING && r.powi(n as i32 + 1) / (1.0 - r) >= eps_tail / 4.0 {
        n += 1;
    }
    n
}

impl TruncationControls {
    pub fn resolve(&self, chi: f64) -> u32 {
        self.n_max.unwrap_or_else(|| default_cutoff(chi, self.eps_tail))
    }
}

/// Numerator of the count-family posterior factor, branch i >= q.
fn count_numerator_ge(q: u64, i: u64, t2: f64, spec: &DetectorSpec) -> Result<f64> {
    let eta = spec.eta();
    Ok(t2.powi(i as i32)
        * (1.0 - eta).powi((i - q) as i32)
        * g_function(i, q, spec)?.value)
}

/// Numerator of the count-family posterior factor, branch q >= i.
fn count_numerator_le(q: u64, i: u64, t2: f64, spec: &DetectorSpec) -> Result<f64> {
    let eta = spec.eta();
    let b = b_param(spec);
    Ok(t2.powi(i as i32)
        * (((1.0 - eta) * b) / (eta * eta)).powi((q - i) as i32)
        * g_function(q, i, spec)?.value)
}

fn count_numerator(q: u64, i: u64, t2: f64, spec: &DetectorSpec) -> Result<f64> {
    if i >= q {
        count_numerator_ge(q, i, t2, spec)
    } else {
        count_numerator_le(q, i, t2, spec)
    }
}

/// Shared denominator g(q; chi, eta, p_dc): the prior-weighted sum of the
/// numerators over all hypothetical counts, with the infinite part summed
/// adaptively under the geometric envelope (1 - eta) tanh^2(chi).
fn count_denominator(q: u64, chi: f64, spec: &DetectorSpec) -> Result<f64> {
    let t2 = chi.tanh().powi(2);
    let mut finite = 0.0;
    for ip in 0..=q {
        finite += count_numerator_le(q, ip, t2, spec)?;
    }
    let hint = (1.0 - spec.eta()) * t2;
    let mut deferred: Option<Error> = None;
    let term = |n: usize| {
        let ip = q + 1 + n as u64;
        match count_numerator_ge(q, ip, t2, spec) {
            Ok(v) => v,
            Err(e) => {
                deferred.get_or_insert(e);
                0.0
            }
        }
    };
    let infinite = sum_adaptive_poly(term, hint, 1e-14, q as u32 + 2)?;
    if let Some(e) = deferred {
        return Err(e);
    }
    Ok(finite + infinite.value)
}

/// Posterior factor f^q_i for a photon-number discriminating detector: the
/// probability that `i` photons were incident given that `q` were counted,
/// under the geometric photon-number prior of one squeezer arm.
pub fn f_count(q: u64, i: u64, chi: f64, spec: &DetectorSpec) -> Result<f64> {
    let t2 = chi.tanh().powi(2);
    let (eta, pdc) = (spec.eta(), spec.p_dc());
    if eta == 0.0 {
        if pdc == 0.0 && q > 0 {
            return Err(Error::MeaninglessConditional(format!(
                "count {q} from a detector with eta = 0, p_dc = 0"
            )));
        }
        // the count carries no information: posterior equals the prior
        return Ok(t2.powi(i as i32) * (1.0 - t2));
    }
    if eta == 1.0 && pdc == 0.0 {
        return Ok(if q == i { 1.0 } else { 0.0 });
    }
    if pdc == 0.0 {
        if q > i {
            return Ok(0.0);
        }
        let x = (1.0 - eta) * t2;
        return Ok(crate::numerics::binomial(i, q as i64)
            * x.powi((i - q) as i32)
            * (1.0 - x).powi(q as i32 + 1));
    }
    Ok(count_numerator(q, i, t2, spec)? / count_denominator(q, chi, spec)?)
}

/// h(chi, eta, p_dc) = [1 - eta (1 - p_dc)] tanh^2(chi), the decay ratio of
/// the no-click posterior factor.
pub fn h_param(chi: f64, spec: &DetectorSpec) -> f64 {
    (1.0 - spec.eta() * (1.0 - spec.p_dc())) * chi.tanh().powi(2)
}

/// Posterior factor for a threshold detector.
pub fn f_threshold(
    outcome: ThresholdOutcome,
    i: u64,
    chi: f64,
    spec: &DetectorSpec,
) -> Result<f64> {
    let h = h_param(chi, spec);
    match outcome {
        ThresholdOutcome::NoClick => Ok(h.powi(i as i32) * (1.0 - h)),
        ThresholdOutcome::Click => {
            if spec.is_degenerate() {
                return Err(Error::MeaninglessConditional(
                    "click from a detector with eta = 0, p_dc = 0".into(),
                ));
            }
            let t2 = chi.tanh().powi(2);
            let pdc = spec.p_dc();
            let num = t2.powi(i as i32) - (1.0 - pdc) * h.powi(i as i32);
            let den = chi.cosh().powi(2) - (1.0 - pdc) / (1.0 - h);
            if den <= 0.0 {
                return Err(Error::MeaninglessConditional(format!(
                    "click probability vanishes (eta = {}, p_dc = {pdc}, chi = {chi})",
                    spec.eta()
                )));
            }
            Ok(num / den)
        }
    }
}

/// Prior-predictive probability of a single threshold outcome:
/// p(no_click) = (1 - p_dc) / [(1 - h) cosh^2(chi)].
pub fn threshold_marginal(outcome: ThresholdOutcome, chi: f64, spec: &DetectorSpec) -> f64 {
    let h = h_param(chi, spec);
    let no_click = (1.0 - spec.p_dc()) / ((1.0 - h) * chi.cosh().powi(2));
    match outcome {
        ThresholdOutcome::NoClick => no_click,
        ThresholdOutcome::Click => 1.0 - no_click,
    }
}

/// Prior-predictive probability of a single count outcome.
pub fn count_marginal(q: u64, chi: f64, spec: &DetectorSpec) -> Result<f64> {
    let t2 = chi.tanh().powi(2);
    let inv_cosh2 = 1.0 / chi.cosh().powi(2);
    let (eta, pdc) = (spec.eta(), spec.p_dc());
    if eta == 0.0 {
        return Ok((1.0 - pdc) * pdc.powi(q as i32));
    }
    if pdc == 0.0 {
        let x = (1.0 - eta) * t2;
        return Ok((eta * t2).powi(q as i32) * inv_cosh2 / (1.0 - x).powi(q as i32 + 1));
    }
    let prefactor = (1.0 - eta) * (1.0 - pdc) / (1.0 - eta * (1.0 - pdc));
    Ok(prefactor * eta.powi(q as i32) * count_denominator(q, chi, spec)? * inv_cosh2)
}

/// Prior-predictive probability of the joint readout; factorizes over the
/// four detectors because the photon-number prior does.
pub fn readout_marginal(readout: &Readout, chi: f64, bank: &DetectorBank) -> Result<f64> {
    let mut p = 1.0;
    for (nu, o) in readout.0.iter().enumerate() {
        p *= match o {
            Outcome::Count(q) => count_marginal(*q, chi, bank.spec(nu))?,
            Outcome::Threshold(t) => threshold_marginal(*t, chi, bank.spec(nu)),
        };
    }
    Ok(p)
}

/// Factored posterior over hypothetical ideal readouts (i, j, k, l).
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior4 {
    factors: [Vec<f64>; 4],
    factor_tails: [f64; 4],
    tail_bound: f64,
    cutoff: u32,
}

impl Posterior4 {
    /// Per-index cutoff N_max; factors cover indices 0..=cutoff.
    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    /// Total posterior weight lost to truncation (exact, by normalization).
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn factors(&self) -> &[Vec<f64>; 4] {
        &self.factors
    }

    pub fn factor_tails(&self) -> &[f64; 4] {
        &self.factor_tails
    }

    /// Joint weight of a hypothetical readout; 0 beyond the cutoff.
    pub fn weight(&self, occ: Occupation4) -> f64 {
        occ.0
            .iter()
            .zip(&self.factors)
            .map(|(&n, f)| f.get(n as usize).copied().unwrap_or(0.0))
            .product()
    }
}

/// Posterior over ideal readouts given an imperfect Bell readout.
pub fn posterior_joint(
    readout: &Readout,
    chi: f64,
    bank: &DetectorBank,
    trunc: &TruncationControls,
) -> Result<Posterior4> {
    if !readout.is_homogeneous() {
        return Err(Error::MixedDetectorFamilies);
    }
    let cutoff = trunc.resolve(chi);
    let mut factors: [Vec<f64>; 4] = Default::default();
    let mut factor_tails = [0.0f64; 4];
    for nu in 0..4 {
        let spec = bank.spec(nu);
        let mut f = Vec::with_capacity(cutoff as usize + 1);
        match readout.0[nu] {
            Outcome::Count(q) => {
                // the shared denominator makes each factor exactly normalized
                for i in 0..=cutoff as u64 {
                    f.push(f_count(q, i, chi, spec)?);
                }
            }
            Outcome::Threshold(o) => {
                for i in 0..=cutoff as u64 {
                    f.push(f_threshold(o, i, chi, spec)?);
                }
            }
        }
        let sum: f64 = f.iter().sum();
        factor_tails[nu] = (1.0 - sum).max(0.0);
        factors[nu] = f;
    }
    let tail_bound = 1.0 - factor_tails.iter().map(|t| 1.0 - t).product::<f64>();
    Ok(Posterior4 { factors, factor_tails, tail_bound, cutoff })
}
