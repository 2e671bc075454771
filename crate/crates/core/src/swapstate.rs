//! Assembly of the post-swap mixed state of the outgoing modes from the
//! readout posterior, post-selection on at least one photon per side, and
//! fidelity with the singlet target.

use crate::inference::{DetectorBank, Posterior4, Readout};
use crate::sources::{phi_state, Occupation4, PureStateAD};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

/// Mixture of pure outgoing-mode states with an explicit truncation tail.
#[derive(Debug, Clone)]
pub struct MixedStateAD {
    /// (weight, normalized pure state) pairs; weights need not be sorted.
    pub components: Vec<(f64, Arc<PureStateAD>)>,
    /// Probability weight lost to posterior truncation.
    pub tail_bound: f64,
}

impl MixedStateAD {
    /// Total mixture weight (trace of the implied density operator).
    pub fn trace(&self) -> f64 {
        self.components.iter().map(|(w, _)| w).sum()
    }
}

static PHI_CACHE: OnceLock<RwLock<HashMap<Occupation4, Arc<PureStateAD>>>> = OnceLock::new();

/// Memoized [`phi_state`]; safe for concurrent use.
pub(crate) fn phi_cached(readout: Occupation4) -> Arc<PureStateAD> {
    let cache = PHI_CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(s) = cache.read().unwrap().get(&readout) {
        return Arc::clone(s);
    }
    let s = Arc::new(phi_state(readout));
    let mut w = cache.write().unwrap();
    Arc::clone(w.entry(readout).or_insert(s))
}

/// Upper bound on the total number of stored amplitudes across all mixture
/// components.
const AMPLITUDE_BUDGET: u64 = 200_000_000;

/// Materialize the mixed state rho = sum_ijkl P_ijkl |Phi_ijkl><Phi_ijkl|
/// over the posterior's support.
pub fn assemble_state(posterior: &Posterior4) -> Result<MixedStateAD> {
    let n = posterior.cutoff();
    // each |Phi_ijkl> holds at most (i+l+1)(j+k+1) amplitudes
    let mut estimated: u64 = 0;
    for i in 0..=n as u64 {
        for j in 0..=n as u64 {
            for k in 0..=n as u64 {
                for l in 0..=n as u64 {
                    estimated += (i + l + 1) * (j + k + 1);
                }
            }
        }
    }
    if estimated > AMPLITUDE_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "cutoff {n} implies up to {estimated} stored amplitudes (budget {AMPLITUDE_BUDGET})"
        )));
    }
    let mut components = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                for l in 0..=n {
                    let occ = Occupation4::new(i, j, k, l);
                    let w = posterior.weight(occ);
                    if w > 0.0 {
                        components.push((w, phi_cached(occ)));
                    }
                }
            }
        }
    }
    Ok(MixedStateAD { components, tail_bound: posterior.tail_bound() })
}

/// True when the occupation has at least one photon on the a side and at
/// least one on the d side (the four-fold post-selection projector).
fn survives_postselection(occ: &Occupation4) -> bool {
    let [ah, av, dv, dh] = occ.0;
    ah + av > 0 && dv + dh > 0
}

/// Project onto "at least one photon in each outgoing pair", renormalize
/// each surviving component and reweight. Returns the post-selected state
/// and the success probability Tr[Pi rho Pi] of the projection.
///
/// The truncation tail is treated as if it could survive the projection in
/// full, so the post-selected weights are normalized against success + tail
/// and the tail bound is carried along conservatively.
pub fn postselect(state: &MixedStateAD) -> Result<(MixedStateAD, f64)> {
    let mut projected: Vec<(f64, Arc<PureStateAD>)> = Vec::new();
    let mut success = 0.0f64;
    for (w, psi) in &state.components {
        let surviving: Vec<(Occupation4, Complex64)> = psi
            .amplitudes
            .iter()
            .filter(|(occ, _)| survives_postselection(occ))
            .map(|(occ, amp)| (*occ, *amp))
            .collect();
        let s: f64 = surviving.iter().map(|(_, a)| a.norm_sqr()).sum();
        if s <= 0.0 {
            continue;
        }
        success += w * s;
        let component = if surviving.len() == psi.amplitudes.len() {
            Arc::clone(psi)
        } else {
            let scale = 1.0 / s.sqrt();
            let amplitudes = surviving
                .into_iter()
                .map(|(occ, a)| (occ, a * scale))
                .collect();
            Arc::new(PureStateAD { total_photons: psi.total_photons, amplitudes })
        };
        projected.push((w * s, component));
    }
    let tail = state.tail_bound;
    if success <= tail {
        return Err(Error::EmptyPostselection { success, tail });
    }
    let norm = success + tail;
    for (w, _) in projected.iter_mut() {
        *w /= norm;
    }
    Ok((
        MixedStateAD { components: projected, tail_bound: tail / norm },
        success,
    ))
}

/// Amplitude of the singlet |psi-> = (|1,0,1,0> - |0,1,0,1>)/sqrt(2) in a
/// pure component.
fn singlet_overlap(psi: &PureStateAD) -> Complex64 {
    let a = psi
        .amplitudes
        .get(&Occupation4::new(1, 0, 1, 0))
        .copied()
        .unwrap_or_default();
    let b = psi
        .amplitudes
        .get(&Occupation4::new(0, 1, 0, 1))
        .copied()
        .unwrap_or_default();
    (a - b) / std::f64::consts::SQRT_2
}

/// Fidelity <psi-| rho |psi-> with the singlet target.
pub fn fidelity_psi_minus(state: &MixedStateAD) -> f64 {
    state
        .components
        .iter()
        .map(|(w, psi)| w * singlet_overlap(psi).norm_sqr())
        .sum()
}

/// Visibility of a Werner state with singlet fidelity F: V = (4F - 1)/3.
pub fn werner_visibility(f: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Config(format!("fidelity {f} outside [0, 1]")));
    }
    Ok((4.0 * f - 1.0) / 3.0)
}

/// All occupations with at most `max_a` photons on the a side and `max_d` on
/// the d side (a basis for materializing density matrices).
pub fn sector_basis(max_a: u32, max_d: u32, per_mode: u32) -> Vec<Occupation4> {
    let mut basis = Vec::new();
    for ah in 0..=per_mode {
        for av in 0..=per_mode {
            if ah + av > max_a {
                continue;
            }
            for dv in 0..=per_mode {
                for dh in 0..=per_mode {
                    if dv + dh > max_d {
                        continue;
                    }
                    basis.push(Occupation4::new(ah, av, dv, dh));
                }
            }
        }
    }
    basis
}

/// Density matrix of the mixture restricted to `basis` (entries outside the
/// basis are dropped, so the trace may fall short of the mixture trace).
pub fn density_matrix(state: &MixedStateAD, basis: &[Occupation4]) -> DMatrix<Complex64> {
    let d = basis.len();
    let mut rho = DMatrix::<Complex64>::zeros(d, d);
    for (w, psi) in &state.components {
        let v: Vec<Complex64> = basis
            .iter()
            .map(|occ| psi.amplitudes.get(occ).copied().unwrap_or_default())
            .collect();
        for r in 0..d {
            if v[r] == Complex64::default() {
                continue;
            }
            for c in 0..d {
                rho[(r, c)] += Complex64::new(*w, 0.0) * v[r] * v[c].conj();
            }
        }
    }
    rho
}

/// Plain-text serialization of a mixed state with its provenance parameters.
///
/// Format: `#`-prefixed header lines carrying the interaction parameter, the
/// four detector parameters, the readout and the truncation tail, followed by
/// one line per amplitude: `weight n_aH n_aV n_dV n_dH re im`.
pub fn serialize_state(
    state: &MixedStateAD,
    chi: f64,
    bank: &DetectorBank,
    readout: &Readout,
) -> String {
    let mut out = String::new();
    out.push_str("# mixed state of outgoing modes (a_H, a_V, d_V, d_H)\n");
    out.push_str(&format!("# chi = {chi:.12e}\n"));
    for (nu, spec) in bank.specs().iter().enumerate() {
        out.push_str(&format!(
            "# detector[{nu}] eta = {:.12e} p_dc = {:.12e}\n",
            spec.eta(),
            spec.p_dc()
        ));
    }
    out.push_str(&format!("# readout = {readout}\n"));
    out.push_str(&format!("# tail_bound = {:.12e}\n", state.tail_bound));
    out.push_str(&format!("# components = {}\n", state.components.len()));
    out.push_str("# columns: weight n_aH n_aV n_dV n_dH re im\n");
    for (w, psi) in &state.components {
        for (occ, amp) in &psi.amplitudes {
            let [ah, av, dv, dh] = occ.0;
            out.push_str(&format!(
                "{w:.12e} {ah} {av} {dv} {dh} {:.12e} {:.12e}\n",
                amp.re, amp.im
            ));
        }
    }
    out
}
