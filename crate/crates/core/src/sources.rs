//! The two-PDC-source model: prior probabilities of hypothetical ideal Bell
//! readouts and the post-measurement pure states of the outgoing modes.
//!
//! Mode ordering convention is "HVVH" throughout: occupation tuples refer to
//! (a_H, a_V, d_V, d_H) for outgoing states, matching the readout letters
//! (q, r, s, t) of the Bell stage.

use crate::numerics::{binomial, ln_factorial};
use crate::{Error, Result};
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Interaction parameter of the (identical) PDC sources; chi^2 is the
/// photon-pair production rate ("brightness").
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    chi: f64,
}

impl SourceParams {
    pub fn new(chi: f64) -> Result<Self> {
        if chi < 0.0 || !chi.is_finite() {
            return Err(Error::Config(format!("chi = {chi} must be finite and >= 0")));
        }
        if chi >= 1.0 {
            eprintln!("warning: chi = {chi} is far outside the usual regime (tanh^2 chi -> 1)");
        }
        Ok(Self { chi })
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    /// phi(chi) = i tanh(chi), the per-squeezer pair amplitude.
    pub fn phi(&self) -> Complex64 {
        Complex64::new(0.0, self.chi.tanh())
    }

    /// omega(chi) = -ln cosh(chi), the per-mode normal-ordering weight.
    pub fn omega(&self) -> f64 {
        -self.chi.cosh().ln()
    }
}

/// Ordered 4-tuple of non-negative photon counts, used both for hypothetical
/// ideal readouts (i, j, k, l) and for Fock occupations of four modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occupation4(pub [u32; 4]);

impl Occupation4 {
    pub fn new(n1: u32, n2: u32, n3: u32, n4: u32) -> Self {
        Self([n1, n2, n3, n4])
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }
}

impl std::fmt::Display for Occupation4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

/// Normalized pure state of the outgoing (a_H, a_V, d_V, d_H) modes, stored
/// sparsely in the Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureStateAD {
    pub total_photons: u32,
    pub amplitudes: BTreeMap<Occupation4, Complex64>,
}

impl PureStateAD {
    pub fn vacuum() -> Self {
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(Occupation4::new(0, 0, 0, 0), Complex64::new(1.0, 0.0));
        Self { total_photons: 0, amplitudes }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// Inner product <self|other>.
    pub fn inner(&self, other: &Self) -> Complex64 {
        // iterate the smaller map
        let (small, big, conj_small) = if self.amplitudes.len() <= other.amplitudes.len() {
            (&self.amplitudes, &other.amplitudes, true)
        } else {
            (&other.amplitudes, &self.amplitudes, false)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (occ, amp) in small {
            if let Some(b) = big.get(occ) {
                acc += if conj_small { amp.conj() * b } else { b.conj() * amp };
            }
        }
        acc
    }
}

/// Prior probability p(ijkl) = tanh^{2(i+j+k+l)}(chi) / cosh^8(chi) of the
/// hypothetical ideal Bell readout; depends on the readout only through its
/// total.
pub fn prior_prob(readout: Occupation4, src: &SourceParams) -> f64 {
    let chi = src.chi();
    let t = chi.tanh();
    let total = readout.total() as i32;
    if chi == 0.0 {
        return if total == 0 { 1.0 } else { 0.0 };
    }
    t.powi(2 * total) / chi.cosh().powi(8)
}

/// The post-measurement pure state |Phi_ijkl> of the outgoing modes for the
/// ideal Bell readout (i, j, k, l).
///
/// Expands the creation-operator polynomial
/// [(d_H+ - a_H+)/sqrt2]^i [(d_V+ - a_V+)/sqrt2]^j
/// [(a_V+ + d_V+)/sqrt2]^k [(a_H+ + d_H+)/sqrt2]^l / sqrt(i! j! k! l!)
/// into normalized Fock amplitudes. Global phases from the squeezer amplitude
/// are dropped (probabilities unaffected); the oracle keeps them.
pub fn phi_state(readout: Occupation4) -> PureStateAD {
    let [i, j, k, l] = readout.0;
    let total = i + j + k + l;
    let ln_norm_prefactor =
        -0.5 * (total as f64) * std::f64::consts::LN_2
            - 0.5 * (ln_factorial(i as u64)
                + ln_factorial(j as u64)
                + ln_factorial(k as u64)
                + ln_factorial(l as u64));
    // accumulate the signed integer coefficients exactly (f64 is exact for
    // the binomial products arising at realistic cutoffs), so terms that
    // cancel do so to exactly zero
    let mut coeffs: BTreeMap<Occupation4, f64> = BTreeMap::new();
    for mu in 0..=i {
        for nu in 0..=j {
            for ka in 0..=k {
                for la in 0..=l {
                    let n_ah = mu + la;
                    let n_av = nu + ka;
                    let n_dv = j + k - nu - ka;
                    let n_dh = i + l - mu - la;
                    let sign = if (mu + nu) % 2 == 0 { 1.0 } else { -1.0 };
                    let coeff = binomial(i as u64, mu as i64)
                        * binomial(j as u64, nu as i64)
                        * binomial(k as u64, ka as i64)
                        * binomial(l as u64, la as i64);
                    let occ = Occupation4::new(n_ah, n_av, n_dv, n_dh);
                    *coeffs.entry(occ).or_insert(0.0) += sign * coeff;
                }
            }
        }
    }
    let amplitudes: BTreeMap<Occupation4, Complex64> = coeffs
        .into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(occ, c)| {
            let [n_ah, n_av, n_dv, n_dh] = occ.0;
            let ln_mag = ln_norm_prefactor
                + 0.5 * (ln_factorial(n_ah as u64)
                    + ln_factorial(n_av as u64)
                    + ln_factorial(n_dv as u64)
                    + ln_factorial(n_dh as u64));
            (occ, Complex64::new(c * ln_mag.exp(), 0.0))
        })
        .collect();
    let state = PureStateAD { total_photons: total, amplitudes };
    debug_assert!((state.norm_sqr() - 1.0).abs() < 1e-12, "phi_state not normalized");
    state
}

/// Amplitude of the normal-ordered two-source PDC state on the basis
/// component with `pair_counts = (n_aHbH, n_aVbV, n_cHdH, n_cVdV)` photon
/// pairs in the four two-mode squeezers: e^{4 omega} phi^{sum n}.
pub fn pdc_joint_amplitude(pair_counts: [u32; 4], src: &SourceParams) -> Complex64 {
    let total: u32 = pair_counts.iter().sum();
    let phi = src.phi();
    (4.0 * src.omega()).exp() * phi.powi(total as i32)
}
