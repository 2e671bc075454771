//! Experiment configuration: flat key=value files with dotted keys, angles in
//! degrees at the interface and radians internally.

use crate::detectors::DetectorSpec;
use crate::inference::{DetectorBank, TruncationControls};
use crate::{Error, Result};

/// Full parameter set of one simulated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// interaction parameter of the PDC sources
    pub chi: f64,
    /// fixed a-side analyzer angle, real-space radians (default pi/4)
    pub alpha_real: f64,
    /// Bell-measurement detectors (c'_H, c'_V, b'_V, b'_H)
    pub bell_bank: DetectorBank,
    /// analyzer detectors (D_a+, D_a-, D_d-, D_d+)
    pub analysis_bank: DetectorBank,
    pub trunc: TruncationControls,
    /// worker threads; `None` = automatic
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults for everything except chi: alpha = 45 degrees, ideal
    /// detectors, automatic truncation and threading.
    pub fn new(chi: f64) -> Self {
        Self {
            chi,
            alpha_real: std::f64::consts::FRAC_PI_4,
            bell_bank: DetectorBank::ideal(),
            analysis_bank: DetectorBank::ideal(),
            trunc: TruncationControls::default(),
            threads: None,
        }
    }

    /// Render the resolved configuration as the flat key=value format.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("chi".to_string(), format!("{}", self.chi)),
            ("alpha".to_string(), format!("{}", self.alpha_real.to_degrees())),
        ];
        for (prefix, bank) in [("bell", &self.bell_bank), ("analysis", &self.analysis_bank)] {
            for nu in 0..4 {
                let spec = bank.spec(nu);
                kv.push((format!("{prefix}.eta.{}", nu + 1), format!("{}", spec.eta())));
                kv.push((format!("{prefix}.pdc.{}", nu + 1), format!("{}", spec.p_dc())));
            }
        }
        kv.push((
            "trunc.n_max".to_string(),
            self.trunc.n_max.map_or("auto".to_string(), |n| n.to_string()),
        ));
        kv.push(("trunc.eps_tail".to_string(), format!("{}", self.trunc.eps_tail)));
        kv.push((
            "threads".to_string(),
            self.threads.map_or("auto".to_string(), |n| n.to_string()),
        ));
        kv
    }
}

/// Parse the flat key=value text format. Blank lines and `#` comments are
/// ignored; later assignments override earlier ones. Returns raw pairs so
/// command-line overrides can be appended before validation.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value, got {raw:?}", idx + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config(format!(
                "line {}: empty key or value in {raw:?}",
                idx + 1
            )));
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: not a number: {value:?}")))
}

/// Build and validate a configuration from key/value pairs (last value per
/// key wins). `chi` is required; unknown keys are hard errors.
pub fn build_config(pairs: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut chi: Option<f64> = None;
    let mut alpha_deg: f64 = 45.0;
    let mut etas = [[1.0f64; 4]; 2]; // [bell, analysis]
    let mut pdcs = [[0.0f64; 4]; 2];
    let mut n_max: Option<u32> = None;
    let mut eps_tail = TruncationControls::default().eps_tail;
    let mut threads: Option<usize> = None;

    for (key, value) in pairs {
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["chi"] => chi = Some(parse_f64(key, value)?),
            ["alpha"] => alpha_deg = parse_f64(key, value)?,
            [bank @ ("bell" | "analysis"), field @ ("eta" | "pdc"), idx] => {
                let nu: usize = idx
                    .parse()
                    .ok()
                    .filter(|n| (1..=4).contains(n))
                    .ok_or_else(|| {
                        Error::Config(format!("{key}: detector index must be 1..4"))
                    })?;
                let slot = if *bank == "bell" { 0 } else { 1 };
                let v = parse_f64(key, value)?;
                if *field == "eta" {
                    etas[slot][nu - 1] = v;
                } else {
                    pdcs[slot][nu - 1] = v;
                }
            }
            ["trunc", "n_max"] => {
                n_max = if value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| {
                        Error::Config(format!("trunc.n_max: expected integer or 'auto', got {value:?}"))
                    })?)
                }
            }
            ["trunc", "eps_tail"] => eps_tail = parse_f64(key, value)?,
            ["threads"] => {
                threads = if value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| {
                        Error::Config(format!("threads: expected integer or 'auto', got {value:?}"))
                    })?)
                }
            }
            _ => return Err(Error::Config(format!("unknown key: {key}"))),
        }
    }

    let chi = chi.ok_or_else(|| Error::Config("chi is required".into()))?;
    if !(chi.is_finite() && chi >= 0.0) {
        return Err(Error::Config(format!("chi: must be finite and >= 0, got {chi}")));
    }
    if !(0.0 < eps_tail && eps_tail < 1.0) {
        return Err(Error::Config(format!(
            "trunc.eps_tail: must be in (0, 1), got {eps_tail}"
        )));
    }
    let mut banks = Vec::new();
    for slot in 0..2 {
        let name = if slot == 0 { "bell" } else { "analysis" };
        let mut specs = [DetectorSpec::ideal(); 4];
        for nu in 0..4 {
            specs[nu] = DetectorSpec::new(etas[slot][nu], pdcs[slot][nu]).map_err(|e| {
                Error::Config(format!("{name} detector {}: {e}", nu + 1))
            })?;
        }
        banks.push(DetectorBank::new(specs));
    }
    Ok(ExperimentConfig {
        chi,
        alpha_real: alpha_deg.to_radians(),
        bell_bank: banks[0],
        analysis_bank: banks[1],
        trunc: TruncationControls { n_max, eps_tail },
        threads,
    })
}

/// Parse a config file's text into a validated configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    build_config(&parse_kv(text)?)
}
