//! Batch front end: loads a flat key=value configuration, runs scans,
//! sweeps, posterior dumps, state dumps and the verification suite, and
//! writes plot-ready CSV.

use clap::{Parser, Subcommand};
use entswap::analysis::{
    chsh_s, four_fold_scan, union_state, visibility_refined, visibility_vs_chi,
};
use entswap::config::{build_config, parse_kv, ExperimentConfig};
use entswap::detectors::ThresholdOutcome;
use entswap::inference::{posterior_joint, Outcome, Readout};
use entswap::oracle::run_verification;
use entswap::sources::Occupation4;
use entswap::swapstate::{
    fidelity_psi_minus, postselect, serialize_state, werner_visibility,
};
use entswap::Error as CoreError;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "entswap",
    about = "Quantum states from entanglement swapping with imperfect sources and detectors",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// configuration file (flat key=value lines)
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    /// override one configuration key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// output file (default: stdout)
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,

    /// worker threads (default: automatic)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Four-fold coincidence curves versus the d-side analyzer angle
    Scan {
        /// d-side angle grid in degrees, start:stop:count
        #[arg(long, value_name = "START:STOP:COUNT", default_value = "0:180:181")]
        delta_grid: String,
    },
    /// Visibility versus the interaction parameter
    SweepChi {
        /// chi grid, start:stop:count
        #[arg(long, value_name = "START:STOP:COUNT")]
        chi_grid: String,
    },
    /// Posterior over hypothetical ideal Bell readouts
    Posterior {
        /// Bell readout: four comma-separated outcomes, either all integers
        /// (photon counts) or all click/no_click
        #[arg(long, default_value = "click,no_click,click,no_click")]
        readout: String,
    },
    /// Serialized mixed state of the outgoing modes
    State {
        #[arg(long, default_value = "click,no_click,click,no_click")]
        readout: String,
        /// project on at least one photon per outgoing side
        #[arg(long)]
        postselect: bool,
    },
    /// Cross-check closed forms against brute-force constructions
    Verify,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Config(_) => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        };
        Failure { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not usage errors
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_USAGE)
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut pairs = Vec::new();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| Failure {
            code: EXIT_CONFIG,
            message: format!("{}: {e}", path.display()),
        })?;
        pairs.extend(parse_kv(&text)?);
    }
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut config = build_config(&pairs)?;
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    if let Some(n) = config.threads {
        // results are bitwise thread-count independent; the pool size only
        // affects wall time
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(config)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, count] = parts.as_slice() else {
        return Err(usage(format!("grid must be START:STOP:COUNT, got {spec:?}")));
    };
    let start: f64 = start
        .parse()
        .map_err(|_| usage(format!("bad grid start {start:?}")))?;
    let stop: f64 = stop
        .parse()
        .map_err(|_| usage(format!("bad grid stop {stop:?}")))?;
    let count: usize = count
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| usage(format!("bad grid count {count:?}")))?;
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

fn parse_readout(spec: &str) -> Result<Readout, Failure> {
    let tokens: Vec<&str> = spec.split(',').map(str::trim).collect();
    if tokens.len() != 4 {
        return Err(usage(format!("readout needs 4 comma-separated outcomes, got {spec:?}")));
    }
    let mut outcomes = [Outcome::Count(0); 4];
    for (nu, t) in tokens.iter().enumerate() {
        outcomes[nu] = match *t {
            "click" => Outcome::Threshold(ThresholdOutcome::Click),
            "no_click" => Outcome::Threshold(ThresholdOutcome::NoClick),
            other => Outcome::Count(
                other
                    .parse()
                    .map_err(|_| usage(format!("bad readout outcome {other:?}")))?,
            ),
        };
    }
    let readout = Readout(outcomes);
    if !readout.is_homogeneous() {
        return Err(usage("readout mixes counts and click/no_click outcomes"));
    }
    Ok(readout)
}

/// 12 significant digits.
fn sig(v: f64) -> String {
    format!("{v:.11e}")
}

fn config_header(config: &ExperimentConfig) -> String {
    config
        .to_key_values()
        .into_iter()
        .map(|(k, v)| format!("# {k} = {v}\n"))
        .collect()
}

fn write_output(out: &Option<std::path::PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| Failure {
            code: EXIT_NUMERIC,
            message: format!("{}: {e}", path.display()),
        }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Scan { delta_grid } => {
            let grid_deg = parse_grid(delta_grid)?;
            let grid_rad: Vec<f64> = grid_deg.iter().map(|d| d.to_radians()).collect();
            let scan = four_fold_scan(&config, &grid_rad)?;
            let report = visibility_refined(&config)?;
            let state = union_state(&config)?;
            let (selected, _success) = postselect(&state)?;
            let fidelity = fidelity_psi_minus(&selected);
            let v_werner = werner_visibility(fidelity.clamp(0.0, 1.0))?;
            let s = chsh_s(report.visibility.clamp(0.0, 1.0))?;

            let mut out = config_header(&config);
            out.push_str(&format!("# tail_bound = {}\n", sig(scan.tail_bound)));
            out.push_str(&format!("# visibility = {}\n", sig(report.visibility)));
            out.push_str(&format!(
                "# extrema_deg = {} {}\n",
                sig(report.max_delta.to_degrees()),
                sig(report.min_delta.to_degrees())
            ));
            if report.refined_shift {
                out.push_str("# note: refined extremum moved > 0.1 deg from delta = alpha, alpha + 90 deg\n");
            }
            out.push_str(&format!("# fidelity_postselected = {}\n", sig(fidelity)));
            out.push_str(&format!("# werner_visibility = {}\n", sig(v_werner)));
            out.push_str(&format!("# chsh_s = {}\n", sig(s)));
            out.push_str("delta_deg,anticorr,corr\n");
            for ((d, a), c) in grid_deg.iter().zip(&scan.anticorr).zip(&scan.corr) {
                out.push_str(&format!("{},{},{}\n", sig(*d), sig(*a), sig(*c)));
            }
            write_output(&cli.out, &out)?;
            if cli.out.is_some() {
                println!(
                    "V = {:.6}  F_postsel = {:.6}  V_werner = {:.6}  S = {:.6}",
                    report.visibility, fidelity, v_werner, s
                );
            }
            Ok(0)
        }
        Command::SweepChi { chi_grid } => {
            let grid = parse_grid(chi_grid)?;
            let curve = visibility_vs_chi(&config, &grid)?;
            let mut out = config_header(&config);
            out.push_str("# note: the chi column overrides the configured chi\n");
            out.push_str("chi,visibility\n");
            for (chi, v) in curve {
                out.push_str(&format!("{},{}\n", sig(chi), sig(v)));
            }
            write_output(&cli.out, &out)?;
            Ok(0)
        }
        Command::Posterior { readout } => {
            let readout = parse_readout(readout)?;
            let post = posterior_joint(&readout, config.chi, &config.bell_bank, &config.trunc)?;
            let n = post.cutoff();
            let mut rows: Vec<(Occupation4, f64)> = Vec::new();
            for i in 0..=n {
                for j in 0..=n {
                    for k in 0..=n {
                        for l in 0..=n {
                            let occ = Occupation4::new(i, j, k, l);
                            let w = post.weight(occ);
                            if w > 1e-15 {
                                rows.push((occ, w));
                            }
                        }
                    }
                }
            }
            rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut out = config_header(&config);
            out.push_str(&format!("# readout = {readout}\n"));
            out.push_str(&format!("# cutoff = {n}\n"));
            out.push_str(&format!("# tail_bound = {}\n", sig(post.tail_bound())));
            out.push_str("i,j,k,l,weight\n");
            for (occ, w) in rows {
                let [i, j, k, l] = occ.0;
                out.push_str(&format!("{i},{j},{k},{l},{}\n", sig(w)));
            }
            write_output(&cli.out, &out)?;
            Ok(0)
        }
        Command::State { readout, postselect: do_postselect } => {
            let readout = parse_readout(readout)?;
            let post = posterior_joint(&readout, config.chi, &config.bell_bank, &config.trunc)?;
            let state = entswap::swapstate::assemble_state(&post)?;
            let mut extra = String::new();
            let state = if *do_postselect {
                let (selected, success) = postselect(&state)?;
                extra = format!("# postselected = true\n# success_prob = {}\n", sig(success));
                selected
            } else {
                state
            };
            let mut out = serialize_state(&state, config.chi, &config.bell_bank, &readout);
            out.insert_str(0, &extra);
            write_output(&cli.out, &out)?;
            Ok(0)
        }
        Command::Verify => {
            let checks = run_verification(&config)?;
            let mut out = String::new();
            let mut failed = false;
            for c in &checks {
                let status = if c.passed() { "PASS" } else { "FAIL" };
                failed |= !c.passed();
                out.push_str(&format!(
                    "{status}  {}  (max_err = {:.3e}, tolerance = {:.1e})\n",
                    c.name, c.max_err, c.tolerance
                ));
            }
            write_output(&cli.out, &out)?;
            Ok(if failed { EXIT_VERIFY } else { 0 })
        }
    }
}
