//! Scenario runner behind the `tqot` binary: message files, configuration, batched runs,
//! checks and JSON reports.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{self, AttackReport};
use crate::error::{Error, Result};
use crate::params::PureParams;
use crate::protocols::{
    choose_rounds, kind_for, run_protocol, MergeBackend, MessageDB, MessageKind, Payload,
    RunOptions, RunResult,
};
use crate::qlin::{ComplexMatrix, ComplexVector, C64};
use crate::simkernel::trial_rng;
use crate::verify::{self, BellOracleReport, SecrecyReport};

pub const SCHEMA_VERSION: u32 = 1;

const FIDELITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Adversary {
    #[default]
    None,
    Server1P4,
    UserP4,
    Server1P5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Check {
    UserSecrecy,
    ServerSecrecy,
    BellIdentity,
    MergeDeviation,
    /// Empirical success rate against `1 − ((d−1)/d)^n`, or against `α` when given.
    SuccessRate,
    /// Every successful run reaches fidelity one.
    Fidelity,
    /// Attack advantage against its oracle and its control.
    AttackOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: u8,
    pub d: usize,
    pub f: usize,
    /// Target index; drawn uniformly per trial when absent.
    #[serde(default)]
    pub k: Option<usize>,
    /// Rounds for Protocols 6 and 7, round cap for Protocol 5.
    #[serde(default)]
    pub n_rounds: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub adversary: Adversary,
    /// The index the malicious user steals; defaults to the one after `k`.
    #[serde(default)]
    pub k_prime: Option<usize>,
    #[serde(default)]
    pub merge: MergeBackend,
    #[serde(default)]
    pub messages_path: Option<PathBuf>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            protocol: 1,
            d: 2,
            f: 2,
            k: None,
            n_rounds: None,
            alpha: None,
            trials: 100,
            seed: 0,
            adversary: Adversary::None,
            k_prime: None,
            merge: MergeBackend::Ideal,
            messages_path: None,
            checks: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        kind_for(self.protocol)?;
        if self.d < 2 {
            return Err(Error::DimensionTooSmall(self.d));
        }
        if self.protocol == 1 && self.d != 2 {
            return Err(Error::Config("protocol 1 needs d = 2".into()));
        }
        if self.f < 1 {
            return Err(Error::Config("f must be at least 1".into()));
        }
        if let Some(k) = self.k {
            if k < 1 || k > self.f {
                return Err(Error::IndexOutOfRange { index: k, lo: 1, hi: self.f });
            }
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.alpha.is_some() && self.n_rounds.is_some() {
            return Err(Error::Config("--alpha and --n-rounds are mutually exclusive".into()));
        }
        if let Some(a) = self.alpha {
            choose_rounds(a, self.d)?;
        }
        let needs = match self.adversary {
            Adversary::None => None,
            Adversary::Server1P4 | Adversary::UserP4 => Some(4),
            Adversary::Server1P5 => Some(5),
        };
        if let Some(p) = needs {
            if p != self.protocol {
                return Err(Error::Config(format!(
                    "adversary {:?} attacks protocol {p}",
                    self.adversary
                )));
            }
            if self.f < 2 {
                return Err(Error::Config("attacks need at least two messages".into()));
            }
        }
        if let Some(kp) = self.k_prime {
            if kp < 1 || kp > self.f || Some(kp) == self.k {
                return Err(Error::Config("k′ must be a valid index different from k".into()));
            }
        }
        if self.checks.contains(&Check::AttackOracle) && self.adversary == Adversary::None {
            return Err(Error::Config("attack_oracle needs an adversary".into()));
        }
        Ok(())
    }

    /// Rounds passed to the runners, from `n_rounds` or `alpha`.
    pub fn rounds(&self) -> Result<Option<usize>> {
        match (self.n_rounds, self.alpha) {
            (Some(n), _) => Ok(Some(n)),
            (None, Some(a)) => Ok(Some(choose_rounds(a, self.d)?)),
            _ => Ok(None),
        }
    }
}

// ---- message files ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum AngleList {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

type JsonComplex = [f64; 2];
type JsonVector = Vec<JsonComplex>;
type JsonMatrix = Vec<Vec<JsonComplex>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema_version: Option<u32>,
    kind: MessageKind,
    d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angles: Option<AngleList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<JsonVector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<Vec<PureParams>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unitaries: Option<Vec<JsonMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rhos: Option<Vec<JsonMatrix>>,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::SchemaError(msg.into())
}

fn to_vector(v: &JsonVector) -> ComplexVector {
    ComplexVector::from_vec(v.iter().map(|[re, im]| C64::new(*re, *im)).collect())
}

fn to_matrix(m: &JsonMatrix, d: usize, index: usize) -> Result<ComplexMatrix> {
    if m.len() != d || m.iter().any(|row| row.len() != d) {
        return Err(Error::InvariantViolation {
            index,
            reason: format!("expected a {d}x{d} matrix"),
        });
    }
    Ok(ComplexMatrix::from_fn(d, d, |r, c| C64::new(m[r][c][0], m[r][c][1])))
}

fn from_matrix(m: &ComplexMatrix) -> JsonMatrix {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

fn with_index(index: usize, e: Error) -> Error {
    match e {
        Error::InvariantViolation { .. } | Error::NonCommutingPayload(..) => e,
        other => Error::InvariantViolation {
            index,
            reason: other.to_string(),
        },
    }
}

fn checked_states(states: &[JsonVector], d: usize) -> Result<Vec<ComplexVector>> {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let v = to_vector(s);
            if v.dim() != d {
                return Err(with_index(i, Error::DimensionMismatch(format!("expected {d} entries"))));
            }
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(with_index(i, Error::NonUnitNorm(v.norm())));
            }
            Ok(v)
        })
        .collect()
}

/// Parses a message file. Complex entries are `[re, im]` pairs.
pub fn parse_messages(text: &str) -> Result<MessageDB> {
    let file: MessageFile = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    if let Some(v) = file.schema_version {
        if v != SCHEMA_VERSION {
            return Err(schema(format!("unsupported schema_version {v}")));
        }
    }
    let d = file.d;
    let missing = |field: &str| schema(format!("{:?} messages need `{field}`", file.kind));
    match file.kind {
        MessageKind::RealQubitPure => match &file.angles {
            Some(AngleList::Flat(a)) if d == 2 => MessageDB::real_qubit(a),
            Some(AngleList::Nested(a)) if d == 2 => {
                let flat = a
                    .iter()
                    .enumerate()
                    .map(|(i, v)| match v.as_slice() {
                        [t] => Ok(*t),
                        _ => Err(with_index(i, Error::DimensionMismatch("one angle per qubit".into()))),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                MessageDB::real_qubit(&flat)
            }
            Some(_) => Err(schema("real_qubit_pure messages need d = 2")),
            None => Err(missing("angles")),
        },
        MessageKind::RealQuditPure => match (&file.angles, &file.states) {
            (Some(AngleList::Nested(a)), None) => MessageDB::real_qudit(d, a.clone()),
            (Some(AngleList::Flat(a)), None) if d == 2 => {
                MessageDB::real_qudit(2, a.iter().map(|t| vec![*t]).collect())
            }
            (None, Some(s)) => MessageDB::real_qudit_from_states(&checked_states(s, d)?),
            _ => Err(missing("angles (one list per message) or states")),
        },
        MessageKind::CommutingUnitary => {
            let us = file.unitaries.as_ref().ok_or_else(|| missing("unitaries"))?;
            let us = us
                .iter()
                .enumerate()
                .map(|(i, m)| to_matrix(m, d, i))
                .collect::<Result<Vec<_>>>()?;
            MessageDB::commuting_unitary(us)
        }
        MessageKind::ComplexPure => match (&file.params, &file.states) {
            (Some(p), None) => MessageDB::complex_pure(d, p.clone()),
            (None, Some(s)) => MessageDB::complex_pure_from_states(&checked_states(s, d)?),
            _ => Err(missing("params or states")),
        },
        MessageKind::Mixed => {
            let rhos = file.rhos.as_ref().ok_or_else(|| missing("rhos"))?;
            let rhos = rhos
                .iter()
                .enumerate()
                .map(|(i, m)| to_matrix(m, d, i))
                .collect::<Result<Vec<_>>>()?;
            MessageDB::mixed(rhos)
        }
    }
}

pub fn load_messages(path: &Path) -> Result<MessageDB> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_messages(&text)
}

/// Serializes a database in the message-file format.
pub fn messages_to_json(db: &MessageDB) -> String {
    let mut file = MessageFile {
        schema_version: Some(SCHEMA_VERSION),
        kind: db.kind(),
        d: db.d(),
        angles: None,
        states: None,
        params: None,
        unitaries: None,
        rhos: None,
    };
    match db.payload() {
        Payload::Angles(a) if db.kind() == MessageKind::RealQubitPure => {
            file.angles = Some(AngleList::Flat(a.iter().map(|v| v[0]).collect()));
        }
        Payload::Angles(a) => file.angles = Some(AngleList::Nested(a.clone())),
        Payload::Pure(p) => file.params = Some(p.clone()),
        Payload::Unitaries(u) => file.unitaries = Some(u.iter().map(from_matrix).collect()),
        Payload::Densities(r) => file.rhos = Some(r.iter().map(from_matrix).collect()),
    }
    serde_json::to_string_pretty(&file).expect("message files serialize")
}

// ---- reports ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trial: usize,
    pub k: usize,
    pub success: bool,
    pub fidelity: f64,
    pub rounds: u32,
    pub upload_bits: u64,
    pub upload_qubits: f64,
    pub download_qubits: f64,
    pub ebits_consumed: f64,
    pub ebits_used: f64,
}

impl RunSummary {
    fn new(trial: usize, k: usize, r: &RunResult) -> Self {
        let t = &r.transcript;
        Self {
            trial,
            k,
            success: r.success,
            fidelity: r.target_fidelity,
            rounds: t.rounds,
            upload_bits: t.upload_bits,
            upload_qubits: t.upload_qubits,
            download_qubits: t.download_qubits,
            ebits_consumed: t.ebits_consumed,
            ebits_used: t.ebits_used,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub stderr: f64,
    /// Mean fidelity over successful runs.
    pub mean_fidelity: Option<f64>,
    pub min_fidelity: Option<f64>,
    pub upload_bits: u64,
    pub upload_qubits: f64,
    pub download_qubits: f64,
    pub ebits_consumed: f64,
    pub ebits_used: f64,
    pub rounds: u64,
}

impl Aggregate {
    pub fn from_runs(runs: &[RunSummary]) -> Self {
        let mut a = Aggregate {
            trials: runs.len(),
            ..Aggregate::default()
        };
        let mut fid_sum = 0.0;
        for r in runs {
            a.upload_bits += r.upload_bits;
            a.upload_qubits += r.upload_qubits;
            a.download_qubits += r.download_qubits;
            a.ebits_consumed += r.ebits_consumed;
            a.ebits_used += r.ebits_used;
            a.rounds += u64::from(r.rounds);
            if r.success {
                a.successes += 1;
                fid_sum += r.fidelity;
                a.min_fidelity = Some(a.min_fidelity.map_or(r.fidelity, |m: f64| m.min(r.fidelity)));
            }
        }
        let n = runs.len().max(1) as f64;
        a.success_rate = a.successes as f64 / n;
        a.stderr = (a.success_rate * (1.0 - a.success_rate) / n).sqrt();
        if a.successes > 0 {
            a.mean_fidelity = Some(fid_sum / a.successes as f64);
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub rounds: Option<usize>,
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
    pub secrecy: Vec<SecrecyReport>,
    pub attacks: Vec<AttackReport>,
    pub bell: Option<BellOracleReport>,
    pub merge_deviation: Option<verify::MergeDeviation>,
    pub checks: Vec<CheckOutcome>,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// A scenario's report together with the event trace of its first run.
pub struct ScenarioOutput {
    pub report: RunReport,
    pub trace: String,
}

fn database(config: &ScenarioConfig) -> Result<MessageDB> {
    let db = match &config.messages_path {
        Some(p) => load_messages(p)?,
        None => {
            let mut rng = trial_rng(config.seed, u64::MAX);
            MessageDB::random(kind_for(config.protocol)?, config.d, config.f, &mut rng)?
        }
    };
    if db.d() != config.d || db.f() != config.f {
        return Err(Error::Config(format!(
            "message file has d={}, f={} but the scenario asks for d={}, f={}",
            db.d(),
            db.f(),
            config.d,
            config.f
        )));
    }
    Ok(db)
}

fn expected_success(config: &ScenarioConfig, rounds: Option<usize>) -> f64 {
    let miss = (config.d as f64 - 1.0) / config.d as f64;
    match config.protocol {
        5 => 1.0 - miss.powi(rounds.unwrap_or(50 * config.d) as i32),
        6 | 7 => 1.0 - miss.powi(rounds.unwrap_or(1) as i32),
        _ => 1.0,
    }
}

fn merge_grid() -> Result<(verify::MergeDeviation, f64, f64)> {
    let mut worst_mag: f64 = 0.0;
    let mut worst_phase: f64 = 0.0;
    for i in 0..20 {
        for j in 0..20 {
            let tc = i as f64 * std::f64::consts::PI / 19.0;
            let tf = j as f64 * std::f64::consts::PI / 19.0 - std::f64::consts::FRAC_PI_2;
            let m = verify::merge_deviation_oracle(tc, tf)?;
            worst_mag = worst_mag.max(m.magnitude_error);
            worst_phase = worst_phase.max(m.residual);
        }
    }
    let probe = verify::merge_deviation_oracle(0.8, std::f64::consts::FRAC_PI_4)?;
    Ok((probe, worst_mag, worst_phase))
}

/// Executes the configured runs, attacks and checks.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    config.validate()?;
    let rounds = config.rounds()?;
    let db = database(config)?;
    let opts = RunOptions {
        merge: config.merge,
        rounds,
        ..RunOptions::default()
    };
    let results = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(config.seed, i as u64);
            let k = config.k.unwrap_or_else(|| rng.gen_range(1..=config.f));
            let r = run_protocol(config.protocol, &db, k, &mut rng, &opts)?;
            let trace = if i == 0 { r.transcript.events_jsonl() } else { String::new() };
            Ok((RunSummary::new(i, k, &r), trace))
        })
        .collect::<Result<Vec<_>>>()?;
    let trace = results[0].1.clone();
    let runs: Vec<RunSummary> = results.into_iter().map(|(s, _)| s).collect();
    let aggregate = Aggregate::from_runs(&runs);

    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        rounds,
        runs,
        aggregate,
        secrecy: Vec::new(),
        attacks: Vec::new(),
        bell: None,
        merge_deviation: None,
        checks: Vec::new(),
    };

    let attack_trials = config.trials.max(2);
    match config.adversary {
        Adversary::None => {}
        Adversary::Server1P4 => {
            for control in [false, true] {
                report.attacks.push(adversary::attack_server1_p4(
                    config.d,
                    config.f,
                    attack_trials,
                    config.seed,
                    config.merge,
                    control,
                )?);
            }
        }
        Adversary::Server1P5 => {
            for control in [false, true] {
                report.attacks.push(adversary::attack_server1_p5(
                    config.d,
                    config.f,
                    attack_trials,
                    config.seed,
                    config.merge,
                    control,
                )?);
            }
        }
        Adversary::UserP4 => {
            let k = config.k.unwrap_or(1);
            let k_prime = config.k_prime.unwrap_or(k % config.f + 1);
            report
                .attacks
                .push(adversary::attack_user_p4(&db, k, k_prime, config.merge, config.seed)?);
        }
    }

    let mut checks = config.checks.clone();
    checks.dedup();
    for check in checks {
        let (pass, detail) = match check {
            Check::UserSecrecy => {
                let r = verify::check_user_secrecy_with(config.protocol, &db)?;
                let out = (r.passed(), format!("max trace distance {:.3e}", r.max_trace_distance));
                report.secrecy.push(r);
                out
            }
            Check::ServerSecrecy => {
                let r = verify::check_server_secrecy(config.protocol, config.d, config.f)?;
                let out = (r.passed(), format!("max trace distance {:.3e}", r.max_trace_distance));
                report.secrecy.push(r);
                out
            }
            Check::BellIdentity => {
                if config.d > 5 {
                    return Err(Error::Config("bell_identity supports d ≤ 5".into()));
                }
                let r = verify::bell_identity_oracle(config.d, config.seed)?;
                let out = (r.pass, format!("max deviation {:.3e}", r.max_deviation));
                report.bell = Some(r);
                out
            }
            Check::MergeDeviation => {
                let (probe, mag, res) = merge_grid()?;
                report.merge_deviation = Some(probe);
                (
                    mag < FIDELITY_TOL && res < FIDELITY_TOL,
                    format!("grid magnitude error {mag:.3e}, residual after low-block phase {res:.3e}"),
                )
            }
            Check::SuccessRate => {
                let a = &report.aggregate;
                let sigma = 3.0 * a.stderr;
                match config.alpha {
                    Some(alpha) => (
                        a.success_rate >= alpha - sigma - 1e-12,
                        format!("rate {:.4} against α = {alpha}", a.success_rate),
                    ),
                    None => {
                        let p = expected_success(config, rounds);
                        let sigma = 3.0 * (p * (1.0 - p) / a.trials as f64).sqrt();
                        (
                            (a.success_rate - p).abs() <= sigma + 1e-12,
                            format!("rate {:.4} against {p:.4} ± {sigma:.4}", a.success_rate),
                        )
                    }
                }
            }
            Check::Fidelity => {
                let m = report.aggregate.min_fidelity.unwrap_or(1.0);
                (m >= 1.0 - FIDELITY_TOL, format!("minimum fidelity {m:.12}"))
            }
            Check::AttackOracle => {
                let pass = report.attacks.iter().all(|r| match (r.kept_fidelity, r.output_fidelity) {
                    (Some(kf), Some(of)) => kf >= 1.0 - FIDELITY_TOL && of >= 1.0 - FIDELITY_TOL,
                    _ if r.attack.ends_with("control") => r.advantage.abs() <= 3.0 * r.stderr + 1e-12,
                    _ => r.matches_oracle(),
                });
                let detail = report
                    .attacks
                    .iter()
                    .map(|r| format!("{}: {:.4} vs oracle {:.4} (σ {:.4})", r.attack, r.advantage, r.oracle, r.stderr))
                    .collect::<Vec<_>>()
                    .join("; ");
                (pass, detail)
            }
        };
        report.checks.push(CheckOutcome { check, pass, detail });
    }
    Ok(ScenarioOutput { report, trace })
}

// ---- command line ----

#[derive(Debug, Parser)]
#[command(name = "tqot", about = "Run two-server quantum oblivious transfer scenarios")]
pub struct Args {
    /// Scenario file; flags given on the command line override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=7))]
    pub protocol: Option<u8>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub f: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, conflicts_with = "alpha")]
    pub n_rounds: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub adversary: Option<Adversary>,
    #[arg(long)]
    pub k_prime: Option<usize>,
    #[arg(long, value_enum)]
    pub merge: Option<MergeArg>,
    #[arg(long)]
    pub messages: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub checks: Vec<Check>,
    /// Line-delimited JSON event trace of the first run.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MergeArg {
    Paper,
    Ideal,
}

impl Args {
    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
            }
            None => ScenarioConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field.clone() {
                    c.$field = v;
                }
            };
            ($field:ident, opt) => {
                if self.$field.is_some() {
                    c.$field = self.$field.clone();
                }
            };
        }
        set!(protocol);
        set!(d);
        set!(f);
        set!(trials);
        set!(seed);
        set!(adversary);
        set!(k, opt);
        set!(k_prime, opt);
        set!(n_rounds, opt);
        set!(alpha, opt);
        if self.n_rounds.is_some() {
            c.alpha = None;
        }
        if self.alpha.is_some() {
            c.n_rounds = None;
        }
        if let Some(m) = self.merge {
            c.merge = match m {
                MergeArg::Paper => MergeBackend::Paper,
                MergeArg::Ideal => MergeBackend::Ideal,
            };
        }
        if self.messages.is_some() {
            c.messages_path = self.messages.clone();
        }
        if !self.checks.is_empty() {
            c.checks = self.checks.clone();
        }
        Ok(c)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs the command line and returns the process exit code: 0 when every check passes,
/// 1 when one fails, 2 on a configuration or input error.
pub fn run(args: &Args) -> i32 {
    let result = args.scenario().and_then(|c| run_scenario(&c));
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let json = out.report.to_json();
    let written = match &args.out {
        Some(p) => write(p, &json),
        None => {
            println!("{json}");
            Ok(())
        }
    }
    .and_then(|_| match &args.trace_out {
        Some(p) => write(p, &out.trace),
        None => Ok(()),
    });
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 2;
    }
    for c in &out.report.checks {
        eprintln!("{} {:?}: {}", if c.pass { "PASS" } else { "FAIL" }, c.check, c.detail);
    }
    i32::from(!out.report.all_passed())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(protocol: u8, d: usize, f: usize) -> ScenarioConfig {
        ScenarioConfig {
            protocol,
            d,
            f,
            trials: 16,
            seed: 1,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn message_file_examples() {
        let db = parse_messages(r#"{"kind":"real_qubit_pure","d":2,"angles":[0.5236,1.0472]}"#).unwrap();
        assert_eq!((db.kind(), db.f()), (MessageKind::RealQubitPure, 2));
        let mixed = r#"{"kind":"mixed","d":2,"rhos":[
            [[[0.5,0],[0,0]],[[0,0],[0.5,0]]],
            [[[1,0],[0,0]],[[0,0],[0,0]]]]}"#;
        assert_eq!(parse_messages(mixed).unwrap().kind(), MessageKind::Mixed);
        let bad_trace = r#"{"kind":"mixed","d":2,"rhos":[
            [[[1,0],[0,0]],[[0,0],[0,0]]],
            [[[0.5,0],[0,0]],[[0,0],[0.6,0]]]]}"#;
        assert!(matches!(
            parse_messages(bad_trace),
            Err(Error::InvariantViolation { index: 1, .. })
        ));
        let x = r#"[[[0,0],[1,0]],[[1,0],[0,0]]]"#;
        let z = r#"[[[1,0],[0,0]],[[0,0],[-1,0]]]"#;
        let noncommuting = format!(r#"{{"kind":"commuting_unitary","d":2,"unitaries":[{z},{x}]}}"#);
        assert!(matches!(
            parse_messages(&noncommuting),
            Err(Error::NonCommutingPayload(0, 1))
        ));
        assert!(matches!(parse_messages(r#"{"kind":"mixed""#), Err(Error::SchemaError(_))));
        assert!(matches!(
            parse_messages(r#"{"schema_version":2,"kind":"real_qubit_pure","d":2,"angles":[0.1]}"#),
            Err(Error::SchemaError(_))
        ));
        let unnormalised = r#"{"kind":"complex_pure","d":2,"states":[[[1,0],[0,0]],[[1,0],[1,0]]]}"#;
        assert!(matches!(
            parse_messages(unnormalised),
            Err(Error::InvariantViolation { index: 1, .. })
        ));
    }

    #[test]
    fn message_files_round_trip() {
        let mut rng = trial_rng(4, 0);
        for (kind, d) in [
            (MessageKind::RealQubitPure, 2),
            (MessageKind::RealQuditPure, 3),
            (MessageKind::CommutingUnitary, 3),
            (MessageKind::ComplexPure, 3),
            (MessageKind::Mixed, 2),
        ] {
            let db = MessageDB::random(kind, d, 3, &mut rng).unwrap();
            let back = parse_messages(&messages_to_json(&db)).unwrap();
            assert_eq!(back.kind(), kind);
            for k in 1..=3 {
                assert!(back.target(k).unwrap().max_abs_diff(&db.target(k).unwrap()) < 1e-12);
            }
        }
    }

    #[test]
    fn protocol1_scenario_passes_checks() {
        let mut c = config(1, 2, 2);
        c.checks = vec![Check::UserSecrecy, Check::ServerSecrecy, Check::Fidelity, Check::SuccessRate];
        let out = run_scenario(&c).unwrap();
        assert!(out.report.all_passed(), "{:?}", out.report.checks);
        assert_eq!(out.report.aggregate.successes, 16);
        assert!(out.trace.lines().count() > 0);
    }

    #[test]
    fn aggregate_counters_are_sums() {
        let mut c = config(6, 2, 2);
        c.n_rounds = Some(2);
        let r = run_scenario(&c).unwrap().report;
        let bits: u64 = r.runs.iter().map(|s| s.upload_bits).sum();
        let down: f64 = r.runs.iter().map(|s| s.download_qubits).sum();
        assert_eq!(r.aggregate.upload_bits, bits);
        assert_eq!(r.aggregate.download_qubits, down);
        assert_eq!(r.aggregate.trials, 16);
    }

    #[test]
    fn reports_are_deterministic() {
        let mut c = config(6, 3, 3);
        c.n_rounds = Some(2);
        c.trials = 40;
        let a = run_scenario(&c).unwrap().report.to_json();
        let b = run_scenario(&c).unwrap().report.to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = config(6, 2, 2);
        c.alpha = Some(0.5);
        c.n_rounds = Some(2);
        assert!(run_scenario(&c).is_err());
        let mut c = config(1, 2, 2);
        c.adversary = Adversary::UserP4;
        assert!(run_scenario(&c).is_err());
        let mut c = config(2, 3, 2);
        c.k = Some(3);
        assert!(run_scenario(&c).is_err());
    }

    #[test]
    fn user_attack_scenario() {
        let mut c = config(4, 2, 3);
        c.adversary = Adversary::UserP4;
        c.k = Some(1);
        c.checks = vec![Check::AttackOracle];
        let r = run_scenario(&c).unwrap().report;
        assert!(r.all_passed());
        assert!((r.attacks[0].kept_fidelity.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flags_override_config() {
        let args = Args::parse_from([
            "tqot", "--protocol", "6", "--d", "3", "--f", "2", "--alpha", "0.75", "--checks",
            "success_rate,fidelity",
        ]);
        let c = args.scenario().unwrap();
        assert_eq!((c.protocol, c.d, c.alpha), (6, 3, Some(0.75)));
        assert_eq!(c.rounds().unwrap(), Some(5));
        assert_eq!(c.checks, vec![Check::SuccessRate, Check::Fidelity]);
        assert!(Args::try_parse_from(["tqot", "--alpha", "0.5", "--n-rounds", "2"]).is_err());
        assert_eq!(run(&Args::parse_from(["tqot", "--protocol", "1", "--d", "3"])), 2);
    }
}
