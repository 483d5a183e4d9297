//! Command-line front end: job files in, result documents, QASM and CSV out.
//!
//! A job file is JSON. Complex numbers are `[re, im]` pairs and matrices are
//! lists of rows:
//!
//! ```json
//! {
//!   "kind": "povm",
//!   "name": "two-outcome",
//!   "dim": 2,
//!   "operators": [[[[1, 0], [0, 0]], [[0, 0], [0, 0]]],
//!                 [[[0, 0], [0, 0]], [[0, 0], [1, 0]]]],
//!   "labels": ["M1", "M2"],
//!   "state": "zero",
//!   "shots": 8192,
//!   "seed": 7
//! }
//! ```
//!
//! Instruments use `"kind": "instrument"` and `"branches"`, a list of Kraus
//! operator lists. `state` is a list of amplitudes or one of `zero`,
//! `uniform`, `fourier`, `basis:<k>`. Optional `noise` names a calibration
//! file (resolved against the job file's directory), `noise_layout` maps
//! measured qubits to calibrated qubits, and `qubit_permutation` reorders the
//! compiled register.
//!
//! Exit codes: 0 success, 1 mathematically invalid input, 2 parse or schema
//! error, 3 I/O error.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuit::GateCounts;
use crate::dilation::{
    encode_to_qubits, instrument_purification, joint_state, permute_qubits, qubits_for, QuditEncoding,
};
use crate::error::Error;
use crate::linalg::{partial_trace, ComplexMatrix, ComplexVector};
use crate::povm::{
    instrument_output, measurement_channel, post_measurement_state, validate_completeness, DensityMatrix, Povm,
    QuantumInstrument, COMPLETENESS_TOL,
};
use crate::presets;
use crate::qasm::circuit_to_qasm;
use crate::sim::{
    self, apply_confusion, bitstring, marginal_probabilities, mitigate_readout, post_select, rng, run_circuit,
    sample_shots, Calibration, ConfusionModel, Mitigated, StateVector, TomographyMode,
};
use crate::stateprep::prepare_state;

pub const DEFAULT_SHOTS: u64 = 8192;
pub const SEED_ENV: &str = "POVM_SIM_SEED";
const NORM_TOL: f64 = 1e-10;

// Sub-seeds for the random stages that follow shot sampling.
const NOISE_STREAM: u64 = 1;
const TOMOGRAPHY_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Math,
    Parse,
    Io,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Parse, message: message.into() }
    }

    pub fn math(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Math, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self { kind: ErrorKind::Io, message: format!("{}: {e}", path.display()) }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Math => 1,
            ErrorKind::Parse => 2,
            ErrorKind::Io => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Qasm(_) => Self::parse(e.to_string()),
            _ => Self::math(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub type JsonComplex = [f64; 2];
pub type JsonMatrix = Vec<Vec<JsonComplex>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Povm,
    Instrument,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, expecting = "a preset name or a list of [re, im] amplitudes")]
pub enum StateSpec {
    Preset(String),
    Amplitudes(Vec<JsonComplex>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub kind: Kind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub operators: Option<Vec<JsonMatrix>>,
    #[serde(default)]
    pub branches: Option<Vec<Vec<JsonMatrix>>>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    pub state: StateSpec,
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub noise: Option<PathBuf>,
    #[serde(default)]
    pub noise_layout: Option<Vec<usize>>,
    #[serde(default)]
    pub qubit_permutation: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub enum Measurement {
    Povm(Povm),
    Instrument(QuantumInstrument),
}

impl Measurement {
    pub fn dim(&self) -> usize {
        match self {
            Self::Povm(p) => p.dim(),
            Self::Instrument(i) => i.dim(),
        }
    }

    pub fn outcome_count(&self) -> usize {
        match self {
            Self::Povm(p) => p.len(),
            Self::Instrument(i) => i.branch_count(),
        }
    }
}

/// A job whose shapes have been checked; completeness and normalization are
/// checked later so they can be reported as mathematical failures.
#[derive(Clone, Debug)]
pub struct Job {
    pub name: String,
    pub kind: Kind,
    pub measurement: Measurement,
    pub labels: Vec<String>,
    pub state: ComplexVector,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    pub noise: Option<PathBuf>,
    pub noise_layout: Option<Vec<usize>>,
    pub qubit_permutation: Option<Vec<usize>>,
    /// SHA-256 of the job file bytes, hex encoded.
    pub input_sha256: String,
}

/// Prefixes a deserialization error with the path of the offending field.
fn schema_error(e: serde_path_to_error::Error<serde_json::Error>) -> CliError {
    let path = e.path().to_string();
    let inner = e.into_inner();
    if path == "." {
        CliError::parse(inner.to_string())
    } else {
        CliError::parse(format!("{path}: {inner}"))
    }
}

fn matrix_from_json(m: &JsonMatrix, dim: usize, field: &str) -> CliResult<ComplexMatrix> {
    if m.len() != dim {
        return Err(CliError::parse(format!("{field}: expected {dim} rows, found {}", m.len())));
    }
    let mut rows = Vec::with_capacity(dim);
    for (r, row) in m.iter().enumerate() {
        if row.len() != dim {
            return Err(CliError::parse(format!("{field}[{r}]: expected {dim} entries, found {}", row.len())));
        }
        if let Some(c) = row.iter().position(|z| !z[0].is_finite() || !z[1].is_finite()) {
            return Err(CliError::parse(format!("{field}[{r}][{c}]: entry is not finite")));
        }
        rows.push(row.iter().map(|z| Complex64::new(z[0], z[1])).collect::<Vec<_>>());
    }
    Ok(ComplexMatrix::from_rows(&rows)?)
}

pub fn matrix_to_json(m: &ComplexMatrix) -> JsonMatrix {
    (0..m.rows()).map(|r| m.row(r).iter().map(|z| [z.re, z.im]).collect()).collect()
}

fn infer_dim(first: Option<&JsonMatrix>, declared: Option<usize>, field: &str) -> CliResult<usize> {
    let found =
        first.map(Vec::len).ok_or_else(|| CliError::parse(format!("{field}: at least one operator is required")))?;
    match declared {
        Some(0) => Err(CliError::parse("dim: must be at least 1")),
        Some(d) => Ok(d),
        None if found == 0 => Err(CliError::parse(format!("{field}[0]: operator has no rows"))),
        None => Ok(found),
    }
}

impl Job {
    /// Parses a job from JSON text. `base` resolves a relative `noise` path.
    pub fn from_json(text: &str, base: Option<&Path>) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: JobSpec = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        let mut job = Self::from_spec(spec)?;
        if let (Some(base), Some(noise)) = (base, job.noise.as_mut()) {
            if noise.is_relative() {
                *noise = base.join(&*noise);
            }
        }
        job.input_sha256 = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(job)
    }

    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path.parent())
            .map_err(|e| CliError { message: format!("{}: {}", path.display(), e.message), ..e })
    }

    pub fn from_spec(spec: JobSpec) -> CliResult<Self> {
        let (measurement, count) = match spec.kind {
            Kind::Povm => {
                if spec.branches.is_some() {
                    return Err(CliError::parse("branches: not allowed for kind \"povm\"; use operators"));
                }
                let ops =
                    spec.operators.as_ref().ok_or_else(|| CliError::parse("operators: missing for kind \"povm\""))?;
                let dim = infer_dim(ops.first(), spec.dim, "operators")?;
                let elements = ops
                    .iter()
                    .enumerate()
                    .map(|(j, m)| matrix_from_json(m, dim, &format!("operators[{j}]")))
                    .collect::<CliResult<Vec<_>>>()?;
                (Measurement::Povm(Povm::new(elements)?), ops.len())
            }
            Kind::Instrument => {
                if spec.operators.is_some() {
                    return Err(CliError::parse("operators: not allowed for kind \"instrument\"; use branches"));
                }
                let branches = spec
                    .branches
                    .as_ref()
                    .ok_or_else(|| CliError::parse("branches: missing for kind \"instrument\""))?;
                let first = branches.iter().find_map(|b| b.first());
                let dim = infer_dim(first, spec.dim, "branches")?;
                let mut out = Vec::with_capacity(branches.len());
                for (j, b) in branches.iter().enumerate() {
                    if b.is_empty() {
                        return Err(CliError::parse(format!(
                            "branches[{j}]: a branch needs at least one Kraus operator"
                        )));
                    }
                    out.push(
                        b.iter()
                            .enumerate()
                            .map(|(k, m)| matrix_from_json(m, dim, &format!("branches[{j}][{k}]")))
                            .collect::<CliResult<Vec<_>>>()?,
                    );
                }
                (Measurement::Instrument(QuantumInstrument::new(out)?), branches.len())
            }
        };
        let labels = match spec.labels {
            Some(l) if l.len() != count => {
                return Err(CliError::parse(format!("labels: expected {count} labels, found {}", l.len())))
            }
            Some(l) => l,
            None => (1..=count).map(|j| format!("M{j}")).collect(),
        };
        let dim = measurement.dim();
        let state = match &spec.state {
            StateSpec::Preset(name) => presets::named_state(name, dim)
                .ok_or_else(|| CliError::parse(format!("state: unknown preset {name:?} for dimension {dim}")))?,
            StateSpec::Amplitudes(a) => {
                if a.len() != dim {
                    return Err(CliError::parse(format!("state: expected {dim} amplitudes, found {}", a.len())));
                }
                ComplexVector::new(a.iter().map(|z| Complex64::new(z[0], z[1])).collect())
            }
        };
        let outcome_qubits = qubits_for(count);
        let width = qubits_for(dim)
            + outcome_qubits
            + match &measurement {
                Measurement::Povm(_) => 0,
                Measurement::Instrument(i) => qubits_for(i.max_kraus()) + outcome_qubits,
            };
        if let Some(perm) = &spec.qubit_permutation {
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            if sorted != (0..width).collect::<Vec<_>>() {
                return Err(CliError::parse(format!("qubit_permutation: must be a permutation of 0..{width}")));
            }
        }
        if let Some(layout) = &spec.noise_layout {
            if layout.len() != outcome_qubits {
                return Err(CliError::parse(format!(
                    "noise_layout: expected {outcome_qubits} calibrated qubits, found {}",
                    layout.len()
                )));
            }
        }
        if spec.shots == Some(0) {
            return Err(CliError::parse("shots: must be at least 1"));
        }
        Ok(Self {
            name: spec.name.unwrap_or_default(),
            kind: spec.kind,
            measurement,
            labels,
            state,
            shots: spec.shots,
            seed: spec.seed,
            noise: spec.noise,
            noise_layout: spec.noise_layout,
            qubit_permutation: spec.qubit_permutation,
            input_sha256: String::new(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub label: String,
    pub min_eigenvalue: f64,
    pub psd: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub name: String,
    pub kind: Kind,
    pub dim: usize,
    pub outcomes: usize,
    pub valid: bool,
    pub complete: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// For instruments, one entry per branch effect `∑_k M_{jk}†M_{jk}`.
    pub effects: Vec<EffectReport>,
    pub state_norm: f64,
    pub state_normalized: bool,
}

pub fn validate(job: &Job) -> CliResult<ValidationReport> {
    let report = match &job.measurement {
        Measurement::Povm(p) => validate_completeness(p, COMPLETENESS_TOL)?,
        Measurement::Instrument(i) => i.validate(COMPLETENESS_TOL)?,
    };
    let effects = report
        .effect_min_eigenvalues
        .iter()
        .zip(&report.effect_psd)
        .zip(&job.labels)
        .map(|((&min_eigenvalue, &psd), label)| EffectReport { label: label.clone(), min_eigenvalue, psd })
        .collect();
    let norm = job.state.norm();
    Ok(ValidationReport {
        name: job.name.clone(),
        kind: job.kind,
        dim: job.measurement.dim(),
        outcomes: job.measurement.outcome_count(),
        valid: report.passed() && (norm - 1.0).abs() <= NORM_TOL,
        complete: report.complete(),
        max_deviation: report.max_deviation,
        tolerance: report.tolerance,
        effects,
        state_norm: norm,
        state_normalized: (norm - 1.0).abs() <= NORM_TOL,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimulateOptions {
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    pub exact: bool,
    pub noise: Option<PathBuf>,
    pub mitigate: bool,
    /// Outcome label or zero-based outcome index.
    pub post_select: Option<String>,
    pub tomo: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub width: usize,
    /// Circuit qubits carrying the measured system, most significant first.
    pub system_qubits: Vec<usize>,
    /// Circuit qubits read out to obtain the outcome, most significant first.
    pub outcome_qubits: Vec<usize>,
    /// Circuit qubit `i` holds canonical qubit `qubit_permutation[i]`.
    pub qubit_permutation: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitInfo {
    pub width: usize,
    pub gate_counts: GateCounts,
    pub global_phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    pub shots: u64,
    pub seed: u64,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseResult {
    pub device: String,
    pub readout_errors: Vec<f64>,
    pub seed: u64,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostSelected {
    pub outcome: usize,
    pub label: String,
    pub probability: f64,
    /// Conditional state of the measured system in its `d`-level basis.
    pub density_matrix: JsonMatrix,
    /// `M_j ρ M_j† / Tr(·)` (or the branch output for instruments).
    pub expected: JsonMatrix,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    /// Reconstructed qubits, most significant first, in canonical order.
    pub qubits: Vec<usize>,
    pub exact: bool,
    pub shots_per_setting: Option<u64>,
    pub seed: Option<u64>,
    /// Reconstruction in the qubit basis of `qubits`.
    pub density_matrix: JsonMatrix,
    pub expected: JsonMatrix,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub input_sha256: String,
    pub seed: u64,
    pub shots: Option<u64>,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub name: String,
    pub kind: Kind,
    pub system_dim: usize,
    pub outcome_count: usize,
    /// Every basis state of the outcome register, as bitstrings.
    pub outcomes: Vec<String>,
    /// Outcome labels; padding states of the register have an empty label.
    pub labels: Vec<String>,
    /// Born-rule probabilities read off the prepared state.
    pub analytic: Vec<f64>,
    /// `Tr(M_j ρ M_j†)` from the operators directly, one per outcome.
    pub born: Vec<f64>,
    /// Largest amplitude modulus on unused encoding states of the prepared state.
    pub leakage: f64,
    pub layout: Layout,
    pub circuit: CircuitInfo,
    pub sampled: Option<Sampled>,
    pub noise: Option<NoiseResult>,
    pub mitigated: Option<Mitigated>,
    pub post_selected: Option<PostSelected>,
    pub tomography: Option<TomographyResult>,
    pub provenance: Provenance,
}

impl ResultDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result documents serialize");
        s.push('\n');
        s
    }

    /// Frequencies of the recorded shots after any readout noise.
    pub fn sampled_frequencies(&self) -> Option<Vec<f64>> {
        let counts = match (&self.noise, &self.sampled) {
            (Some(n), Some(s)) => (&n.counts, s.shots),
            (None, Some(s)) => (&s.counts, s.shots),
            _ => return None,
        };
        Some(self.outcomes.iter().map(|o| counts.0.get(o).copied().unwrap_or(0) as f64 / counts.1 as f64).collect())
    }
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::parse(format!("{SEED_ENV}: {v:?} is not an unsigned 64-bit integer"))),
        Err(_) => Ok(None),
    }
}

/// Flag, then job file, then the environment, then 0.
pub fn resolve_seed(flag: Option<u64>, job: &Job) -> CliResult<u64> {
    Ok(match flag.or(job.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

pub fn load_calibration(path: &Path) -> CliResult<Calibration> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::parse(format!("{}: {}", path.display(), schema_error(e))))
}

/// Embeds an operator on registers of the given dims into the qubit encoding.
fn embed(m: &ComplexMatrix, dims: &[usize]) -> ComplexMatrix {
    let enc = QuditEncoding::new(dims);
    let index: Vec<usize> = (0..m.rows())
        .map(|i| {
            let mut levels = vec![0; dims.len()];
            crate::linalg::digits(i, dims, &mut levels);
            enc.encode_index(&levels)
        })
        .collect();
    let size = 1 << enc.total_qubits();
    let mut out = ComplexMatrix::zeros(size, size);
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out[(index[r], index[c])] = m[(r, c)];
        }
    }
    out
}

/// Leading `d × d` block: the logical levels of a binary-encoded register.
fn restrict(m: &ComplexMatrix, d: usize) -> ComplexMatrix {
    let rows = (0..d).map(|r| (0..d).map(|c| m[(r, c)]).collect::<Vec<_>>()).collect::<Vec<_>>();
    ComplexMatrix::from_rows(&rows).expect("square block")
}

fn resolve_outcome(sel: &str, labels: &[String]) -> CliResult<usize> {
    if let Some(j) = labels.iter().position(|l| l == sel) {
        return Ok(j);
    }
    match sel.parse::<usize>() {
        Ok(j) if j < labels.len() => Ok(j),
        _ => Err(CliError::parse(format!(
            "--post-select: {sel:?} is neither an outcome label nor an index below {}",
            labels.len()
        ))),
    }
}

pub fn simulate(job: &Job, opts: &SimulateOptions) -> CliResult<ResultDocument> {
    let seed = resolve_seed(opts.seed, job)?;
    let shots = opts.shots.or(job.shots).unwrap_or(DEFAULT_SHOTS);
    if shots == 0 {
        return Err(CliError::parse("--shots: must be at least 1"));
    }
    if opts.exact && opts.noise.is_some() {
        return Err(CliError::parse("--noise acts on sampled shots and cannot be combined with --exact"));
    }
    // A job-level noise model only applies when shots are drawn.
    let noise_path = opts.noise.clone().or_else(|| job.noise.clone().filter(|_| !opts.exact));
    if opts.mitigate && noise_path.is_none() {
        return Err(CliError::parse("--mitigate needs a noise model (--noise or the job's \"noise\" field)"));
    }

    let d = job.measurement.dim();
    let n = job.measurement.outcome_count();
    let rho = DensityMatrix::new(job.state.projector()).map_err(|_| Error::NotNormalized { norm: job.state.norm() })?;
    let joint = match &job.measurement {
        Measurement::Povm(p) => joint_state(p, &job.state)?,
        Measurement::Instrument(i) => instrument_purification(i, &job.state)?,
    };
    let born = match &job.measurement {
        Measurement::Povm(p) => crate::povm::outcome_probabilities(p, &rho)?,
        Measurement::Instrument(i) => crate::povm::branch_probabilities(i, &rho)?,
    };
    let (encoded, enc) = encode_to_qubits(&joint);
    let width = enc.total_qubits();
    let system = enc.qubit_range(0).collect::<Vec<_>>();
    let outcome = enc.qubit_range(1).collect::<Vec<_>>();

    let perm = job.qubit_permutation.clone().unwrap_or_else(|| (0..width).collect());
    let target = permute_qubits(&encoded, &perm).map_err(|e| CliError::parse(format!("qubit_permutation: {e}")))?;
    let mut inverse = vec![0; width];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let circuit = prepare_state(&target)?;
    let executed = run_circuit(&circuit, None)?;
    // Analysis runs in canonical register order.
    let state = StateVector::from_amplitudes(permute_qubits(executed.amplitudes(), &inverse)?)?;

    let analytic = marginal_probabilities(&state, &outcome)?;
    let width_out = outcome.len();
    let outcomes: Vec<String> = (0..analytic.len()).map(|o| bitstring(o, width_out)).collect();
    let labels: Vec<String> = (0..analytic.len()).map(|o| job.labels.get(o).cloned().unwrap_or_default()).collect();

    let (sampled, noise, mitigated) = if opts.exact {
        (None, None, None)
    } else {
        let record = sample_shots(&state, &outcome, shots, seed)?;
        let sampled = Sampled { shots, seed, counts: record.counts.clone() };
        match &noise_path {
            None => (Some(sampled), None, None),
            Some(path) => {
                let cal = load_calibration(path)?;
                let layout = job.noise_layout.clone().unwrap_or_else(|| (0..width_out).collect());
                let model = ConfusionModel::from_calibration(&cal, &layout)?;
                let noise_seed = rng::derive_seed(seed, NOISE_STREAM);
                let noisy = apply_confusion(&record, &model, noise_seed)?;
                let mitigated = if opts.mitigate { Some(mitigate_readout(&noisy, &model)?) } else { None };
                let noise = NoiseResult {
                    device: cal.device.clone(),
                    readout_errors: model.rates().to_vec(),
                    seed: noise_seed,
                    counts: noisy.counts,
                };
                (Some(sampled), Some(noise), mitigated)
            }
        }
    };

    let selected = match &opts.post_select {
        Some(sel) => Some(resolve_outcome(sel, &job.labels)?),
        None => None,
    };
    let conditional = match selected {
        Some(j) => {
            let (rest, probability) = post_select(&state, &outcome, &bitstring(j, width_out))?;
            let full = rest.amplitudes().projector();
            let qa = system.len();
            let reduced = partial_trace(&full, &[1 << qa, 1 << (rest.width() - qa)], &[0])?;
            let got = restrict(&reduced, d);
            let expected = match &job.measurement {
                Measurement::Povm(p) => post_measurement_state(p, j, &rho)?.into_matrix(),
                Measurement::Instrument(i) => {
                    let out = i.branch_output(j, &rho)?;
                    let p = out.trace().re;
                    out.scale(Complex64::new(1.0 / p, 0.0))
                }
            };
            let error = got.max_abs_diff(&expected);
            let doc = PostSelected {
                outcome: j,
                label: job.labels[j].clone(),
                probability,
                density_matrix: matrix_to_json(&got),
                expected: matrix_to_json(&expected),
                max_abs_error: error,
            };
            Some((rest, doc))
        }
        None => None,
    };

    let tomography = if opts.tomo {
        let mode = if opts.exact {
            TomographyMode::Exact
        } else {
            TomographyMode::Shots { shots_per_setting: shots, seed: rng::derive_seed(seed, TOMOGRAPHY_STREAM) }
        };
        let (rho_hat, qubits, expected) = match (&conditional, &job.measurement) {
            (Some((rest, _)), _) => {
                let qubits: Vec<usize> = (0..system.len()).collect();
                let expected = match &job.measurement {
                    Measurement::Povm(p) => post_measurement_state(p, selected.unwrap(), &rho)?.into_matrix(),
                    Measurement::Instrument(i) => {
                        let out = i.branch_output(selected.unwrap(), &rho)?;
                        let p = out.trace().re;
                        out.scale(Complex64::new(1.0 / p, 0.0))
                    }
                };
                (sim::tomography(rest, &qubits, mode)?, system.clone(), embed(&expected, &[d]))
            }
            (None, Measurement::Povm(p)) => {
                let expected = measurement_channel(p, &rho)?;
                (sim::tomography(&state, &system, mode)?, system.clone(), embed(&expected, &[d]))
            }
            (None, Measurement::Instrument(i)) => {
                let qubits: Vec<usize> = system.iter().chain(&outcome).copied().collect();
                let expected = instrument_output(i, &rho)?;
                (sim::tomography(&state, &qubits, mode)?, qubits, embed(&expected, &[d, n]))
            }
        };
        let error = rho_hat.matrix().max_abs_diff(&expected);
        Some(TomographyResult {
            qubits,
            exact: opts.exact,
            shots_per_setting: (!opts.exact).then_some(shots),
            seed: match mode {
                TomographyMode::Shots { seed, .. } => Some(seed),
                TomographyMode::Exact => None,
            },
            density_matrix: matrix_to_json(rho_hat.matrix()),
            expected: matrix_to_json(&expected),
            max_abs_error: error,
        })
    } else {
        None
    };

    let map = |qs: &[usize]| qs.iter().map(|&q| inverse[q]).collect::<Vec<_>>();
    Ok(ResultDocument {
        name: job.name.clone(),
        kind: job.kind,
        system_dim: d,
        outcome_count: n,
        outcomes,
        labels,
        analytic,
        born,
        leakage: enc.leakage(state.amplitudes()),
        layout: Layout { width, system_qubits: map(&system), outcome_qubits: map(&outcome), qubit_permutation: perm },
        circuit: CircuitInfo {
            width: circuit.width(),
            gate_counts: circuit.counts(),
            global_phase: circuit.global_phase(),
        },
        sampled,
        noise,
        mitigated,
        post_selected: conditional.map(|(_, doc)| doc),
        tomography,
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            input_sha256: job.input_sha256.clone(),
            seed,
            shots: (!opts.exact).then_some(shots),
            exact: opts.exact,
        },
    })
}

/// Compiles the job's joint state, honoring `qubit_permutation`.
pub fn compile(job: &Job) -> CliResult<crate::circuit::Circuit> {
    let joint = match &job.measurement {
        Measurement::Povm(p) => joint_state(p, &job.state)?,
        Measurement::Instrument(i) => instrument_purification(i, &job.state)?,
    };
    let (encoded, enc) = encode_to_qubits(&joint);
    let perm = job.qubit_permutation.clone().unwrap_or_else(|| (0..enc.total_qubits()).collect());
    let target = permute_qubits(&encoded, &perm).map_err(|e| CliError::parse(format!("qubit_permutation: {e}")))?;
    Ok(prepare_state(&target)?)
}

pub fn histogram_csv(doc: &ResultDocument) -> CliResult<String> {
    let sampled = doc.sampled_frequencies();
    let mitigated = doc.mitigated.as_ref().map(|m| &m.probabilities);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError { kind: ErrorKind::Io, message: e.to_string() };
    w.write_record(["outcome", "label", "analytic", "sampled", "mitigated"]).map_err(io)?;
    for (i, outcome) in doc.outcomes.iter().enumerate() {
        let cell = |v: Option<&Vec<f64>>| v.and_then(|v| v.get(i)).map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            outcome.clone(),
            doc.labels.get(i).cloned().unwrap_or_default(),
            doc.analytic[i].to_string(),
            cell(sampled.as_ref()),
            cell(mitigated),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError { kind: ErrorKind::Io, message: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// A gnuplot script drawing a clustered bar chart from `csv_path`.
pub fn gnuplot_script(doc: &ResultDocument, csv_path: &Path, image: &Path) -> String {
    let title = if doc.name.is_empty() { "outcome distribution".to_string() } else { doc.name.clone() };
    let mut s = String::new();
    s.push_str("set terminal pngcairo size 800,500\n");
    s.push_str(&format!("set output '{}'\n", image.display()));
    s.push_str(&format!("set title '{}'\n", title.replace('\'', "''")));
    s.push_str("set datafile separator ','\n");
    s.push_str("set style data histograms\nset style histogram clustered gap 1\nset style fill solid 0.8 border -1\n");
    s.push_str("set yrange [0:1]\nset ylabel 'probability'\nset key top right\n");
    s.push_str(&format!("file = '{}'\n", csv_path.display()));
    let mut series = vec!["file using 3:xtic(1) title 'analytic'".to_string()];
    if doc.sampled.is_some() {
        series.push("'' using 4 title 'sampled'".into());
    }
    if doc.mitigated.is_some() {
        series.push("'' using 5 title 'mitigated'".into());
    }
    s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    s
}

#[derive(Debug, Parser)]
#[command(name = "povm-sim", version, about = "Simulate POVMs and quantum instruments by dilation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check completeness and positivity of a job's operators.
    Validate { spec: PathBuf },
    /// Run the full pipeline and write a result document.
    Simulate(SimulateArgs),
    /// Write the state-preparation circuit as OpenQASM 3.0.
    ExportQasm {
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Turn a result document into CSV (and optionally a gnuplot script).
    Histogram {
        result: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write a gnuplot script; needs --output.
        #[arg(long, requires = "output")]
        plot: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub spec: PathBuf,
    #[arg(long)]
    pub shots: Option<u64>,
    /// Overrides the job's seed and the POVM_SIM_SEED environment variable.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report exact probabilities only; no shots are drawn.
    #[arg(long)]
    pub exact: bool,
    /// Calibration file for the readout-noise model.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long)]
    pub mitigate: bool,
    /// Condition on an outcome, given by label or zero-based index.
    #[arg(long, value_name = "J")]
    pub post_select: Option<String>,
    /// Reconstruct the output state by Pauli tomography.
    #[arg(long)]
    pub tomo: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate { spec } => {
            let job = Job::from_path(&spec)?;
            let report = validate(&job)?;
            let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
            text.push('\n');
            write_output(None, &text)?;
            if report.valid {
                Ok(())
            } else if !report.complete {
                Err(CliError::math(format!(
                    "completeness violated: max deviation {:e} exceeds {:e}",
                    report.max_deviation, report.tolerance
                )))
            } else if let Some(e) = report.effects.iter().find(|e| !e.psd) {
                Err(CliError::math(format!("effect {} is not positive semidefinite", e.label)))
            } else {
                Err(CliError::math(format!("input state norm {} differs from 1", report.state_norm)))
            }
        }
        Command::Simulate(args) => {
            let job = Job::from_path(&args.spec)?;
            let opts = SimulateOptions {
                shots: args.shots,
                seed: args.seed,
                exact: args.exact,
                noise: args.noise,
                mitigate: args.mitigate,
                post_select: args.post_select,
                tomo: args.tomo,
            };
            let doc = simulate(&job, &opts)?;
            write_output(args.output.as_deref(), &doc.to_json())
        }
        Command::ExportQasm { spec, output } => {
            let job = Job::from_path(&spec)?;
            write_output(output.as_deref(), &circuit_to_qasm(&compile(&job)?))
        }
        Command::Histogram { result, output, plot } => {
            let text = std::fs::read_to_string(&result).map_err(|e| CliError::io(&result, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let doc: ResultDocument = serde_path_to_error::deserialize(de)
                .map_err(|e| CliError::parse(format!("{}: {}", result.display(), schema_error(e))))?;
            if doc.analytic.len() != doc.outcomes.len() {
                return Err(CliError::parse(format!("{}: analytic and outcomes differ in length", result.display())));
            }
            write_output(output.as_deref(), &histogram_csv(&doc)?)?;
            if let (Some(plot), Some(csv_path)) = (plot, output) {
                let image = plot.with_extension("png");
                write_output(Some(&plot), &gnuplot_script(&doc, &csv_path, &image))?;
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs the command, prints any error, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("povm-sim: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // |+⟩⟨+| and |−⟩⟨−|.
    const EX1: &str = r#"{
        "kind": "povm", "name": "hadamard",
        "operators": [
            [[[0.5, 0], [0.5, 0]], [[0.5, 0], [0.5, 0]]],
            [[[0.5, 0], [-0.5, 0]], [[-0.5, 0], [0.5, 0]]]
        ],
        "state": "zero"
    }"#;

    #[test]
    fn parses_minimal_job() {
        let job = Job::from_json(EX1, None).unwrap();
        assert_eq!(job.labels, ["M1", "M2"]);
        assert_eq!(job.measurement.dim(), 2);
        assert_eq!(job.input_sha256.len(), 64);
        assert!(validate(&job).unwrap().valid);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad_row = EX1.replace("[[-0.5, 0], [0.5, 0]]", "[[-0.5, 0]]");
        let e = Job::from_json(&bad_row, None).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Parse);
        assert!(e.message.starts_with("operators[1][1]"), "{}", e.message);

        let bad_entry = EX1.replace("[[-0.5, 0], [0.5, 0]]", "[[-0.5, 0], [0.5]]");
        let e = Job::from_json(&bad_entry, None).unwrap_err();
        assert!(e.message.starts_with("operators[1][1][1]"), "{}", e.message);

        let unknown = EX1.replace("\"name\"", "\"nmae\"");
        assert!(Job::from_json(&unknown, None).unwrap_err().message.contains("nmae"));

        let preset = EX1.replace("\"zero\"", "\"plus\"");
        assert!(Job::from_json(&preset, None).unwrap_err().message.starts_with("state"));
    }

    #[test]
    fn incompleteness_is_a_math_error() {
        let spec = EX1.replace(",\n            [[[0.5, 0], [-0.5, 0]], [[-0.5, 0], [0.5, 0]]]", "");
        let job = Job::from_json(&spec, None).unwrap();
        let report = validate(&job).unwrap();
        assert!(!report.valid && !report.complete);
        assert!((report.max_deviation - 0.5).abs() < 1e-12);
        assert_eq!(simulate(&job, &SimulateOptions::default()).unwrap_err().kind, ErrorKind::Math);
    }

    #[test]
    fn exact_simulation_and_csv() {
        let job = Job::from_json(EX1, None).unwrap();
        let doc = simulate(&job, &SimulateOptions { exact: true, ..Default::default() }).unwrap();
        assert_eq!(doc.outcomes, ["0", "1"]);
        for p in &doc.analytic {
            assert!((p - 0.5).abs() < 1e-12);
        }
        let csv = histogram_csv(&doc).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("outcome,label,analytic,sampled,mitigated"));
        assert!(lines.next().unwrap().ends_with(",,"));
    }

    #[test]
    fn embed_places_levels_in_padded_basis() {
        let m = ComplexMatrix::identity(3);
        let e = embed(&m, &[3]);
        assert_eq!(e.rows(), 4);
        assert_eq!(e[(2, 2)], Complex64::new(1.0, 0.0));
        assert_eq!(e[(3, 3)], Complex64::new(0.0, 0.0));
    }
}
