use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ncptomo::channels::ProcessMatrix;
use ncptomo::correlations::{discord, discord_landscape, write_landscape_csv, Direction, DiscordResult, Grid};
use ncptomo::noise::{
    discriminate, expected_counts, mc_process_reconstruction, mc_state_reconstruction, ml_estimate, sample_counts,
    write_coordinates_csv, write_eigenvalues_csv, CountTable, Discrimination, MCReport, MlOptions, NoiseKind,
    NoiseModel,
};
use ncptomo::optics::{prep_from_settings, run_optics_experiment, settings, Method, OpticsReport};
use ncptomo::preparation::{run_sqpt_experiment, PreparationProcedure, ProcedureKind};
use ncptomo::tomography::{aapt, extend_on_second, faithfulness, sqpt_from_counts, ProcessReport};
use ncptomo::{CMatrix, TomographicBasis};

use crate::spec::{ProcessSpec, StateSpec, UnitarySpec};

/// Raised when an output file cannot be written; every other failure is
/// attributed to the input.
#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct OutputError {
    path: PathBuf,
    source: anyhow::Error,
}

impl OutputError {
    pub fn new(path: PathBuf, source: anyhow::Error) -> Self {
        OutputError { path, source }
    }
}

pub struct Run {
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("serializable");
        fs::write(&path, text + "\n").map_err(|e| OutputError { path, source: e.into() })?;
        Ok(())
    }

    fn write_with(&self, name: &str, f: impl FnOnce(BufWriter<File>) -> ncptomo::Result<()>) -> Result<()> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| OutputError {
            path: path.clone(),
            source: e.into(),
        })?;
        f(BufWriter::new(file)).map_err(|e| OutputError { path, source: e.into() })?;
        Ok(())
    }

    fn seed(&self, from_config: Option<u64>) -> u64 {
        self.seed.or(from_config).unwrap_or(0)
    }
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscordConfig {
    state: StateSpec,
    #[serde(default)]
    grid: Option<Grid>,
    #[serde(default = "default_true")]
    refine: bool,
}

#[derive(Serialize)]
struct DiscordOutput {
    #[serde(rename = "A:B")]
    ab: DiscordResult,
    #[serde(rename = "B:A")]
    ba: DiscordResult,
}

pub fn discord_cmd(cfg: DiscordConfig, ctx: &Run) -> Result<()> {
    let rho = cfg.state.build_valid()?;
    if rho.dim() != 4 {
        bail!("discord needs a two-qubit state, got dimension {}", rho.dim());
    }
    let grid = cfg.grid.unwrap_or_default();
    if grid.is_empty() {
        bail!("grid must have at least one point");
    }
    let mut results = Vec::with_capacity(2);
    for (dir, file) in [(Direction::AB, "landscape_ab.csv"), (Direction::BA, "landscape_ba.csv")] {
        let points = discord_landscape(&rho, dir, grid)?;
        ctx.write_with(file, |w| write_landscape_csv(w, &points))?;
        results.push(discord(&rho, dir, grid, cfg.refine)?);
    }
    ctx.write_json(
        "discord.json",
        &DiscordOutput {
            ab: results[0],
            ba: results[1],
        },
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqptConfig {
    initial_state: StateSpec,
    unitary: UnitarySpec,
    procedure: ProcedureKind,
}

fn write_eigen_list(ctx: &Run, eigenvalues: &[f64]) -> Result<()> {
    ctx.write_with("eigenvalues.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| ncptomo::Error::Parse(e.to_string());
        wr.write_record(["index", "eigenvalue"]).map_err(err)?;
        for (i, e) in eigenvalues.iter().enumerate() {
            wr.write_record([i.to_string(), format!("{e:.15e}")]).map_err(err)?;
        }
        wr.flush().map_err(|e| ncptomo::Error::Parse(e.to_string()))
    })
}

pub fn sqpt_cmd(cfg: SqptConfig, ctx: &Run) -> Result<()> {
    let gamma = cfg.initial_state.build_valid()?;
    let u = cfg.unitary.build()?;
    if gamma.dim() != u.rows() || gamma.dim() != 4 {
        bail!("initial state and coupling must both act on two qubits");
    }
    let report = run_sqpt_experiment(&gamma, &u, &PreparationProcedure::from_kind(cfg.procedure))?;
    write_eigen_list(ctx, &report.eigenvalues)?;
    ctx.write_json("report.json", &report)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AaptConfig {
    input_state: StateSpec,
    channel: ProcessSpec,
}

#[derive(Serialize)]
struct AaptOutput {
    #[serde(flatten)]
    process: ProcessReport,
    faithfulness: f64,
    max_error: f64,
}

pub fn aapt_cmd(cfg: AaptConfig, ctx: &Run) -> Result<()> {
    let input = cfg.input_state.build_valid()?;
    let truth = cfg.channel.build()?;
    if input.dim() != truth.dim() * truth.dim() {
        bail!("input state must act on two copies of the channel's space");
    }
    let output = extend_on_second(&truth, &input)?;
    let lambda = aapt(&output, &input)?;
    let out = AaptOutput {
        max_error: lambda.mat().max_diff(truth.mat()),
        faithfulness: faithfulness(&input)?,
        process: ProcessReport::new(&lambda)?,
    };
    write_eigen_list(ctx, &out.process.eigenvalues)?;
    ctx.write_json("report.json", &out)
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McMode {
    State,
    Process,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(u64),
    Many(Vec<u64>),
}

impl OneOrMany {
    fn values(&self) -> Vec<u64> {
        match self {
            OneOrMany::One(n) => vec![*n],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn default_kind() -> NoiseKind {
    NoiseKind::Poisson
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    mode: McMode,
    #[serde(default)]
    state: Option<StateSpec>,
    /// Second state whose cloud is compared against `state`.
    #[serde(default)]
    compare: Option<StateSpec>,
    #[serde(default)]
    process: Option<ProcessSpec>,
    shots: OneOrMany,
    trials: usize,
    #[serde(default = "default_kind")]
    kind: NoiseKind,
    #[serde(default)]
    ml: bool,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Comparison {
    shots: u64,
    #[serde(flatten)]
    result: Discrimination,
}

pub fn noise_cmd(cfg: NoiseConfig, ctx: &Run) -> Result<()> {
    let shots = cfg.shots.values();
    if shots.is_empty() || shots.contains(&0) {
        bail!("shots must be a positive number or a non-empty list of them");
    }
    if cfg.trials == 0 {
        bail!("trials must be at least 1");
    }
    let seed = ctx.seed(cfg.seed);
    let basis = TomographicBasis::standard(2)?;
    match cfg.mode {
        McMode::State => {
            let state = cfg.state.as_ref().context("state mode needs a `state`")?.build()?;
            let other = cfg.compare.as_ref().map(StateSpec::build).transpose()?;
            if cfg.ml || cfg.process.is_some() {
                bail!("`ml` and `process` only apply to process mode");
            }
            for rho in std::iter::once(&state).chain(&other) {
                if rho.dim() != 2 || !rho.mat().is_hermitian(1e-9) {
                    bail!("Monte Carlo states must be Hermitian 2x2 matrices");
                }
            }
            let mut reports: Vec<MCReport> = Vec::new();
            let mut comparisons = Vec::new();
            for &n in &shots {
                let model = NoiseModel::new(cfg.kind, n)?;
                let mc = mc_state_reconstruction(&state, &basis, model, cfg.trials, seed)?;
                ctx.write_with(&format!("samples_{n}.csv"), |w| {
                    write_coordinates_csv(w, &mc.report.coordinates, &mc.trials)
                })?;
                ctx.write_with(&format!("eigenvalues_{n}.csv"), |w| {
                    write_eigenvalues_csv(w, &mc.trials)
                })?;
                if let Some(o) = &other {
                    let b = mc_state_reconstruction(o, &basis, model, cfg.trials, seed.wrapping_add(1))?;
                    ctx.write_with(&format!("compare_samples_{n}.csv"), |w| {
                        write_coordinates_csv(w, &b.report.coordinates, &b.trials)
                    })?;
                    comparisons.push(Comparison {
                        shots: n,
                        result: discriminate(&mc.report, &b.report)?,
                    });
                }
                reports.push(mc.report);
            }
            ctx.write_json("reports.json", &reports)?;
            if other.is_some() {
                ctx.write_json("discrimination.json", &comparisons)?;
            }
            Ok(())
        }
        McMode::Process => {
            let truth = cfg
                .process
                .as_ref()
                .context("process mode needs a `process`")?
                .build()?;
            if cfg.state.is_some() || cfg.compare.is_some() {
                bail!("`state` and `compare` only apply to state mode");
            }
            if truth.dim() != 2 {
                bail!("Monte Carlo processes must act on one qubit");
            }
            expected_counts(&truth, &basis, &basis, 1)?;
            let mut reports = Vec::new();
            for &n in &shots {
                let model = NoiseModel::new(cfg.kind, n)?;
                let mc = mc_process_reconstruction(&truth, &basis, &basis, model, cfg.trials, seed)?;
                ctx.write_with(&format!("eigenvalues_{n}.csv"), |w| {
                    write_eigenvalues_csv(w, &mc.trials)
                })?;
                reports.push(mc.report);
            }
            ctx.write_json("reports.json", &reports)?;
            if cfg.ml {
                let n = *shots.last().expect("non-empty");
                let model = NoiseModel::new(cfg.kind, n)?;
                let counts = sample_counts(&expected_counts(&truth, &basis, &basis, n)?, model, seed);
                let table = CountTable::observed(&counts, &basis, &basis)?;
                match ml_estimate(&table, &basis, &basis, None, MlOptions::default()) {
                    Ok(est) => ctx.write_json("ml.json", &est)?,
                    Err(ncptomo::Error::NotConverged { iterations, best }) => {
                        ctx.write_json("ml.json", &best)?;
                        return Err(ncptomo::Error::NotConverged { iterations, best }.into());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(())
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseOptions {
    #[serde(default = "default_kind")]
    kind: NoiseKind,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsConfig {
    initial_state: StateSpec,
    method: Method,
    #[serde(default)]
    shots: Option<u64>,
    #[serde(default)]
    noise: Option<NoiseOptions>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct SettingRow {
    target: String,
    theta_p: f64,
    theta_h: f64,
    theta_q: f64,
    z_shift: f64,
    realized_phase: f64,
    fidelity: f64,
}

#[derive(Serialize)]
struct NoisyRun {
    shots: u64,
    kind: NoiseKind,
    seed: u64,
    lambda: CMatrix,
    eigenvalues: Vec<f64>,
    cp: bool,
}

#[derive(Serialize)]
struct OpticsOutput {
    #[serde(flatten)]
    report: OpticsReport,
    settings: Vec<SettingRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noisy: Option<NoisyRun>,
}

pub fn optics_cmd(cfg: OpticsConfig, ctx: &Run) -> Result<()> {
    let gamma = cfg.initial_state.build_valid()?;
    if gamma.dim() != 4 {
        bail!("the optics experiment needs a two-qubit initial state");
    }
    if cfg.shots == Some(0) {
        bail!("shots must be at least 1");
    }
    if cfg.noise.is_some() && cfg.shots.is_none() {
        bail!("`noise` needs `shots`");
    }
    let seed = ctx.seed(cfg.seed);
    let report = run_optics_experiment(&gamma, cfg.method)?;
    let settings = settings(cfg.method)
        .iter()
        .map(|s| {
            let p = prep_from_settings(s)?;
            Ok(SettingRow {
                target: s.target.to_string(),
                theta_p: s.theta_p,
                theta_h: s.theta_h,
                theta_q: s.theta_q,
                z_shift: s.z_shift,
                realized_phase: p.realized_phase,
                fidelity: p.fidelity,
            })
        })
        .collect::<ncptomo::Result<Vec<_>>>()?;
    let noisy = match cfg.shots {
        None => None,
        Some(n) => {
            let kind = cfg.noise.map_or(NoiseKind::Poisson, |o| o.kind);
            let basis = TomographicBasis::standard(2)?;
            let counts = sample_counts(
                &expected_counts(&report.lambda, &basis, &basis, n)?,
                NoiseModel::new(kind, n)?,
                seed,
            );
            let l: ProcessMatrix = sqpt_from_counts(&counts, &basis, &basis)?;
            let eigenvalues = l.eigenvalues()?;
            Some(NoisyRun {
                shots: n,
                kind,
                seed,
                cp: eigenvalues.iter().all(|&e| e >= -1e-9),
                eigenvalues,
                lambda: l.into_mat(),
            })
        }
    };
    write_eigen_list(ctx, &report.eigenvalues)?;
    ctx.write_json(
        "report.json",
        &OpticsOutput {
            report,
            settings,
            noisy,
        },
    )
}
