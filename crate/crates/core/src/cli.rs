//! Batch front end: `sheetspde <command> [--config FILE] [--seed N] [--out DIR] [--paths N] [--h STEP]`.
//!
//! A run parses and validates the TOML configuration, fills in command defaults,
//! writes the effective configuration, the data files and `manifest.json` into the
//! output directory, and removes whatever it wrote if a later step fails.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical criterion violated
//! (for instance `a + b != 0` where a function-valued solution is required), 4 I/O.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    build_z, existence_check, holder_estimate, partition_sup_check, quadlem_check, qv_study, HolderReport,
    QuadLemMode, QuadLemReport, QuadLemSetup, QvSetup, QvStudy,
};
use crate::error::{Error, Result};
use crate::gaussian_field::{diagonal_noise, sample_sheet, DiagonalPath, RectRegion};
use crate::grid_calculus::{bump_battery, CoefSpec, CoefficientSet, GridSpec, ScalarField};
use crate::io::write_table_csv;
use crate::operators::{weak_residual_theorem1, weak_residual_transport, OperatorD, ResidualRecord};
use crate::rng::batch_seeds;
use crate::solver::{
    solve_b_zero, solve_ito_form, solve_theorem2, transport_solution, CurveSpec, InitialCurve, NoiseTrace,
    SolutionField, STRUCTURE_TOL,
};
use crate::stats::median;
use crate::yield_curve::{compare_models, simulate_yield, MsParams, YieldScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Qv,
    Weakform,
    Lemmas,
    Yield,
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Qv => "qv",
            Command::Weakform => "weakform",
            Command::Lemmas => "lemmas",
            Command::Yield => "yield",
            Command::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefConfig {
    pub a: CoefSpec,
    /// Defaults to `-a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<CoefSpec>,
    #[serde(default = "CoefSpec::zero")]
    pub c: CoefSpec,
}

impl CoefConfig {
    pub fn coefficients(&self) -> CoefficientSet {
        let b = self.b.clone().unwrap_or_else(|| self.a.negated());
        CoefficientSet::from_specs(&self.a, &b, &self.c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative tolerance for quadratic-variation medians.
    pub qv_relative: f64,
    /// Standard errors allowed for distributional checks.
    pub sigmas: f64,
    /// Deterministic comparisons.
    pub deterministic: f64,
    /// `sup |a + b|` accepted by the existence check.
    pub existence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            qv_relative: 0.1,
            sigmas: 3.0,
            deterministic: 1e-9,
            existence: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimFormula {
    #[default]
    Theorem2,
    Ito,
    BZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub formula: SimFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QvConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub x_lo: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_hi: Option<f64>,
    pub n_values: Vec<usize>,
    pub holder_levels: Vec<usize>,
}

impl Default for QvConfig {
    fn default() -> Self {
        QvConfig {
            t: None,
            x_lo: 0.0,
            x_hi: None,
            n_values: vec![16, 32, 64, 128, 256],
            holder_levels: vec![32, 64, 128, 256],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakformConfig {
    /// Coarsening factors relative to `grid.h`; noise is drawn once at `grid.h`.
    pub factors: Vec<usize>,
}

impl Default for WeakformConfig {
    fn default() -> Self {
        WeakformConfig { factors: vec![4, 2, 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmasConfig {
    pub diagonal_region: RectRegion,
    pub diagonal_n: Vec<usize>,
    pub diagonal_seeds: usize,
    pub disjoint_f: RectRegion,
    pub disjoint_g: RectRegion,
    pub disjoint_n: Vec<usize>,
    pub sup_region: RectRegion,
    pub sup_n: Vec<usize>,
    pub kappa: f64,
}

impl Default for LemmasConfig {
    fn default() -> Self {
        let rect = |t_lo, t_hi, x_lo, x_hi| RectRegion { t_lo, t_hi, x_lo, x_hi };
        LemmasConfig {
            diagonal_region: rect(0.0, 1.0, 0.0, 1.0),
            diagonal_n: vec![8, 32, 128],
            diagonal_seeds: 1000,
            disjoint_f: rect(0.0, 0.5, 0.5, 1.5),
            disjoint_g: rect(0.0, 0.75, 0.75, 1.75),
            disjoint_n: vec![8, 32, 128],
            sup_region: rect(0.0, 1.0, 0.0, 1.0),
            sup_n: vec![4, 16, 64, 256],
            kappa: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct YieldConfig {
    pub t_slices: Vec<f64>,
    /// Write every path as `paths/path_NNNNN.csv`.
    pub keep_paths: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_slices: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maturities: Option<Vec<f64>>,
    pub ms: MsParams,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            t_slices: None,
            maturities: None,
            ms: MsParams {
                ms_alpha: CoefSpec::zero(),
                sigma: CoefSpec::Const { value: 0.01 },
            },
        }
    }
}

fn default_n_seeds() -> usize {
    50
}

fn default_n_paths() -> usize {
    1000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Full run configuration. Sections that do not concern `command` are kept (and echoed)
/// but ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub trace: NoiseTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefConfig>,
    #[serde(default)]
    pub r0: CurveSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub qv: QvConfig,
    #[serde(default)]
    pub weakform: WeakformConfig,
    #[serde(default)]
    pub lemmas: LemmasConfig,
    #[serde(default, rename = "yield")]
    pub yield_: YieldConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

/// Common misspellings mapped onto configuration keys.
const ALIASES: &[(&str, &str)] = &[
    ("stepsize", "h"),
    ("step", "h"),
    ("step_size", "h"),
    ("dt", "h"),
    ("dx", "h"),
    ("seeds", "n_seeds"),
    ("paths", "n_paths"),
    ("num_paths", "n_paths"),
    ("output", "out"),
    ("out_dir", "out"),
    ("T", "t_max"),
    ("X", "x_max"),
    ("coeffs", "coefficients"),
    ("type", "kind"),
];

fn backticked(s: &str) -> Vec<&str> {
    s.split('`').skip(1).step_by(2).collect()
}

/// Suggestion for an unknown key, from the alias table or by string similarity.
fn suggest(key: &str, expected: &[&str]) -> Option<String> {
    if let Some((_, target)) = ALIASES.iter().find(|(k, _)| *k == key) {
        if expected.is_empty() || expected.contains(target) {
            return Some((*target).to_string());
        }
    }
    expected
        .iter()
        .map(|e| (strsim::jaro_winkler(key, e), e))
        .filter(|(score, _)| *score >= 0.75)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, e)| (*e).to_string())
}

/// Formats a TOML error against `doc`, whose first `skip` bytes are not part of the
/// user's file.
fn config_error(err: toml::de::Error, doc: &str, skip: usize) -> Error {
    let message = err.message().trim_end().to_string();
    let mut msg = match err.span() {
        Some(span) if span.start >= skip => {
            let before = &doc[skip..span.start];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            let key = doc[span.clone()].trim();
            format!("line {line}, column {col} (`{key}`): {message}")
        }
        _ => message.clone(),
    };
    if let Some(pos) = message.find("unknown field `") {
        let names = backticked(&message[pos..]);
        if let Some((key, expected)) = names.split_first() {
            if let Some(s) = suggest(key, expected) {
                msg.push_str(&format!("; did you mean `{s}`?"));
            }
        }
    }
    Error::Config(msg)
}

/// Parses a configuration document; `command` fills in a missing `command` key and must
/// agree with one that is present.
pub fn parse_config_for(text: &str, command: Option<Command>) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| config_error(e, text, 0))?;
    let given = table.get("command").and_then(|v| v.as_str());
    let (doc, skip) = match (command, given) {
        (Some(cmd), Some(given)) if given != cmd.name() => {
            return Err(Error::Config(format!(
                "config file is for command `{given}` but `{}` was requested",
                cmd.name()
            )))
        }
        (Some(cmd), None) => {
            let prefix = format!("command = \"{}\"\n", cmd.name());
            let skip = prefix.len();
            (prefix + text, skip)
        }
        _ => (text.to_string(), 0),
    };
    let mut cfg: RunConfig = toml::from_str(&doc).map_err(|e| config_error(e, &doc, skip))?;
    cfg.materialize();
    Ok(cfg)
}

/// Parses and materializes a configuration document that names its command.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_for(text, None)
}

/// Serializes a configuration as TOML.
pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

impl RunConfig {
    pub fn defaults(command: Command) -> RunConfig {
        let mut cfg: RunConfig = toml::from_str(&format!("command = \"{}\"", command.name())).expect("defaults parse");
        cfg.materialize();
        cfg
    }

    fn default_grid(&self) -> GridSpec {
        let h = match self.command {
            Command::Qv | Command::Lemmas => 1.0 / 256.0,
            Command::Simulate | Command::Weakform => 0.01,
            Command::Yield | Command::Compare => 0.05,
        };
        GridSpec::new(1.0, 1.0, h).expect("default grid")
    }

    fn default_coefficients(&self) -> CoefConfig {
        match self.command {
            Command::Qv => CoefConfig {
                a: CoefSpec::Const { value: 1.0 },
                b: Some(CoefSpec::zero()),
                c: CoefSpec::zero(),
            },
            Command::Simulate | Command::Weakform => CoefConfig {
                a: CoefSpec::T { scale: 1.0 },
                b: None,
                c: CoefSpec::zero(),
            },
            Command::Lemmas | Command::Yield | Command::Compare => CoefConfig {
                a: CoefSpec::Const { value: 0.01 },
                b: None,
                c: CoefSpec::zero(),
            },
        }
    }

    /// Replaces every optional value with its concrete default.
    pub fn materialize(&mut self) {
        let grid = self.grid();
        self.grid = Some(grid);
        if self.coefficients.is_none() {
            self.coefficients = Some(self.default_coefficients());
        }
        let coefs = self.coefficients.as_mut().expect("set above");
        if coefs.b.is_none() {
            coefs.b = Some(coefs.a.negated());
        }
        self.qv.t.get_or_insert(grid.t_max());
        self.qv.x_hi.get_or_insert(grid.x_max());
        let h = grid.h();
        self.compare
            .t_slices
            .get_or_insert_with(|| vec![(grid.n_t() / 2) as f64 * h]);
        self.compare
            .maturities
            .get_or_insert_with(|| vec![0.0, (grid.n_x() / 2) as f64 * h, grid.x_max()]);
    }

    pub fn grid(&self) -> GridSpec {
        self.grid.unwrap_or_else(|| self.default_grid())
    }

    pub fn coefficient_set(&self) -> CoefficientSet {
        self.coefficients
            .clone()
            .unwrap_or_else(|| self.default_coefficients())
            .coefficients()
    }

    /// Applies command-line overrides; `h` replaces the grid step.
    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(paths) = o.paths {
            self.n_paths = paths;
        }
        if let Some(h) = o.h {
            let g = self.grid();
            self.grid = Some(GridSpec::new(g.t_max(), g.x_max(), h)?);
        }
        Ok(())
    }

    pub fn scenario(&self) -> YieldScenario {
        let c = self.coefficients.clone().unwrap_or_else(|| self.default_coefficients());
        YieldScenario {
            grid: self.grid(),
            r0: self.r0.clone(),
            vol: c.a,
            carry: c.c,
            n_paths: self.n_paths,
            seed: self.seed,
            t_slices: self.yield_.t_slices.clone(),
            trace: self.trace,
            keep_paths: self.yield_.keep_paths,
        }
    }

    fn require_existence(&self) -> Result<()> {
        let report = existence_check(&self.coefficient_set(), &self.grid(), self.tolerances.existence);
        if !report.exists {
            return Err(Error::ExistenceViolated {
                deviation: report.max_deviation,
                t: report.at.0,
                x: report.at.1,
            });
        }
        Ok(())
    }

    fn require_b_zero(&self) -> Result<()> {
        let g = self.grid();
        let c = self.coefficient_set();
        for i in 0..=g.n_t() {
            for j in 0..=g.n_x() {
                let b = c.b(g.t(i), g.x(j));
                if b.abs() > STRUCTURE_TOL {
                    return Err(Error::NonZeroDrift {
                        deviation: b.abs(),
                        t: g.t(i),
                        x: g.x(j),
                    });
                }
            }
        }
        Ok(())
    }

    /// All checks that can fail before any sampling starts.
    pub fn validate(&self) -> Result<()> {
        let g = self.grid();
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::Config(format!("`{what}` must be at least 1")))
            } else {
                Ok(())
            }
        };
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} does not fit a TOML integer (max {})", self.seed, i64::MAX)));
        }
        positive(self.n_seeds, "n_seeds")?;
        positive(self.n_paths, "n_paths")?;
        self.coefficient_set()
            .validate(&g, 1e-4)
            .map_err(|e| Error::Config(format!("coefficients: {e}")))?;
        let span_steps = |lo: f64, hi: f64, what: &str| -> Result<usize> {
            let a = g.x_index(lo).map_err(|e| Error::Config(format!("{what}: {e}")))?;
            let b = g.x_index(hi).map_err(|e| Error::Config(format!("{what}: {e}")))?;
            if b <= a {
                return Err(Error::Config(format!("{what}: empty range [{lo}, {hi}]")));
            }
            Ok(b - a)
        };
        match self.command {
            Command::Simulate => match self.simulate.formula {
                SimFormula::Theorem2 | SimFormula::Ito => self.require_existence()?,
                SimFormula::BZero => self.require_b_zero()?,
            },
            Command::Qv => {
                let t = self.qv.t.unwrap_or(g.t_max());
                g.t_index(t).map_err(|e| Error::Config(format!("qv.t: {e}")))?;
                let span = span_steps(self.qv.x_lo, self.qv.x_hi.unwrap_or(g.x_max()), "qv range")?;
                for (list, what) in [(&self.qv.n_values, "qv.n_values"), (&self.qv.holder_levels, "qv.holder_levels")] {
                    if let Some(n) = list.iter().find(|n| **n < 2 || span % **n != 0) {
                        return Err(Error::Config(format!(
                            "{what}: {n} does not divide the {span} lattice steps of the range"
                        )));
                    }
                }
                if self.qv.holder_levels.len() < 3 {
                    return Err(Error::Config("qv.holder_levels needs at least 3 levels".into()));
                }
            }
            Command::Weakform => {
                if self.weakform.factors.is_empty() {
                    return Err(Error::Config("weakform.factors is empty".into()));
                }
                for &k in &self.weakform.factors {
                    g.coarsen(k).map_err(|e| Error::Config(format!("weakform.factors: {e}")))?;
                }
                let c = self.coefficient_set();
                if !existence_check(&c, &g, self.tolerances.existence).exists {
                    self.require_b_zero().map_err(|_| {
                        let r = existence_check(&c, &g, self.tolerances.existence);
                        Error::ExistenceViolated {
                            deviation: r.max_deviation,
                            t: r.at.0,
                            x: r.at.1,
                        }
                    })?;
                }
            }
            Command::Lemmas => {
                let l = &self.lemmas;
                positive(l.diagonal_seeds, "lemmas.diagonal_seeds")?;
                let checks = [
                    (l.diagonal_region, &l.diagonal_n, "lemmas.diagonal"),
                    (l.disjoint_f, &l.disjoint_n, "lemmas.disjoint_f"),
                    (l.disjoint_g, &l.disjoint_n, "lemmas.disjoint_g"),
                    (l.sup_region, &l.sup_n, "lemmas.sup"),
                ];
                for (region, ns, what) in checks {
                    for &n in ns {
                        crate::diagnostics::PartitionScheme::slabs(region, n, &g)
                            .map_err(|e| Error::Config(format!("{what}: {e}")))?;
                    }
                }
            }
            Command::Yield => {
                self.require_existence()?;
                self.scenario().validate().map_err(|e| Error::Config(format!("yield: {e}")))?;
            }
            Command::Compare => {
                self.require_existence()?;
                if self.n_paths < 2 {
                    return Err(Error::Config("compare needs n_paths >= 2".into()));
                }
                for &t in self.compare.t_slices.iter().flatten() {
                    let i = g.t_index(t).map_err(|e| Error::Config(format!("compare.t_slices: {e}")))?;
                    if i >= g.n_t() {
                        return Err(Error::Config(format!("compare.t_slices: no increment after t = {t}")));
                    }
                }
                for &x in self.compare.maturities.iter().flatten() {
                    g.x_index(x).map_err(|e| Error::Config(format!("compare.maturities: {e}")))?;
                }
            }
        }
        Ok(())
    }

    /// Seeds whose streams feed the run's outputs.
    pub fn seeds(&self) -> Vec<u64> {
        match self.command {
            Command::Simulate => vec![self.seed],
            Command::Yield | Command::Compare => batch_seeds(self.seed, self.n_paths),
            Command::Qv | Command::Weakform => batch_seeds(self.seed, self.n_seeds),
            Command::Lemmas => batch_seeds(self.seed, self.n_seeds.max(self.lemmas.diagonal_seeds)),
        }
    }
}

/// Command-line overrides of configuration values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paths: Option<usize>,
    pub h: Option<f64>,
}

#[derive(Debug, Parser)]
#[command(name = "sheetspde", version, about = "Brownian-sheet SPDE simulations and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Lattice step.
    #[arg(long, global = true)]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum CliCommand {
    /// Solve once and write the solution, noise and transport baseline.
    Simulate,
    /// Quadratic variation and Hölder diagnostics of the existence criterion.
    Qv,
    /// Weak-form residuals under lattice refinement.
    Weakform,
    /// Monte Carlo checks of the random-measure lemmas.
    Lemmas,
    /// Forward-curve ensemble statistics.
    Yield,
    /// Increment correlations against the single-driver model.
    Compare,
}

impl From<CliCommand> for Command {
    fn from(c: CliCommand) -> Self {
        match c {
            CliCommand::Simulate => Command::Simulate,
            CliCommand::Qv => Command::Qv,
            CliCommand::Weakform => Command::Weakform,
            CliCommand::Lemmas => Command::Lemmas,
            CliCommand::Yield => Command::Yield,
            CliCommand::Compare => Command::Compare,
        }
    }
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ExistenceViolated { .. } | Error::NonZeroDrift { .. } | Error::NonFinite { .. } => 3,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 4,
        _ => 2,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match exit_code(err) {
        3 => "criterion",
        4 => "io",
        _ => "config",
    }
}

/// Files written by a run, removed again if the run fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(path.clone());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn names(&self) -> Vec<String> {
        self.files
            .iter()
            .map(|p| p.strip_prefix(&self.dir).unwrap_or(p).display().to_string())
            .collect()
    }

    fn cleanup(&self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        let _ = fs::remove_dir(self.dir.join("paths"));
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub version: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    pub wall_time_seconds: f64,
    pub timestamp: String,
}

/// Outcome of a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out: PathBuf,
    pub files: Vec<String>,
}

/// Validates `cfg`, executes it and writes every artifact into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = Outputs::new(&cfg.out)?;
    let result = (|| {
        out.text("config.toml", &to_toml(cfg)?)?;
        match cfg.command {
            Command::Simulate => run_simulate(cfg, &mut out),
            Command::Qv => run_qv(cfg, &mut out),
            Command::Weakform => run_weakform(cfg, &mut out),
            Command::Lemmas => run_lemmas(cfg, &mut out),
            Command::Yield => run_yield(cfg, &mut out),
            Command::Compare => run_compare(cfg, &mut out),
        }?;
        let mut files = out.names();
        files.push("manifest.json".into());
        let manifest = Manifest {
            command: cfg.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            seeds: cfg.seeds(),
            files: files.clone(),
            wall_time_seconds: start.elapsed().as_secs_f64(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        out.json("manifest.json", &manifest)?;
        Ok(files)
    })();
    match result {
        Ok(files) => Ok(RunSummary {
            out: cfg.out.clone(),
            files,
        }),
        Err(e) => {
            out.cleanup();
            Err(e)
        }
    }
}

/// Validated `simulate` run without file output: the noise path and the solution.
pub fn solve_config(cfg: &RunConfig) -> Result<(DiagonalPath, SolutionField)> {
    if cfg.command != Command::Simulate {
        return Err(Error::Config(format!("expected a simulate config, got `{}`", cfg.command.name())));
    }
    cfg.validate()?;
    let g = cfg.grid();
    let coeffs = cfg.coefficient_set();
    let r0 = InitialCurve::from_spec(&cfg.r0);
    let noise = diagonal_noise(&sample_sheet(&g, cfg.seed));
    let sol = match cfg.simulate.formula {
        SimFormula::Theorem2 => solve_theorem2(&coeffs, &r0, &noise, cfg.trace)?,
        SimFormula::Ito => solve_ito_form(&coeffs, &r0, &noise, cfg.trace)?,
        SimFormula::BZero => solve_b_zero(&coeffs, &|x| r0.value(x), noise.field())?,
    };
    Ok((noise, sol))
}

fn run_simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let g = cfg.grid();
    let coeffs = cfg.coefficient_set();
    let r0 = InitialCurve::from_spec(&cfg.r0);
    let (noise, sol) = solve_config(cfg)?;
    sol.write_csv(out.create("solution.csv")?)?;
    transport_solution(&g, &r0)?.write_csv(out.create("transport.csv")?)?;
    noise.write_csv(out.create("noise.csv")?)?;
    let records = battery_residuals(&coeffs, &sol.field, noise.field(), cfg.seed, cfg.simulate.formula)?;
    out.json("residuals.json", &records)
}

fn battery_residuals(
    coeffs: &CoefficientSet,
    sol: &ScalarField,
    w: &ScalarField,
    seed: u64,
    formula: SimFormula,
) -> Result<Vec<ResidualRecord>> {
    let g = *sol.grid();
    let op = OperatorD::new(coeffs.clone()).with_fd(crate::grid_calculus::default_fd_step(g.h()), Some(g.coefficient_bounds()));
    bump_battery(&g)
        .iter()
        .enumerate()
        .map(|(k, tf)| {
            let residual = match formula {
                SimFormula::BZero => weak_residual_theorem1(sol, w, &op, tf)?,
                _ => weak_residual_transport(sol, w, &op, tf)?,
            };
            Ok(ResidualRecord {
                h: g.h(),
                seed,
                test_function_id: k,
                residual,
                partials: op.partial_source(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QvOutput {
    study: QvStudy,
    /// Median Hölder exponent across seeds (`None` if every seed was degenerate).
    holder_median_exponent: Option<f64>,
    holder: Vec<HolderReport>,
    within_tolerance: bool,
    within_tolerance_characteristic: bool,
}

fn run_qv(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let g = cfg.grid();
    let coeffs = cfg.coefficient_set();
    let setup = QvSetup {
        t: cfg.qv.t.unwrap_or(g.t_max()),
        x_lo: cfg.qv.x_lo,
        x_hi: cfg.qv.x_hi.unwrap_or(g.x_max()),
        n_values: cfg.qv.n_values.clone(),
        trace: cfg.trace,
    };
    let seeds = cfg.seeds();
    let study = qv_study(&coeffs, &g, &setup, &seeds)?;
    let t_index = g.t_index(setup.t)?;
    let holder: Vec<HolderReport> = seeds
        .par_iter()
        .map(|&s| {
            let z = build_z(&coeffs, &sample_sheet(&g, s), t_index, cfg.trace)?;
            holder_estimate(&z, setup.x_lo, setup.x_hi, &cfg.qv.holder_levels)
        })
        .collect::<Result<_>>()?;
    let finite: Vec<f64> = holder.iter().filter_map(|r| r.estimated_exponent).collect();
    let last = study.reports.last().expect("validated n_values");
    let tol = cfg.tolerances.qv_relative;
    let rel_char = if last.characteristic_limit == 0.0 {
        last.empirical_qv
    } else {
        (last.empirical_qv - last.characteristic_limit).abs() / last.characteristic_limit
    };
    write_qv_rows(out.create("qv_convergence.csv")?, &study.rows)?;
    let report = QvOutput {
        within_tolerance: last.relative_error <= tol,
        within_tolerance_characteristic: rel_char <= tol,
        holder_median_exponent: (!finite.is_empty()).then(|| median(&finite)),
        holder,
        study,
    };
    out.json("qv_report.json", &report)
}

fn write_qv_rows<W: Write>(w: W, rows: &[(usize, u64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["n", "seed", "qv"])?;
    for (n, s, v) in rows {
        w.write_record([n.to_string(), s.to_string(), crate::io::fmt_num(*v)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeakformLevel {
    h: f64,
    median_residual: f64,
    /// Same statistic for `a W + r0`, the solution without its time integral.
    median_deleted_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeakformOutput {
    formula: SimFormula,
    levels: Vec<WeakformLevel>,
    records: Vec<ResidualRecord>,
}

fn run_weakform(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let g = cfg.grid();
    let coeffs = cfg.coefficient_set();
    let r0 = InitialCurve::from_spec(&cfg.r0);
    let formula = if existence_check(&coeffs, &g, cfg.tolerances.existence).exists {
        SimFormula::Theorem2
    } else {
        SimFormula::BZero
    };
    let seeds = cfg.seeds();
    // Per seed and level: (records, deleted-term residuals).
    let per_seed: Vec<Vec<(Vec<ResidualRecord>, Vec<f64>)>> = seeds
        .par_iter()
        .map(|&seed| {
            let fine = diagonal_noise(&sample_sheet(&g, seed));
            cfg.weakform
                .factors
                .iter()
                .map(|&k| {
                    let path = fine.restrict(k)?;
                    let lg = *path.grid();
                    let w = path.field();
                    let sol = match formula {
                        SimFormula::BZero => solve_b_zero(&coeffs, &|x| r0.value(x), w)?,
                        _ => solve_theorem2(&coeffs, &r0, &path, cfg.trace)?,
                    };
                    let recs = battery_residuals(&coeffs, &sol.field, w, seed, formula)?;
                    let deleted = if formula == SimFormula::Theorem2 {
                        let lead = ScalarField::from_fn(lg, |t, x| 0.0 * t + r0.value(t + x))?;
                        let lead = ScalarField::new(
                            lg,
                            ndarray::Array2::from_shape_fn(lg.shape(), |(i, j)| {
                                coeffs.a(lg.t(i), lg.x(j)) * path.w(i, j) + lead.get(i, j)
                            }),
                        )?;
                        battery_residuals(&coeffs, &lead, w, seed, formula)?
                            .into_iter()
                            .map(|r| r.residual)
                            .collect()
                    } else {
                        Vec::new()
                    };
                    Ok((recs, deleted))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut levels = Vec::new();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (l, &k) in cfg.weakform.factors.iter().enumerate() {
        let h = g.h() * k as f64;
        let res: Vec<f64> = per_seed.iter().flat_map(|s| s[l].0.iter().map(|r| r.residual)).collect();
        let del: Vec<f64> = per_seed.iter().flat_map(|s| s[l].1.iter().copied()).collect();
        let level = WeakformLevel {
            h,
            median_residual: median(&res),
            median_deleted_residual: (!del.is_empty()).then(|| median(&del)),
        };
        rows.push(vec![h, level.median_residual, level.median_deleted_residual.unwrap_or(f64::NAN)]);
        levels.push(level);
        records.extend(per_seed.iter().flat_map(|s| s[l].0.iter().cloned()));
    }
    write_table_csv(
        out.create("weakform_convergence.csv")?,
        &["h", "median_residual", "median_deleted_residual"],
        &rows,
    )?;
    out.json(
        "residuals.json",
        &WeakformOutput {
            formula,
            levels,
            records,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LemmasOutput {
    diagonal: QuadLemReport,
    disjoint: QuadLemReport,
    partition_sup: Vec<(usize, f64, f64)>,
}

fn run_lemmas(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let g = cfg.grid();
    let l = &cfg.lemmas;
    let one = |_: f64, _: f64| 1.0;
    let diagonal = quadlem_check(
        &g,
        &one,
        &one,
        &QuadLemSetup {
            f: l.diagonal_region,
            g: l.diagonal_region,
            n_values: l.diagonal_n.clone(),
            mode: QuadLemMode::Diagonal,
        },
        &batch_seeds(cfg.seed, l.diagonal_seeds),
    )?;
    let seeds = batch_seeds(cfg.seed, cfg.n_seeds);
    let disjoint = quadlem_check(
        &g,
        &one,
        &one,
        &QuadLemSetup {
            f: l.disjoint_f,
            g: l.disjoint_g,
            n_values: l.disjoint_n.clone(),
            mode: QuadLemMode::Disjoint,
        },
        &seeds,
    )?;
    let sup = partition_sup_check(&g, l.sup_region, l.kappa, &l.sup_n, &seeds)?;
    let mut w = csv::Writer::from_writer(out.create("partition_sup.csv")?);
    w.write_record(["n", "seed", "sup"])?;
    for level in &sup.levels {
        for (s, v) in seeds.iter().zip(&level.sups) {
            w.write_record([level.n.to_string(), s.to_string(), crate::io::fmt_num(*v)])?;
        }
    }
    w.flush()?;
    drop(w);
    out.json(
        "lemmas_report.json",
        &LemmasOutput {
            diagonal,
            disjoint,
            partition_sup: sup.levels.iter().map(|l| (l.n, l.median_sup, l.hypothesis)).collect(),
        },
    )
}

fn run_yield(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let sc = cfg.scenario();
    let res = simulate_yield(&sc)?;
    res.write_csv(out.create("yield_slices.csv")?)?;
    out.json("yield_stats.json", &res.slices)?;
    if let Some(paths) = &res.paths {
        for (k, p) in paths.iter().enumerate() {
            p.write_csv(out.create(&format!("paths/path_{k:05}.csv"))?)?;
        }
    }
    Ok(())
}

fn run_compare(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let sc = cfg.scenario();
    let t_slices = cfg.compare.t_slices.clone().unwrap_or_default();
    let maturities = cfg.compare.maturities.clone().unwrap_or_default();
    let rep = compare_models(&sc, &cfg.compare.ms, &t_slices, &maturities)?;
    out.json("compare_report.json", &rep)
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    status: &'a str,
    exit_code: i32,
    kind: &'a str,
    message: String,
}

fn report_error(err: &Error) -> i32 {
    let code = exit_code(err);
    let rec = ErrorRecord {
        status: "error",
        exit_code: code,
        kind: error_kind(err),
        message: err.to_string(),
    };
    eprintln!("{}", serde_json::to_string(&rec).expect("error record serializes"));
    code
}

/// Loads the configuration for a parsed command line.
pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let command = Command::from(cli.command);
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_config_for(&text, Some(command))?
        }
        None => RunConfig::defaults(command),
    };
    cfg.apply_overrides(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        paths: cli.paths,
        h: cli.h,
    })
    .map_err(|e| Error::Config(format!("--h: {e}")))?;
    Ok(cfg)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match load_config(&cli).and_then(|cfg| run(&cfg)) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::json!({ "status": "ok", "out": summary.out, "files": summary.files })
            );
            0
        }
        Err(e) => report_error(&e),
    }
}
