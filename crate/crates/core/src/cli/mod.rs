//! Command-line orchestration: configuration, dispatch, result emission.
//!
//! Exit status is 0 on success, 1 when the configuration does not validate
//! and 2 when a numerical step fails. Result tables depend only on the
//! configuration and the master seed; the manifest adds timestamps.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::convergence::{convergence_study, ConvergenceReport, DirichletProblem, LimitMatrix, MeshPolicy};
use crate::corrector::{homogenize, voigt_reuss_bounds};
use crate::fields::{write_field, write_provenance};
use crate::fields::{CoefficientField, GridSpec};
use crate::measure::{estimate_law, sample_realization, ComponentGenerator, ComponentLabel, StationaryMeasureSpec};
use crate::resonance::{brute_force_kernel, is_saturated, kernel_basis};
use crate::rng::{Purpose, SeedStream};
use crate::table::{fmt_f64, Table};

pub use config::{canonical_json, parse_config, Command, Diagnostic, ExperimentConfig};

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "STOHOM_THREADS";
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandArg {
    Homogenize,
    Law,
    Resonance,
    Converge,
    SampleField,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Homogenize => Command::Homogenize,
            CommandArg::Law => Command::Law,
            CommandArg::Resonance => Command::Resonance,
            CommandArg::Converge => Command::Converge,
            CommandArg::SampleField => Command::SampleField,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "stohom", version, about = "Stochastic homogenization experiments")]
pub struct Args {
    pub command: CommandArg,
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Replace `master_seed` from the config.
    #[arg(long)]
    pub seed_override: Option<u64>,
    /// Worker threads; falls back to STOHOM_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum RunError {
    Validation(Vec<Diagnostic>),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 1,
            RunError::Numerical(_) | RunError::Io(_) => 2,
        }
    }

    fn numerical(e: impl std::fmt::Display) -> Self {
        RunError::Numerical(e.to_string())
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        RunError::Io(format!("{}: {e}", path.display()))
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Validation(ds) => {
                writeln!(f, "configuration invalid:")?;
                for d in ds {
                    writeln!(f, "  {d}")?;
                }
                Ok(())
            }
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(m) => write!(f, "i/o failure: {m}"),
        }
    }
}

/// Parses `argv`, runs, prints errors, and returns the exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&args) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_path: String,
    config_hash: &'a str,
    master_seed: u64,
    seed_override: bool,
    threads: usize,
    started: String,
    finished: String,
    seeds: Vec<SeedStream>,
    files: &'a [FileEntry],
}

struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
    log: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self, RunError> {
        fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
        Ok(Self { dir, files: Vec::new(), log: Vec::new() })
    }

    fn note(&mut self, line: impl Into<String>) {
        let line = line.into();
        info!("{line}");
        self.log.push(line);
    }

    fn record(&mut self, name: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let bytes = fs::read(&path).map_err(|e| RunError::io(&path, e))?;
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| RunError::io(&path, e))?;
        self.record(name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Thread count from `--threads` or the environment.
pub fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok())).filter(|&k| k > 0)
}

/// Runs one command. Returns a short human-readable summary.
pub fn run(args: &Args) -> Result<String, RunError> {
    let command: Command = args.command.into();
    let text = fs::read_to_string(&args.config).map_err(|e| RunError::io(&args.config, e))?;
    let cfg = parse_config(&text).map_err(|d| RunError::Validation(vec![d]))?;
    let diagnostics = cfg.validate(command);
    if !diagnostics.is_empty() {
        return Err(RunError::Validation(diagnostics));
    }
    let config_hash = sha256_hex(canonical_json(&text).map_err(|d| RunError::Validation(vec![d]))?.as_bytes());
    let master_seed = args.seed_override.or(cfg.master_seed).expect("validated");
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let threads = resolve_threads(args.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Numerical(format!("thread pool: {e}")))?;
    let started = chrono::Utc::now().to_rfc3339();
    let mut outputs = Outputs::new(out_dir)?;
    outputs.note(format!("command {}", command.name()));
    outputs.note(format!("config_hash {config_hash}"));
    outputs.note(format!("master_seed {master_seed}"));

    let ctx = Context { cfg: &cfg, master_seed, config_hash: &config_hash };
    let (summary, seeds) = pool.install(|| match command {
        Command::Law => ctx.law(&mut outputs),
        Command::Homogenize => ctx.homogenize(&mut outputs),
        Command::Resonance => ctx.resonance(&mut outputs),
        Command::Converge => ctx.converge(&mut outputs),
        Command::SampleField => ctx.sample_field(&mut outputs),
    })?;

    let mut log_text = outputs.log.join("\n");
    log_text.push('\n');
    outputs.write("run.log", log_text.as_bytes())?;
    let manifest = Manifest {
        tool: "stohom",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        config_path: args.config.display().to_string(),
        config_hash: &config_hash,
        master_seed,
        seed_override: args.seed_override.is_some(),
        threads: pool.current_num_threads(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        seeds,
        files: &outputs.files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(RunError::numerical)?;
    let path = outputs.dir.join("manifest.json");
    fs::write(&path, json + "\n").map_err(|e| RunError::io(&path, e))?;
    Ok(summary)
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    master_seed: u64,
    config_hash: &'a str,
}

type CommandResult = Result<(String, Vec<SeedStream>), RunError>;

impl Context<'_> {
    fn grid_and_measure(&self) -> Result<(GridSpec, StationaryMeasureSpec), RunError> {
        let grid = self.cfg.grid_spec().map_err(|d| RunError::Validation(vec![d]))?;
        let spec = self.cfg.measure_spec(grid.dim()).map_err(RunError::Validation)?;
        Ok((grid, spec))
    }

    fn stream(&self) -> SeedStream {
        SeedStream::new(self.master_seed, self.cfg.realization.as_ref().map_or(0, |r| r.index))
    }

    /// Realization of the configured sample, optionally with a fixed
    /// mixture component. The realization stream is the same either way.
    fn realization(&self, grid: &GridSpec, spec: &StationaryMeasureSpec, component: Option<usize>) -> Result<(ComponentLabel, CoefficientField), RunError> {
        let stream = self.stream();
        let err = |e: crate::measure::MeasureError| RunError::Numerical(format!("sample {}: {e}", stream.index));
        match (component, spec) {
            (Some(k), StationaryMeasureSpec::Mixture(components)) => {
                let field = ComponentGenerator::new(components[k].1.clone())
                    .generate(grid, &mut stream.rng(Purpose::Realization))
                    .map_err(err)?;
                Ok((ComponentLabel::Index(k), field))
            }
            _ => sample_realization(spec, grid, &stream).map_err(err),
        }
    }

    fn law(&self, out: &mut Outputs) -> CommandResult {
        let (grid, spec) = self.grid_and_measure()?;
        let m = self.cfg.law.as_ref().expect("validated").samples;
        let solver = self.cfg.solver();
        let law = estimate_law(&spec, m, &grid, &solver, self.master_seed).map_err(RunError::numerical)?;
        out.write("law.tsv", law.to_table().render().as_bytes())?;
        let mut meta = vec![
            ("config_hash".to_string(), self.config_hash.to_string()),
            ("master_seed".to_string(), self.master_seed.to_string()),
            ("requested".to_string(), m.to_string()),
            ("successful".to_string(), law.samples.len().to_string()),
            ("aborted".to_string(), law.aborted.len().to_string()),
            ("grid_cells".to_string(), format!("{:?}", grid.cells())),
            ("h".to_string(), fmt_f64(grid.h())),
            ("solver_tol".to_string(), fmt_f64(solver.tol)),
            ("solver_max_iter".to_string(), solver.max_iter.to_string()),
        ];
        for (i, msg) in &law.aborted {
            meta.push((format!("aborted_{i}"), msg.replace('\n', " ")));
        }
        let meta_path = out.dir.join("law.meta");
        write_provenance(&meta_path, &meta).map_err(|e| RunError::io(&meta_path, e))?;
        out.record("law.meta")?;
        let support = law.support(1e-9);
        out.note(format!("law samples={} aborted={} support_points={}", law.samples.len(), law.aborted.len(), support.len()));
        let mut summary = format!("law: {} samples, {} support points (tol 1e-9)", law.samples.len(), support.len());
        for p in support.iter().take(10) {
            summary.push_str(&format!("\n  weight {:.6}  {:?}", p.weight, p.matrix.upper()));
        }
        let seeds = (0..m as u64).map(|i| SeedStream::new(self.master_seed, i)).collect();
        Ok((summary, seeds))
    }

    fn homogenize(&self, out: &mut Outputs) -> CommandResult {
        let (grid, spec) = self.grid_and_measure()?;
        let (label, field) = self.realization(&grid, &spec, None)?;
        let (hom, sol) = homogenize(&field, &self.cfg.solver()).map_err(RunError::numerical)?;
        let (reuss, voigt) = voigt_reuss_bounds(&field).map_err(RunError::numerical)?;
        let d = grid.dim();
        let mut header = vec!["quantity".to_string()];
        for i in 0..d {
            for j in i..d {
                header.push(format!("a{}{}", i + 1, j + 1));
            }
        }
        let mut table = Table::new(header);
        for (name, m) in [("homogenized", hom.matrix), ("voigt", voigt), ("reuss", reuss)] {
            let mut row = vec![name.to_string()];
            row.extend(m.upper().iter().map(|&v| fmt_f64(v)));
            table.push_row(row);
        }
        out.write("homogenized.tsv", table.render().as_bytes())?;
        out.note(format!(
            "homogenize label={} iterations={} residual={:e} asymmetry={:e}",
            serde_json::to_string(&label).unwrap_or_default(),
            sol.iterations,
            sol.residual,
            hom.asymmetry
        ));
        Ok((format!("homogenized matrix {:?}", hom.matrix.upper()), vec![self.stream()]))
    }

    fn resonance(&self, out: &mut Outputs) -> CommandResult {
        let freqs = self.cfg.frequency_set().map_err(|d| RunError::Validation(vec![d]))?;
        let lattice = kernel_basis(&freqs);
        if !is_saturated(&lattice) {
            return Err(RunError::Numerical("kernel basis is not saturated".into()));
        }
        for v in lattice.basis() {
            if !freqs.is_resonance(v) {
                return Err(RunError::Numerical(format!("basis row {v:?} is not a resonance")));
            }
        }
        let bound = self.cfg.resonance.as_ref().map_or(0, |r| r.check_bound);
        if bound > 0 {
            let hits = brute_force_kernel(&freqs, bound).map_err(|e| RunError::Validation(vec![Diagnostic {
                key: "resonance.check_bound".into(),
                message: e.to_string(),
                remedy: "lower the bound".into(),
            }]))?;
            if let Some(k) = hits.iter().find(|k| !lattice.contains(k)) {
                return Err(RunError::Numerical(format!("resonance {k:?} is missing from the basis")));
            }
            out.note(format!("brute-force check bound={bound} resonances={}", hits.len()));
        }
        let mut text = format!("rank {}\n", lattice.rank());
        for v in lattice.basis() {
            text.push_str(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "));
            text.push('\n');
        }
        out.write("resonance.txt", text.as_bytes())?;
        out.note(format!("resonance rank={}", lattice.rank()));
        Ok((text.trim_end().to_string(), Vec::new()))
    }

    fn converge(&self, out: &mut Outputs) -> CommandResult {
        let (grid, spec) = self.grid_and_measure()?;
        let c = self.cfg.converge.as_ref().expect("validated");
        let (label, field) = self.realization(&grid, &spec, c.component)?;
        let policy = MeshPolicy { length: c.length, cells_per_period: c.cells_per_period.unwrap_or(grid.cells()[0]) };
        let problem = DirichletProblem { rhs: c.rhs.clone() };
        let solver = self.cfg.solver();
        let study = |limit| convergence_study(&field, &problem, &c.eps, policy, &solver, limit).map_err(RunError::numerical);
        let report = study(c.limit)?;
        write_report(out, "convergence", &report)?;
        out.note(format!("converge label={} limit={:?}", serde_json::to_string(&label).unwrap_or_default(), report.limit.upper()));
        let mut summary = summarize(&report);
        if c.control {
            let control = study(LimitMatrix::Voigt)?;
            write_report(out, "convergence_voigt", &control)?;
            summary.push_str(&format!("\ncontrol (arithmetic mean):\n{}", summarize(&control)));
        }
        Ok((summary, vec![self.stream()]))
    }

    fn sample_field(&self, out: &mut Outputs) -> CommandResult {
        let (grid, spec) = self.grid_and_measure()?;
        let (label, field) = self.realization(&grid, &spec, None)?;
        let mut bytes = Vec::new();
        write_field(&mut bytes, &field).map_err(RunError::numerical)?;
        out.write("field.hmfd", &bytes)?;
        let stream = self.stream();
        let mut prov = vec![
            ("master_seed".to_string(), stream.master.to_string()),
            ("sample_index".to_string(), stream.index.to_string()),
            ("config_hash".to_string(), self.config_hash.to_string()),
            ("component".to_string(), serde_json::to_string(&label).unwrap_or_default()),
        ];
        if let StationaryMeasureSpec::GaussianRelated { map, .. } = &spec {
            prov.push(("map".to_string(), format!("{:?}", map.kind())));
            prov.push(("map_continuous".to_string(), map.is_continuous().to_string()));
        }
        let path = out.dir.join("field.hmfd.provenance");
        write_provenance(&path, &prov).map_err(|e| RunError::io(&path, e))?;
        out.record("field.hmfd.provenance")?;
        out.note(format!("sample-field cells={:?}", grid.cells()));
        Ok((format!("field written: {} cells", grid.num_cells()), vec![stream]))
    }
}

fn write_report(out: &mut Outputs, stem: &str, report: &ConvergenceReport) -> Result<(), RunError> {
    out.write(&format!("{stem}.tsv"), report.to_table().render().as_bytes())?;
    out.write(&format!("{stem}.csv"), report.to_csv().as_bytes())
}

fn summarize(r: &ConvergenceReport) -> String {
    r.epsilons
        .iter()
        .zip(&r.errors)
        .map(|(e, err)| format!("  eps {e:<10} l2 error {err:.3e}"))
        .collect::<Vec<_>>()
        .join("\n")
}
