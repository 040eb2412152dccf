//! Experiment configuration: parsing, validation and conversion into the
//! library's domain types.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

use crate::convergence::{LimitMatrix, Rhs};
use crate::corrector::SolverConfig;
use crate::fields::{checkerboard, tri_len, CoefficientField, EllipticMap, EllipticityBounds, GridSpec, MapKind, SymMatrix};
use crate::gaussian::{Atom, AtomicSpectrum, ContinuousCovariance, GaussianFieldModel};
use crate::measure::{ErgodicComponentSpec, StationaryMeasureSpec, WEIGHT_SUM_TOL};
use crate::resonance::{kernel_basis, FrequencySet, ResonanceLattice};

pub const SCHEMA_VERSION: u32 = 1;
/// Relative tolerance between declared atom frequencies and the values
/// implied by the resonance generators.
pub const FREQUENCY_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Homogenize,
    Law,
    Resonance,
    Converge,
    SampleField,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Homogenize => "homogenize",
            Command::Law => "law",
            Command::Resonance => "resonance",
            Command::Converge => "converge",
            Command::SampleField => "sample-field",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        [Command::Homogenize, Command::Law, Command::Resonance, Command::Converge, Command::SampleField]
            .into_iter()
            .find(|c| c.name() == s)
    }

    fn needs_measure(self) -> bool {
        !matches!(self, Command::Resonance)
    }
}

/// A validation finding tied to a config key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub key: String,
    pub message: String,
    pub remedy: String,
}

impl Diagnostic {
    fn new(key: impl Into<String>, message: impl Into<String>, remedy: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into(), remedy: remedy.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.key, self.message, self.remedy)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: Option<u32>,
    pub command: Option<String>,
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub grid: Option<GridConfig>,
    pub solver: Option<SolverConfig>,
    pub measure: Option<MeasureConfig>,
    #[serde(default)]
    pub patterns: BTreeMap<String, PatternConfig>,
    pub gaussian: Option<GaussianConfig>,
    pub map: Option<MapKind>,
    pub resonance: Option<ResonanceConfig>,
    pub law: Option<LawConfig>,
    pub converge: Option<ConvergeConfig>,
    pub realization: Option<RealizationConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    /// Cells per axis.
    pub cells: usize,
    /// Side length of the torus.
    #[serde(default = "one")]
    pub length: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Mixture { components: Vec<ComponentConfig> },
    /// `a = F(X)` with `X` from `[gaussian]` and `F` from `[map]`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComponentConfig {
    /// `value * Id`, or the upper triangle `matrix`.
    Constant { weight: f64, value: Option<f64>, matrix: Option<Vec<f64>> },
    Periodic { weight: f64, pattern: String },
    ShiftedPeriodic {
        weight: f64,
        pattern: String,
        #[serde(default = "yes")]
        random_phase: bool,
    },
}

fn yes() -> bool {
    true
}

impl ComponentConfig {
    fn weight(&self) -> f64 {
        match self {
            ComponentConfig::Constant { weight, .. }
            | ComponentConfig::Periodic { weight, .. }
            | ComponentConfig::ShiftedPeriodic { weight, .. } => *weight,
        }
    }
}

/// One period of a periodic pattern, in cells; scalar phases times `Id`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatternConfig {
    /// `tiles` tiles per axis, `low` where the tile index sum is even.
    Checkerboard { cells: usize, tiles: usize, low: f64, high: f64 },
    /// First half `low`, second half `high` along `axis`.
    Laminate {
        cells: usize,
        low: f64,
        high: f64,
        #[serde(default)]
        axis: usize,
    },
    /// Explicit scalar values in canonical order.
    Values { cells: Vec<usize>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default = "no_covariance")]
    pub continuous: ContinuousCovariance,
    #[serde(default = "one_channel")]
    pub channels: usize,
}

fn no_covariance() -> ContinuousCovariance {
    ContinuousCovariance::None
}

fn one_channel() -> usize {
    1
}

/// A rational entry: an integer or a `"p/q"` string.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RationalEntry {
    Int(i64),
    Text(String),
}

impl RationalEntry {
    fn text(&self) -> String {
        match self {
            RationalEntry::Int(v) => v.to_string(),
            RationalEntry::Text(s) => s.clone(),
        }
    }
}

/// `[atom][generator]` for scalar frequencies or `[atom][axis][generator]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FrequencyTable {
    Scalar(Vec<Vec<RationalEntry>>),
    Vector(Vec<Vec<Vec<RationalEntry>>>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceConfig {
    pub generators: Vec<String>,
    pub frequencies: FrequencyTable,
    /// Numeric generator values; when given, `gaussian.atoms` must match.
    pub generator_values: Option<Vec<f64>>,
    /// Search bound for the brute-force cross-check, 0 to skip.
    #[serde(default)]
    pub check_bound: u32,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub eps: Vec<f64>,
    /// Mesh cells per `eps`-period; defaults to the torus cells.
    pub cells_per_period: Option<usize>,
    #[serde(default)]
    pub rhs: Rhs,
    /// Fix this mixture component instead of sampling one.
    pub component: Option<usize>,
    #[serde(default = "one")]
    pub length: f64,
    #[serde(default)]
    pub limit: LimitMatrix,
    /// Also run the arithmetic-mean control.
    #[serde(default)]
    pub control: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationConfig {
    #[serde(default)]
    pub index: u64,
}

/// Parses TOML text. Syntax errors and unknown keys become a diagnostic.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Diagnostic> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
            .unwrap_or("<config>")
            .to_string();
        let location = e.span().map(|s| format!(" at byte {}", s.start)).unwrap_or_default();
        Diagnostic::new(key, format!("{msg}{location}"), "fix the config syntax; unknown keys are not allowed")
    })
}

/// Canonical JSON of the config text: keys sorted, whitespace-free.
pub fn canonical_json(text: &str) -> Result<String, Diagnostic> {
    let value: toml::Value = toml::from_str(text)
        .map_err(|e| Diagnostic::new("<config>", e.message().to_string(), "fix the config syntax"))?;
    let json = serde_json::to_value(value).map_err(|e| Diagnostic::new("<config>", e.to_string(), "fix the config"))?;
    Ok(sort_keys(json).to_string())
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(map) => {
            let sorted: BTreeMap<String, serde_json::Value> = map.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            serde_json::Value::Object(sorted.into_iter().collect())
        }
        serde_json::Value::Array(items) => serde_json::Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

impl ExperimentConfig {
    /// All findings for running `command`; empty iff the run may start.
    pub fn validate(&self, command: Command) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        match self.schema {
            Some(SCHEMA_VERSION) => {}
            Some(v) => out.push(Diagnostic::new("schema", format!("unsupported schema {v}"), "set schema = 1")),
            None => out.push(Diagnostic::new("schema", "missing", "add schema = 1")),
        }
        if let Some(c) = &self.command {
            if c != command.name() {
                out.push(Diagnostic::new(
                    "command",
                    format!("config is for `{c}` but `{}` was requested", command.name()),
                    "run the matching command or drop the key",
                ));
            }
        }
        if self.master_seed.is_none() {
            out.push(Diagnostic::new("master_seed", "missing", "add master_seed = <unsigned integer>; runs are never seeded from the clock"));
        }
        if let Some(s) = &self.solver {
            if !(s.tol > 0.0 && s.tol < 1.0) {
                out.push(Diagnostic::new("solver.tol", format!("{} outside (0, 1)", s.tol), "use e.g. 1e-9"));
            }
            if s.max_iter == 0 {
                out.push(Diagnostic::new("solver.max_iter", "must be >= 1", "use e.g. 10000"));
            }
        }
        if command == Command::Resonance {
            match &self.resonance {
                Some(_) => {
                    if let Err(d) = self.frequency_set() {
                        out.push(d);
                    }
                }
                None => out.push(Diagnostic::new("resonance", "missing section", "add [resonance] with generators and frequencies")),
            }
            return out;
        }
        if command.needs_measure() {
            match self.grid_spec() {
                Ok(_) => {}
                Err(d) => out.push(d),
            }
            match &self.measure {
                None => out.push(Diagnostic::new("measure", "missing section", "add [measure] with kind = \"mixture\" or \"gaussian\"")),
                Some(_) => {
                    if let Ok(grid) = self.grid_spec() {
                        if let Err(mut ds) = self.measure_spec(grid.dim()) {
                            out.append(&mut ds);
                        }
                    }
                }
            }
        }
        match command {
            Command::Law => match &self.law {
                None => out.push(Diagnostic::new("law", "missing section", "add [law] samples = <count>")),
                Some(l) if l.samples == 0 => out.push(Diagnostic::new("law.samples", "must be >= 1", "set a positive sample count")),
                Some(_) => {}
            },
            Command::Converge => match &self.converge {
                None => out.push(Diagnostic::new("converge", "missing section", "add [converge] eps = [..]")),
                Some(c) => out.extend(self.validate_converge(c)),
            },
            _ => {}
        }
        out
    }

    fn validate_converge(&self, c: &ConvergeConfig) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if c.eps.is_empty() {
            out.push(Diagnostic::new("converge.eps", "empty", "list at least one eps"));
        }
        if c.eps.windows(2).any(|w| w[1] >= w[0]) {
            out.push(Diagnostic::new("converge.eps", "not strictly decreasing", "order eps from coarse to fine, e.g. [0.125, 0.0625]"));
        }
        if let Some(e) = c.eps.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            out.push(Diagnostic::new("converge.eps", format!("{e} outside (0, 1]"), "use scales in (0, 1]"));
        }
        let cpp = c.cells_per_period.or(self.grid.as_ref().map(|g| g.cells));
        if let Some(n) = cpp {
            if (n as f64) < crate::convergence::MIN_CELLS_PER_PERIOD {
                out.push(Diagnostic::new("converge.cells_per_period", format!("{n} < 8"), "resolve each eps-period with at least 8 cells"));
            }
        }
        if !(c.length > 0.0 && c.length.is_finite()) {
            out.push(Diagnostic::new("converge.length", format!("{} must be positive", c.length), "use e.g. 1.0"));
        }
        if let Some(k) = c.component {
            match &self.measure {
                Some(MeasureConfig::Mixture { components }) if k < components.len() => {}
                Some(MeasureConfig::Mixture { components }) => out.push(Diagnostic::new(
                    "converge.component",
                    format!("index {k} but the mixture has {} components", components.len()),
                    "use a valid component index",
                )),
                _ => out.push(Diagnostic::new("converge.component", "only mixtures have indexed components", "remove the key")),
            }
        }
        out
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver.unwrap_or_default()
    }

    pub fn grid_spec(&self) -> Result<GridSpec, Diagnostic> {
        let g = self.grid.as_ref().ok_or_else(|| Diagnostic::new("grid", "missing section", "add [grid] dim, cells, length"))?;
        if !(1..=3).contains(&g.dim) {
            return Err(Diagnostic::new("grid.dim", format!("{} not in 1..=3", g.dim), "use 1, 2 or 3"));
        }
        if g.cells < 2 {
            return Err(Diagnostic::new("grid.cells", format!("{} < 2", g.cells), "use at least 2 cells per axis"));
        }
        if !(g.length > 0.0 && g.length.is_finite()) {
            return Err(Diagnostic::new("grid.length", format!("{} must be positive", g.length), "use e.g. 1.0"));
        }
        GridSpec::torus(g.dim, g.cells, g.length).map_err(|e| Diagnostic::new("grid", e.to_string(), "check the grid section"))
    }

    pub fn frequency_set(&self) -> Result<FrequencySet, Diagnostic> {
        let r = self
            .resonance
            .as_ref()
            .ok_or_else(|| Diagnostic::new("resonance", "missing section", "add [resonance]"))?;
        let table: Vec<Vec<Vec<String>>> = match &r.frequencies {
            FrequencyTable::Scalar(rows) => rows.iter().map(|g| vec![g.iter().map(RationalEntry::text).collect()]).collect(),
            FrequencyTable::Vector(rows) => rows
                .iter()
                .map(|axes| axes.iter().map(|g| g.iter().map(RationalEntry::text).collect()).collect())
                .collect(),
        };
        FrequencySet::parse(r.generators.clone(), &table)
            .map_err(|e| Diagnostic::new("resonance.frequencies", e.to_string(), "give one distinct nonzero rational row per atom"))
    }

    /// Lattice of the Gaussian atoms: from `[resonance]` when present,
    /// otherwise the atoms are taken as rationally independent.
    pub fn lattice(&self, atoms: &[Atom]) -> Result<ResonanceLattice, Diagnostic> {
        let Some(r) = &self.resonance else {
            return Ok(ResonanceLattice::trivial(atoms.len()));
        };
        let freqs = self.frequency_set()?;
        if freqs.atoms() != atoms.len() {
            return Err(Diagnostic::new(
                "resonance.frequencies",
                format!("{} rows for {} gaussian atoms", freqs.atoms(), atoms.len()),
                "give one row per atom, in the same order",
            ));
        }
        if let Some(values) = &r.generator_values {
            if values.len() != freqs.generators().len() {
                return Err(Diagnostic::new(
                    "resonance.generator_values",
                    format!("{} values for {} generators", values.len(), freqs.generators().len()),
                    "give one value per generator",
                ));
            }
            let numeric = freqs.numeric(values);
            for (j, (w, a)) in numeric.iter().zip(atoms).enumerate() {
                let scale = w.iter().chain(&a.omega).fold(1.0f64, |m, v| m.max(v.abs()));
                let mismatch = w.len() != a.omega.len()
                    || w.iter().zip(&a.omega).any(|(x, y)| (x - y).abs() > FREQUENCY_MATCH_TOL * scale);
                if mismatch {
                    return Err(Diagnostic::new(
                        format!("gaussian.atoms[{j}].omega"),
                        format!("{:?} differs from the generator value {:?}", a.omega, w),
                        "make the atom frequencies agree with [resonance]",
                    ));
                }
            }
        }
        Ok(kernel_basis(&freqs))
    }

    fn pattern_field(&self, name: &str, dim: usize, key: &str) -> Result<CoefficientField, Diagnostic> {
        let p = self
            .patterns
            .get(name)
            .ok_or_else(|| Diagnostic::new(key, format!("unknown pattern `{name}`"), "define it under [patterns.<name>]"))?;
        let pkey = format!("patterns.{name}");
        let err = |e: crate::fields::FieldError| Diagnostic::new(pkey.clone(), e.to_string(), "check the pattern parameters");
        match p {
            PatternConfig::Checkerboard { cells, tiles, low, high } => {
                let g = GridSpec::torus(dim, *cells, 1.0).map_err(err)?;
                checkerboard(&g, *tiles, *low, *high).map_err(err)
            }
            PatternConfig::Laminate { cells, low, high, axis } => {
                if *axis >= dim {
                    return Err(Diagnostic::new(format!("{pkey}.axis"), format!("{axis} >= dim {dim}"), "pick an existing axis"));
                }
                let g = GridSpec::torus(dim, *cells, 1.0).map_err(err)?;
                let bounds = EllipticityBounds::new(low.min(*high), low.max(*high)).map_err(err)?;
                let vals: Vec<SymMatrix> = (0..g.num_cells())
                    .map(|i| {
                        let k = g.multi_index(i)[*axis];
                        SymMatrix::scalar(dim, if k < cells / 2 { *low } else { *high })
                    })
                    .collect();
                CoefficientField::new(g, &vals, bounds).map_err(err)
            }
            PatternConfig::Values { cells, values } => {
                if cells.len() != dim {
                    return Err(Diagnostic::new(format!("{pkey}.cells"), format!("{} axes for a {dim}-d grid", cells.len()), "list one count per axis"));
                }
                let g = GridSpec::new(cells.clone(), 1.0, true).map_err(err)?;
                if values.len() != g.num_cells() {
                    return Err(Diagnostic::new(
                        format!("{pkey}.values"),
                        format!("{} values for {} cells", values.len(), g.num_cells()),
                        "give one value per cell in row-major order",
                    ));
                }
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let bounds = EllipticityBounds::new(lo, hi).map_err(err)?;
                let vals: Vec<SymMatrix> = values.iter().map(|&v| SymMatrix::scalar(dim, v)).collect();
                CoefficientField::new(g, &vals, bounds).map_err(err)
            }
        }
    }

    pub fn gaussian_model(&self) -> Result<(GaussianFieldModel, EllipticMap, ResonanceLattice), Vec<Diagnostic>> {
        let g = self
            .gaussian
            .as_ref()
            .ok_or_else(|| vec![Diagnostic::new("gaussian", "missing section", "add [gaussian]")])?;
        let mut out = Vec::new();
        let atomic = AtomicSpectrum::new(g.c0, g.atoms.clone())
            .map_err(|e| out.push(Diagnostic::new("gaussian.atoms", e.to_string(), "use distinct nonzero frequencies and positive weights")))
            .ok();
        let map = match &self.map {
            None => {
                out.push(Diagnostic::new("map", "missing section", "add [map] kind = \"logistic\" | \"affine_clamped\" | \"two_phase\""));
                None
            }
            Some(kind) => EllipticMap::new(*kind, g.channels)
                .map_err(|e| out.push(Diagnostic::new("map", e.to_string(), "fix the map parameters or gaussian.channels")))
                .ok(),
        };
        let lattice = self.lattice(&g.atoms).map_err(|d| out.push(d)).ok();
        let model = atomic.and_then(|a| {
            GaussianFieldModel::new(g.continuous, a, g.channels)
                .map_err(|e| out.push(Diagnostic::new("gaussian", e.to_string(), "fix the gaussian section")))
                .ok()
        });
        match (model, map, lattice) {
            (Some(m), Some(f), Some(l)) if out.is_empty() => Ok((m, f, l)),
            _ => Err(out),
        }
    }

    /// The stationary measure for a `dim`-dimensional grid.
    pub fn measure_spec(&self, dim: usize) -> Result<StationaryMeasureSpec, Vec<Diagnostic>> {
        let measure = self
            .measure
            .as_ref()
            .ok_or_else(|| vec![Diagnostic::new("measure", "missing section", "add [measure]")])?;
        match measure {
            MeasureConfig::Mixture { components } => {
                let mut out = Vec::new();
                if components.is_empty() {
                    out.push(Diagnostic::new("measure.components", "empty", "add at least one component"));
                }
                let total: f64 = components.iter().map(ComponentConfig::weight).sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    let shown = (total * 1e12).round() / 1e12;
                    out.push(Diagnostic::new("measure.components", format!("weights sum to {shown}"), "make the weights sum to 1"));
                }
                let mut specs = Vec::new();
                for (k, c) in components.iter().enumerate() {
                    let key = format!("measure.components[{k}]");
                    if !(0.0..=1.0).contains(&c.weight()) {
                        out.push(Diagnostic::new(format!("{key}.weight"), format!("{} outside [0, 1]", c.weight()), "use a probability"));
                    }
                    match self.component_spec(c, dim, &key) {
                        Ok(s) => specs.push((c.weight(), s)),
                        Err(d) => out.push(d),
                    }
                }
                if out.is_empty() {
                    Ok(StationaryMeasureSpec::Mixture(specs))
                } else {
                    Err(out)
                }
            }
            MeasureConfig::Gaussian => {
                let (model, map, lattice) = self.gaussian_model()?;
                if let Some(a) = model.atomic().atoms().first() {
                    if a.omega.len() != dim {
                        return Err(vec![Diagnostic::new(
                            "gaussian.atoms",
                            format!("{}-d frequencies on a {dim}-d grid", a.omega.len()),
                            "match the frequency length to grid.dim",
                        )]);
                    }
                }
                if map.channels() > 1 && map.channels() != dim {
                    return Err(vec![Diagnostic::new("gaussian.channels", format!("{} channels on a {dim}-d grid", map.channels()), "use 1 or dim channels")]);
                }
                Ok(StationaryMeasureSpec::GaussianRelated { model, map, lattice })
            }
        }
    }

    fn component_spec(&self, c: &ComponentConfig, dim: usize, key: &str) -> Result<ErgodicComponentSpec, Diagnostic> {
        match c {
            ComponentConfig::Constant { value, matrix, .. } => {
                let m = match (value, matrix) {
                    (Some(v), None) => SymMatrix::scalar(dim, *v),
                    (None, Some(upper)) if upper.len() == tri_len(dim) => SymMatrix::from_upper(dim, upper),
                    (None, Some(upper)) => {
                        return Err(Diagnostic::new(
                            format!("{key}.matrix"),
                            format!("{} entries, a {dim}-d matrix needs {}", upper.len(), tri_len(dim)),
                            "list the upper triangle row by row",
                        ))
                    }
                    _ => return Err(Diagnostic::new(key, "needs exactly one of value or matrix", "set value = <c> for c Id")),
                };
                let (lo, hi) = m.min_max_eigenvalues();
                if !(lo > 0.0 && hi.is_finite()) {
                    return Err(Diagnostic::new(key, format!("eigenvalues [{lo}, {hi}] are not positive"), "use a positive definite matrix"));
                }
                Ok(ErgodicComponentSpec::Constant { matrix: m })
            }
            ComponentConfig::Periodic { pattern, .. } => {
                Ok(ErgodicComponentSpec::Periodic { pattern: self.pattern_field(pattern, dim, &format!("{key}.pattern"))? })
            }
            ComponentConfig::ShiftedPeriodic { pattern, random_phase, .. } => Ok(ErgodicComponentSpec::ShiftedPeriodic {
                pattern: self.pattern_field(pattern, dim, &format!("{key}.pattern"))?,
                random_phase: *random_phase,
            }),
        }
    }
}
