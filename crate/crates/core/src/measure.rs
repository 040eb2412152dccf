//! Stationary measures as mixtures of ergodic components, and Monte Carlo
//! estimation of the law of the homogenized matrix.
//!
//! A component is represented concretely: an index for finite mixtures, the
//! coordinates `(x0, r, eta)` for Gaussian-related fields. Sampling a
//! component and sampling a realization inside it use separate random
//! streams, so fixing the component never perturbs realization draws.

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corrector::{homogenize, CorrectorError, HomogenizedMatrix, SolverConfig};
use crate::fem::det_sum;
use crate::fields::{map_field, CoefficientField, EllipticMap, EllipticityBounds, FieldError, GridSpec, ScalarField, SymMatrix};
use crate::gaussian::{self, ComponentCoordinates, GaussianError, GaussianFieldModel};
use crate::resonance::ResonanceLattice;
use crate::rng::{Purpose, SeedStream};
use crate::table::{fmt_f64, Table};

/// Mixture weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Largest tolerated fraction of aborted samples in [`estimate_law`].
pub const MAX_ABORTED_FRACTION: f64 = 0.01;
/// Tolerance on `(x0, r, eta)` when comparing Gaussian labels.
pub const LABEL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid measure: {0}")]
    InvalidSpec(String),
    #[error("radius {radius} is invalid for a domain of half-width {half_width}")]
    Radius { radius: f64, half_width: f64 },
    #[error("references {0} and {1} are closer than 4x the tolerance")]
    References(usize, usize),
    #[error("{aborted} of {total} samples aborted; first: sample {first_index}: {first_message}")]
    TooManyAborted { aborted: usize, total: usize, first_index: u64, first_message: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Corrector(#[from] CorrectorError),
}

/// One ergodic component.
#[derive(Debug, Clone)]
pub enum ErgodicComponentSpec {
    Constant { matrix: SymMatrix },
    /// `pattern` repeated over the grid, anchored at the origin. The
    /// pattern's cell counts are the period in cells.
    Periodic { pattern: CoefficientField },
    /// Like `Periodic`; with `random_phase` the anchor is a uniform cell
    /// offset within one period, which makes the law stationary.
    ShiftedPeriodic { pattern: CoefficientField, random_phase: bool },
    /// Gaussian component with frozen coordinates.
    Gaussian { model: GaussianFieldModel, map: EllipticMap, lattice: ResonanceLattice, coords: ComponentCoordinates },
}

#[derive(Debug, Clone)]
pub enum StationaryMeasureSpec {
    Mixture(Vec<(f64, ErgodicComponentSpec)>),
    /// `a = F(X)` for a Gaussian `X`; the lattice belongs to the atom
    /// frequencies of `model`.
    GaussianRelated { model: GaussianFieldModel, map: EllipticMap, lattice: ResonanceLattice },
}

impl StationaryMeasureSpec {
    pub fn validate(&self) -> Result<(), MeasureError> {
        match self {
            StationaryMeasureSpec::Mixture(components) => {
                if components.is_empty() {
                    return Err(MeasureError::InvalidSpec("mixture needs at least one component".into()));
                }
                if let Some((k, (w, _))) = components.iter().enumerate().find(|(_, (w, _))| !(0.0..=1.0).contains(w)) {
                    return Err(MeasureError::InvalidSpec(format!("weight {k} = {w} outside [0, 1]")));
                }
                let total: f64 = components.iter().map(|(w, _)| w).sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    let shown = (total * 1e12).round() / 1e12;
                    return Err(MeasureError::InvalidSpec(format!("weights sum to {shown}, expected 1")));
                }
                Ok(())
            }
            StationaryMeasureSpec::GaussianRelated { model, map, lattice } => {
                if map.channels() != model.channels() {
                    return Err(MeasureError::InvalidSpec(format!(
                        "map has {} channels, model has {}",
                        map.channels(),
                        model.channels()
                    )));
                }
                if lattice.atoms() != model.atomic().len() {
                    return Err(MeasureError::InvalidSpec(format!(
                        "lattice has {} atoms, model has {}",
                        lattice.atoms(),
                        model.atomic().len()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Identity of a sampled component.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentLabel {
    Index(usize),
    Gaussian(ComponentCoordinates),
}

impl ComponentLabel {
    /// Equal indices, or Gaussian coordinates equal within [`LABEL_TOL`].
    pub fn same_component(&self, other: &ComponentLabel) -> bool {
        match (self, other) {
            (ComponentLabel::Index(a), ComponentLabel::Index(b)) => a == b,
            (ComponentLabel::Gaussian(a), ComponentLabel::Gaussian(b)) => a.same_component(b, LABEL_TOL),
            _ => false,
        }
    }
}

/// Produces realizations of one ergodic component.
#[derive(Debug, Clone)]
pub struct ComponentGenerator {
    spec: ErgodicComponentSpec,
}

impl ComponentGenerator {
    pub fn new(spec: ErgodicComponentSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &ErgodicComponentSpec {
        &self.spec
    }

    /// One realization on `grid`, with all randomness drawn from `rng`.
    pub fn generate<R: Rng + ?Sized>(&self, grid: &GridSpec, rng: &mut R) -> Result<CoefficientField, MeasureError> {
        match &self.spec {
            ErgodicComponentSpec::Constant { matrix } => {
                if matrix.dim() != grid.dim() {
                    return Err(MeasureError::InvalidSpec(format!(
                        "constant matrix is {}-d, grid is {}-d",
                        matrix.dim(),
                        grid.dim()
                    )));
                }
                let (lo, hi) = matrix.min_max_eigenvalues();
                Ok(CoefficientField::constant(grid.clone(), *matrix, EllipticityBounds::new(lo, hi)?)?)
            }
            ErgodicComponentSpec::Periodic { pattern } => tile(pattern, grid, &vec![0; grid.dim()]),
            ErgodicComponentSpec::ShiftedPeriodic { pattern, random_phase } => {
                let offset: Vec<usize> = if *random_phase {
                    pattern.grid().cells().iter().map(|&p| rng.random_range(0..p)).collect()
                } else {
                    vec![0; grid.dim()]
                };
                tile(pattern, grid, &offset)
            }
            ErgodicComponentSpec::Gaussian { model, map, lattice, coords } => {
                let y = gaussian::uniform_shift(grid, rng);
                let moved = coords.translated(model.atomic(), lattice, &y)?;
                let x = gaussian::component_field(model, &moved, grid, rng)?;
                Ok(map_field(&x, map)?)
            }
        }
    }
}

fn tile(pattern: &CoefficientField, grid: &GridSpec, offset: &[usize]) -> Result<CoefficientField, MeasureError> {
    let pg = pattern.grid();
    if pg.dim() != grid.dim() {
        return Err(MeasureError::InvalidSpec(format!("pattern is {}-d, grid is {}-d", pg.dim(), grid.dim())));
    }
    let mut data = Vec::with_capacity(pattern.raw().len() / pg.num_cells() * grid.num_cells());
    for i in 0..grid.num_cells() {
        let idx: Vec<usize> = grid
            .multi_index(i)
            .iter()
            .zip(pg.cells())
            .zip(offset)
            .map(|((&k, &p), &o)| (k + o) % p)
            .collect();
        data.extend_from_slice(pattern.cell_upper(pg.linear_index(&idx)));
    }
    Ok(CoefficientField::from_raw(grid.clone(), data, pattern.bounds())?)
}

/// Draws a component from the `Component` stream of `stream`.
pub fn sample_component(spec: &StationaryMeasureSpec, stream: &SeedStream) -> Result<(ComponentLabel, ComponentGenerator), MeasureError> {
    let mut rng = stream.rng(Purpose::Component);
    match spec {
        StationaryMeasureSpec::Mixture(components) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = components.len() - 1;
            for (k, (w, _)) in components.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            // Never land on a zero-weight tail component through rounding.
            while components[chosen].0 == 0.0 && chosen > 0 {
                chosen -= 1;
            }
            Ok((ComponentLabel::Index(chosen), ComponentGenerator::new(components[chosen].1.clone())))
        }
        StationaryMeasureSpec::GaussianRelated { model, map, lattice } => {
            let coords = gaussian::sample_component(model, lattice, &mut rng)?;
            let gen = ComponentGenerator::new(ErgodicComponentSpec::Gaussian {
                model: model.clone(),
                map: *map,
                lattice: lattice.clone(),
                coords: coords.clone(),
            });
            Ok((ComponentLabel::Gaussian(coords), gen))
        }
    }
}

/// Realization of sample `stream`: component draw, then field draw.
pub fn sample_realization(spec: &StationaryMeasureSpec, grid: &GridSpec, stream: &SeedStream) -> Result<(ComponentLabel, CoefficientField), MeasureError> {
    let (label, gen) = sample_component(spec, stream)?;
    let field = gen.generate(grid, &mut stream.rng(Purpose::Realization))?;
    Ok((label, field))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawSample {
    pub seed_index: u64,
    pub label: ComponentLabel,
    pub matrix: HomogenizedMatrix,
    pub weight: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawMetadata {
    pub master_seed: u64,
    pub requested: usize,
    pub grid_cells: Vec<usize>,
    pub h: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    pub samples: Vec<LawSample>,
    /// `(seed index, message)` of samples whose solve failed.
    pub aborted: Vec<(u64, String)>,
    pub metadata: LawMetadata,
}

/// A support point of an empirical law.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub matrix: SymMatrix,
    pub weight: f64,
    pub count: usize,
}

impl EmpiricalLaw {
    pub fn dim(&self) -> usize {
        self.metadata.grid_cells.len()
    }

    /// Groups samples whose matrices agree entrywise within `tol`, in order
    /// of first appearance.
    pub fn support(&self, tol: f64) -> Vec<SupportPoint> {
        let mut points: Vec<SupportPoint> = Vec::new();
        for s in &self.samples {
            match points.iter_mut().find(|p| p.matrix.max_abs_diff(&s.matrix.matrix) <= tol) {
                Some(p) => {
                    p.weight += s.weight;
                    p.count += 1;
                }
                None => points.push(SupportPoint { matrix: s.matrix.matrix, weight: s.weight, count: 1 }),
            }
        }
        points
    }

    /// `seed_index, weight, a11, a12, ..` with 17 significant digits.
    pub fn to_table(&self) -> Table {
        let d = self.dim();
        let mut header = vec!["seed_index".to_string(), "weight".to_string()];
        for i in 0..d {
            for j in i..d {
                header.push(format!("a{}{}", i + 1, j + 1));
            }
        }
        let mut table = Table::new(header);
        for s in &self.samples {
            let mut row = vec![s.seed_index.to_string(), fmt_f64(s.weight)];
            row.extend(s.matrix.matrix.upper().iter().map(|&v| fmt_f64(v)));
            table.push_row(row);
        }
        table
    }
}

/// Samples `m` components, solves one realization of each on `grid`, and
/// returns the weighted sample of homogenized matrices. Sample `i` uses
/// `SeedStream::new(master_seed, i)`.
pub fn estimate_law(
    spec: &StationaryMeasureSpec,
    m: usize,
    grid: &GridSpec,
    solver: &SolverConfig,
    master_seed: u64,
) -> Result<EmpiricalLaw, MeasureError> {
    spec.validate()?;
    if m == 0 {
        return Err(MeasureError::InvalidSpec("sample count must be >= 1".into()));
    }
    let results: Vec<Result<LawSample, MeasureError>> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let stream = SeedStream::new(master_seed, i);
            let (label, field) = sample_realization(spec, grid, &stream)?;
            let (matrix, sol) = homogenize(&field, solver)?;
            Ok(LawSample { seed_index: i, label, matrix, weight: 0.0, iterations: sol.iterations })
        })
        .collect();
    let mut samples = Vec::with_capacity(m);
    let mut aborted = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                warn!("sample {i} aborted: {e}");
                aborted.push((i as u64, e.to_string()));
            }
        }
    }
    if aborted.len() as f64 > MAX_ABORTED_FRACTION * m as f64 || samples.is_empty() {
        let (first_index, first_message) = aborted[0].clone();
        return Err(MeasureError::TooManyAborted { aborted: aborted.len(), total: m, first_index, first_message });
    }
    let w = 1.0 / samples.len() as f64;
    samples.iter_mut().for_each(|s| s.weight = w);
    info!("law: {} samples, {} aborted", samples.len(), aborted.len());
    Ok(EmpiricalLaw {
        samples,
        aborted,
        metadata: LawMetadata {
            master_seed,
            requested: m,
            grid_cells: grid.cells().to_vec(),
            h: grid.h(),
            solver_tol: solver.tol,
            solver_max_iter: solver.max_iter,
        },
    })
}

/// `trace(a) / d`.
pub fn mean_trace(a: &SymMatrix) -> f64 {
    a.trace() / a.dim() as f64
}

/// Averages of `stat` over centered boxes `|x - center|_inf <= R`, one per
/// radius. Cells enter by their centers.
pub fn birkhoff_average(field: &CoefficientField, stat: impl Fn(&SymMatrix) -> f64, radii: &[f64]) -> Result<Vec<f64>, MeasureError> {
    birkhoff_average_scalar(&field.statistic(stat), radii)
}

pub fn birkhoff_average_scalar(field: &ScalarField, radii: &[f64]) -> Result<Vec<f64>, MeasureError> {
    let grid = &field.grid;
    let d = grid.dim();
    let half = (0..d).map(|a| grid.length(a) / 2.0).fold(f64::INFINITY, f64::min);
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MeasureError::InvalidSpec("radii must be strictly increasing".into()));
    }
    let centers: Vec<Vec<f64>> = (0..grid.num_cells()).map(|i| grid.cell_center(&grid.multi_index(i))).collect();
    radii
        .iter()
        .map(|&r| {
            if !(r > 0.0 && r <= half) {
                return Err(MeasureError::Radius { radius: r, half_width: half });
            }
            let inside: Vec<usize> = (0..grid.num_cells())
                .filter(|&i| (0..d).all(|a| (centers[i][a] - grid.length(a) / 2.0).abs() <= r))
                .collect();
            if inside.is_empty() {
                return Err(MeasureError::Radius { radius: r, half_width: half });
            }
            Ok(det_sum(inside.len(), |k| field.values[inside[k]]) / inside.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Component(usize),
    Unclassified,
}

/// Nearest reference to the Birkhoff average at the largest radius, if it is
/// unique and within `tol`.
pub fn classify_component(
    field: &CoefficientField,
    stat: impl Fn(&SymMatrix) -> f64,
    references: &[f64],
    radii: &[f64],
    tol: f64,
) -> Result<Classification, MeasureError> {
    for i in 0..references.len() {
        for j in i + 1..references.len() {
            if (references[i] - references[j]).abs() < 4.0 * tol {
                return Err(MeasureError::References(i, j));
            }
        }
    }
    let averages = birkhoff_average(field, stat, radii)?;
    let Some(&value) = averages.last() else {
        return Err(MeasureError::InvalidSpec("at least one radius is required".into()));
    };
    let mut dist: Vec<(usize, f64)> = references.iter().enumerate().map(|(k, r)| (k, (r - value).abs())).collect();
    dist.sort_by(|a, b| a.1.total_cmp(&b.1));
    match dist.as_slice() {
        [] => Ok(Classification::Unclassified),
        [(k, e)] => Ok(if *e <= tol { Classification::Component(*k) } else { Classification::Unclassified }),
        [(k, e), (_, e2), ..] => Ok(if *e <= tol && e2 > e { Classification::Component(*k) } else { Classification::Unclassified }),
    }
}
