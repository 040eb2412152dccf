//! Grid-sampled coefficient fields, ellipticity checks and the pointwise map
//! `a = F(X)` from scalar channels to symmetric matrices.
//!
//! All fields in the crate share one layout: cell-centered values, row-major
//! in axis order (axis 0 varies slowest). Matrix values are stored as the
//! `d(d+1)/2` upper-triangle entries `a11, a12, .., a1d, a22, .., add`.

mod container;

pub use container::{read_field, read_provenance, write_field, write_provenance, CONTAINER_MAGIC, CONTAINER_VERSION};

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when checking eigenvalues against ellipticity bounds.
pub const ELLIPTICITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid ellipticity bounds: lambda = {lambda}, Lambda = {big_lambda}")]
    InvalidBounds { lambda: f64, big_lambda: f64 },
    #[error("cell {cell:?}: matrix eigenvalues [{min_eig}, {max_eig}] outside bounds [{lambda}, {big_lambda}]")]
    EllipticityViolation {
        cell: Vec<usize>,
        min_eig: f64,
        max_eig: f64,
        lambda: f64,
        big_lambda: f64,
    },
    #[error("cell {cell:?}: matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { cell: Vec<usize>, asymmetry: f64 },
    #[error("cell {cell:?}: map input is not finite ({value})")]
    NonFiniteInput { cell: Vec<usize>, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid elliptic map: {0}")]
    InvalidMap(String),
    #[error("container: {0}")]
    Container(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Regular grid on a box `[0, n_0 h) x .. x [0, n_{d-1} h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    cells: Vec<usize>,
    h: f64,
    periodic: bool,
}

impl GridSpec {
    pub fn new(cells: Vec<usize>, h: f64, periodic: bool) -> Result<Self, FieldError> {
        let dim = cells.len();
        if !(1..=3).contains(&dim) {
            return Err(FieldError::InvalidGrid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if let Some(n) = cells.iter().find(|&&n| n < 2) {
            return Err(FieldError::InvalidGrid(format!("cells per axis must be >= 2, got {n}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FieldError::InvalidGrid(format!("cell size must be positive, got {h}")));
        }
        Ok(Self { dim, cells, h, periodic })
    }

    /// Periodic grid with `n` cells on every axis covering the box of side `length`.
    pub fn torus(dim: usize, n: usize, length: f64) -> Result<Self, FieldError> {
        Self::new(vec![n; dim], length / n as f64, true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    /// Side length along `axis`.
    pub fn length(&self, axis: usize) -> f64 {
        self.cells[axis] as f64 * self.h
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.length(a)).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Row-major strides, axis 0 slowest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim];
        for a in (0..self.dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.cells[a + 1];
        }
        strides
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.cells).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = linear % self.cells[a];
            linear /= self.cells[a];
        }
        idx
    }

    /// Cell center coordinates of the cell with multi-index `idx`.
    pub fn cell_center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| (i as f64 + 0.5) * self.h).collect()
    }

    /// Linear index of the cell shifted by `offset` cells, wrapping periodically.
    pub fn wrapped_offset(&self, linear: usize, offset: &[isize]) -> usize {
        let idx = self.multi_index(linear);
        let shifted: Vec<usize> = idx
            .iter()
            .zip(offset)
            .zip(&self.cells)
            .map(|((&i, &o), &n)| (i as isize + o).rem_euclid(n as isize) as usize)
            .collect();
        self.linear_index(&shifted)
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.cells == other.cells && (self.h - other.h).abs() <= 1e-14 * self.h.max(other.h)
    }
}

/// Uniform ellipticity bounds `0 < lambda <= Lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    lambda: f64,
    big_lambda: f64,
}

impl EllipticityBounds {
    pub fn new(lambda: f64, big_lambda: f64) -> Result<Self, FieldError> {
        if !(lambda > 0.0 && lambda <= big_lambda && big_lambda.is_finite()) {
            return Err(FieldError::InvalidBounds { lambda, big_lambda });
        }
        Ok(Self { lambda, big_lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    /// Midpoint `(lambda + Lambda) / 2`, the reference medium of the solvers.
    pub fn reference(&self) -> f64 {
        0.5 * (self.lambda + self.big_lambda)
    }

    pub fn contains(&self, min_eig: f64, max_eig: f64) -> bool {
        min_eig >= self.lambda - ELLIPTICITY_SLACK && max_eig <= self.big_lambda + ELLIPTICITY_SLACK
    }

    /// Smallest bounds containing both.
    pub fn union(&self, other: &EllipticityBounds) -> EllipticityBounds {
        EllipticityBounds {
            lambda: self.lambda.min(other.lambda),
            big_lambda: self.big_lambda.max(other.big_lambda),
        }
    }
}

/// Number of stored entries of a symmetric `d x d` matrix.
pub const fn tri_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of entry `(i, j)` in the upper-triangle storage.
pub fn tri_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * d - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Symmetric matrix of dimension `d <= 3`, stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    upper: [f64; 6],
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=3).contains(&dim), "matrix dimension must be 1, 2 or 3");
        Self { dim, upper: [0.0; 6] }
    }

    /// `c * Id`.
    pub fn scalar(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, c);
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn from_upper(dim: usize, upper: &[f64]) -> Self {
        assert_eq!(upper.len(), tri_len(dim), "upper-triangle length mismatch");
        let mut m = Self::zeros(dim);
        m.upper[..upper.len()].copy_from_slice(upper);
        m
    }

    /// Builds from a full row-major matrix, symmetrizing after checking the
    /// asymmetry against `tol` (absolute).
    pub fn from_full(dim: usize, full: &[f64], tol: f64) -> Result<Self, f64> {
        assert_eq!(full.len(), dim * dim);
        let asym = full_asymmetry(dim, full);
        if asym > tol {
            return Err(asym);
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, 0.5 * (full[i * dim + j] + full[j * dim + i]));
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..tri_len(self.dim)]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[tri_index(self.dim, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.upper[tri_index(self.dim, i, j)] = v;
    }

    pub fn to_full(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.get(i, j);
            }
        }
        out
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum()).collect()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.apply(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        let mut out = *self;
        for (a, b) in out.upper.iter_mut().zip(other.upper.iter()) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        let mut out = *self;
        out.upper.iter_mut().for_each(|a| *a *= s);
        out
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j).powi(2);
            }
        }
        s.sqrt()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.upper().iter().zip(other.upper()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![self.upper[0]],
            2 => {
                let (a, b, c) = (self.upper[0], self.upper[1], self.upper[2]);
                let mean = 0.5 * (a + c);
                let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
                vec![mean - rad, mean + rad]
            }
            _ => {
                let full = self.to_full();
                let m = Matrix3::from_row_slice(&full);
                let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
                eig.sort_by(f64::total_cmp);
                eig
            }
        }
    }

    pub fn min_max_eigenvalues(&self) -> (f64, f64) {
        let eig = self.eigenvalues();
        (eig[0], eig[eig.len() - 1])
    }

    pub fn inverse(&self) -> Option<SymMatrix> {
        let d = self.dim;
        let m = nalgebra::DMatrix::from_row_slice(d, d, &self.to_full());
        let inv = m.try_inverse()?;
        let mut out = SymMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                out.set(i, j, 0.5 * (inv[(i, j)] + inv[(j, i)]));
            }
        }
        Some(out)
    }
}

fn full_asymmetry(dim: usize, full: &[f64]) -> f64 {
    let mut asym: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            asym = asym.max((full[i * dim + j] - full[j * dim + i]).abs());
        }
    }
    asym
}

/// Scalar field on a grid (one Gaussian channel, a corrector, a Dirichlet solution).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.num_cells() {
            return Err(FieldError::Shape(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.num_cells()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        let n = grid.num_cells();
        Self { grid, values: vec![value; n] }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Periodic translation: the output at cell `i` is the input at `i - shift`.
    pub fn shifted(&self, shift: &[isize]) -> ScalarField {
        let neg: Vec<isize> = shift.iter().map(|s| -s).collect();
        let values = (0..self.values.len())
            .map(|i| self.values[self.grid.wrapped_offset(i, &neg)])
            .collect();
        ScalarField { grid: self.grid.clone(), values }
    }
}

/// Symmetric-matrix-valued field sampled cellwise on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    grid: GridSpec,
    data: Vec<f64>,
    bounds: EllipticityBounds,
}

impl CoefficientField {
    /// Builds a field from cell matrices, checking every cell against `bounds`.
    pub fn new(grid: GridSpec, cells: &[SymMatrix], bounds: EllipticityBounds) -> Result<Self, FieldError> {
        if cells.len() != grid.num_cells() {
            return Err(FieldError::Shape(format!(
                "{} cell matrices for a grid of {} cells",
                cells.len(),
                grid.num_cells()
            )));
        }
        let d = grid.dim();
        let mut data = Vec::with_capacity(cells.len() * tri_len(d));
        for m in cells {
            if m.dim() != d {
                return Err(FieldError::Shape(format!("cell matrix of dimension {} on a {d}-d grid", m.dim())));
            }
            data.extend_from_slice(m.upper());
        }
        Self::from_raw(grid, data, bounds)
    }

    /// Builds a field from packed upper-triangle data in canonical layout.
    pub fn from_raw(grid: GridSpec, data: Vec<f64>, bounds: EllipticityBounds) -> Result<Self, FieldError> {
        let t = tri_len(grid.dim());
        if data.len() != grid.num_cells() * t {
            return Err(FieldError::Shape(format!(
                "{} entries for {} cells of {t} entries",
                data.len(),
                grid.num_cells()
            )));
        }
        let field = Self { grid, data, bounds };
        for i in 0..field.grid.num_cells() {
            let m = field.cell(i);
            let (lo, hi) = m.min_max_eigenvalues();
            if !(lo.is_finite() && hi.is_finite()) || !bounds.contains(lo, hi) {
                return Err(FieldError::EllipticityViolation {
                    cell: field.grid.multi_index(i),
                    min_eig: lo,
                    max_eig: hi,
                    lambda: bounds.lambda(),
                    big_lambda: bounds.big_lambda(),
                });
            }
        }
        Ok(field)
    }

    /// Builds a field from full row-major `d x d` cell matrices. Cells whose
    /// asymmetry exceeds `1e-12 * Lambda` are rejected.
    pub fn from_full(grid: GridSpec, full: &[Vec<f64>], bounds: EllipticityBounds) -> Result<Self, FieldError> {
        let d = grid.dim();
        let tol = SYMMETRY_TOL * bounds.big_lambda();
        let cells = full
            .iter()
            .enumerate()
            .map(|(i, m)| {
                SymMatrix::from_full(d, m, tol).map_err(|asymmetry| FieldError::NotSymmetric {
                    cell: grid.multi_index(i),
                    asymmetry,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(grid, &cells, bounds)
    }

    pub fn constant(grid: GridSpec, value: SymMatrix, bounds: EllipticityBounds) -> Result<Self, FieldError> {
        let cells = vec![value; grid.num_cells()];
        Self::new(grid, &cells, bounds)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn bounds(&self) -> EllipticityBounds {
        self.bounds
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Packed upper-triangle data in canonical layout.
    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn cell_upper(&self, i: usize) -> &[f64] {
        let t = tri_len(self.dim());
        &self.data[i * t..(i + 1) * t]
    }

    pub fn cell(&self, i: usize) -> SymMatrix {
        SymMatrix::from_upper(self.dim(), self.cell_upper(i))
    }

    pub fn cells(&self) -> impl Iterator<Item = SymMatrix> + '_ {
        (0..self.grid.num_cells()).map(move |i| self.cell(i))
    }

    /// Periodic translation by whole cells.
    pub fn shifted(&self, shift: &[isize]) -> CoefficientField {
        let neg: Vec<isize> = shift.iter().map(|s| -s).collect();
        let t = tri_len(self.dim());
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.grid.num_cells() {
            let src = self.grid.wrapped_offset(i, &neg);
            data.extend_from_slice(&self.data[src * t..(src + 1) * t]);
        }
        CoefficientField { grid: self.grid.clone(), data, bounds: self.bounds }
    }

    /// Applies `stat` to every cell.
    pub fn statistic(&self, stat: impl Fn(&SymMatrix) -> f64) -> ScalarField {
        let values = self.cells().map(|m| stat(&m)).collect();
        ScalarField { grid: self.grid.clone(), values }
    }
}

/// Relative asymmetry threshold used by the ellipticity diagnostic.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Output of [`check_ellipticity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityReport {
    pub min_eig: f64,
    pub max_eig: f64,
    pub symmetric: bool,
}

/// Extremal eigenvalues over all cells of a field.
pub fn check_ellipticity(field: &CoefficientField) -> EllipticityReport {
    let (min_eig, max_eig) = field
        .cells()
        .map(|m| m.min_max_eigenvalues())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)));
    EllipticityReport { min_eig, max_eig, symmetric: true }
}

/// Ellipticity diagnostic for unpacked full matrices, e.g. data read from an
/// external source before it is packed into a [`CoefficientField`].
/// Eigenvalues are those of the symmetric part.
pub fn check_ellipticity_full(dim: usize, cells: &[Vec<f64>], big_lambda: f64) -> EllipticityReport {
    let tol = SYMMETRY_TOL * big_lambda;
    let mut symmetric = true;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for m in cells {
        if full_asymmetry(dim, m) >= tol {
            symmetric = false;
        }
        let sym = SymMatrix::from_full(dim, m, f64::INFINITY).expect("infinite tolerance");
        let (a, b) = sym.min_max_eigenvalues();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    EllipticityReport { min_eig: lo, max_eig: hi, symmetric }
}

/// Scalar profile of an [`EllipticMap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapKind {
    /// `clamp(mu + slope * x, lambda, Lambda)`.
    AffineClamped {
        mu: f64,
        slope: f64,
        lambda: f64,
        #[serde(rename = "Lambda")]
        big_lambda: f64,
    },
    /// `lambda + (Lambda - lambda) / (1 + exp(-x))`.
    Logistic {
        lambda: f64,
        #[serde(rename = "Lambda")]
        big_lambda: f64,
    },
    /// `low` below `threshold`, `high` at or above it. Discontinuous.
    TwoPhase { low: f64, high: f64, threshold: f64 },
}

/// Pointwise map `F` from channel values to a symmetric matrix.
///
/// With one channel the output is `f(x) Id`; with `d` channels it is
/// `diag(f(x_1), .., f(x_d))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticMap {
    kind: MapKind,
    channels: usize,
}

impl EllipticMap {
    pub fn new(kind: MapKind, channels: usize) -> Result<Self, FieldError> {
        if channels == 0 {
            return Err(FieldError::InvalidMap("channel count must be >= 1".into()));
        }
        let map = Self { kind, channels };
        let bounds = map.scalar_bounds();
        EllipticityBounds::new(bounds.0, bounds.1)
            .map_err(|e| FieldError::InvalidMap(format!("{e}")))?;
        if let MapKind::AffineClamped { mu, slope, .. } = kind {
            if !(mu.is_finite() && slope.is_finite()) {
                return Err(FieldError::InvalidMap("affine_clamped parameters must be finite".into()));
            }
        }
        if let MapKind::TwoPhase { threshold, .. } = kind {
            if !threshold.is_finite() {
                return Err(FieldError::InvalidMap("two_phase threshold must be finite".into()));
            }
        }
        Ok(map)
    }

    pub fn scalar(kind: MapKind) -> Result<Self, FieldError> {
        Self::new(kind, 1)
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `false` only for the test-only two-phase map.
    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, MapKind::TwoPhase { .. })
    }

    fn scalar_bounds(&self) -> (f64, f64) {
        match self.kind {
            MapKind::AffineClamped { lambda, big_lambda, .. } | MapKind::Logistic { lambda, big_lambda } => {
                (lambda, big_lambda)
            }
            MapKind::TwoPhase { low, high, .. } => (low.min(high), low.max(high)),
        }
    }

    pub fn bounds(&self) -> EllipticityBounds {
        let (lo, hi) = self.scalar_bounds();
        EllipticityBounds::new(lo, hi).expect("validated at construction")
    }

    pub fn eval_scalar(&self, x: f64) -> f64 {
        match self.kind {
            MapKind::AffineClamped { mu, slope, lambda, big_lambda } => (mu + slope * x).clamp(lambda, big_lambda),
            MapKind::Logistic { lambda, big_lambda } => lambda + (big_lambda - lambda) / (1.0 + (-x).exp()),
            MapKind::TwoPhase { low, high, threshold } => {
                if x < threshold {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// Matrix value for channel values `x` in dimension `dim`.
    pub fn eval(&self, x: &[f64], dim: usize) -> SymMatrix {
        if self.channels == 1 {
            SymMatrix::scalar(dim, self.eval_scalar(x[0]))
        } else {
            let diag: Vec<f64> = x.iter().map(|&v| self.eval_scalar(v)).collect();
            SymMatrix::diagonal(&diag)
        }
    }
}

/// Applies `map` cellwise to the channel fields.
pub fn map_field(channels: &[ScalarField], map: &EllipticMap) -> Result<CoefficientField, FieldError> {
    let first = channels
        .first()
        .ok_or_else(|| FieldError::Shape("at least one channel is required".into()))?;
    let grid = first.grid.clone();
    let d = grid.dim();
    if channels.len() != map.channels() {
        return Err(FieldError::Shape(format!(
            "map expects {} channels, got {}",
            map.channels(),
            channels.len()
        )));
    }
    if map.channels() > 1 && map.channels() != d {
        return Err(FieldError::InvalidMap(format!(
            "a {}-channel map needs a {}-d grid",
            map.channels(),
            map.channels()
        )));
    }
    if let Some(c) = channels.iter().find(|c| !c.grid.same_shape(&grid) || c.values.len() != grid.num_cells()) {
        return Err(FieldError::Shape(format!("channel grid {:?} differs from {:?}", c.grid.cells(), grid.cells())));
    }
    let bounds = map.bounds();
    let t = tri_len(d);
    let mut data = Vec::with_capacity(grid.num_cells() * t);
    let mut x = vec![0.0; channels.len()];
    for i in 0..grid.num_cells() {
        for (slot, ch) in x.iter_mut().zip(channels) {
            *slot = ch.values[i];
        }
        if let Some(&bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(FieldError::NonFiniteInput { cell: grid.multi_index(i), value: bad });
        }
        data.extend_from_slice(map.eval(&x, d).upper());
    }
    CoefficientField::from_raw(grid, data, bounds)
}

/// Two-phase checkerboard with `tiles` tiles per axis: phase `low` where the
/// sum of tile indices is even.
pub fn checkerboard(grid: &GridSpec, tiles: usize, low: f64, high: f64) -> Result<CoefficientField, FieldError> {
    if tiles == 0 || grid.cells().iter().any(|&n| n % tiles != 0) {
        return Err(FieldError::Shape(format!(
            "{tiles} tiles do not divide the grid {:?}",
            grid.cells()
        )));
    }
    let d = grid.dim();
    let bounds = EllipticityBounds::new(low.min(high), low.max(high))?;
    let cells: Vec<SymMatrix> = (0..grid.num_cells())
        .map(|i| {
            let idx = grid.multi_index(i);
            let parity: usize = idx.iter().zip(grid.cells()).map(|(&k, &n)| k / (n / tiles)).sum();
            SymMatrix::scalar(d, if parity.is_multiple_of(2) { low } else { high })
        })
        .collect();
    CoefficientField::new(grid.clone(), &cells, bounds)
}
