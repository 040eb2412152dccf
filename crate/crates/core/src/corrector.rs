//! Periodic cell problems and the homogenized matrix.
//!
//! For each direction `e_i` the corrector `phi_i` solves the Q1 discretization
//! of `-div a (grad phi_i + e_i) = 0` on the torus, normalized to zero mean.
//! The linear systems are solved by conjugate gradients preconditioned with
//! the exact inverse of the reference medium `(lambda + Lambda)/2 Id`, which
//! is diagonal in Fourier space. The preconditioned spectrum then lies in
//! `[lambda, Lambda] / ref`, independent of the grid size.

use log::info;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cg::{pcg, remove_mean, CgError, ResidualNorm};
use crate::fem::{det_sum_vec, periodic_apply, periodic_load, q1_symbol, PeriodicTopology, Q1Element};
use crate::fft::FftNd;
use crate::fields::{tri_len, CoefficientField, FieldError, ScalarField, SymMatrix};

/// Relative asymmetry tolerated before symmetrization.
pub const ASYMMETRY_TOL: f64 = 1e-8;
/// Slack on the ellipticity bounds of the homogenized matrix.
pub const BOUNDS_SLACK: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CorrectorError {
    #[error("corrector problems need a periodic grid")]
    NotPeriodic,
    #[error("tolerance must lie in (0, 1), got {0}")]
    BadTolerance(f64),
    #[error("corrector in direction {direction}: {source}")]
    Solver {
        direction: usize,
        #[source]
        source: CgError,
    },
    #[error("corrector grid {corrector:?} does not match field grid {field:?}")]
    GridMismatch { corrector: Vec<usize>, field: Vec<usize> },
    #[error("homogenized matrix asymmetry {0:e} exceeds tolerance")]
    Asymmetric(f64),
    #[error("homogenized eigenvalues [{min_eig}, {max_eig}] leave bounds [{lambda}, {big_lambda}]")]
    BoundsViolated { min_eig: f64, max_eig: f64, lambda: f64, big_lambda: f64 },
    #[error("singular cell matrix at cell {0:?}")]
    Singular(Vec<usize>),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    10_000
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter() }
    }
}

#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    /// Nodal corrector values, one field per direction. On the torus nodes
    /// and cells share the index space.
    pub phi: Vec<ScalarField>,
    /// Largest final relative residual over the directions.
    pub residual: f64,
    /// Largest iteration count over the directions.
    pub iterations: usize,
    pub per_direction: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogenizedMatrix {
    pub matrix: SymMatrix,
    /// `|A - A^T| / |A|` before symmetrization.
    pub asymmetry: f64,
}

struct FourierPreconditioner {
    fft: FftNd,
    inv_symbol: Vec<f64>,
}

impl FourierPreconditioner {
    fn new(field: &CoefficientField) -> Self {
        let grid = field.grid();
        let cells = grid.cells().to_vec();
        let fft = FftNd::new(&cells);
        let reference = field.bounds().reference();
        let inv_symbol = (0..grid.num_cells())
            .map(|k| {
                let idx = grid.multi_index(k);
                let thetas: Vec<f64> = idx
                    .iter()
                    .zip(&cells)
                    .map(|(&i, &n)| 2.0 * std::f64::consts::PI * i as f64 / n as f64)
                    .collect();
                let s = q1_symbol(grid.h(), reference, &thetas);
                if k == 0 {
                    0.0
                } else {
                    1.0 / s
                }
            })
            .collect();
        Self { fft, inv_symbol }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.inv_symbol) {
            *b *= *s;
        }
        self.fft.inverse(&mut buf);
        for (zi, b) in z.iter_mut().zip(&buf) {
            *zi = b.re;
        }
    }
}

/// Solves the `d` periodic corrector problems of `field`.
pub fn solve_correctors(field: &CoefficientField, tol: f64, max_iter: usize) -> Result<CorrectorSolution, CorrectorError> {
    let grid = field.grid();
    if !grid.is_periodic() {
        return Err(CorrectorError::NotPeriodic);
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CorrectorError::BadTolerance(tol));
    }
    let d = grid.dim();
    let elem = Q1Element::new(d, grid.h());
    let topo = PeriodicTopology::new(grid);
    let precond = FourierPreconditioner::new(field);

    let mut phi = Vec::with_capacity(d);
    let mut per_direction = Vec::with_capacity(d);
    for i in 0..d {
        let rhs: Vec<f64> = periodic_load(field, &elem, &topo, i).into_iter().map(|v| -v).collect();
        let mut x = vec![0.0; grid.num_cells()];
        let stats = pcg(
            |u, y| periodic_apply(field, &elem, &topo, u, y),
            |r, z| precond.apply(r, z),
            remove_mean,
            &rhs,
            &mut x,
            tol,
            max_iter,
            ResidualNorm::Euclidean,
        )
        .map_err(|source| CorrectorError::Solver { direction: i, source })?;
        remove_mean(&mut x);
        info!(
            "corrector direction={i} cells={} iterations={} residual={:e}",
            grid.num_cells(),
            stats.iterations,
            stats.residual
        );
        per_direction.push((stats.iterations, stats.residual));
        phi.push(ScalarField::new(grid.clone(), x)?);
    }
    let residual = per_direction.iter().map(|p| p.1).fold(0.0, f64::max);
    let iterations = per_direction.iter().map(|p| p.0).max().unwrap_or(0);
    Ok(CorrectorSolution { phi, residual, iterations, per_direction })
}

fn check_same_grid(field: &CoefficientField, corr: &CorrectorSolution) -> Result<(), CorrectorError> {
    let mismatch = corr.phi.len() != field.dim()
        || corr.phi.iter().any(|p| !p.grid.same_shape(field.grid()));
    if mismatch {
        return Err(CorrectorError::GridMismatch {
            corrector: corr.phi.first().map(|p| p.grid.cells().to_vec()).unwrap_or_default(),
            field: field.grid().cells().to_vec(),
        });
    }
    Ok(())
}

/// Full `d x d` volume average of `(e_i + grad phi_i) . a (e_j + grad phi_j)`,
/// or of `e_i . a (e_j + grad phi_j)` when `energy` is false.
fn averaged_matrix(field: &CoefficientField, corr: &CorrectorSolution, energy: bool) -> Vec<f64> {
    let grid = field.grid();
    let d = grid.dim();
    let elem = Q1Element::new(d, grid.h());
    let topo = PeriodicTopology::new(grid);
    let nv = elem.vertices();
    let cell_vol = grid.cell_volume();
    let sums = det_sum_vec(grid.num_cells(), d * d, |c, acc| {
        let a = field.cell_upper(c);
        let mut local = [[0.0f64; 8]; 3];
        for (i, phi) in corr.phi.iter().enumerate() {
            for l in 0..nv {
                local[i][l] = phi.values[topo.cell_node(c, l)];
            }
        }
        for i in 0..d {
            for j in 0..d {
                let mut e = a[crate::fields::tri_index(d, i, j)] * cell_vol;
                for t in 0..nv {
                    e += elem.load_column(a, t, i) * local[j][t];
                }
                if energy {
                    for s in 0..nv {
                        e += elem.load_column(a, s, j) * local[i][s];
                        for t in 0..nv {
                            e += local[i][s] * elem.stiffness(a, s, t) * local[j][t];
                        }
                    }
                }
                acc[i * d + j] += e;
            }
        }
    });
    let vol = grid.volume();
    sums.into_iter().map(|s| s / vol).collect()
}

fn full_to_sym(d: usize, full: &[f64]) -> (SymMatrix, f64) {
    let mut m = SymMatrix::zeros(d);
    let mut asym: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            asym = asym.max((full[i * d + j] - full[j * d + i]).abs());
            norm += full[i * d + j].powi(2);
            if j >= i {
                m.set(i, j, 0.5 * (full[i * d + j] + full[j * d + i]));
            }
        }
    }
    (m, asym / norm.sqrt().max(f64::MIN_POSITIVE))
}

/// Energy form of the homogenized matrix, symmetrized after the asymmetry check.
pub fn homogenized_matrix(field: &CoefficientField, corr: &CorrectorSolution) -> Result<HomogenizedMatrix, CorrectorError> {
    check_same_grid(field, corr)?;
    let d = field.dim();
    let full = averaged_matrix(field, corr, true);
    let (matrix, asymmetry) = full_to_sym(d, &full);
    if asymmetry > ASYMMETRY_TOL {
        return Err(CorrectorError::Asymmetric(asymmetry));
    }
    let (lo, hi) = matrix.min_max_eigenvalues();
    let b = field.bounds();
    if lo < b.lambda() - BOUNDS_SLACK || hi > b.big_lambda() + BOUNDS_SLACK {
        return Err(CorrectorError::BoundsViolated {
            min_eig: lo,
            max_eig: hi,
            lambda: b.lambda(),
            big_lambda: b.big_lambda(),
        });
    }
    Ok(HomogenizedMatrix { matrix, asymmetry })
}

/// Flux form `<e_i . a (e_j + grad phi_j)>`, unsymmetrized, row-major.
/// Agrees with the energy form up to the solver residual.
pub fn flux_average_matrix(field: &CoefficientField, corr: &CorrectorSolution) -> Result<Vec<f64>, CorrectorError> {
    check_same_grid(field, corr)?;
    Ok(averaged_matrix(field, corr, false))
}

/// Solves the correctors and returns the homogenized matrix with them.
pub fn homogenize(field: &CoefficientField, cfg: &SolverConfig) -> Result<(HomogenizedMatrix, CorrectorSolution), CorrectorError> {
    let corr = solve_correctors(field, cfg.tol, cfg.max_iter)?;
    let hom = homogenized_matrix(field, &corr)?;
    Ok((hom, corr))
}

/// Reuss (harmonic mean) and Voigt (arithmetic mean) matrices.
pub fn voigt_reuss_bounds(field: &CoefficientField) -> Result<(SymMatrix, SymMatrix), CorrectorError> {
    let d = field.dim();
    let t = tri_len(d);
    let grid = field.grid();
    if let Some(c) = (0..grid.num_cells()).find(|&c| field.cell(c).inverse().is_none()) {
        return Err(CorrectorError::Singular(grid.multi_index(c)));
    }
    let sums = det_sum_vec(grid.num_cells(), 2 * t, |c, acc| {
        let m = field.cell(c);
        let inv = m.inverse().expect("checked above");
        for k in 0..t {
            acc[k] += m.upper()[k];
            acc[t + k] += inv.upper()[k];
        }
    });
    let n = grid.num_cells() as f64;
    let upper = SymMatrix::from_upper(d, &sums[..t].iter().map(|s| s / n).collect::<Vec<_>>());
    let mean_inv = SymMatrix::from_upper(d, &sums[t..].iter().map(|s| s / n).collect::<Vec<_>>());
    let lower = mean_inv.inverse().ok_or_else(|| CorrectorError::Singular(vec![]))?;
    Ok((lower, upper))
}

/// Smallest eigenvalue of `upper - lower`, normalized by `|reference|`.
/// Nonnegative iff `lower <= upper` in quadratic-form order.
pub fn loewner_gap(lower: &SymMatrix, upper: &SymMatrix, reference: &SymMatrix) -> f64 {
    upper.sub(lower).min_max_eigenvalues().0 / reference.norm()
}
