//! Dirichlet problems at scale `eps` against the homogenized problem.
//!
//! The oscillating problem `-div a(x/eps) grad u = f` is solved on a box
//! with zero boundary values. The coefficient is a torus realization,
//! unrolled periodically and scaled by `eps`. Both problems use Q1 elements
//! and conjugate gradients preconditioned by the exact inverse of a constant
//! reference operator, applied with sine transforms.

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cg::{pcg, CgError, ResidualNorm};
use crate::corrector::{homogenize, voigt_reuss_bounds, CorrectorError, SolverConfig};
use crate::fem::{dirichlet_apply, dirichlet_cell_form, dirichlet_load, dirichlet_symbol, DirichletTopology, Q1Element};
use crate::fft::DstNd;
use crate::fields::{CoefficientField, EllipticityBounds, FieldError, GridSpec, SymMatrix};
use crate::table::{fmt_f64, Table};

/// Relative algebraic residual of every Dirichlet solve, measured in the
/// preconditioned norm.
pub const DIRICHLET_TOL: f64 = 1e-10;
/// Minimum number of mesh cells per `eps`-period of the realization.
pub const MIN_CELLS_PER_PERIOD: f64 = 8.0;

#[derive(Debug, Error)]
pub enum ConvergenceError {
    #[error("eps = {0} must lie in (0, 1]")]
    BadEps(f64),
    #[error("eps list must be strictly decreasing")]
    NotDecreasing,
    #[error("mesh has {cells:.3} cells per eps-period along axis {axis}, at least 8 are required")]
    UnderResolved { axis: usize, cells: f64 },
    #[error("mesh must be a non-periodic box")]
    PeriodicMesh,
    #[error("realization must live on a torus")]
    NotTorus,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("rhs has {got} values, mesh has {expected} cells")]
    RhsShape { expected: usize, got: usize },
    #[error("eps = {eps}: {source}")]
    Solver { eps: f64, source: CgError },
    #[error(transparent)]
    Corrector(#[from] CorrectorError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Right-hand side `f` of the Dirichlet problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rhs {
    Constant { value: f64 },
    /// `prod_a sin(pi x_a / L_a)` on the box.
    SineProduct,
}

impl Default for Rhs {
    fn default() -> Self {
        Rhs::Constant { value: 1.0 }
    }
}

impl Rhs {
    /// Cell values on `mesh`, evaluated at cell centers.
    pub fn cell_values(&self, mesh: &GridSpec) -> Vec<f64> {
        match self {
            Rhs::Constant { value } => vec![*value; mesh.num_cells()],
            Rhs::SineProduct => (0..mesh.num_cells())
                .map(|c| {
                    let x = mesh.cell_center(&mesh.multi_index(c));
                    x.iter()
                        .enumerate()
                        .map(|(a, xa)| (std::f64::consts::PI * xa / mesh.length(a)).sin())
                        .product()
                })
                .collect(),
        }
    }
}

/// Box `D` given by the mesh extent, homogeneous Dirichlet data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DirichletProblem {
    pub rhs: Rhs,
}

/// Interior nodal values of a Dirichlet solve.
#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub mesh: GridSpec,
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl DirichletSolution {
    /// Value at node `q` (0-based, boundary nodes included).
    pub fn value_at(&self, q: &[usize]) -> f64 {
        let topo = DirichletTopology::new(&self.mesh);
        let qi: Vec<isize> = q.iter().map(|&v| v as isize).collect();
        topo.unknown(&qi).map_or(0.0, |j| self.u[j])
    }

    /// `||u||_{L^2}` through the Q1 mass matrix.
    pub fn l2_norm(&self) -> f64 {
        l2_inner(&self.mesh, &self.u, &self.u).sqrt()
    }

    /// `||grad u||_{L^2}`.
    pub fn h1_seminorm(&self) -> f64 {
        let mesh = &self.mesh;
        let elem = Q1Element::new(mesh.dim(), mesh.h());
        let id = SymMatrix::scalar(mesh.dim(), 1.0);
        let topo = DirichletTopology::new(mesh);
        dirichlet_cell_form(mesh, &topo, elem.vertices(), &self.u, &self.u, |_, s, t| elem.stiffness(id.upper(), s, t))
            .max(0.0)
            .sqrt()
    }
}

fn l2_inner(mesh: &GridSpec, u: &[f64], v: &[f64]) -> f64 {
    let elem = Q1Element::new(mesh.dim(), mesh.h());
    let topo = DirichletTopology::new(mesh);
    dirichlet_cell_form(mesh, &topo, elem.vertices(), u, v, |_, s, t| elem.mass(s, t))
}

/// Relative error `||u - v|| / ||v||` in `L^2`.
pub fn relative_l2_error(u: &DirichletSolution, v: &DirichletSolution) -> f64 {
    let diff: Vec<f64> = u.u.iter().zip(&v.u).map(|(a, b)| a - b).collect();
    let num = l2_inner(&u.mesh, &diff, &diff).max(0.0).sqrt();
    let den = v.l2_norm();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Solves `-div a grad u = f` with zero boundary values on `mesh`.
pub fn solve_dirichlet(field: &CoefficientField, rhs: &Rhs, tag_eps: f64) -> Result<DirichletSolution, ConvergenceError> {
    let mesh = field.grid().clone();
    if mesh.is_periodic() {
        return Err(ConvergenceError::PeriodicMesh);
    }
    let elem = Q1Element::new(mesh.dim(), mesh.h());
    let topo = DirichletTopology::new(&mesh);
    let b = dirichlet_load(&rhs.cell_values(&mesh), &elem, &topo);
    let n = topo.unknowns();
    let shape = topo.interior_shape().to_vec();
    let dst = DstNd::new(&shape);
    let reference = field.bounds().reference();
    let inv_symbol: Vec<f64> = (0..n)
        .map(|i| {
            let modes: Vec<usize> = topo.node_index(i);
            1.0 / dirichlet_symbol(&mesh, reference, &modes)
        })
        .collect();
    let precondition = |r: &[f64], z: &mut [f64]| {
        z.copy_from_slice(r);
        dst.apply(z);
        z.par_iter_mut().zip(&inv_symbol).for_each(|(v, s)| *v *= s);
        dst.apply_inverse(z);
    };
    let mut u = vec![0.0; n];
    let stats = pcg(
        |x: &[f64], y: &mut [f64]| dirichlet_apply(field, &elem, &topo, x, y),
        precondition,
        |_: &mut [f64]| {},
        &b,
        &mut u,
        DIRICHLET_TOL,
        10 * n + 100,
        ResidualNorm::Preconditioned,
    )
    .map_err(|source| ConvergenceError::Solver { eps: tag_eps, source })?;
    Ok(DirichletSolution { mesh, u, iterations: stats.iterations, residual: stats.residual })
}

/// The realization scaled by `eps` and sampled at mesh cell centers.
pub fn scaled_coefficient(realization: &CoefficientField, eps: f64, mesh: &GridSpec) -> Result<CoefficientField, ConvergenceError> {
    let rg = realization.grid();
    if !rg.is_periodic() {
        return Err(ConvergenceError::NotTorus);
    }
    if rg.dim() != mesh.dim() {
        return Err(ConvergenceError::Dimension(format!("realization is {}-d, mesh is {}-d", rg.dim(), mesh.dim())));
    }
    for axis in 0..mesh.dim() {
        let cells = eps * rg.length(axis) / mesh.h();
        // Relative slack absorbs rounding in eps * L / h.
        if cells < MIN_CELLS_PER_PERIOD * (1.0 - 1e-12) {
            return Err(ConvergenceError::UnderResolved { axis, cells });
        }
    }
    let scale = eps * rg.h();
    let mut data = Vec::with_capacity(mesh.num_cells() * realization.raw().len() / rg.num_cells());
    let mut idx = vec![0usize; mesh.dim()];
    for c in 0..mesh.num_cells() {
        let x = mesh.cell_center(&mesh.multi_index(c));
        for (a, slot) in idx.iter_mut().enumerate() {
            let k = (x[a] / scale).floor() as i64;
            *slot = k.rem_euclid(rg.cells()[a] as i64) as usize;
        }
        data.extend_from_slice(realization.cell_upper(rg.linear_index(&idx)));
    }
    Ok(CoefficientField::from_raw(mesh.clone(), data, realization.bounds())?)
}

/// `u_eps` for the realization blown down by `eps`.
pub fn solve_eps(problem: &DirichletProblem, realization: &CoefficientField, eps: f64, mesh: &GridSpec) -> Result<DirichletSolution, ConvergenceError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(ConvergenceError::BadEps(eps));
    }
    if mesh.is_periodic() {
        return Err(ConvergenceError::PeriodicMesh);
    }
    let field = scaled_coefficient(realization, eps, mesh)?;
    solve_dirichlet(&field, &problem.rhs, eps)
}

/// `u_h` for a constant homogenized matrix.
pub fn solve_hom(problem: &DirichletProblem, a: &SymMatrix, mesh: &GridSpec) -> Result<DirichletSolution, ConvergenceError> {
    if a.dim() != mesh.dim() {
        return Err(ConvergenceError::Dimension(format!("matrix is {}-d, mesh is {}-d", a.dim(), mesh.dim())));
    }
    let (lo, hi) = a.min_max_eigenvalues();
    let field = CoefficientField::constant(mesh.clone(), *a, EllipticityBounds::new(lo, hi)?)?;
    solve_dirichlet(&field, &problem.rhs, 0.0)
}

/// Which constant matrix plays the homogenized limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMatrix {
    /// From the corrector solve on the realization.
    #[default]
    Homogenized,
    /// Arithmetic cell average; a deliberately wrong control.
    Voigt,
}

/// Mesh for each `eps`: a box of side `length` with `cells_per_period`
/// cells per `eps`-scaled torus period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshPolicy {
    pub length: f64,
    pub cells_per_period: usize,
}

impl MeshPolicy {
    pub fn mesh(&self, realization: &GridSpec, eps: f64) -> Result<GridSpec, ConvergenceError> {
        let period = eps * realization.length(0);
        let n = (self.length / period * self.cells_per_period as f64).round() as usize;
        Ok(GridSpec::new(vec![n.max(2); realization.dim()], self.length / n.max(2) as f64, false)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    pub h1_seminorms: Vec<f64>,
    pub limit: SymMatrix,
}

impl ConvergenceReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["eps", "l2_error", "h1_seminorm"]);
        for ((e, err), h1) in self.epsilons.iter().zip(&self.errors).zip(&self.h1_seminorms) {
            t.push_row(vec![fmt_f64(*e), fmt_f64(*err), fmt_f64(*h1)]);
        }
        t
    }

    /// Comma-separated plot data with a `#` comment header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# eps,l2_error,h1_seminorm\n");
        for ((e, err), h1) in self.epsilons.iter().zip(&self.errors).zip(&self.h1_seminorms) {
            s.push_str(&format!("{},{},{}\n", fmt_f64(*e), fmt_f64(*err), fmt_f64(*h1)));
        }
        s
    }
}

/// Runs the `eps` ladder on one fixed realization.
pub fn convergence_study(
    realization: &CoefficientField,
    problem: &DirichletProblem,
    eps_list: &[f64],
    policy: MeshPolicy,
    solver: &SolverConfig,
    limit: LimitMatrix,
) -> Result<ConvergenceReport, ConvergenceError> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ConvergenceError::NotDecreasing);
    }
    if let Some(&bad) = eps_list.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
        return Err(ConvergenceError::BadEps(bad));
    }
    let a = match limit {
        LimitMatrix::Homogenized => homogenize(realization, solver)?.0.matrix,
        LimitMatrix::Voigt => voigt_reuss_bounds(realization)?.1,
    };
    info!("convergence limit matrix {:?}", a.upper());
    let rows: Vec<Result<(f64, f64), ConvergenceError>> = eps_list
        .par_iter()
        .map(|&eps| {
            let mesh = policy.mesh(realization.grid(), eps)?;
            let u_eps = solve_eps(problem, realization, eps, &mesh)?;
            let u_h = solve_hom(problem, &a, &mesh)?;
            let err = relative_l2_error(&u_eps, &u_h);
            info!("eps={eps} cells={} iterations={} l2_error={err:e}", mesh.cells()[0], u_eps.iterations);
            Ok((err, u_eps.h1_seminorm()))
        })
        .collect();
    let mut errors = Vec::with_capacity(rows.len());
    let mut h1 = Vec::with_capacity(rows.len());
    for r in rows {
        let (e, s) = r?;
        errors.push(e);
        h1.push(s);
    }
    Ok(ConvergenceReport { epsilons: eps_list.to_vec(), errors, h1_seminorms: h1, limit: a })
}
