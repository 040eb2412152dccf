//! Q1 finite elements on regular grids with cellwise-constant coefficients.
//!
//! Nodal unknowns sit on cell corners. On a periodic grid the node with
//! multi-index `p` is the lower corner of cell `p`, so nodes and cells share
//! one index space. On a Dirichlet box with `n` cells per axis the unknowns
//! are the `(n - 1)^d` interior nodes.
//!
//! Local vertex `l` of a cell sits at offset `s_a = (l >> a) & 1` along axis `a`.
//! The matrix-free operators gather per node in a fixed order, so results
//! do not depend on the thread count.

use rayon::prelude::*;

use crate::fields::{tri_index, tri_len, CoefficientField, GridSpec};

/// Chunk length for deterministic parallel reductions.
pub const REDUCTION_CHUNK: usize = 4096;

/// Sum of `f(i)` over `0..n`, reduced in fixed chunks and fixed order.
pub fn det_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = n.div_ceil(REDUCTION_CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(n);
            (lo..hi).map(&f).sum()
        })
        .collect();
    partial.iter().sum()
}

/// Deterministic sum of a vector-valued function.
pub fn det_sum_vec<F>(n: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(REDUCTION_CHUNK);
    let partial: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(n);
            let mut acc = vec![0.0; width];
            for i in lo..hi {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for p in partial {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    det_sum(a.len(), |i| a[i] * b[i])
}

/// Reference integrals of Q1 shape functions on a cube of side `h`.
#[derive(Debug, Clone)]
pub struct Q1Element {
    dim: usize,
    h: f64,
    nv: usize,
    /// `stiff[k][s * nv + t]`: coefficient of the packed entry `k` of `A` in
    /// the element matrix entry `(s, t)`.
    stiff: Vec<Vec<f64>>,
    /// `grad[s][i] = int_cell d_i N_s`.
    grad: Vec<Vec<f64>>,
    /// `mass[s * nv + t] = int_cell N_s N_t`.
    mass: Vec<f64>,
}

fn bit(l: usize, a: usize) -> usize {
    (l >> a) & 1
}

impl Q1Element {
    pub fn new(dim: usize, h: f64) -> Self {
        let nv = 1 << dim;
        // 1D integrals on [0, h].
        let nn = |s: usize, t: usize| if s == t { h / 3.0 } else { h / 6.0 };
        let dd = |s: usize, t: usize| if s == t { 1.0 / h } else { -1.0 / h };
        let dn = |s: usize| if s == 0 { -0.5 } else { 0.5 };

        let full = |i: usize, j: usize, s: usize, t: usize| -> f64 {
            let mut v = 1.0;
            for a in 0..dim {
                let (sa, ta) = (bit(s, a), bit(t, a));
                v *= if a == i && a == j {
                    dd(sa, ta)
                } else if a == i {
                    dn(sa)
                } else if a == j {
                    dn(ta)
                } else {
                    nn(sa, ta)
                };
            }
            v
        };

        let mut stiff = vec![vec![0.0; nv * nv]; tri_len(dim)];
        for i in 0..dim {
            for j in 0..dim {
                let k = tri_index(dim, i, j);
                for s in 0..nv {
                    for t in 0..nv {
                        stiff[k][s * nv + t] += full(i, j, s, t);
                    }
                }
            }
        }
        let grad = (0..nv)
            .map(|s| {
                (0..dim)
                    .map(|i| {
                        (0..dim)
                            .map(|a| if a == i { if bit(s, a) == 0 { -1.0 } else { 1.0 } } else { 0.5 * h })
                            .product()
                    })
                    .collect()
            })
            .collect();
        let mass = (0..nv * nv)
            .map(|st| {
                let (s, t) = (st / nv, st % nv);
                (0..dim).map(|a| nn(bit(s, a), bit(t, a))).product()
            })
            .collect();
        Self { dim, h, nv, stiff, grad, mass }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn vertices(&self) -> usize {
        self.nv
    }

    /// Element stiffness entry `(s, t)` for packed coefficient `a`.
    #[inline]
    pub fn stiffness(&self, a: &[f64], s: usize, t: usize) -> f64 {
        let idx = s * self.nv + t;
        a.iter().zip(&self.stiff).map(|(ak, g)| ak * g[idx]).sum()
    }

    pub fn grad_integral(&self, s: usize) -> &[f64] {
        &self.grad[s]
    }

    pub fn mass(&self, s: usize, t: usize) -> f64 {
        self.mass[s * self.nv + t]
    }

    /// `int_cell grad N_s . A e_i` for packed `a`.
    pub fn load_column(&self, a: &[f64], s: usize, i: usize) -> f64 {
        (0..self.dim).map(|j| self.grad[s][j] * a[tri_index(self.dim, j, i)]).sum()
    }
}

/// Nodes of a cell and cells of a node on the periodic grid.
#[derive(Debug, Clone)]
pub struct PeriodicTopology {
    cells: Vec<usize>,
    strides: Vec<usize>,
    nv: usize,
}

impl PeriodicTopology {
    pub fn new(grid: &GridSpec) -> Self {
        Self { cells: grid.cells().to_vec(), strides: grid.strides(), nv: 1 << grid.dim() }
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node `vertex` of cell `cell`.
    #[inline]
    pub fn cell_node(&self, cell: usize, vertex: usize) -> usize {
        let mut out = 0;
        let mut rest = cell;
        for a in (0..self.cells.len()).rev() {
            let n = self.cells[a];
            let c = rest % n;
            rest /= n;
            let mut q = c + bit(vertex, a);
            if q == n {
                q = 0;
            }
            out += q * self.strides[a];
        }
        out
    }

    /// Cell having `node` as local vertex `vertex`.
    #[inline]
    pub fn node_cell(&self, node: usize, vertex: usize) -> usize {
        let mut out = 0;
        let mut rest = node;
        for a in (0..self.cells.len()).rev() {
            let n = self.cells[a];
            let p = rest % n;
            rest /= n;
            let c = if bit(vertex, a) == 1 { if p == 0 { n - 1 } else { p - 1 } } else { p };
            out += c * self.strides[a];
        }
        out
    }

    pub fn vertices(&self) -> usize {
        self.nv
    }
}

/// `y = K u` for the periodic stiffness matrix of `field`.
pub fn periodic_apply(field: &CoefficientField, elem: &Q1Element, topo: &PeriodicTopology, u: &[f64], y: &mut [f64]) {
    let nv = elem.vertices();
    y.par_iter_mut().enumerate().for_each(|(p, yp)| {
        let mut acc = 0.0;
        for s in 0..nv {
            let cell = topo.node_cell(p, s);
            let a = field.cell_upper(cell);
            for t in 0..nv {
                acc += elem.stiffness(a, s, t) * u[topo.cell_node(cell, t)];
            }
        }
        *yp = acc;
    });
}

/// Load vector `f_p = sum_cells int grad N_p . A e_i` of the corrector in direction `i`.
pub fn periodic_load(field: &CoefficientField, elem: &Q1Element, topo: &PeriodicTopology, i: usize) -> Vec<f64> {
    let nv = elem.vertices();
    (0..topo.len())
        .into_par_iter()
        .map(|p| {
            (0..nv)
                .map(|s| elem.load_column(field.cell_upper(topo.node_cell(p, s)), s, i))
                .sum()
        })
        .collect()
}

/// Symbol of the periodic Q1 stiffness of `c Id` at bin `k`.
pub fn q1_symbol(h: f64, c: f64, thetas: &[f64]) -> f64 {
    let d = thetas.len();
    let stiff: Vec<f64> = thetas.iter().map(|t| (2.0 - 2.0 * t.cos()) / h).collect();
    let mass: Vec<f64> = thetas.iter().map(|t| h * (2.0 + t.cos()) / 3.0).collect();
    (0..d)
        .map(|i| stiff[i] * (0..d).filter(|&j| j != i).map(|j| mass[j]).product::<f64>())
        .sum::<f64>()
        * c
}

/// Interior-node indexing for a Dirichlet box with `n_a` cells per axis.
#[derive(Debug, Clone)]
pub struct DirichletTopology {
    cells: Vec<usize>,
    cell_strides: Vec<usize>,
    interior: Vec<usize>,
    interior_strides: Vec<usize>,
}

impl DirichletTopology {
    pub fn new(grid: &GridSpec) -> Self {
        let interior: Vec<usize> = grid.cells().iter().map(|n| n - 1).collect();
        let mut interior_strides = vec![1; interior.len()];
        for a in (0..interior.len().saturating_sub(1)).rev() {
            interior_strides[a] = interior_strides[a + 1] * interior[a + 1];
        }
        Self { cells: grid.cells().to_vec(), cell_strides: grid.strides(), interior, interior_strides }
    }

    pub fn unknowns(&self) -> usize {
        self.interior.iter().product()
    }

    pub fn interior_shape(&self) -> &[usize] {
        &self.interior
    }

    /// Node multi-index (1-based along each axis) of interior unknown `u`.
    pub fn node_index(&self, mut u: usize) -> Vec<usize> {
        let mut idx = vec![0; self.interior.len()];
        for a in (0..self.interior.len()).rev() {
            idx[a] = u % self.interior[a] + 1;
            u /= self.interior[a];
        }
        idx
    }

    /// Unknown index of node multi-index `q`, or `None` on the boundary.
    pub fn unknown(&self, q: &[isize]) -> Option<usize> {
        let mut out = 0;
        for (a, &qa) in q.iter().enumerate() {
            if qa <= 0 || qa >= self.cells[a] as isize {
                return None;
            }
            out += (qa as usize - 1) * self.interior_strides[a];
        }
        Some(out)
    }

    pub fn cell(&self, c: &[usize]) -> usize {
        c.iter().zip(&self.cell_strides).map(|(a, s)| a * s).sum()
    }
}

/// `y = K u` on interior unknowns with homogeneous Dirichlet data.
pub fn dirichlet_apply(field: &CoefficientField, elem: &Q1Element, topo: &DirichletTopology, u: &[f64], y: &mut [f64]) {
    let nv = elem.vertices();
    let d = elem.dim();
    y.par_iter_mut().enumerate().for_each(|(iu, yp)| {
        let q = topo.node_index(iu);
        let mut acc = 0.0;
        let mut cell = vec![0usize; d];
        let mut nb = vec![0isize; d];
        for s in 0..nv {
            for a in 0..d {
                cell[a] = q[a] - bit(s, a);
            }
            let a_cell = field.cell_upper(topo.cell(&cell));
            for t in 0..nv {
                for a in 0..d {
                    nb[a] = (cell[a] + bit(t, a)) as isize;
                }
                if let Some(j) = topo.unknown(&nb) {
                    acc += elem.stiffness(a_cell, s, t) * u[j];
                }
            }
        }
        *yp = acc;
    });
}

/// Consistent load vector for a cellwise-constant right-hand side.
pub fn dirichlet_load(rhs: &[f64], elem: &Q1Element, topo: &DirichletTopology) -> Vec<f64> {
    let nv = elem.vertices();
    let d = elem.dim();
    let share = elem.h().powi(d as i32) / nv as f64;
    (0..topo.unknowns())
        .into_par_iter()
        .map(|iu| {
            let q = topo.node_index(iu);
            let mut cell = vec![0usize; d];
            (0..nv)
                .map(|s| {
                    for a in 0..d {
                        cell[a] = q[a] - bit(s, a);
                    }
                    rhs[topo.cell(&cell)] * share
                })
                .sum()
        })
        .collect()
}

/// Cellwise quadratic form `sum_c u_c^T M_c v_c` with a per-cell element matrix `m(c, s, t)`,
/// over interior unknowns of a Dirichlet box.
pub fn dirichlet_cell_form<M>(grid: &GridSpec, topo: &DirichletTopology, nv: usize, u: &[f64], v: &[f64], m: M) -> f64
where
    M: Fn(usize, usize, usize) -> f64 + Sync,
{
    let d = grid.dim();
    det_sum(grid.num_cells(), |c| {
        let cidx = grid.multi_index(c);
        let mut uloc = vec![0.0; nv];
        let mut vloc = vec![0.0; nv];
        let mut q = vec![0isize; d];
        for l in 0..nv {
            for a in 0..d {
                q[a] = (cidx[a] + bit(l, a)) as isize;
            }
            if let Some(j) = topo.unknown(&q) {
                uloc[l] = u[j];
                vloc[l] = v[j];
            }
        }
        let mut acc = 0.0;
        for s in 0..nv {
            if uloc[s] == 0.0 {
                continue;
            }
            for t in 0..nv {
                acc += uloc[s] * m(c, s, t) * vloc[t];
            }
        }
        acc
    })
}

/// Symbol of the Dirichlet Q1 stiffness of `c Id` for DST mode `k` (1-based).
pub fn dirichlet_symbol(grid: &GridSpec, c: f64, modes: &[usize]) -> f64 {
    let thetas: Vec<f64> = modes
        .iter()
        .zip(grid.cells())
        .map(|(&k, &n)| std::f64::consts::PI * k as f64 / n as f64)
        .collect();
    q1_symbol(grid.h(), c, &thetas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{EllipticityBounds, SymMatrix};

    #[test]
    fn element_matrix_rows_sum_to_zero() {
        for d in 1..=3 {
            let e = Q1Element::new(d, 0.37);
            let a = SymMatrix::from_upper(d, &[2.0, 0.3, 0.1, 1.5, -0.2, 1.2][..tri_len(d)]);
            for s in 0..e.vertices() {
                let row: f64 = (0..e.vertices()).map(|t| e.stiffness(a.upper(), s, t)).sum();
                assert!(row.abs() < 1e-13, "d={d} row {s} sums to {row}");
                for t in 0..e.vertices() {
                    assert!((e.stiffness(a.upper(), s, t) - e.stiffness(a.upper(), t, s)).abs() < 1e-14);
                }
            }
            let mass_total: f64 = (0..e.vertices() * e.vertices()).map(|st| e.mass[st]).sum();
            assert!((mass_total - 0.37f64.powi(d as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_function_energy_is_exact() {
        // u = x . g interpolated exactly; energy = |cell| g.A g.
        let d = 2;
        let h = 0.5;
        let e = Q1Element::new(d, h);
        let a = SymMatrix::from_upper(2, &[2.0, 0.5, 1.0]);
        let g = [0.7, -1.3];
        let u: Vec<f64> = (0..4)
            .map(|l| (0..d).map(|ax| g[ax] * h * bit(l, ax) as f64).sum())
            .collect();
        let mut energy = 0.0;
        for s in 0..4 {
            for t in 0..4 {
                energy += u[s] * e.stiffness(a.upper(), s, t) * u[t];
            }
        }
        assert!((energy - h * h * a.quad_form(&g)).abs() < 1e-13);
    }

    #[test]
    fn periodic_symbol_matches_operator() {
        let grid = GridSpec::torus(2, 6, 1.0).unwrap();
        let b = EllipticityBounds::new(1.0, 3.0).unwrap();
        let field = CoefficientField::constant(grid.clone(), SymMatrix::scalar(2, 2.0), b).unwrap();
        let elem = Q1Element::new(2, grid.h());
        let topo = PeriodicTopology::new(&grid);
        let (k0, k1) = (1usize, 2usize);
        let u: Vec<f64> = (0..36)
            .map(|p| {
                let (i, j) = (p / 6, p % 6);
                (2.0 * std::f64::consts::PI * (k0 * i + k1 * j) as f64 / 6.0).cos()
            })
            .collect();
        let mut y = vec![0.0; 36];
        periodic_apply(&field, &elem, &topo, &u, &mut y);
        let th = |k: usize| 2.0 * std::f64::consts::PI * k as f64 / 6.0;
        let sym = q1_symbol(grid.h(), 2.0, &[th(k0), th(k1)]);
        for p in 0..36 {
            assert!((y[p] - sym * u[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn topology_round_trip() {
        let grid = GridSpec::new(vec![3, 4, 5], 1.0, true).unwrap();
        let topo = PeriodicTopology::new(&grid);
        for cell in 0..grid.num_cells() {
            for v in 0..8 {
                let node = topo.cell_node(cell, v);
                assert_eq!(topo.node_cell(node, v), cell);
            }
        }
    }
}
