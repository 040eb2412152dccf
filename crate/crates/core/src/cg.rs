//! Preconditioned conjugate gradients with deterministic reductions.

use log::debug;
use rayon::prelude::*;
use thiserror::Error;

use crate::fem::dot;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CgError {
    #[error("no convergence after {iterations} iterations: relative residual {residual:e} > {tol:e}")]
    MaxIterations { iterations: usize, residual: f64, tol: f64 },
    #[error("breakdown at iteration {iteration}: curvature {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Final `|b - A x| / |b|`, recomputed from the explicit residual.
    pub residual: f64,
    pub history: Vec<f64>,
}

/// How the stopping test measures residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualNorm {
    /// `|r|_2 / |b|_2`.
    Euclidean,
    /// `|r|_{M} / |b|_{M}` with `|r|_M^2 = r . M r`. Its rounding floor grows
    /// like the square root of the condition number instead of linearly,
    /// which keeps tight tolerances reachable on fine meshes.
    Preconditioned,
}

/// Solves `A x = b` starting from `x`, stopping once the relative residual
/// in `norm` is at most `tol`.
///
/// `project` is applied to the right-hand side and every preconditioned
/// residual; the periodic solvers use it to stay orthogonal to constants.
#[allow(clippy::too_many_arguments)]
pub fn pcg<A, M, P>(
    apply_a: A,
    apply_m: M,
    project: P,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    norm: ResidualNorm,
) -> Result<CgStats, CgError>
where
    A: Fn(&[f64], &mut [f64]),
    M: Fn(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    let n = b.len();
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let mut z = vec![0.0; n];
    let b_norm = match norm {
        ResidualNorm::Euclidean => dot(&rhs, &rhs).sqrt(),
        ResidualNorm::Preconditioned => {
            apply_m(&rhs, &mut z);
            project(&mut z);
            dot(&rhs, &z).max(0.0).sqrt()
        }
    };
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, residual: 0.0, history: vec![0.0] });
    }
    let measure = |r: &[f64], rz: f64| match norm {
        ResidualNorm::Euclidean => dot(r, r).sqrt() / b_norm,
        ResidualNorm::Preconditioned => rz.max(0.0).sqrt() / b_norm,
    };

    let mut ax = vec![0.0; n];
    // Explicit residual, its preconditioned image and their product.
    let true_residual = |x: &[f64], ax: &mut [f64], z: &mut [f64]| {
        apply_a(x, ax);
        let mut r: Vec<f64> = rhs.iter().zip(ax.iter()).map(|(b, a)| b - a).collect();
        project(&mut r);
        apply_m(&r, z);
        project(z);
        let rz = dot(&r, z);
        (r, rz)
    };
    let (mut r, mut rz) = true_residual(x, &mut ax, &mut z);
    let mut res = measure(&r, rz);
    let mut history = vec![res];
    if res <= tol {
        return Ok(CgStats { iterations: 0, residual: res, history });
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];

    for it in 1..=max_iter {
        apply_a(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature.is_nan() || curvature <= 0.0 {
            return Err(CgError::Breakdown { iteration: it, curvature });
        }
        let alpha = rz / curvature;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        apply_m(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        res = measure(&r, rz_new);
        history.push(res);
        debug!("pcg iteration {it}: relative residual {res:e}");
        if res <= tol {
            // Guard against drift of the recursive residual.
            let (true_r, true_rz) = true_residual(x, &mut ax, &mut z);
            let true_res = measure(&true_r, true_rz);
            if true_res <= tol {
                return Ok(CgStats { iterations: it, residual: true_res, history });
            }
            // Restart from the explicit residual.
            r = true_r;
            rz = true_rz;
            res = true_res;
            p.copy_from_slice(&z);
            continue;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(CgError::MaxIterations { iterations: max_iter, residual: res, tol })
}

/// Subtracts the mean.
pub fn remove_mean(v: &mut [f64]) {
    let mean = crate::fem::det_sum(v.len(), |i| v[i]) / v.len() as f64;
    v.par_iter_mut().for_each(|x| *x -= mean);
}
