//! Stationary Gaussian fields `X = X_c + X_a` with a finite atomic spectrum.
//!
//! Amplitude convention: an atom of weight `c` contributes `c cos(omega . x)`
//! to the covariance. Its amplitude is Rayleigh with scale `sqrt(c)`, so
//! `E[r^2] = 2c`, and `r cos(phi)`, `r sin(phi)` are independent `N(0, c)`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::det_sum;
use crate::fft::{signed_bin, FftNd};
use crate::fields::{FieldError, GridSpec, ScalarField};
use crate::resonance::{invariant_phases, ResonanceLattice};

/// Negative circulant eigenvalues above `-CLIP_TOL * sigma2` are set to zero.
pub const CLIP_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("lattice has {lattice} atoms, spectrum has {spectrum}")]
    LatticeMismatch { lattice: usize, spectrum: usize },
    #[error("atom frequencies are {atoms}-d, grid is {grid}-d")]
    DimensionMismatch { atoms: usize, grid: usize },
    #[error("continuous part needs a periodic grid")]
    NotPeriodic,
    #[error(
        "circulant eigenvalue {value:e} at mode {mode:?} is negative beyond tolerance; \
         enlarge the torus relative to the correlation length"
    )]
    NegativeEigenvalue { mode: Vec<i64>, value: f64 },
    #[error("autocovariance needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("lag {0:?} does not fit in the grid")]
    LagTooLarge(Vec<isize>),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// One spectral atom: covariance contribution `c cos(omega . x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub omega: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicSpectrum {
    c0: f64,
    atoms: Vec<Atom>,
}

impl AtomicSpectrum {
    pub fn new(c0: f64, atoms: Vec<Atom>) -> Result<Self, GaussianError> {
        let bad = |m: String| Err(GaussianError::InvalidSpectrum(m));
        if !(c0 >= 0.0 && c0.is_finite()) {
            return bad(format!("c0 = {c0} must be finite and >= 0"));
        }
        let dim = atoms.first().map_or(0, |a| a.omega.len());
        for (j, a) in atoms.iter().enumerate() {
            if a.omega.len() != dim || dim == 0 || dim > 3 {
                return bad(format!("atom {j}: frequency has {} entries, expected {dim}", a.omega.len()));
            }
            if a.omega.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return bad(format!("atom {j}: frequency entries must be finite and >= 0"));
            }
            if a.omega.iter().all(|&w| w == 0.0) {
                return bad(format!("atom {j}: zero frequency belongs in c0"));
            }
            if !(a.c > 0.0 && a.c.is_finite()) {
                return bad(format!("atom {j}: weight {} must be > 0", a.c));
            }
            if let Some(i) = atoms[..j].iter().position(|b| b.omega == a.omega) {
                return bad(format!("atoms {i} and {j} share a frequency"));
            }
        }
        Ok(Self { c0, atoms })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `C_a(x) = c0 + sum_j c_j cos(omega_j . x)`.
    pub fn covariance(&self, x: &[f64]) -> f64 {
        self.c0 + self.atoms.iter().map(|a| a.c * phase(&a.omega, x).cos()).sum::<f64>()
    }

    pub fn variance(&self) -> f64 {
        self.c0 + self.atoms.iter().map(|a| a.c).sum::<f64>()
    }
}

fn phase(omega: &[f64], x: &[f64]) -> f64 {
    omega.iter().zip(x).map(|(w, x)| w * x).sum()
}

/// Atom-free covariance of the ergodic part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContinuousCovariance {
    None,
    /// `sigma2 exp(-|x|^2 / (2 ell^2))`.
    SquaredExponential { sigma2: f64, ell: f64 },
    /// `sigma2 exp(-|x| / ell)`.
    Exponential { sigma2: f64, ell: f64 },
}

impl ContinuousCovariance {
    pub fn validate(&self) -> Result<(), GaussianError> {
        match *self {
            ContinuousCovariance::None => Ok(()),
            ContinuousCovariance::SquaredExponential { sigma2, ell } | ContinuousCovariance::Exponential { sigma2, ell } => {
                if sigma2 > 0.0 && ell > 0.0 && sigma2.is_finite() && ell.is_finite() {
                    Ok(())
                } else {
                    Err(GaussianError::InvalidCovariance(format!("sigma2 = {sigma2}, ell = {ell} must be positive")))
                }
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ContinuousCovariance::None => 0.0,
            ContinuousCovariance::SquaredExponential { sigma2, .. } | ContinuousCovariance::Exponential { sigma2, .. } => sigma2,
        }
    }

    /// Covariance at distance `r`.
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            ContinuousCovariance::None => 0.0,
            ContinuousCovariance::SquaredExponential { sigma2, ell } => sigma2 * (-r * r / (2.0 * ell * ell)).exp(),
            ContinuousCovariance::Exponential { sigma2, ell } => sigma2 * (-r / ell).exp(),
        }
    }

    /// Distance beyond which the covariance is below `1e-17 sigma2`.
    fn cutoff(&self) -> f64 {
        match *self {
            ContinuousCovariance::None => 0.0,
            ContinuousCovariance::SquaredExponential { ell, .. } => 9.0 * ell,
            ContinuousCovariance::Exponential { ell, .. } => 40.0 * ell,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFieldModel {
    continuous: ContinuousCovariance,
    atomic: AtomicSpectrum,
    channels: usize,
}

impl GaussianFieldModel {
    pub fn new(continuous: ContinuousCovariance, atomic: AtomicSpectrum, channels: usize) -> Result<Self, GaussianError> {
        continuous.validate()?;
        if channels == 0 {
            return Err(GaussianError::InvalidSpectrum("channel count must be >= 1".into()));
        }
        if continuous.variance() + atomic.variance() <= 0.0 {
            return Err(GaussianError::InvalidSpectrum("total variance must be positive".into()));
        }
        Ok(Self { continuous, atomic, channels })
    }

    pub fn continuous(&self) -> &ContinuousCovariance {
        &self.continuous
    }

    pub fn atomic(&self) -> &AtomicSpectrum {
        &self.atomic
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `C(0) = c0 + sum_j c_j + sigma2`.
    pub fn variance(&self) -> f64 {
        self.atomic.variance() + self.continuous.variance()
    }
}

/// The point `(x0, r, phi, eta)` of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCoordinates {
    pub x0: f64,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Coordinates of an ergodic component, one entry per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCoordinates {
    pub channels: Vec<ChannelCoordinates>,
}

impl ComponentCoordinates {
    /// Phases after translating the realization by `y`: `phi_j + omega_j . y`.
    /// The invariant phases are recomputed and agree with the old ones.
    pub fn translated(&self, atoms: &AtomicSpectrum, lattice: &ResonanceLattice, y: &[f64]) -> Result<Self, GaussianError> {
        let channels = self
            .channels
            .iter()
            .map(|ch| {
                let phi: Vec<f64> = ch
                    .phi
                    .iter()
                    .zip(atoms.atoms())
                    .map(|(p, a)| (p + phase(&a.omega, y)).rem_euclid(TAU))
                    .collect();
                let eta = eta_for(lattice, &phi)?;
                Ok(ChannelCoordinates { x0: ch.x0, r: ch.r.clone(), phi, eta })
            })
            .collect::<Result<Vec<_>, GaussianError>>()?;
        Ok(Self { channels })
    }

    /// Same component: equal `x0`, `r` and `eta` (angles compared on the
    /// circle), each within `tol`.
    pub fn same_component(&self, other: &Self, tol: f64) -> bool {
        self.channels.len() == other.channels.len()
            && self.channels.iter().zip(&other.channels).all(|(a, b)| {
                (a.x0 - b.x0).abs() <= tol
                    && a.r.len() == b.r.len()
                    && a.r.iter().zip(&b.r).all(|(x, y)| (x - y).abs() <= tol)
                    && a.eta.len() == b.eta.len()
                    && a.eta.iter().zip(&b.eta).all(|(x, y)| crate::resonance::circular_distance(*x, *y) <= tol)
            })
    }
}

fn eta_for(lattice: &ResonanceLattice, phi: &[f64]) -> Result<Vec<f64>, GaussianError> {
    invariant_phases(lattice, phi)
        .map_err(|_| GaussianError::LatticeMismatch { lattice: lattice.atoms(), spectrum: phi.len() })
}

/// Draws the coordinates of one ergodic component.
///
/// Per channel the draw order is `x0`, then `(r_j, phi_j)` atom by atom.
pub fn sample_component<R: Rng + ?Sized>(
    model: &GaussianFieldModel,
    lattice: &ResonanceLattice,
    rng: &mut R,
) -> Result<ComponentCoordinates, GaussianError> {
    let atomic = model.atomic();
    if lattice.atoms() != atomic.len() {
        return Err(GaussianError::LatticeMismatch { lattice: lattice.atoms(), spectrum: atomic.len() });
    }
    let channels = (0..model.channels())
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let x0 = atomic.c0().sqrt() * z;
            let mut r = Vec::with_capacity(atomic.len());
            let mut phi = Vec::with_capacity(atomic.len());
            for a in atomic.atoms() {
                // Inverse CDF of the Rayleigh law with scale sqrt(c).
                let u: f64 = 1.0 - rng.random::<f64>();
                r.push((-2.0 * a.c * u.ln()).sqrt());
                phi.push(TAU * rng.random::<f64>());
            }
            let eta = eta_for(lattice, &phi)?;
            Ok(ChannelCoordinates { x0, r, phi, eta })
        })
        .collect::<Result<Vec<_>, GaussianError>>()?;
    Ok(ComponentCoordinates { channels })
}

/// `x0 + sum_j r_j cos(omega_j . x + phi_j)` at every cell center.
pub fn synth_atomic(coords: &ComponentCoordinates, atoms: &AtomicSpectrum, grid: &GridSpec) -> Result<Vec<ScalarField>, GaussianError> {
    if let Some(a) = atoms.atoms().first() {
        if a.omega.len() != grid.dim() {
            return Err(GaussianError::DimensionMismatch { atoms: a.omega.len(), grid: grid.dim() });
        }
    }
    let centers: Vec<Vec<f64>> = (0..grid.num_cells()).map(|i| grid.cell_center(&grid.multi_index(i))).collect();
    coords
        .channels
        .iter()
        .map(|ch| {
            if ch.r.len() != atoms.len() || ch.phi.len() != atoms.len() {
                return Err(GaussianError::LatticeMismatch { lattice: ch.r.len(), spectrum: atoms.len() });
            }
            let values = centers
                .iter()
                .map(|x| {
                    ch.x0
                        + atoms
                            .atoms()
                            .iter()
                            .zip(ch.r.iter().zip(&ch.phi))
                            .map(|(a, (r, p))| r * (phase(&a.omega, x) + p).cos())
                            .sum::<f64>()
                })
                .collect();
            Ok(ScalarField::new(grid.clone(), values)?)
        })
        .collect()
}

/// Centered field with the torus-periodized covariance, by circulant
/// embedding. One independent field per channel.
pub fn synth_continuous<R: Rng + ?Sized>(
    cov: &ContinuousCovariance,
    grid: &GridSpec,
    channels: usize,
    rng: &mut R,
) -> Result<Vec<ScalarField>, GaussianError> {
    cov.validate()?;
    if matches!(cov, ContinuousCovariance::None) {
        return Ok((0..channels).map(|_| ScalarField::constant(grid.clone(), 0.0)).collect());
    }
    if !grid.is_periodic() {
        return Err(GaussianError::NotPeriodic);
    }
    let sqrt_eig = circulant_sqrt_eigenvalues(cov, grid)?;
    let fft = FftNd::new(grid.cells());
    (0..channels)
        .map(|_| {
            let mut buf: Vec<Complex64> = sqrt_eig
                .iter()
                .map(|&s| {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    Complex64::new(s * a, s * b)
                })
                .collect();
            fft.forward(&mut buf);
            Ok(ScalarField::new(grid.clone(), buf.iter().map(|v| v.re).collect())?)
        })
        .collect()
}

/// `sqrt(lambda_k / N)` for the circulant covariance matrix of `grid`.
fn circulant_sqrt_eigenvalues(cov: &ContinuousCovariance, grid: &GridSpec) -> Result<Vec<f64>, GaussianError> {
    let d = grid.dim();
    let n = grid.num_cells();
    let lengths: Vec<f64> = (0..d).map(|a| grid.length(a)).collect();
    let images: Vec<i64> = lengths.iter().map(|l| (cov.cutoff() / l).ceil() as i64 + 1).collect();
    let covariance_at = |i: usize| {
        let idx = grid.multi_index(i);
        let lag: Vec<f64> = idx
            .iter()
            .zip(grid.cells())
            .map(|(&k, &m)| signed_bin(k, m) as f64 * grid.h())
            .collect();
        // Sum over periodic images m with |m_a| <= images[a].
        let mut m: Vec<i64> = images.iter().map(|k| -k).collect();
        let mut total = 0.0;
        loop {
            let r2: f64 = (0..d).map(|a| (lag[a] + m[a] as f64 * lengths[a]).powi(2)).sum();
            total += cov.eval(r2.sqrt());
            let mut a = d;
            loop {
                if a == 0 {
                    return total;
                }
                a -= 1;
                if m[a] < images[a] {
                    m[a] += 1;
                    break;
                }
                m[a] = -images[a];
            }
        }
    };
    let mut buf: Vec<Complex64> = (0..n).map(|i| Complex64::new(covariance_at(i), 0.0)).collect();
    FftNd::new(grid.cells()).forward(&mut buf);
    let sigma2 = cov.variance();
    buf.iter()
        .enumerate()
        .map(|(k, v)| {
            let lam = v.re / n as f64;
            if lam >= 0.0 {
                Ok(lam.sqrt())
            } else if lam >= -CLIP_TOL * sigma2 {
                Ok(0.0)
            } else {
                let mode = grid.multi_index(k).iter().zip(grid.cells()).map(|(&i, &m)| signed_bin(i, m)).collect();
                Err(GaussianError::NegativeEigenvalue { mode, value: lam })
            }
        })
        .collect()
}

/// Field of the component `coords`: atomic part plus fresh continuous noise
/// drawn from `rng`.
pub fn component_field<R: Rng + ?Sized>(
    model: &GaussianFieldModel,
    coords: &ComponentCoordinates,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<Vec<ScalarField>, GaussianError> {
    let mut fields = synth_atomic(coords, model.atomic(), grid)?;
    let noise = synth_continuous(model.continuous(), grid, model.channels(), rng)?;
    for (f, z) in fields.iter_mut().zip(noise) {
        f.values.iter_mut().zip(z.values).for_each(|(v, z)| *v += z);
    }
    Ok(fields)
}

/// Unconditional draw: component coordinates first, then continuous noise,
/// both from `rng`.
pub fn sample_field<R: Rng + ?Sized>(
    model: &GaussianFieldModel,
    lattice: &ResonanceLattice,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<(Vec<ScalarField>, ComponentCoordinates), GaussianError> {
    let coords = sample_component(model, lattice, rng)?;
    let fields = component_field(model, &coords, grid, rng)?;
    Ok((fields, coords))
}

/// Autocovariance estimate at one lag.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovarianceEstimate {
    pub lag: Vec<isize>,
    pub value: f64,
    /// Standard error over samples of the per-sample spatial averages.
    pub std_err: f64,
}

/// Estimates `C(lag) = E[X(x) X(x + lag)]` for centered fields by averaging
/// over every `x` with `x + lag` inside the grid (no wrap-around) and over
/// samples.
pub fn empirical_autocovariance(samples: &[ScalarField], lags: &[Vec<isize>]) -> Result<Vec<AutocovarianceEstimate>, GaussianError> {
    if samples.len() < 2 {
        return Err(GaussianError::TooFewSamples(samples.len()));
    }
    let grid = &samples[0].grid;
    lags.iter()
        .map(|lag| {
            if lag.len() != grid.dim() || lag.iter().zip(grid.cells()).any(|(l, &n)| l.unsigned_abs() >= n) {
                return Err(GaussianError::LagTooLarge(lag.clone()));
            }
            let pairs: Vec<(usize, usize)> = (0..grid.num_cells())
                .filter_map(|i| {
                    let idx = grid.multi_index(i);
                    let moved: Option<Vec<usize>> = idx
                        .iter()
                        .zip(lag)
                        .zip(grid.cells())
                        .map(|((&k, &l), &n)| {
                            let t = k as isize + l;
                            (0..n as isize).contains(&t).then_some(t as usize)
                        })
                        .collect();
                    moved.map(|m| (i, grid.linear_index(&m)))
                })
                .collect();
            let per_sample: Vec<f64> = samples
                .iter()
                .map(|s| det_sum(pairs.len(), |p| s.values[pairs[p].0] * s.values[pairs[p].1]) / pairs.len() as f64)
                .collect();
            let m = per_sample.len() as f64;
            let mean = per_sample.iter().sum::<f64>() / m;
            let var = per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            Ok(AutocovarianceEstimate { lag: lag.clone(), value: mean, std_err: (var / m).sqrt() })
        })
        .collect()
}

/// Uniform translation on the torus of `grid`, in length units.
pub fn uniform_shift<R: Rng + ?Sized>(grid: &GridSpec, rng: &mut R) -> Vec<f64> {
    (0..grid.dim()).map(|a| grid.length(a) * rng.random::<f64>()).collect()
}

/// Probability that `x0 + r cos(theta) >= threshold` over a uniform phase.
pub fn fraction_above(x0: f64, r: f64, threshold: f64) -> f64 {
    if r == 0.0 {
        return if x0 >= threshold { 1.0 } else { 0.0 };
    }
    ((threshold - x0) / r).clamp(-1.0, 1.0).acos() / PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, SeedStream};
    use proptest::prelude::*;

    fn model(c0: f64, atoms: Vec<Atom>, cont: ContinuousCovariance) -> GaussianFieldModel {
        GaussianFieldModel::new(cont, AtomicSpectrum::new(c0, atoms).unwrap(), 1).unwrap()
    }

    fn atom(omega: &[f64], c: f64) -> Atom {
        Atom { omega: omega.to_vec(), c }
    }

    #[test]
    fn degenerate_spectrum_gives_empty_coordinates() {
        let m = model(0.0, vec![], ContinuousCovariance::SquaredExponential { sigma2: 1.0, ell: 0.1 });
        let mut rng = SeedStream::new(1, 0).rng(Purpose::Component);
        let c = sample_component(&m, &ResonanceLattice::trivial(0), &mut rng).unwrap();
        assert_eq!(c.channels[0].x0, 0.0);
        assert!(c.channels[0].r.is_empty() && c.channels[0].phi.is_empty() && c.channels[0].eta.is_empty());
    }

    #[test]
    fn x0_moments() {
        let m = model(1.0, vec![], ContinuousCovariance::None);
        let mut rng = SeedStream::new(2, 0).rng(Purpose::Component);
        let lat = ResonanceLattice::trivial(0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_component(&m, &lat, &mut rng).unwrap().channels[0].x0).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((0.97..1.03).contains(&var), "{var}");
    }

    #[test]
    fn rayleigh_second_moment() {
        let m = model(0.0, vec![atom(&[1.0], 2.0)], ContinuousCovariance::None);
        let mut rng = SeedStream::new(3, 0).rng(Purpose::Component);
        let lat = ResonanceLattice::trivial(1);
        let m2 = (0..100_000)
            .map(|_| sample_component(&m, &lat, &mut rng).unwrap().channels[0].r[0].powi(2))
            .sum::<f64>()
            / 100_000.0;
        assert!((3.92..4.08).contains(&m2), "{m2}");
    }

    fn coords(x0: f64, r: Vec<f64>, phi: Vec<f64>) -> ComponentCoordinates {
        ComponentCoordinates { channels: vec![ChannelCoordinates { x0, r, phi, eta: vec![] }] }
    }

    #[test]
    fn synth_atomic_examples() {
        let g = GridSpec::torus(2, 4, 1.0).unwrap();
        let f = synth_atomic(&coords(5.0, vec![], vec![]), &AtomicSpectrum::new(0.0, vec![]).unwrap(), &g).unwrap();
        assert!(f[0].values.iter().all(|&v| v == 5.0));

        // Cell centers at 1/8, 3/8, 5/8, 7/8: the first axis index 2 has x = 5/8.
        let g2 = GridSpec::new(vec![2, 2], 0.5, true).unwrap();
        let spec = AtomicSpectrum::new(0.0, vec![atom(&[2.0 * PI, 0.0], 1.0)]).unwrap();
        let f = synth_atomic(&coords(0.0, vec![1.0], vec![PI / 4.0]), &spec, &g2).unwrap();
        // x = 0.25: cos(pi/2 + pi/4); x = 0.75: cos(3pi/2 + pi/4).
        assert!((f[0].values[0] - (0.75 * PI).cos()).abs() < 1e-15);
        assert!((f[0].values[2] - (1.75 * PI).cos()).abs() < 1e-15);

        let spec = AtomicSpectrum::new(0.0, vec![atom(&[1.0, 0.0], 1.0), atom(&[2.0, 0.0], 1.0)]).unwrap();
        let g3 = GridSpec::new(vec![2, 2], 1e-9, true).unwrap();
        let f = synth_atomic(&coords(1.0, vec![1.0, 1.0], vec![0.0, 0.0]), &spec, &g3).unwrap();
        assert!((f[0].values[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_at_half_period() {
        // Cell center at x = 0.5 exactly.
        let g = GridSpec::new(vec![3, 2], 1.0 / 3.0, true).unwrap();
        let spec = AtomicSpectrum::new(0.0, vec![atom(&[2.0 * PI, 0.0], 1.0)]).unwrap();
        let f = synth_atomic(&coords(0.0, vec![1.0], vec![0.0]), &spec, &g).unwrap();
        assert!((f[0].values[2] + 1.0).abs() < 1e-15);
        assert!((f[0].values[3] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn continuous_none_is_zero() {
        let g = GridSpec::torus(2, 8, 1.0).unwrap();
        let mut rng = SeedStream::new(4, 0).rng(Purpose::Realization);
        let f = synth_continuous(&ContinuousCovariance::None, &g, 2, &mut rng).unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|c| c.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn squared_exponential_moments() {
        let g = GridSpec::torus(1, 50, 1.0).unwrap();
        let cov = ContinuousCovariance::SquaredExponential { sigma2: 1.0, ell: 0.1 };
        let mut rng = SeedStream::new(5, 0).rng(Purpose::Realization);
        let samples: Vec<ScalarField> =
            (0..10_000).map(|_| synth_continuous(&cov, &g, 1, &mut rng).unwrap().remove(0)).collect();
        let var = samples.iter().map(|s| s.values[17].powi(2)).sum::<f64>() / samples.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
        // ell = 5 cells.
        let corr = samples.iter().map(|s| s.values[10] * s.values[15]).sum::<f64>() / samples.len() as f64;
        assert!((corr - (-0.5f64).exp()).abs() < 0.05, "{corr}");
    }

    #[test]
    fn exponential_covariance_embeds() {
        let g = GridSpec::torus(2, 16, 1.0).unwrap();
        let cov = ContinuousCovariance::Exponential { sigma2: 2.0, ell: 0.3 };
        let eig = circulant_sqrt_eigenvalues(&cov, &g).unwrap();
        let c0: f64 = eig.iter().map(|s| s * s).sum();
        // Sum of normalized eigenvalues is the periodized variance.
        let mut images = 0.0;
        for m0 in -60i32..=60 {
            for m1 in -60i32..=60 {
                images += 2.0 * (-((m0 * m0 + m1 * m1) as f64).sqrt() / 0.3).exp();
            }
        }
        assert!((c0 - images).abs() < 1e-12, "{c0} vs {images}");
    }

    #[test]
    fn continuous_requires_torus() {
        let g = GridSpec::new(vec![8], 0.1, false).unwrap();
        let cov = ContinuousCovariance::Exponential { sigma2: 1.0, ell: 0.1 };
        let mut rng = SeedStream::new(0, 0).rng(Purpose::Realization);
        assert!(matches!(synth_continuous(&cov, &g, 1, &mut rng), Err(GaussianError::NotPeriodic)));
    }

    #[test]
    fn constant_only_model_gives_constant_field() {
        let m = model(1.0, vec![], ContinuousCovariance::None);
        let g = GridSpec::torus(2, 8, 1.0).unwrap();
        let mut rng = SeedStream::new(6, 0).rng(Purpose::Realization);
        let (f, c) = sample_field(&m, &ResonanceLattice::trivial(0), &g, &mut rng).unwrap();
        assert!(f[0].values.iter().all(|&v| v == c.channels[0].x0));
    }

    #[test]
    fn component_field_is_deterministic() {
        let m = model(0.5, vec![atom(&[2.0 * PI], 1.0)], ContinuousCovariance::Exponential { sigma2: 0.2, ell: 0.1 });
        let g = GridSpec::torus(1, 32, 1.0).unwrap();
        let c = coords(0.1, vec![1.3], vec![0.4]);
        let s = SeedStream::new(7, 3);
        let a = component_field(&m, &c, &g, &mut s.rng(Purpose::Realization)).unwrap();
        let b = component_field(&m, &c, &g, &mut s.rng(Purpose::Realization)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unconditional_variance() {
        let m = model(
            0.5,
            vec![atom(&[2.0 * PI], 1.0), atom(&[4.0 * PI], 0.25)],
            ContinuousCovariance::SquaredExponential { sigma2: 0.3, ell: 0.1 },
        );
        let g = GridSpec::torus(1, 20, 1.0).unwrap();
        let lat = ResonanceLattice::from_basis(2, vec![vec![2, -1]]);
        let mut rng = SeedStream::new(8, 0).rng(Purpose::Realization);
        let n = 100_000;
        let v = (0..n).map(|_| sample_field(&m, &lat, &g, &mut rng).unwrap().0[0].values[3].powi(2)).sum::<f64>() / n as f64;
        assert!((v / m.variance() - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn autocovariance_examples() {
        let g = GridSpec::torus(1, 16, 1.0).unwrap();
        let zeros: Vec<ScalarField> = (0..3).map(|_| ScalarField::constant(g.clone(), 0.0)).collect();
        let est = empirical_autocovariance(&zeros, &[vec![0], vec![3]]).unwrap();
        assert!(est.iter().all(|e| e.value == 0.0));
        assert!(empirical_autocovariance(&zeros[..1], &[vec![0]]).is_err());

        let m = model(0.0, vec![atom(&[2.0 * PI], 2.0)], ContinuousCovariance::None);
        let lat = ResonanceLattice::trivial(1);
        let mut rng = SeedStream::new(9, 0).rng(Purpose::Realization);
        let samples: Vec<ScalarField> =
            (0..4000).map(|_| sample_field(&m, &lat, &g, &mut rng).unwrap().0.remove(0)).collect();
        // Lag of 8 cells is half a period: omega . x = pi.
        let est = empirical_autocovariance(&samples, &[vec![0], vec![8]]).unwrap();
        assert!((est[0].value - 2.0).abs() < 3.0 * est[0].std_err, "{:?}", est[0]);
        assert!((est[1].value + 2.0).abs() < 3.0 * est[1].std_err, "{:?}", est[1]);
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(AtomicSpectrum::new(-1.0, vec![]).is_err());
        assert!(AtomicSpectrum::new(0.0, vec![atom(&[0.0], 1.0)]).is_err());
        assert!(AtomicSpectrum::new(0.0, vec![atom(&[1.0], 0.0)]).is_err());
        assert!(AtomicSpectrum::new(0.0, vec![atom(&[1.0], 1.0), atom(&[1.0], 2.0)]).is_err());
        assert!(GaussianFieldModel::new(ContinuousCovariance::None, AtomicSpectrum::new(0.0, vec![]).unwrap(), 1).is_err());
    }

    proptest! {
        #[test]
        fn eta_is_translation_invariant(y in -50.0f64..50.0, p in proptest::collection::vec(0.0f64..TAU, 3)) {
            let spec = AtomicSpectrum::new(0.0, vec![atom(&[1.0], 1.0), atom(&[2.0], 1.0), atom(&[3.0], 1.0)]).unwrap();
            let lat = ResonanceLattice::from_basis(3, vec![vec![1, 1, -1], vec![0, 3, -2]]);
            let c = ComponentCoordinates {
                channels: vec![ChannelCoordinates { x0: 0.0, r: vec![1.0; 3], eta: eta_for(&lat, &p).unwrap(), phi: p }],
            };
            let moved = c.translated(&spec, &lat, &[y]).unwrap();
            prop_assert!(c.same_component(&moved, 1e-12));
        }
    }
}
