//! Integer relations between atom frequencies.
//!
//! Frequencies are declared in exact rational coordinates over a set of
//! symbolic, pairwise incommensurable generators: along each axis,
//! `omega_i = sum_m q_{i,m} beta_m`. A vector `k` is a resonance when
//! `sum_i k_i omega_i = 0` as a vector, which holds iff it holds separately
//! for every (axis, generator) pair. The resonance set is therefore the
//! integer kernel of a rational matrix, computed here exactly with
//! unimodular row reduction.

use std::f64::consts::TAU;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Enumeration budget of [`brute_force_kernel`].
pub const BRUTE_FORCE_BUDGET: u128 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResonanceError {
    #[error("cannot parse rational {0:?}")]
    Parse(String),
    #[error("atom {0} has the zero frequency")]
    ZeroFrequency(usize),
    #[error("atoms {0} and {1} have the same frequency")]
    DuplicateFrequency(usize, usize),
    #[error("atom {atom}: expected {expected} coefficients, got {got}")]
    Shape { atom: usize, expected: usize, got: usize },
    #[error("at least one generator is required")]
    NoGenerators,
    #[error("enumeration of {0} candidates exceeds the budget")]
    BudgetExceeded(u128),
    #[error("{got} phases for {expected} atoms")]
    PhaseCount { expected: usize, got: usize },
}

/// Parses `"p/q"` or `"p"`.
pub fn parse_rational(s: &str) -> Result<BigRational, ResonanceError> {
    let err = || ResonanceError::Parse(s.to_string());
    let t = s.trim();
    let (num, den) = match t.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (t, "1"),
    };
    let p: BigInt = num.parse().map_err(|_| err())?;
    let q: BigInt = den.parse().map_err(|_| err())?;
    if q.is_zero() {
        return Err(err());
    }
    Ok(BigRational::new(p, q))
}

/// Atom frequencies in rational coordinates over symbolic generators.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySet {
    generators: Vec<String>,
    dim: usize,
    /// `coeffs[atom][axis][generator]`, in lowest terms.
    coeffs: Vec<Vec<Vec<BigRational>>>,
}

impl FrequencySet {
    pub fn new(generators: Vec<String>, coeffs: Vec<Vec<Vec<BigRational>>>) -> Result<Self, ResonanceError> {
        if generators.is_empty() {
            return Err(ResonanceError::NoGenerators);
        }
        let dim = coeffs.first().map_or(1, |a| a.len());
        for (i, atom) in coeffs.iter().enumerate() {
            if atom.len() != dim {
                return Err(ResonanceError::Shape { atom: i, expected: dim, got: atom.len() });
            }
            for axis in atom {
                if axis.len() != generators.len() {
                    return Err(ResonanceError::Shape { atom: i, expected: generators.len(), got: axis.len() });
                }
            }
            if atom.iter().flatten().all(Zero::is_zero) {
                return Err(ResonanceError::ZeroFrequency(i));
            }
            if let Some(j) = coeffs[..i].iter().position(|other| other == atom) {
                return Err(ResonanceError::DuplicateFrequency(j, i));
            }
        }
        Ok(Self { generators, dim, coeffs })
    }

    /// Scalar frequencies (`d = 1`) given as rationals over generators.
    pub fn scalar(generators: Vec<String>, coeffs: Vec<Vec<BigRational>>) -> Result<Self, ResonanceError> {
        Self::new(generators, coeffs.into_iter().map(|c| vec![c]).collect())
    }

    /// Parses `coeffs[atom][axis][generator]` from `"p/q"` strings.
    pub fn parse(generators: Vec<String>, coeffs: &[Vec<Vec<String>>]) -> Result<Self, ResonanceError> {
        let parsed = coeffs
            .iter()
            .map(|atom| {
                atom.iter()
                    .map(|axis| axis.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(generators, parsed)
    }

    pub fn atoms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[String] {
        &self.generators
    }

    pub fn coeff(&self, atom: usize, axis: usize, generator: usize) -> &BigRational {
        &self.coeffs[atom][axis][generator]
    }

    /// One integer row per (axis, generator) pair, denominators cleared.
    pub fn constraint_rows(&self) -> Vec<Vec<BigInt>> {
        let mut rows = Vec::new();
        for axis in 0..self.dim {
            for g in 0..self.generators.len() {
                let lcm = self
                    .coeffs
                    .iter()
                    .fold(BigInt::one(), |acc, atom| acc.lcm(atom[axis][g].denom()));
                let row: Vec<BigInt> = self
                    .coeffs
                    .iter()
                    .map(|atom| {
                        let q = &atom[axis][g];
                        q.numer() * (&lcm / q.denom())
                    })
                    .collect();
                if row.iter().any(|v| !v.is_zero()) {
                    rows.push(row);
                }
            }
        }
        rows
    }

    /// Exact check of `sum_i k_i omega_i = 0` in rational arithmetic.
    pub fn is_resonance(&self, k: &[i64]) -> bool {
        (0..self.dim).all(|axis| {
            (0..self.generators.len()).all(|g| {
                let s: BigRational = self
                    .coeffs
                    .iter()
                    .zip(k)
                    .map(|(atom, &ki)| &atom[axis][g] * BigRational::from_integer(BigInt::from(ki)))
                    .sum();
                s.is_zero()
            })
        })
    }

    /// Floating-point frequency vectors for given generator values.
    pub fn numeric(&self, generator_values: &[f64]) -> Vec<Vec<f64>> {
        self.coeffs
            .iter()
            .map(|atom| {
                atom.iter()
                    .map(|axis| {
                        axis.iter()
                            .zip(generator_values)
                            .map(|(q, b)| q.to_f64().unwrap_or(f64::NAN) * b)
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Saturated integer basis of the resonance set, in Hermite normal form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResonanceLattice {
    atoms: usize,
    basis: Vec<Vec<i64>>,
}

impl ResonanceLattice {
    /// The trivial lattice `{0}` on `atoms` atoms.
    pub fn trivial(atoms: usize) -> Self {
        Self { atoms, basis: Vec::new() }
    }

    pub fn from_basis(atoms: usize, basis: Vec<Vec<i64>>) -> Self {
        let big: Vec<Vec<BigInt>> = basis.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect();
        Self { atoms, basis: to_i64(&hermite_normal_form(big)) }
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<i64>] {
        &self.basis
    }

    /// Whether `k` is an integer combination of the basis rows.
    pub fn contains(&self, k: &[i64]) -> bool {
        let mut rest: Vec<i128> = k.iter().map(|&v| v as i128).collect();
        for row in &self.basis {
            let Some(p) = row.iter().position(|&v| v != 0) else { continue };
            let pivot = row[p] as i128;
            if rest[p] % pivot != 0 {
                return false;
            }
            let m = rest[p] / pivot;
            for (r, &b) in rest.iter_mut().zip(row) {
                *r -= m * b as i128;
            }
        }
        rest.iter().all(|&v| v == 0)
    }

    /// Same lattice as `other`: each basis lies in the other's span.
    pub fn same_lattice(&self, other: &ResonanceLattice) -> bool {
        self.atoms == other.atoms
            && self.rank() == other.rank()
            && self.basis.iter().all(|r| other.contains(r))
            && other.basis.iter().all(|r| self.contains(r))
    }
}

fn to_i64(m: &[Vec<BigInt>]) -> Vec<Vec<i64>> {
    m.iter()
        .map(|r| r.iter().map(|v| v.to_i64().expect("lattice entry fits in i64")).collect())
        .collect()
}

/// Integer basis of `{k in Z^N : sum_i k_i omega_i = 0}`.
///
/// Rows of the unimodular transform that zero out the transposed constraint
/// matrix span the integer kernel, and because the transform is unimodular
/// the span is saturated. The result is brought to Hermite normal form.
pub fn kernel_basis(freqs: &FrequencySet) -> ResonanceLattice {
    let n = freqs.atoms();
    let rows = freqs.constraint_rows();
    let m = rows.len();
    // Augmented rows: (C^T row k | e_k).
    let mut aug: Vec<Vec<BigInt>> = (0..n)
        .map(|k| {
            let mut r: Vec<BigInt> = rows.iter().map(|c| c[k].clone()).collect();
            r.extend((0..n).map(|j| if j == k { BigInt::one() } else { BigInt::zero() }));
            r
        })
        .collect();
    let mut pivot_row = 0;
    for col in 0..m {
        if pivot_row == n {
            break;
        }
        if gcd_eliminate(&mut aug, pivot_row, col) {
            pivot_row += 1;
        }
    }
    let kernel: Vec<Vec<BigInt>> = aug[pivot_row..].iter().map(|r| r[m..].to_vec()).collect();
    ResonanceLattice { atoms: n, basis: to_i64(&hermite_normal_form(kernel)) }
}

/// Euclidean elimination in column `col` over rows `top..`: afterwards only
/// row `top` may be nonzero there. Returns whether a pivot was found.
fn gcd_eliminate(a: &mut [Vec<BigInt>], top: usize, col: usize) -> bool {
    loop {
        let best = (top..a.len())
            .filter(|&r| !a[r][col].is_zero())
            .min_by(|&x, &y| a[x][col].abs().cmp(&a[y][col].abs()));
        let Some(best) = best else { return false };
        a.swap(top, best);
        let mut done = true;
        for r in top + 1..a.len() {
            if a[r][col].is_zero() {
                continue;
            }
            let q = a[r][col].div_floor(&a[top][col]);
            let pivot = a[top].clone();
            for (x, p) in a[r].iter_mut().zip(&pivot) {
                *x -= &q * p;
            }
            if !a[r][col].is_zero() {
                done = false;
            }
        }
        if done {
            return true;
        }
    }
}

/// Row-style Hermite normal form: echelon rows, positive pivots, entries
/// above each pivot reduced into `[0, pivot)`, zero rows dropped. Rows come
/// out in decreasing lexicographic order.
pub fn hermite_normal_form(mut a: Vec<Vec<BigInt>>) -> Vec<Vec<BigInt>> {
    if a.is_empty() {
        return a;
    }
    let cols = a[0].len();
    let mut top = 0;
    let mut pivots = Vec::new();
    for col in 0..cols {
        if top == a.len() {
            break;
        }
        if gcd_eliminate(&mut a, top, col) {
            if a[top][col].is_negative() {
                a[top].iter_mut().for_each(|v| *v = -v.clone());
            }
            let pivot_row = a[top].clone();
            for r in 0..top {
                let q = a[r][col].div_floor(&pivot_row[col]);
                if !q.is_zero() {
                    for (x, p) in a[r].iter_mut().zip(&pivot_row) {
                        *x -= &q * p;
                    }
                }
            }
            pivots.push(col);
            top += 1;
        }
    }
    a.truncate(top);
    a
}

/// Diagonal of the Smith normal form (elementary divisors, nonzero only).
pub fn smith_divisors(m: &[Vec<i64>]) -> Vec<BigInt> {
    let mut a: Vec<Vec<BigInt>> = m.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect();
    let rows = a.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = a[0].len();
    let mut divisors = Vec::new();
    for t in 0..rows.min(cols) {
        // Move the smallest nonzero entry of the trailing block to (t, t).
        let Some((pr, pc)) = (t..rows)
            .flat_map(|r| (t..cols).map(move |c| (r, c)))
            .filter(|&(r, c)| !a[r][c].is_zero())
            .min_by(|&(r1, c1), &(r2, c2)| a[r1][c1].abs().cmp(&a[r2][c2].abs()))
        else {
            break;
        };
        a.swap(t, pr);
        for row in a.iter_mut() {
            row.swap(t, pc);
        }
        loop {
            let mut changed = false;
            for r in t + 1..rows {
                if !a[r][t].is_zero() {
                    let q = a[r][t].div_floor(&a[t][t]);
                    let pivot = a[t].clone();
                    for (x, p) in a[r].iter_mut().zip(&pivot) {
                        *x -= &q * p;
                    }
                    changed = true;
                }
            }
            for c in t + 1..cols {
                if !a[t][c].is_zero() {
                    let q = a[t][c].div_floor(&a[t][t]);
                    for row in a.iter_mut() {
                        let p = row[t].clone();
                        row[c] -= &q * p;
                    }
                    changed = true;
                }
            }
            // Any remainder smaller than the pivot becomes the new pivot.
            let smaller = (t..rows)
                .flat_map(|r| (t..cols).map(move |c| (r, c)))
                .filter(|&(r, c)| (r == t || c == t) && (r, c) != (t, t) && !a[r][c].is_zero())
                .min_by(|&(r1, c1), &(r2, c2)| a[r1][c1].abs().cmp(&a[r2][c2].abs()));
            if let Some((r, c)) = smaller {
                a.swap(t, r);
                for row in a.iter_mut() {
                    row.swap(t, c);
                }
                continue;
            }
            if !changed {
                // Divisibility: fold a non-divisible entry into row t.
                let bad = (t + 1..rows)
                    .flat_map(|r| (t + 1..cols).map(move |c| (r, c)))
                    .find(|&(r, c)| !(&a[r][c] % &a[t][t]).is_zero());
                match bad {
                    Some((r, _)) => {
                        let src = a[r].clone();
                        for (x, s) in a[t].iter_mut().zip(&src) {
                            *x += s;
                        }
                    }
                    None => break,
                }
            }
        }
        divisors.push(a[t][t].abs());
    }
    divisors
}

/// Saturated iff every elementary divisor equals one.
pub fn is_saturated(lattice: &ResonanceLattice) -> bool {
    smith_divisors(lattice.basis()).iter().all(One::is_one)
}

/// All `k` with `max |k_i| <= bound` and `sum_i k_i omega_i = 0`, in
/// lexicographic order. Testing oracle, independent of the elimination path.
pub fn brute_force_kernel(freqs: &FrequencySet, bound: u32) -> Result<Vec<Vec<i64>>, ResonanceError> {
    let n = freqs.atoms();
    let side = 2 * bound as u128 + 1;
    let candidates = (n as u128).saturating_mul(side.saturating_pow(n as u32));
    if candidates > BRUTE_FORCE_BUDGET {
        return Err(ResonanceError::BudgetExceeded(candidates));
    }
    // Per (axis, generator): numerators over the common denominator.
    let mut checks: Vec<Vec<i128>> = Vec::new();
    for axis in 0..freqs.dim() {
        for g in 0..freqs.generators().len() {
            let den = (0..n).fold(1i128, |acc, i| {
                let d = freqs.coeff(i, axis, g).denom().to_i128().expect("denominator fits i128");
                acc.lcm(&d)
            });
            let row = (0..n)
                .map(|i| {
                    let q = freqs.coeff(i, axis, g);
                    let num = q.numer().to_i128().expect("numerator fits i128");
                    num * (den / q.denom().to_i128().expect("denominator fits i128"))
                })
                .collect();
            checks.push(row);
        }
    }
    let b = bound as i64;
    let mut out = Vec::new();
    let mut k = vec![-b; n];
    loop {
        if checks.iter().all(|row| row.iter().zip(&k).map(|(c, &ki)| c * ki as i128).sum::<i128>() == 0) {
            out.push(k.clone());
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if k[pos] < b {
                k[pos] += 1;
                break;
            }
            k[pos] = -b;
        }
    }
}

/// `eta_j = (sum_i v^j_i phi_i) mod 2 pi`, in `[0, 2 pi)`.
pub fn invariant_phases(lattice: &ResonanceLattice, phi: &[f64]) -> Result<Vec<f64>, ResonanceError> {
    if phi.len() != lattice.atoms() {
        return Err(ResonanceError::PhaseCount { expected: lattice.atoms(), got: phi.len() });
    }
    let reduced: Vec<f64> = phi.iter().map(|p| p.rem_euclid(TAU)).collect();
    Ok(lattice
        .basis()
        .iter()
        .map(|v| {
            let s: f64 = v.iter().zip(&reduced).map(|(&vi, p)| vi as f64 * p).sum();
            let e = s.rem_euclid(TAU);
            if e >= TAU {
                0.0
            } else {
                e
            }
        })
        .collect())
}

/// Distance between two angles on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn q(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn one_gen(vals: &[&str]) -> FrequencySet {
        FrequencySet::scalar(vec!["b1".into()], vals.iter().map(|v| vec![q(v)]).collect()).unwrap()
    }

    #[test]
    fn incommensurable_generators_have_no_resonance() {
        let f = FrequencySet::scalar(
            vec!["b1".into(), "b2".into()],
            vec![vec![q("1"), q("0")], vec![q("0"), q("1")]],
        )
        .unwrap();
        assert_eq!(kernel_basis(&f).rank(), 0);
        assert_eq!(brute_force_kernel(&f, 5).unwrap(), vec![vec![0, 0]]);
    }

    #[test]
    fn one_two() {
        let f = one_gen(&["1", "2"]);
        let lat = kernel_basis(&f);
        assert_eq!(lat.basis(), &[vec![2, -1]]);
        assert_eq!(brute_force_kernel(&f, 3).unwrap(), vec![vec![-2, 1], vec![0, 0], vec![2, -1]]);
    }

    #[test]
    fn one_two_three() {
        let f = one_gen(&["1", "2", "3"]);
        let lat = kernel_basis(&f);
        assert_eq!(lat.rank(), 2);
        let expected = ResonanceLattice::from_basis(3, vec![vec![-2, 1, 0], vec![-3, 0, 1]]);
        assert!(lat.same_lattice(&expected));
        assert_eq!(lat.basis(), &[vec![1, 1, -1], vec![0, 3, -2]]);
        for k in brute_force_kernel(&f, 5).unwrap() {
            assert!(lat.contains(&k));
        }
        assert!(is_saturated(&lat));
    }

    #[test]
    fn half_frequency() {
        let f = one_gen(&["1", "1/2"]);
        let hits = brute_force_kernel(&f, 2).unwrap();
        assert!(hits.contains(&vec![1, -2]) && hits.contains(&vec![-1, 2]));
        assert_eq!(kernel_basis(&f).basis(), &[vec![1, -2]]);
    }

    #[test]
    fn vector_condition_is_per_axis() {
        // omega_1 = (1, 0), omega_2 = (0, 1), omega_3 = (1, 1): k = (1, 1, -1).
        let f = FrequencySet::parse(
            vec!["b1".into()],
            &[
                vec![vec!["1".into()], vec!["0".into()]],
                vec![vec!["0".into()], vec!["1".into()]],
                vec![vec!["1".into()], vec!["1".into()]],
            ],
        )
        .unwrap();
        let lat = kernel_basis(&f);
        assert_eq!(lat.basis(), &[vec![1, 1, -1]]);
        assert!(f.is_resonance(&[1, 1, -1]));
        assert!(!f.is_resonance(&[1, -1, 0]));
    }

    #[test]
    fn invariant_phase_examples() {
        let lat = ResonanceLattice::from_basis(2, vec![vec![2, -1]]);
        let eta = invariant_phases(&lat, &[PI / 2.0, PI]).unwrap();
        assert!(circular_distance(eta[0], 0.0) < 1e-15);
        let eta = invariant_phases(&lat, &[0.0, PI / 2.0]).unwrap();
        assert!((eta[0] - 1.5 * PI).abs() < 1e-15);
        let lat3 = ResonanceLattice::from_basis(3, vec![vec![1, 1, -1], vec![0, 3, -2]]);
        assert_eq!(invariant_phases(&lat3, &[0.0; 3]).unwrap(), vec![0.0, 0.0]);
        assert!(invariant_phases(&lat3, &[0.0; 2]).is_err());
    }

    #[test]
    fn smith_divisors_detect_non_saturated_bases() {
        assert_eq!(smith_divisors(&[vec![2, 4], vec![6, 8]]), vec![BigInt::from(2), BigInt::from(4)]);
        assert_eq!(smith_divisors(&[vec![2, -2, 0]]), vec![BigInt::from(2)]);
        let lat = ResonanceLattice { atoms: 2, basis: vec![vec![4, -2]] };
        assert!(!is_saturated(&lat));
    }

    #[test]
    fn rejects_malformed_sets() {
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!(
            FrequencySet::scalar(vec!["b".into()], vec![vec![q("0")]]),
            Err(ResonanceError::ZeroFrequency(0))
        );
        assert_eq!(
            FrequencySet::scalar(vec!["b".into()], vec![vec![q("1/2")], vec![q("2/4")]]),
            Err(ResonanceError::DuplicateFrequency(0, 1))
        );
        let f = one_gen(&["1", "2", "3", "5", "7", "11"]);
        assert!(matches!(brute_force_kernel(&f, 40), Err(ResonanceError::BudgetExceeded(_))));
    }
}
