use proptest::prelude::*;

use stohom::corrector::{flux_average_matrix, homogenize, loewner_gap, SolverConfig, ASYMMETRY_TOL};
use stohom::fields::checkerboard;
use stohom::{voigt_reuss_bounds, CoefficientField, EllipticityBounds, GridSpec, SymMatrix};

fn scalar_field(dim: usize, n: usize, values: &[f64]) -> CoefficientField {
    let grid = GridSpec::torus(dim, n, 1.0).unwrap();
    let cells: Vec<SymMatrix> = values.iter().map(|&v| SymMatrix::scalar(dim, v)).collect();
    CoefficientField::new(grid, &cells, EllipticityBounds::new(0.5, 5.0).unwrap()).unwrap()
}

fn anisotropic_field(n: usize, diag: &[(f64, f64, f64)]) -> CoefficientField {
    let grid = GridSpec::torus(2, n, 1.0).unwrap();
    // [[a, c], [c, b]] with |c| < min(a, b) / 2 stays in [a - |c|, b + |c|].
    let cells: Vec<SymMatrix> = diag.iter().map(|&(a, b, c)| SymMatrix::from_upper(2, &[a, c, b])).collect();
    CoefficientField::new(grid, &cells, EllipticityBounds::new(0.25, 6.0).unwrap()).unwrap()
}

fn cell_strategy() -> impl Strategy<Value = (f64, f64, f64)> {
    (1.0f64..4.0, 1.0f64..4.0, -0.45f64..0.45)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sandwich_symmetry_and_flux_identity(cells in prop::collection::vec(cell_strategy(), 64)) {
        let field = anisotropic_field(8, &cells);
        let cfg = SolverConfig::default();
        let (hom, corr) = homogenize(&field, &cfg).unwrap();
        let (reuss, voigt) = voigt_reuss_bounds(&field).unwrap();
        let a = hom.matrix;
        prop_assert!(loewner_gap(&reuss, &a, &a) >= -1e-6);
        prop_assert!(loewner_gap(&a, &voigt, &a) >= -1e-6);
        prop_assert!(hom.asymmetry <= ASYMMETRY_TOL);
        let flux = flux_average_matrix(&field, &corr).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((flux[i * 2 + j] - a.get(i, j)).abs() <= 10.0 * cfg.tol * a.norm());
            }
        }
    }

    #[test]
    fn shift_leaves_homogenized_matrix_unchanged(
        values in prop::collection::vec(0.5f64..5.0, 27),
        s in prop::collection::vec(-3isize..3, 3),
    ) {
        let field = scalar_field(3, 3, &values);
        let cfg = SolverConfig::default();
        let a = homogenize(&field, &cfg).unwrap().0.matrix;
        let b = homogenize(&field.shifted(&s), &cfg).unwrap().0.matrix;
        prop_assert!(a.max_abs_diff(&b) <= 1e-8 * a.norm());
    }

    #[test]
    fn one_dimensional_result_is_the_harmonic_mean(values in prop::collection::vec(0.5f64..5.0, 2..40)) {
        let field = scalar_field(1, values.len(), &values);
        let a = homogenize(&field, &SolverConfig::default()).unwrap().0.matrix.get(0, 0);
        let harmonic = values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>();
        prop_assert!((a - harmonic).abs() <= 1e-8 * harmonic);
    }
}

#[test]
fn refinement_keeps_aligned_two_phase_result() {
    let field = |n: usize| {
        let values: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { 4.0 }).collect();
        scalar_field(1, n, &values)
    };
    let cfg = SolverConfig::default();
    let coarse = homogenize(&field(256), &cfg).unwrap().0.matrix.get(0, 0);
    let fine = homogenize(&field(512), &cfg).unwrap().0.matrix.get(0, 0);
    assert!((coarse - fine).abs() <= 1e-10, "{coarse} vs {fine}");
}

#[test]
fn transposed_pattern_swaps_the_axes() {
    // Checkerboard with an off-center inclusion, so the transpose differs.
    let n = 32;
    let grid = GridSpec::torus(2, n, 1.0).unwrap();
    let cb = checkerboard(&grid, 4, 1.0, 4.0).unwrap();
    let value = |i: usize, j: usize| if i < 4 && j < 12 { 2.5 } else { cb.cell(i * n + j).get(0, 0) };
    let make = |f: &dyn Fn(usize, usize) -> f64| {
        let cells: Vec<SymMatrix> = (0..n * n).map(|k| SymMatrix::scalar(2, f(k / n, k % n))).collect();
        CoefficientField::new(grid.clone(), &cells, cb.bounds()).unwrap()
    };
    let field = make(&value);
    let transposed = make(&|i, j| value(j, i));
    assert_ne!(field, transposed);
    let cfg = SolverConfig::default();
    let a = homogenize(&field, &cfg).unwrap().0.matrix;
    let b = homogenize(&transposed, &cfg).unwrap().0.matrix;
    assert!((a.get(0, 0) - a.get(1, 1)).abs() > 1e-4);
    let swapped = SymMatrix::from_upper(2, &[a.get(1, 1), a.get(0, 1), a.get(0, 0)]);
    assert!(swapped.max_abs_diff(&b) <= 1e-8, "{a:?} vs {b:?}");
}
