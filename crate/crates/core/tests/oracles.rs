use std::f64::consts::PI;

use approx::assert_relative_eq;
use heatlab::expr::bump;
use heatlab::linalg::{singular_values, symmetric_eigen, Mat};
use heatlab::spectral::{fd2d_warped_operator_dense, fd2d_warped_spectrum, spectrum_of, FdGrid};
use heatlab::{Convention, Interval, ManifoldSpec, PruferOptions};
use nalgebra::{DMatrix, SymmetricEigen};

fn to_nalgebra(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

#[test]
fn block_fd_eigenvalues_match_dense_operator() {
    let base = Interval::new(0.0, PI);
    let f = bump(0.3, PI);
    let grid = FdGrid::new(24, 16);
    let dense = fd2d_warped_operator_dense(base, &f, 1.0, grid);
    assert!(dense.max_asymmetry() < 1e-12);
    let mut reference: Vec<f64> = SymmetricEigen::new(to_nalgebra(&dense)).eigenvalues.iter().copied().collect();
    reference.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let block = fd2d_warped_spectrum(base, &f, 1.0, grid, 12).unwrap();
    for (b, r) in block.coarse.iter().zip(&reference) {
        assert_relative_eq!(*b, *r, max_relative = 1e-10);
    }
}

#[test]
fn jacobi_routines_match_nalgebra() {
    let a = Mat::from_fn(7, 7, |i, j| 1.0 / (1.0 + i as f64 + j as f64) + if i == j { 0.5 } else { 0.0 });
    let (mut ours, _) = symmetric_eigen(&a);
    ours.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut theirs: Vec<f64> = SymmetricEigen::new(to_nalgebra(&a)).eigenvalues.iter().copied().collect();
    theirs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for (x, y) in ours.iter().zip(&theirs) {
        assert_relative_eq!(*x, *y, max_relative = 1e-12);
    }

    let b = Mat::from_fn(9, 4, |i, j| ((i + 1) as f64).powf(j as f64 * 0.5));
    let ours = singular_values(&b);
    let mut theirs: Vec<f64> = to_nalgebra(&b).singular_values().iter().copied().collect();
    theirs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    for (x, y) in ours.iter().zip(&theirs) {
        assert_relative_eq!(*x, *y, max_relative = 1e-10);
    }
}

#[test]
fn warped_spectrum_approaches_fd_oracle() {
    let base = Interval::new(0.0, PI);
    let f = bump(0.3, PI);
    let spec = ManifoldSpec::warped(base, f.clone(), ManifoldSpec::Circle { radius: 1.0 });
    let ours = spectrum_of(&spec, 12.0, Convention::Drift, &PruferOptions::default()).unwrap().eigenvalues();
    let oracle = fd2d_warped_spectrum(base, &f, 1.0, FdGrid::new(128, 128), ours.len()).unwrap();
    for ((v, o), e) in ours.iter().zip(&oracle.extrapolated).zip(&oracle.error_estimate) {
        assert!((v - o).abs() <= 3.0 * e + 1e-9, "{v} vs {o} (error {e})");
    }
}
