//! Finite-difference oracle for `[a, b] ×_f S¹(r)` with metric `dx² + e^{2f}(r dθ)²`.
//!
//! The operator `-e^{-f}∂_x(e^f ∂_x) - e^{-2f} r^{-2} ∂_θ²` is discretized with
//! centred differences (Dirichlet in x, periodic in θ) and symmetrized by the
//! diagonal similarity `√(e^f)`. Its matrix is block-circulant in θ, so the
//! discrete Fourier transform splits it exactly into `N_θ` symmetric
//! tridiagonal blocks with θ-symbols `κ_j = (4/h_θ²) sin²(πj/N_θ)`; each block is
//! solved by Sturm bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::linalg::{Mat, SymTridiagonal};
use crate::manifold::Interval;
use crate::scalar::Real;

/// Number of panels in x and grid points in θ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdGrid {
    pub nx: usize,
    pub ntheta: usize,
}

impl FdGrid {
    pub fn new(nx: usize, ntheta: usize) -> Self {
        FdGrid { nx, ntheta }
    }

    pub fn refined(&self) -> Self {
        FdGrid { nx: 2 * self.nx, ntheta: 2 * self.ntheta }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fd2dResult<T> {
    pub grid: FdGrid,
    pub coarse: Vec<T>,
    pub fine: Vec<T>,
    /// `(4·fine − coarse)/3`, index by index.
    pub extrapolated: Vec<T>,
    /// `|fine − extrapolated|`, a conservative error estimate for `extrapolated`.
    pub error_estimate: Vec<T>,
}

struct Radial<T> {
    block: SymTridiagonal<T>,
    /// `e^{-2f(x_i)} / r²` at interior nodes.
    angular: Vec<T>,
}

fn radial<T: Real>(base: Interval, f: &ScalarExpr, radius: T, nx: usize) -> Radial<T> {
    let a = T::lit(base.a);
    let h = T::lit(base.length()) / T::from_usize_lossy(nx);
    let fx = |x: T| f.eval1(x);
    let node = |i: usize| a + h * T::from_usize_lossy(i);
    let half = |i: usize| a + h * (T::from_usize_lossy(i) + T::lit(0.5));
    let h2 = h * h;
    let n = nx - 1;
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut angular = Vec::with_capacity(n);
    for i in 1..nx {
        let fi = fx(node(i));
        let left = fx(half(i - 1)).exp();
        let right = fx(half(i)).exp();
        diag.push((left + right) / (h2 * fi.exp()));
        angular.push((-(fi + fi)).exp() / (radius * radius));
        if i + 1 < nx {
            let fj = fx(node(i + 1));
            off.push(-right / (h2 * (T::lit(0.5) * (fi + fj)).exp()));
        }
    }
    Radial { block: SymTridiagonal { diag, off }, angular }
}

fn theta_symbol<T: Real>(j: usize, ntheta: usize) -> T {
    let h = T::lit(2.0) * T::PI() / T::from_usize_lossy(ntheta);
    let s = (T::PI() * T::from_usize_lossy(j) / T::from_usize_lossy(ntheta)).sin();
    T::lit(4.0) * s * s / (h * h)
}

/// The `count` smallest eigenvalues of the discrete operator on one grid.
pub(crate) fn fd2d_eigenvalues<T: Real>(
    base: Interval,
    f: &ScalarExpr,
    radius: T,
    grid: FdGrid,
    count: usize,
) -> Result<Vec<T>> {
    let rad = radial(base, f, radius, grid.nx);
    let tol = T::epsilon() * T::lit(16.0);
    let mut found: Vec<T> = Vec::new();
    let amin = rad.angular.iter().copied().fold(T::infinity(), T::min);
    let mut ground_floor: Option<T> = None;
    for j in 0..=grid.ntheta / 2 {
        let kappa = theta_symbol::<T>(j, grid.ntheta);
        let copies = if j == 0 || 2 * j == grid.ntheta { 1 } else { 2 };
        if let (Some(g), true) = (ground_floor, found.len() >= count) {
            // every eigenvalue of block j is at least λ₁(block 0) + κ_j·min(angular)
            if g + kappa * amin > found[count - 1] {
                break;
            }
        }
        let block = SymTridiagonal {
            diag: rad.block.diag.iter().zip(&rad.angular).map(|(&d, &w)| d + kappa * w).collect(),
            off: rad.block.off.clone(),
        };
        let want = match found.get(count.saturating_sub(1)) {
            Some(&kth) if found.len() >= count => block.count_below(kth).min(count),
            _ => count,
        };
        let vals = block.smallest_eigenvalues(want, tol).ok_or_else(|| {
            Error::EigensolverStagnation(format!("bisection stalled in Fourier block {j}"))
        })?;
        if j == 0 {
            ground_floor = vals.first().copied();
        }
        for v in vals {
            for _ in 0..copies {
                found.push(v);
            }
        }
        found.sort_by(|x, y| x.partial_cmp(y).unwrap());
        found.truncate(count);
    }
    if found.len() < count {
        return Err(Error::EigensolverStagnation(format!(
            "grid has only {} eigenvalues, {count} requested",
            found.len()
        )));
    }
    Ok(found)
}

/// The `count` smallest eigenvalues on `grid` and on the doubled grid, with a
/// Richardson extrapolation assuming second-order convergence.
pub fn fd2d_warped_spectrum<T: Real>(
    base: Interval,
    f: &ScalarExpr,
    radius: T,
    grid: FdGrid,
    count: usize,
) -> Result<Fd2dResult<T>> {
    if grid.nx < 16 || grid.ntheta < 16 {
        return Err(Error::InvalidArgument("fd2d grids need at least 16 points per direction".into()));
    }
    if !(radius > T::zero()) {
        return Err(Error::InvalidArgument("fiber radius must be positive".into()));
    }
    let (coarse, fine) = rayon::join(
        || fd2d_eigenvalues(base, f, radius, grid, count),
        || fd2d_eigenvalues(base, f, radius, grid.refined(), count),
    );
    let (coarse, fine) = (coarse?, fine?);
    let extrapolated: Vec<T> =
        coarse.iter().zip(&fine).map(|(&c, &v)| (T::lit(4.0) * v - c) / T::lit(3.0)).collect();
    let error_estimate = fine.iter().zip(&extrapolated).map(|(&v, &e)| (v - e).abs()).collect();
    Ok(Fd2dResult { grid, coarse, fine, extrapolated, error_estimate })
}

/// The full symmetrized matrix on `grid`, ordered θ-major. For small grids only.
pub fn fd2d_warped_operator_dense<T: Real>(
    base: Interval,
    f: &ScalarExpr,
    radius: T,
    grid: FdGrid,
) -> Mat<T> {
    let rad = radial(base, f, radius, grid.nx);
    let nr = grid.nx - 1;
    let nt = grid.ntheta;
    let ht = T::lit(2.0) * T::PI() / T::from_usize_lossy(nt);
    let ht2 = ht * ht;
    let mut m = Mat::zeros(nr * nt, nr * nt);
    for t in 0..nt {
        let prev = (t + nt - 1) % nt;
        let next = (t + 1) % nt;
        for i in 0..nr {
            let row = t * nr + i;
            let w = rad.angular[i];
            m[(row, row)] += rad.block.diag[i] + T::lit(2.0) * w / ht2;
            m[(row, prev * nr + i)] += -w / ht2;
            m[(row, next * nr + i)] += -w / ht2;
            if i > 0 {
                m[(row, row - 1)] += rad.block.off[i - 1];
            }
            if i + 1 < nr {
                m[(row, row + 1)] += rad.block.off[i];
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_cylinder_unit_circle() {
        let r = fd2d_warped_spectrum::<f64>(Interval::new(0.0, PI), &ScalarExpr::zero(), 1.0, FdGrid::new(64, 64), 4)
            .unwrap();
        for (got, want) in r.coarse.iter().zip([1.0, 2.0, 2.0, 4.0]) {
            assert!((got - want).abs() < 1e-2, "{got} vs {want}");
        }
        for (got, want) in r.extrapolated.iter().zip([1.0, 2.0, 2.0, 4.0]) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn flat_cylinder_radius_two() {
        let r = fd2d_warped_spectrum::<f64>(Interval::new(0.0, PI), &ScalarExpr::zero(), 2.0, FdGrid::new(64, 64), 3)
            .unwrap();
        for (got, want) in r.extrapolated.iter().zip([1.0, 1.25, 1.25]) {
            assert!((got - want).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_warp_rescales_the_fiber() {
        let c = 0.3;
        let base = Interval::new(0.0, PI);
        let grid = FdGrid::new(32, 32);
        let warped = fd2d_warped_spectrum(base, &ScalarExpr::constant(c), 1.0, grid, 6).unwrap();
        let scaled = fd2d_warped_spectrum(base, &ScalarExpr::zero(), c.exp(), grid, 6).unwrap();
        for (x, y) in warped.fine.iter().zip(&scaled.fine) {
            assert!((x - y).abs() < 1e-12 * y);
        }
    }

    #[test]
    fn too_small_grid_is_rejected() {
        assert!(fd2d_warped_spectrum(Interval::new(0.0, 1.0), &ScalarExpr::zero(), 1.0, FdGrid::new(8, 64), 2).is_err());
    }
}
