//! Flat tori `R^d / L`: eigenvalues `4π²|w|²` over the dual lattice `L*`.
//!
//! Points are enumerated Fincke–Pohst style: with the dual Gram `A = G⁻¹`
//! written as `Q(n) = Σ_i q_ii (n_i + Σ_{j>i} q_ij n_j)²`, each coordinate is
//! confined to an interval given the coordinates above it.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rayon::prelude::*;

use super::{levels_from_values, with_slack, Certificate, SpectralResolution, MULTISET_REL_TOL};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::manifold::gram_matrix;
use crate::scalar::Real;

/// Default cap on enumerated lattice points.
pub const LATTICE_BUDGET: usize = 10_000_000;

fn quadratic_form_split(a: &Mat<f64>) -> Mat<f64> {
    let d = a.rows();
    let mut q = a.clone();
    for i in 0..d {
        for j in i + 1..d {
            q[(j, i)] = q[(i, j)];
            q[(i, j)] /= q[(i, i)];
        }
        for k in i + 1..d {
            for l in k..d {
                let v = q[(k, i)] * q[(i, l)];
                q[(k, l)] -= v;
            }
        }
    }
    q
}

fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::PI.powf(h) / libm::tgamma(h + 1.0)
}

/// Integer vectors `n` with `nᵀ A n <= radius_sq` (plus a relative slack the
/// caller filters away).
fn enumerate(a: &Mat<f64>, radius_sq: f64, budget: usize) -> Result<Vec<Vec<i64>>> {
    let d = a.rows();
    let det = a.determinant();
    let estimate = unit_ball_volume(d) * radius_sq.max(0.0).powf(d as f64 / 2.0) / det.sqrt();
    if estimate > budget as f64 {
        return Err(Error::CutoffTooLarge { estimate, budget });
    }
    let q = quadratic_form_split(a);
    let bound = radius_sq * (1.0 + 1e-9) + 1e-12;
    let top = d - 1;
    let reach = (bound / q[(top, top)]).sqrt();
    let tops: Vec<i64> = (-(reach.floor() as i64)..=reach.floor() as i64).collect();
    let chunks: Vec<Result<Vec<Vec<i64>>>> = tops
        .into_par_iter()
        .map(|xt| {
            let mut out = Vec::new();
            let mut x = vec![0i64; d];
            x[top] = xt;
            let rest = bound - q[(top, top)] * (xt as f64).powi(2);
            if rest >= 0.0 {
                descend(&q, top, rest, &mut x, &mut out, budget)?;
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for c in chunks {
        all.extend(c?);
        if all.len() > budget {
            return Err(Error::CutoffTooLarge { estimate: all.len() as f64, budget });
        }
    }
    Ok(all)
}

fn descend(
    q: &Mat<f64>,
    level: usize,
    remaining: f64,
    x: &mut Vec<i64>,
    out: &mut Vec<Vec<i64>>,
    budget: usize,
) -> Result<()> {
    if level == 0 {
        out.push(x.clone());
        if out.len() > budget {
            return Err(Error::CutoffTooLarge { estimate: out.len() as f64, budget });
        }
        return Ok(());
    }
    let i = level - 1;
    let d = q.rows();
    let center: f64 = -(i + 1..d).map(|j| q[(i, j)] * x[j] as f64).sum::<f64>();
    let reach = (remaining.max(0.0) / q[(i, i)]).sqrt();
    let lo = (center - reach).ceil() as i64;
    let hi = (center + reach).floor() as i64;
    for v in lo..=hi {
        let used = q[(i, i)] * (v as f64 - center).powi(2);
        if used <= remaining {
            x[i] = v;
            descend(q, i, remaining - used, x, out, budget)?;
        }
    }
    x[i] = 0;
    Ok(())
}

/// Spectrum of the flat torus with Gram matrix `gram`, all eigenvalues `<= cutoff`.
pub fn torus_spectrum<T: Real>(gram: &[Vec<f64>], cutoff: T) -> Result<SpectralResolution<T>> {
    torus_spectrum_with_budget(gram, cutoff, LATTICE_BUDGET)
}

pub fn torus_spectrum_with_budget<T: Real>(
    gram: &[Vec<f64>],
    cutoff: T,
    budget: usize,
) -> Result<SpectralResolution<T>> {
    let g = gram_matrix(gram)?;
    let a = g
        .inverse()
        .ok_or_else(|| Error::MalformedGram("Gram matrix is numerically singular".into()))?;
    let four_pi_sq = T::lit(4.0) * T::PI() * T::PI();
    let radius_sq = (cutoff / four_pi_sq).to_f64_lossy();
    let points = enumerate(&a, radius_sq, budget)?;
    let at = Mat::from_fn(a.rows(), a.cols(), |i, j| T::lit(a[(i, j)]));
    let mut values: Vec<T> = points
        .iter()
        .map(|n| {
            let nt: Vec<T> = n.iter().map(|&v| T::lit(v as f64)).collect();
            let an = at.mul_vec(&nt);
            four_pi_sq * nt.iter().zip(&an).fold(T::zero(), |s, (x, y)| s + *x * *y)
        })
        .filter(|&v| v <= with_slack(cutoff))
        .collect();
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let levels = levels_from_values(&values, T::lit(MULTISET_REL_TOL));
    let mut mass = vec![T::zero(); levels.len()];
    if let Some(m) = mass.first_mut() {
        *m = T::lit(g.determinant().sqrt()).sqrt();
    }
    Ok(SpectralResolution {
        levels,
        cutoff,
        certificate: Certificate::LatticeNormBound { reduced_radius_sq: radius_sq, points: values.len() },
        mass_coeffs: Some(mass),
        eigenfunctions: None,
    })
}

/// A Gram matrix with exact rational entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactGram {
    entries: Vec<Vec<BigRational>>,
}

impl ExactGram {
    pub fn from_integers(rows: &[Vec<i64>]) -> Self {
        ExactGram {
            entries: rows
                .iter()
                .map(|r| r.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect())
                .collect(),
        }
    }

    /// Exact conversion of binary floating-point entries.
    pub fn from_f64(rows: &[Vec<f64>]) -> Option<Self> {
        let entries = rows
            .iter()
            .map(|r| r.iter().map(|&v| BigRational::from_float(v)).collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()?;
        Some(ExactGram { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        use num_traits::ToPrimitive;
        self.entries.iter().map(|r| r.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()).collect()
    }

    /// `UᵀGU` for an integer matrix `U`.
    pub fn transformed(&self, u: &[Vec<i64>]) -> Self {
        let d = self.dim();
        let ur: Vec<Vec<BigRational>> = u
            .iter()
            .map(|r| r.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect())
            .collect();
        let mut out = vec![vec![BigRational::zero(); d]; d];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let mut s = BigRational::zero();
                for k in 0..d {
                    for l in 0..d {
                        s += &ur[k][i] * &self.entries[k][l] * &ur[l][j];
                    }
                }
                *cell = s;
            }
        }
        ExactGram { entries: out }
    }

    fn inverse(&self) -> Option<Vec<Vec<BigRational>>> {
        let d = self.dim();
        let mut a = self.entries.clone();
        let mut inv: Vec<Vec<BigRational>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| if i == j { BigRational::from_integer(1.into()) } else { BigRational::zero() })
                    .collect()
            })
            .collect();
        for col in 0..d {
            let pivot = (col..d).find(|&r| !a[r][col].is_zero())?;
            a.swap(pivot, col);
            inv.swap(pivot, col);
            let p = a[col][col].clone();
            for j in 0..d {
                a[col][j] = &a[col][j] / &p;
                inv[col][j] = &inv[col][j] / &p;
            }
            for r in 0..d {
                if r != col && !a[r][col].is_zero() {
                    let factor = a[r][col].clone();
                    for j in 0..d {
                        let av = &factor * &a[col][j];
                        let iv = &factor * &inv[col][j];
                        a[r][j] -= av;
                        inv[r][j] -= iv;
                    }
                }
            }
        }
        Some(inv)
    }
}

/// Sorted exact squared norms `|w|²` of dual-lattice vectors with `|w|² <= radius_sq`.
pub fn dual_norms_exact(gram: &ExactGram, radius_sq: &BigRational) -> Result<Vec<BigRational>> {
    use num_traits::ToPrimitive;
    let approx = gram.to_f64();
    let g = gram_matrix(&approx)?;
    let inv = gram
        .inverse()
        .ok_or_else(|| Error::MalformedGram("Gram matrix is singular".into()))?;
    let a = g
        .inverse()
        .ok_or_else(|| Error::MalformedGram("Gram matrix is numerically singular".into()))?;
    if radius_sq.is_negative() {
        return Ok(Vec::new());
    }
    let r = radius_sq.to_f64().unwrap_or(f64::INFINITY) * (1.0 + 1e-6) + 1e-9;
    let points = enumerate(&a, r, LATTICE_BUDGET)?;
    let d = gram.dim();
    let mut out: Vec<BigRational> = points
        .par_iter()
        .map(|n| {
            let mut s = BigRational::zero();
            for i in 0..d {
                for j in 0..d {
                    if n[i] != 0 && n[j] != 0 {
                        s += &inv[i][j] * BigRational::from_integer(BigInt::from(n[i] * n[j]));
                    }
                }
            }
            s
        })
        .filter(|s| s <= radius_sq)
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::circle_spectrum;
    use std::f64::consts::PI;

    #[test]
    fn one_dimensional_torus_is_the_unit_circle() {
        let t = torus_spectrum(&[vec![4.0 * PI * PI]], 5.0).unwrap();
        let c = circle_spectrum(1.0, 5.0);
        assert_eq!(t.multiplicities(), c.multiplicities());
        for (x, y) in t.values().iter().zip(c.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn square_torus_matches_brute_force() {
        let s = 4.0 * PI * PI;
        let t = torus_spectrum(&[vec![s, 0.0], vec![0.0, s]], 2.5).unwrap();
        assert_eq!(t.multiplicities(), vec![1, 4, 4]);
        let mut brute = Vec::new();
        for p in -3i32..=3 {
            for q in -3i32..=3 {
                let v = (p * p + q * q) as f64;
                if v <= 2.5 {
                    brute.push(v);
                }
            }
        }
        brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ev = t.eigenvalues();
        assert_eq!(ev.len(), brute.len());
        for (x, y) in ev.iter().zip(&brute) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn skewed_lattice_matches_box_search() {
        let gram = vec![vec![2.0, 0.7, 0.1], vec![0.7, 1.5, -0.3], vec![0.1, -0.3, 1.1]];
        let cutoff = 400.0;
        let t = torus_spectrum(&gram, cutoff).unwrap();
        let a = Mat::from_rows(&gram).inverse().unwrap();
        let mut brute = Vec::new();
        for i in -8i64..=8 {
            for j in -8i64..=8 {
                for k in -8i64..=8 {
                    let n = [i as f64, j as f64, k as f64];
                    let an = a.mul_vec(&n);
                    let v = 4.0 * PI * PI * (n[0] * an[0] + n[1] * an[1] + n[2] * an[2]);
                    if v <= cutoff {
                        brute.push(v);
                    }
                }
            }
        }
        assert_eq!(t.count(), brute.len());
    }

    #[test]
    fn budget_is_enforced() {
        let err = torus_spectrum_with_budget::<f64>(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1e6, 1000).unwrap_err();
        assert!(matches!(err, Error::CutoffTooLarge { .. }));
    }

    #[test]
    fn exact_norms_invariant_under_unimodular_change() {
        let g = ExactGram::from_integers(&[vec![3, 1], vec![1, 2]]);
        let u = vec![vec![2, 1], vec![1, 1]];
        let h = g.transformed(&u);
        let r = BigRational::from_integer(BigInt::from(6));
        let a = dual_norms_exact(&g, &r).unwrap();
        let b = dual_norms_exact(&h, &r).unwrap();
        assert!(a.len() > 10);
        assert_eq!(a, b);
    }
}
