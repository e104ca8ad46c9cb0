//! Riemannian tensor calculus on coordinate patches.
//!
//! Metric components are [`ScalarExpr`]s, so first and second metric
//! derivatives are exact. Curvature is assembled in coordinates and expressed
//! in an orthonormal frame whose last vector `e_m` is the unit normal to the
//! level sets of the last coordinate, pointing inward on boundary faces.
//!
//! Sign conventions: `R_ijkl = g(R(e_i, e_j) e_k, e_l)` with
//! `R(X, Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]`, so the unit sphere has `R_1221 = +1`;
//! `ρ_ij = R_ikkj`, `τ = ρ_ii`, `L_ab = g(∇_{e_a} e_b, e_m)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::linalg::{symmetric_eigen, Mat};
use crate::manifold::Interval;
use crate::scalar::Real;

/// Largest admissible condition number of `g`.
pub const MAX_METRIC_CONDITION: f64 = 1e12;

/// Richardson disagreement tolerated in numerically differentiated scalars,
/// relative to `max(1, |value|)`.
pub const DERIVATIVE_TOLERANCE: f64 = 1e-6;

/// Relative step of the central differences, per unit of chart width.
const DIFFERENCE_STEP: f64 = 1e-3;

/// Face `x_m = lower` or `x_m = upper` of the chart box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryFace {
    Lower,
    Upper,
}

/// `dx² + e^{2f(x)/k} G` with `x` the last coordinate and `k = dim G`.
#[derive(Clone, Debug, PartialEq)]
struct WarpedProfile {
    /// `f/k` in the last coordinate variable.
    phi: ScalarExpr,
    fiber_dim: usize,
}

/// A coordinate box with exactly differentiable metric components.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMetric {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    g: Vec<ScalarExpr>,
    /// `∂_k g_ij` at `(k·m + i)·m + j`.
    dg: Vec<ScalarExpr>,
    /// `∂_k ∂_l g_ij` at `((k·m + l)·m + i)·m + j`.
    ddg: Vec<ScalarExpr>,
    boundary: Vec<BoundaryFace>,
    warped: Option<WarpedProfile>,
}

impl PatchMetric {
    /// `g[i][j]` must be symmetric; metric positivity is spot-checked on a
    /// `3^m` grid strictly inside the box.
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        g: Vec<Vec<ScalarExpr>>,
        boundary: Vec<BoundaryFace>,
    ) -> Result<Self> {
        let m = g.len();
        if m == 0 || lower.len() != m || upper.len() != m || g.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidArgument("metric and box dimensions disagree".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument("chart box must have lower < upper".into()));
        }
        for i in 0..m {
            for j in 0..i {
                if g[i][j] != g[j][i] {
                    return Err(Error::InvalidArgument(format!("g[{i}][{j}] differs from g[{j}][{i}]")));
                }
            }
        }
        let flat: Vec<ScalarExpr> = g.into_iter().flatten().collect();
        let mut dg = Vec::with_capacity(m * m * m);
        for k in 0..m {
            for e in &flat {
                dg.push(e.derivative(k));
            }
        }
        let mut ddg = Vec::with_capacity(m * m * m * m);
        for k in 0..m {
            for l in 0..m {
                for idx in 0..m * m {
                    ddg.push(dg[l * m * m + idx].derivative(k));
                }
            }
        }
        let mut boundary = boundary;
        boundary.dedup();
        let patch = PatchMetric { dim: m, lower, upper, g: flat, dg, ddg, boundary, warped: None };
        patch.spot_check()?;
        Ok(patch)
    }

    pub fn euclidean(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let m = lower.len();
        let g = (0..m)
            .map(|i| (0..m).map(|j| ScalarExpr::constant(if i == j { 1.0 } else { 0.0 })).collect())
            .collect();
        PatchMetric::new(lower, upper, g, Vec::new())
    }

    /// `dθ² + sin²θ dφ²` on `[lo, hi] × [0, 2π]`, coordinates `(φ, θ)`.
    pub fn unit_sphere(theta_lo: f64, theta_hi: f64) -> Result<Self> {
        let theta = ScalarExpr::var(1);
        let g = vec![
            vec![theta.sin().powi(2), ScalarExpr::zero()],
            vec![ScalarExpr::zero(), ScalarExpr::one()],
        ];
        PatchMetric::new(vec![0.0, theta_lo], vec![2.0 * std::f64::consts::PI, theta_hi], g, Vec::new())
    }

    /// `dx² + e^{2f(x)/k} Σ G_ij dθ_i dθ_j` on `[0, 1]^k × [a, b]`, both ends of
    /// the base being boundary faces. `f` is in variable 0.
    pub fn warped(base: Interval, f: &ScalarExpr, fiber_gram: &[Vec<f64>]) -> Result<Self> {
        PatchMetric::warped_on_box(base, f, fiber_gram, 1.0)
    }

    /// `dx² + e^{2f(x)} r² dθ²` on `[0, 2π] × [a, b]`.
    pub fn warped_circle(base: Interval, f: &ScalarExpr, radius: f64) -> Result<Self> {
        PatchMetric::warped_on_box(base, f, &[vec![radius * radius]], 2.0 * std::f64::consts::PI)
    }

    fn warped_on_box(base: Interval, f: &ScalarExpr, fiber_gram: &[Vec<f64>], period: f64) -> Result<Self> {
        let k = fiber_gram.len();
        if k == 0 || fiber_gram.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("fiber Gram matrix must be square and non-empty".into()));
        }
        let m = k + 1;
        let phi = f.substitute(&[ScalarExpr::var(k)]).scale(1.0 / k as f64);
        let conformal = phi.clone().scale(2.0).exp();
        let mut g = vec![vec![ScalarExpr::zero(); m]; m];
        for i in 0..k {
            for j in 0..k {
                g[i][j] = ScalarExpr::product([ScalarExpr::constant(fiber_gram[i][j]), conformal.clone()]);
            }
        }
        g[k][k] = ScalarExpr::one();
        let mut lower = vec![0.0; k];
        let mut upper = vec![period; k];
        lower.push(base.a);
        upper.push(base.b);
        let mut patch = PatchMetric::new(lower, upper, g, vec![BoundaryFace::Lower, BoundaryFace::Upper])?;
        patch.warped = Some(WarpedProfile { phi, fiber_dim: k });
        Ok(patch)
    }

    /// Pullback by `x = A y + c` onto the box `[lower, upper]` in `y`.
    ///
    /// With boundary faces, `A` must map level sets of `y_m` to those of
    /// `x_m` preserving orientation (last row `(0, …, 0, α)`, `α > 0`).
    pub fn affine_pullback(&self, a: &[Vec<f64>], c: &[f64], lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let m = self.dim;
        if a.len() != m || a.iter().any(|r| r.len() != m) || c.len() != m {
            return Err(Error::InvalidArgument("affine map has the wrong shape".into()));
        }
        if !self.boundary.is_empty() && (a[m - 1][..m - 1].iter().any(|&v| v != 0.0) || !(a[m - 1][m - 1] > 0.0)) {
            return Err(Error::InvalidArgument("affine map must preserve the boundary foliation".into()));
        }
        let subs: Vec<ScalarExpr> = (0..m)
            .map(|k| {
                ScalarExpr::sum(
                    (0..m)
                        .filter(|&j| a[k][j] != 0.0)
                        .map(|j| ScalarExpr::var(j).scale(a[k][j]))
                        .chain(std::iter::once(ScalarExpr::constant(c[k]))),
                )
            })
            .collect();
        let moved: Vec<ScalarExpr> = self.g.iter().map(|e| e.substitute(&subs)).collect();
        let g = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        ScalarExpr::sum((0..m).flat_map(|k| {
                            let moved = &moved;
                            (0..m).filter_map(move |l| {
                                let w = a[k][i] * a[l][j];
                                (w != 0.0).then(|| moved[k * m + l].clone().scale(w))
                            })
                        }))
                    })
                    .collect()
            })
            .collect();
        PatchMetric::new(lower, upper, g, self.boundary.clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `g_ij` as an expression in the chart coordinates.
    pub fn metric_component(&self, i: usize, j: usize) -> &ScalarExpr {
        &self.g[i * self.dim + j]
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    /// The declared boundary face containing `x`, if any.
    pub fn face_of<T: Real>(&self, x: &[T]) -> Option<BoundaryFace> {
        let m = self.dim;
        let xm = x[m - 1].to_f64_lossy();
        let tol = 1e-12 * (self.upper[m - 1] - self.lower[m - 1]).max(1.0);
        self.boundary.iter().copied().find(|face| match face {
            BoundaryFace::Lower => (xm - self.lower[m - 1]).abs() <= tol,
            BoundaryFace::Upper => (xm - self.upper[m - 1]).abs() <= tol,
        })
    }

    fn spot_check(&self) -> Result<()> {
        let m = self.dim;
        let total = 3usize.pow(m as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = (0..m)
                .map(|i| {
                    let s = [0.25, 0.5, 0.75][rem % 3];
                    rem /= 3;
                    self.lower[i] + s * (self.upper[i] - self.lower[i])
                })
                .collect();
            Jet::<f64>::at(self, &x, 0)?;
        }
        Ok(())
    }
}

/// Metric, inverse and exact derivatives at one point.
struct Jet<T> {
    m: usize,
    g: Mat<T>,
    ginv: Mat<T>,
    dg: Vec<Mat<T>>,
    ddg: Vec<Vec<Mat<T>>>,
}

impl<T: Real> Jet<T> {
    fn at(patch: &PatchMetric, x: &[T], order: usize) -> Result<Self> {
        let m = patch.dim;
        let g = Mat::from_fn(m, m, |i, j| patch.g[i * m + j].eval(x));
        let (eig, _) = symmetric_eigen(&g);
        let lo = eig.iter().copied().fold(T::infinity(), T::min);
        let hi = eig.iter().copied().fold(T::zero(), T::max);
        let condition = if lo > T::zero() { (hi / lo).to_f64_lossy() } else { f64::INFINITY };
        if !(condition <= MAX_METRIC_CONDITION) {
            return Err(Error::SingularMetric { condition });
        }
        let ginv = g.inverse().ok_or(Error::SingularMetric { condition: f64::INFINITY })?;
        let dg = if order >= 1 {
            (0..m).map(|k| Mat::from_fn(m, m, |i, j| patch.dg[(k * m + i) * m + j].eval(x))).collect()
        } else {
            Vec::new()
        };
        let ddg = if order >= 2 {
            (0..m)
                .map(|k| {
                    (0..m)
                        .map(|l| Mat::from_fn(m, m, |i, j| patch.ddg[((k * m + l) * m + i) * m + j].eval(x)))
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Jet { m, g, ginv, dg, ddg })
    }

    /// `Γ_{l,ij} = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)` at `(l·m + i)·m + j`.
    fn lowered(&self) -> Vec<T> {
        let m = self.m;
        let half = T::lit(0.5);
        let mut out = vec![T::zero(); m * m * m];
        for l in 0..m {
            for i in 0..m {
                for j in 0..m {
                    out[(l * m + i) * m + j] =
                        half * (self.dg[i][(j, l)] + self.dg[j][(i, l)] - self.dg[l][(i, j)]);
                }
            }
        }
        out
    }

    fn raise(&self, lowered: &[T], inv: &Mat<T>) -> Vec<T> {
        let m = self.m;
        let mut out = vec![T::zero(); m * m * m];
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    out[(k * m + i) * m + j] = (0..m).map(|l| inv[(k, l)] * lowered[(l * m + i) * m + j]).sum();
                }
            }
        }
        out
    }

    fn christoffel(&self) -> Vec<T> {
        self.raise(&self.lowered(), &self.ginv)
    }

    /// Coordinate `R_ijkl` at `((i·m + j)·m + k)·m + l`.
    fn riemann(&self) -> Vec<T> {
        let m = self.m;
        let half = T::lit(0.5);
        let lowered = self.lowered();
        let gamma = self.raise(&lowered, &self.ginv);
        let idx = |a: usize, b: usize, c: usize| (a * m + b) * m + c;
        // ∂_p Γ^k_ij at p·m³ + (k·m + i)·m + j
        let mut dgamma = vec![T::zero(); m * m * m * m];
        for p in 0..m {
            let dinv = {
                let t = self.ginv.matmul(&self.dg[p]).matmul(&self.ginv);
                Mat::from_fn(m, m, |i, j| -t[(i, j)])
            };
            let mut dlow = vec![T::zero(); m * m * m];
            for l in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        dlow[idx(l, i, j)] =
                            half * (self.ddg[p][i][(j, l)] + self.ddg[p][j][(i, l)] - self.ddg[p][l][(i, j)]);
                    }
                }
            }
            let a = self.raise(&lowered, &dinv);
            let b = self.raise(&dlow, &self.ginv);
            for q in 0..m * m * m {
                dgamma[p * m * m * m + q] = a[q] + b[q];
            }
        }
        let dg_at = |p: usize, k: usize, i: usize, j: usize| dgamma[p * m * m * m + idx(k, i, j)];
        // R(∂_i, ∂_j)∂_k = R^l_{kij} ∂_l
        let mut up = vec![T::zero(); m * m * m * m];
        for l in 0..m {
            for k in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        let mut v = dg_at(i, l, j, k) - dg_at(j, l, i, k);
                        for p in 0..m {
                            v += gamma[idx(l, i, p)] * gamma[idx(p, j, k)] - gamma[idx(l, j, p)] * gamma[idx(p, i, k)];
                        }
                        up[((l * m + k) * m + i) * m + j] = v;
                    }
                }
            }
        }
        let mut out = vec![T::zero(); m * m * m * m];
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        out[((i * m + j) * m + k) * m + l] =
                            (0..m).map(|p| up[((p * m + k) * m + i) * m + j] * self.g[(p, l)]).sum();
                    }
                }
            }
        }
        out
    }

    /// Rows are the orthonormal frame in coordinates; the last row is the unit
    /// normal `± g^{m·}/√g^{mm}`, positive toward increasing `x_m` unless `flip`.
    fn frame(&self, flip: bool) -> Mat<T> {
        let m = self.m;
        let mut e = Mat::zeros(m, m);
        for a in 0..m - 1 {
            let mut v = vec![T::zero(); m];
            v[a] = T::one();
            for b in 0..a {
                let proj: T = (0..m).map(|i| (0..m).map(|j| e[(b, i)] * self.g[(i, j)] * v[j]).sum::<T>()).sum();
                for i in 0..m {
                    v[i] -= proj * e[(b, i)];
                }
            }
            let norm = self.norm(&v);
            for i in 0..m {
                e[(a, i)] = v[i] / norm;
            }
        }
        let scale = self.ginv[(m - 1, m - 1)].sqrt();
        let sign = if flip { -T::one() } else { T::one() };
        for i in 0..m {
            e[(m - 1, i)] = sign * self.ginv[(m - 1, i)] / scale;
        }
        e
    }

    fn norm(&self, v: &[T]) -> T {
        let m = self.m;
        (0..m).map(|i| (0..m).map(|j| v[i] * self.g[(i, j)] * v[j]).sum::<T>()).sum::<T>().sqrt()
    }
}

/// `Γ^k_ij` in coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Christoffel<T> {
    pub dim: usize,
    /// Index `(k·m + i)·m + j`.
    pub values: Vec<T>,
}

impl<T: Copy> Christoffel<T> {
    pub fn get(&self, k: usize, i: usize, j: usize) -> T {
        self.values[(k * self.dim + i) * self.dim + j]
    }
}

pub fn christoffel<T: Real>(patch: &PatchMetric, x: &[T]) -> Result<Christoffel<T>> {
    let jet = Jet::at(patch, x, 1)?;
    Ok(Christoffel { dim: patch.dim, values: jet.christoffel() })
}

/// Boundary quantities in the frame `{e_a}` of the face, `e_m` inward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample<T> {
    pub face: BoundaryFace,
    /// `L_ab`, `(m−1)×(m−1)`.
    pub l: Vec<Vec<T>>,
    pub l_aa: T,
    pub l_ab_l_ab: T,
    /// `Σ_a R_amam`.
    pub r_amam: T,
    /// `Σ_a R_amma = −Σ_a R_amam`.
    pub r_amma: T,
    /// `R_ambm`.
    pub r_ambm: Vec<Vec<T>>,
    /// `Σ_b R_abcb` as a matrix in `(a, c)`.
    pub r_abcb: Vec<Vec<T>>,
    /// Tangential Laplacian of `L_aa` along the face.
    pub l_aa_bb: T,
}

impl<T: Real> BoundarySample<T> {
    /// `L_ab L_ab L_cc`.
    pub fn l_ab_l_ab_l_cc(&self) -> T {
        self.l_ab_l_ab * self.l_aa
    }

    /// `L_ab L_bc L_ac`.
    pub fn l_cubed_trace(&self) -> T {
        let n = self.l.len();
        let mut s = T::zero();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    s += self.l[a][b] * self.l[b][c] * self.l[a][c];
                }
            }
        }
        s
    }

    /// `R_ambm L_ab`.
    pub fn r_ambm_l_ab(&self) -> T {
        contract(&self.r_ambm, &self.l)
    }

    /// `R_abcb L_ac`.
    pub fn r_abcb_l_ac(&self) -> T {
        contract(&self.r_abcb, &self.l)
    }
}

fn contract<T: Real>(a: &[Vec<T>], b: &[Vec<T>]) -> T {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(&x, &y)| x * y).sum::<T>()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeScalars<T> {
    /// `e_m(τ)`.
    pub tau_m: T,
    /// `Δτ = τ_;kk`.
    pub tau_kk: T,
    /// Richardson disagreement; zero on the symbolic path.
    pub error_estimate: T,
    pub symbolic: bool,
}

/// Frame components of curvature at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample<T> {
    pub point: Vec<T>,
    /// Rows are the frame vectors in coordinates; the last is `e_m`.
    pub frame: Vec<Vec<T>>,
    /// `R_ijkl` at `((i·m + j)·m + k)·m + l`.
    pub riemann: Vec<T>,
    pub ricci: Vec<Vec<T>>,
    pub tau: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundarySample<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivatives: Option<DerivativeScalars<T>>,
}

impl<T: Real> CurvatureSample<T> {
    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn r(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        let m = self.dim();
        self.riemann[((i * m + j) * m + k) * m + l]
    }

    /// `|ρ|² = ρ_ij ρ_ij`.
    pub fn ricci_squared(&self) -> T {
        contract(&self.ricci, &self.ricci)
    }

    /// `|R|² = R_ijkl R_ijkl`.
    pub fn riemann_squared(&self) -> T {
        self.riemann.iter().map(|&v| v * v).sum()
    }

    /// Largest violation of the pair symmetries and the first Bianchi identity.
    pub fn symmetry_defect(&self) -> T {
        let m = self.dim();
        let mut worst = T::zero();
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let r = self.r(i, j, k, l);
                        worst = worst
                            .max((r + self.r(j, i, k, l)).abs())
                            .max((r + self.r(i, j, l, k)).abs())
                            .max((r - self.r(k, l, i, j)).abs())
                            .max((r + self.r(j, k, i, l) + self.r(k, i, j, l)).abs());
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((self.ricci[i][j] - self.ricci[j][i]).abs());
            }
        }
        worst
    }

    /// The same sample in the frame with its tangential block rotated by `q`
    /// (`(m−1)×(m−1)` orthogonal).
    pub fn rotated_tangential(&self, q: &[Vec<T>]) -> CurvatureSample<T> {
        let m = self.dim();
        let o = |a: usize, b: usize| -> T {
            if a < m - 1 && b < m - 1 {
                q[a][b]
            } else if a == b {
                T::one()
            } else {
                T::zero()
            }
        };
        let mut riemann = self.riemann.clone();
        for axis in 0..4 {
            let mut next = vec![T::zero(); riemann.len()];
            for idx in 0..riemann.len() {
                let mut digits = [idx / (m * m * m), (idx / (m * m)) % m, (idx / m) % m, idx % m];
                let target = digits[axis];
                let mut s = T::zero();
                for src in 0..m {
                    digits[axis] = src;
                    s += o(target, src) * riemann[((digits[0] * m + digits[1]) * m + digits[2]) * m + digits[3]];
                }
                next[idx] = s;
            }
            riemann = next;
        }
        let rot2 = |a: &[Vec<T>], n: usize| -> Vec<Vec<T>> {
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let mut s = T::zero();
                            for k in 0..n {
                                for l in 0..n {
                                    s += o(i, k) * a[k][l] * o(j, l);
                                }
                            }
                            s
                        })
                        .collect()
                })
                .collect()
        };
        let frame = (0..m)
            .map(|a| (0..m).map(|i| (0..m).map(|b| o(a, b) * self.frame[b][i]).sum()).collect())
            .collect();
        let boundary = self.boundary.as_ref().map(|bs| {
            let n = m - 1;
            BoundarySample {
                l: rot2(&bs.l, n),
                r_ambm: rot2(&bs.r_ambm, n),
                r_abcb: rot2(&bs.r_abcb, n),
                ..bs.clone()
            }
        });
        CurvatureSample {
            point: self.point.clone(),
            frame,
            riemann,
            ricci: rot2(&self.ricci, m),
            tau: self.tau,
            boundary,
            derivatives: self.derivatives,
        }
    }
}

fn frame_riemann<T: Real>(coord: &[T], e: &Mat<T>, m: usize) -> Vec<T> {
    let mut cur = coord.to_vec();
    for axis in 0..4 {
        let mut next = vec![T::zero(); cur.len()];
        for idx in 0..cur.len() {
            let mut digits = [idx / (m * m * m), (idx / (m * m)) % m, (idx / m) % m, idx % m];
            let a = digits[axis];
            let mut s = T::zero();
            for i in 0..m {
                digits[axis] = i;
                s += e[(a, i)] * cur[((digits[0] * m + digits[1]) * m + digits[2]) * m + digits[3]];
            }
            next[idx] = s;
        }
        cur = next;
    }
    cur
}

struct Interior<T> {
    jet: Jet<T>,
    frame: Mat<T>,
    riemann: Vec<T>,
    ricci: Vec<Vec<T>>,
    tau: T,
}

fn interior<T: Real>(patch: &PatchMetric, x: &[T]) -> Result<Interior<T>> {
    let m = patch.dim;
    if x.len() != m {
        return Err(Error::InvalidArgument(format!("point has {} coordinates, chart has {m}", x.len())));
    }
    let jet = Jet::at(patch, x, 2)?;
    let flip = patch.face_of(x) == Some(BoundaryFace::Upper);
    let frame = jet.frame(flip);
    let riemann = frame_riemann(&jet.riemann(), &frame, m);
    let r = |i: usize, j: usize, k: usize, l: usize| riemann[((i * m + j) * m + k) * m + l];
    let ricci: Vec<Vec<T>> = (0..m).map(|i| (0..m).map(|j| (0..m).map(|k| r(i, k, k, j)).sum()).collect()).collect();
    let tau = (0..m).map(|i| ricci[i][i]).sum();
    Ok(Interior { jet, frame, riemann, ricci, tau })
}

/// Scalar curvature alone; the workhorse of numerical differentiation.
fn scalar_curvature<T: Real>(patch: &PatchMetric, x: &[T]) -> Result<T> {
    Ok(interior(patch, x)?.tau)
}

/// Interior curvature fields at `x`; boundary and derivative fields are left empty.
pub fn curvature_at<T: Real>(patch: &PatchMetric, x: &[T]) -> Result<CurvatureSample<T>> {
    let it = interior(patch, x)?;
    let m = patch.dim;
    Ok(CurvatureSample {
        point: x.to_vec(),
        frame: (0..m).map(|a| (0..m).map(|i| it.frame[(a, i)]).collect()).collect(),
        riemann: it.riemann,
        ricci: it.ricci,
        tau: it.tau,
        boundary: None,
        derivatives: None,
    })
}

/// `L_ab` and the boundary curvature contractions at a point of a declared face.
pub fn second_fundamental_form<T: Real>(patch: &PatchMetric, x: &[T]) -> Result<BoundarySample<T>> {
    let face = patch.face_of(x).ok_or(Error::NotOnBoundary)?;
    let it = interior(patch, x)?;
    let l_aa_bb = match &patch.warped {
        Some(_) => T::zero(),
        None => boundary_laplacian(patch, x, |y| Ok(mean_curvature(patch, y)?))?,
    };
    Ok(boundary_fields(&it, face, patch.dim, l_aa_bb))
}

fn second_fundamental_matrix<T: Real>(jet: &Jet<T>, e: &Mat<T>) -> Vec<Vec<T>> {
    let m = jet.m;
    let gamma = jet.christoffel();
    let normal: Vec<T> = (0..m).map(|i| e[(m - 1, i)]).collect();
    let g_n: Vec<T> = (0..m).map(|p| (0..m).map(|q| jet.g[(p, q)] * normal[q]).sum()).collect();
    (0..m - 1)
        .map(|a| {
            (0..m - 1)
                .map(|b| {
                    let mut s = T::zero();
                    for i in 0..m {
                        for j in 0..m {
                            let w = e[(a, i)] * e[(b, j)];
                            if w != T::zero() {
                                s += w * (0..m).map(|p| gamma[(p * m + i) * m + j] * g_n[p]).sum::<T>();
                            }
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn mean_curvature<T: Real>(patch: &PatchMetric, x: &[T]) -> Result<T> {
    let jet = Jet::at(patch, x, 1)?;
    let flip = patch.face_of(x) == Some(BoundaryFace::Upper);
    let e = jet.frame(flip);
    let l = second_fundamental_matrix(&jet, &e);
    Ok((0..patch.dim - 1).map(|a| l[a][a]).sum())
}

fn boundary_fields<T: Real>(it: &Interior<T>, face: BoundaryFace, m: usize, l_aa_bb: T) -> BoundarySample<T> {
    let n = m - 1;
    let r = |i: usize, j: usize, k: usize, l: usize| it.riemann[((i * m + j) * m + k) * m + l];
    let l = second_fundamental_matrix(&it.jet, &it.frame);
    let l_aa = (0..n).map(|a| l[a][a]).sum();
    let l_ab_l_ab = contract(&l, &l);
    let r_amam = (0..n).map(|a| r(a, n, a, n)).sum();
    let r_amma = (0..n).map(|a| r(a, n, n, a)).sum();
    let r_ambm = (0..n).map(|a| (0..n).map(|b| r(a, n, b, n)).collect()).collect();
    let r_abcb = (0..n).map(|a| (0..n).map(|c| (0..n).map(|b| r(a, b, c, b)).sum()).collect()).collect();
    BoundarySample { face, l, l_aa, l_ab_l_ab, r_amam, r_amma, r_ambm, r_abcb, l_aa_bb }
}

fn steps(patch: &PatchMetric) -> Vec<f64> {
    patch.lower.iter().zip(&patch.upper).map(|(l, u)| DIFFERENCE_STEP * (u - l)).collect()
}

/// Central-difference gradient and Hessian of `phi` in the listed coordinates.
fn difference_jet<T: Real>(
    x: &[T],
    coords: &[usize],
    h: &[f64],
    scale: T,
    phi: &impl Fn(&[T]) -> Result<T>,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let n = coords.len();
    let shifted = |moves: &[(usize, T)]| -> Result<T> {
        let mut y = x.to_vec();
        for &(c, d) in moves {
            y[c] += d;
        }
        phi(&y)
    };
    let centre = phi(x)?;
    let mut grad = vec![T::zero(); n];
    let mut hess = vec![vec![T::zero(); n]; n];
    for (a, &ca) in coords.iter().enumerate() {
        let ha = T::lit(h[ca]) * scale;
        let plus = shifted(&[(ca, ha)])?;
        let minus = shifted(&[(ca, -ha)])?;
        grad[a] = (plus - minus) / (ha + ha);
        hess[a][a] = (plus - centre - centre + minus) / (ha * ha);
        for (b, &cb) in coords.iter().enumerate().take(a) {
            let hb = T::lit(h[cb]) * scale;
            let pp = shifted(&[(ca, ha), (cb, hb)])?;
            let pm = shifted(&[(ca, ha), (cb, -hb)])?;
            let mp = shifted(&[(ca, -ha), (cb, hb)])?;
            let mm = shifted(&[(ca, -ha), (cb, -hb)])?;
            let v = (pp - pm - mp + mm) / (T::lit(4.0) * ha * hb);
            hess[a][b] = v;
            hess[b][a] = v;
        }
    }
    Ok((grad, hess))
}

/// `(4·D(h/2) − D(h))/3` componentwise, with the disagreement `|R − D(h/2)|`.
fn richardson<T: Real>(coarse: &[T], fine: &[T]) -> (Vec<T>, T) {
    let mut err = T::zero();
    let out = coarse
        .iter()
        .zip(fine)
        .map(|(&c, &f)| {
            let r = (T::lit(4.0) * f - c) / T::lit(3.0);
            err = err.max((r - f).abs());
            r
        })
        .collect();
    (out, err)
}

fn flatten<T: Copy>(g: &[T], h: &[Vec<T>]) -> Vec<T> {
    g.iter().copied().chain(h.iter().flatten().copied()).collect()
}

/// `h^{ab}(∂_a∂_b φ − Γ̃^c_ab ∂_c φ)` along the face through `x`.
fn boundary_laplacian<T: Real>(patch: &PatchMetric, x: &[T], phi: impl Fn(&[T]) -> Result<T>) -> Result<T> {
    let m = patch.dim;
    let n = m - 1;
    if n == 0 {
        return Ok(T::zero());
    }
    let coords: Vec<usize> = (0..n).collect();
    let h = steps(patch);
    let (g1, h1) = difference_jet(x, &coords, &h, T::one(), &phi)?;
    let (g2, h2) = difference_jet(x, &coords, &h, T::lit(0.5), &phi)?;
    let (vals, err) = richardson(&flatten(&g1, &h1), &flatten(&g2, &h2));
    let jet = Jet::at(patch, x, 1)?;
    let induced = Mat::from_fn(n, n, |a, b| jet.g[(a, b)]);
    let hinv = induced.inverse().ok_or(Error::SingularMetric { condition: f64::INFINITY })?;
    let half = T::lit(0.5);
    let mut lap = T::zero();
    for a in 0..n {
        for b in 0..n {
            let mut v = vals[n + a * n + b];
            for c in 0..n {
                let gamma: T = (0..n)
                    .map(|d| hinv[(c, d)] * half * (jet.dg[a][(b, d)] + jet.dg[b][(a, d)] - jet.dg[d][(a, b)]))
                    .sum();
                v -= gamma * vals[c];
            }
            lap += hinv[(a, b)] * v;
        }
    }
    let scale = lap.abs().max(T::one());
    if err > T::lit(DERIVATIVE_TOLERANCE) * scale {
        return Err(Error::DerivativeUnstable { disagreement: err.to_f64_lossy() });
    }
    Ok(lap)
}

/// `τ_;m` and `τ_;kk` at `x`; symbolic on warped patches, otherwise Richardson
/// differences of the pointwise scalar curvature with steps `h`, `h/2`.
pub fn derivative_scalars<T: Real>(patch: &PatchMetric, x: &[T]) -> Result<DerivativeScalars<T>> {
    let m = patch.dim;
    let jet = Jet::at(patch, x, 1)?;
    let flip = patch.face_of(x) == Some(BoundaryFace::Upper);
    let e = jet.frame(flip);
    if let Some(w) = &patch.warped {
        let k = w.fiber_dim as f64;
        let d1 = w.phi.derivative(m - 1);
        let d2 = d1.derivative(m - 1);
        // τ = −2k φ″ − k(k+1) φ′²
        let tau = ScalarExpr::sum([d2.scale(-2.0 * k), d1.clone().powi(2).scale(-k * (k + 1.0))]);
        let tau1 = tau.derivative(m - 1);
        let tau2 = tau1.derivative(m - 1);
        let sign = if flip { -T::one() } else { T::one() };
        let tau_m = sign * tau1.eval(x);
        let tau_kk = tau2.eval(x) + T::lit(k) * d1.eval(x) * tau1.eval(x);
        return Ok(DerivativeScalars { tau_m, tau_kk, error_estimate: T::zero(), symbolic: true });
    }
    let coords: Vec<usize> = (0..m).collect();
    let h = steps(patch);
    let tau = |y: &[T]| scalar_curvature(patch, y);
    let (g1, h1) = difference_jet(x, &coords, &h, T::one(), &tau)?;
    let (g2, h2) = difference_jet(x, &coords, &h, T::lit(0.5), &tau)?;
    let (vals, err) = richardson(&flatten(&g1, &h1), &flatten(&g2, &h2));
    let grad = &vals[..m];
    let hess = |i: usize, j: usize| vals[m + i * m + j];
    let gamma = jet.christoffel();
    let mut tau_kk = T::zero();
    for i in 0..m {
        for j in 0..m {
            let mut v = hess(i, j);
            for k in 0..m {
                v -= gamma[(k * m + i) * m + j] * grad[k];
            }
            tau_kk += jet.ginv[(i, j)] * v;
        }
    }
    let tau_m = (0..m).map(|i| e[(m - 1, i)] * grad[i]).sum::<T>();
    let scale = tau_kk.abs().max(tau_m.abs()).max(T::one());
    if err > T::lit(DERIVATIVE_TOLERANCE) * scale {
        return Err(Error::DerivativeUnstable { disagreement: err.to_f64_lossy() });
    }
    Ok(DerivativeScalars { tau_m, tau_kk, error_estimate: err, symbolic: false })
}

/// Every field at `x`: boundary quantities when `x` lies on a declared face.
pub fn sample_point<T: Real>(patch: &PatchMetric, x: &[T]) -> Result<CurvatureSample<T>> {
    let it = interior(patch, x)?;
    let m = patch.dim;
    let boundary = match patch.face_of(x) {
        Some(face) => {
            let l_aa_bb = match &patch.warped {
                Some(_) => T::zero(),
                None => boundary_laplacian(patch, x, |y| mean_curvature(patch, y))?,
            };
            Some(boundary_fields(&it, face, m, l_aa_bb))
        }
        None => None,
    };
    let derivatives = Some(derivative_scalars(patch, x)?);
    Ok(CurvatureSample {
        point: x.to_vec(),
        frame: (0..m).map(|a| (0..m).map(|i| it.frame[(a, i)]).collect()).collect(),
        riemann: it.riemann,
        ricci: it.ricci,
        tau: it.tau,
        boundary,
        derivatives,
    })
}

/// [`sample_point`] over many points in parallel, in input order.
pub fn sample_points<T: Real>(patch: &PatchMetric, points: &[Vec<T>]) -> Vec<Result<CurvatureSample<T>>> {
    points.par_iter().map(|x| sample_point(patch, x)).collect()
}

/// Debug dump of a sample.
pub fn sample_json(sample: &CurvatureSample<f64>) -> serde_json::Value {
    serde_json::to_value(sample).unwrap_or(serde_json::Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bump3() -> ScalarExpr {
        // 0.3 x − 0.2 x² + 0.1 x³
        let x = ScalarExpr::x();
        ScalarExpr::sum([x.clone().scale(0.3), x.clone().powi(2).scale(-0.2), x.powi(3).scale(0.1)])
    }

    #[test]
    fn euclidean_is_flat() {
        let p = PatchMetric::euclidean(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let x = [0.3f64, 0.4, 0.5];
        assert!(christoffel(&p, &x).unwrap().values.iter().all(|&v| v == 0.0));
        let s = sample_point(&p, &x).unwrap();
        assert!(s.riemann.iter().all(|&v| v == 0.0));
        let d = s.derivatives.unwrap();
        assert!(d.tau_kk.abs() < 1e-12 && d.tau_m.abs() < 1e-12);
    }

    #[test]
    fn polar_christoffels() {
        let r = ScalarExpr::var(0);
        let g = vec![vec![ScalarExpr::one(), ScalarExpr::zero()], vec![ScalarExpr::zero(), r.powi(2)]];
        let p = PatchMetric::new(vec![0.5, 0.0], vec![2.0, 6.0], g, Vec::new()).unwrap();
        let c = christoffel(&p, &[1.5f64, 1.0]).unwrap();
        assert!((c.get(0, 1, 1) + 1.5).abs() < 1e-15);
        assert!((c.get(1, 0, 1) - 1.0 / 1.5).abs() < 1e-15);
        assert!((c.get(1, 1, 0) - 1.0 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn warped_christoffel_and_curvature() {
        let f = bump3();
        let p = PatchMetric::warped_circle(Interval::new(0.0, 1.0), &f, 1.0).unwrap();
        for x in [0.1f64, 0.37, 0.8] {
            let f1 = f.derivative(0).eval1(x);
            let f2 = f.nth_derivative(2).eval1(x);
            let c = christoffel(&p, &[1.0, x]).unwrap();
            assert!((c.get(1, 0, 0) + f1 * (2.0 * f.eval1(x)).exp()).abs() < 1e-13);
            let s = curvature_at(&p, &[1.0, x]).unwrap();
            // R_{x θ θ x} in the frame (θ first, x last)
            assert!((s.r(1, 0, 0, 1) + (f2 + f1 * f1)).abs() < 1e-12);
            assert!((s.tau + 2.0 * (f2 + f1 * f1)).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_sign_convention() {
        let p = PatchMetric::unit_sphere(0.2, PI - 0.2).unwrap();
        let s = curvature_at(&p, &[0.4f64, PI / 3.0]).unwrap();
        assert!((s.r(0, 1, 1, 0) - 1.0).abs() < 1e-12);
        assert!((s.tau - 2.0).abs() < 1e-12);
        assert!(s.symmetry_defect() < 1e-12);
        let d = derivative_scalars(&p, &[0.4f64, PI / 3.0]).unwrap();
        assert!(d.tau_m.abs() < 1e-8 && d.tau_kk.abs() < 1e-6);
    }

    #[test]
    fn warped_second_fundamental_form_follows_inward_normal() {
        let f = bump3();
        let base = Interval::new(0.0, 1.0);
        let p = PatchMetric::warped_circle(base, &f, 1.0).unwrap();
        let h = |x: f64| f.eval1(x).exp();
        let dh = |x: f64| f.derivative(0).eval1(x) * h(x);
        let at_a = second_fundamental_form(&p, &[0.5f64, 0.0]).unwrap();
        let at_b = second_fundamental_form(&p, &[0.5f64, 1.0]).unwrap();
        assert!((at_a.l_aa + dh(0.0) / h(0.0)).abs() < 1e-12);
        assert!((at_b.l_aa - dh(1.0) / h(1.0)).abs() < 1e-12);
        assert!(matches!(second_fundamental_form(&p, &[0.5f64, 0.5]), Err(Error::NotOnBoundary)));
        let flat = PatchMetric::warped_circle(base, &ScalarExpr::zero(), 1.0).unwrap();
        assert_eq!(second_fundamental_form(&flat, &[0.5f64, 0.0]).unwrap().l_aa, 0.0);
    }

    #[test]
    fn disk_boundary_is_convex() {
        // polar chart (θ, r) on the annulus 0.5 ≤ r ≤ 1; r = 1 is the outer face
        let r = ScalarExpr::var(1);
        let g = vec![vec![r.powi(2), ScalarExpr::zero()], vec![ScalarExpr::zero(), ScalarExpr::one()]];
        let p = PatchMetric::new(vec![0.0, 0.5], vec![2.0 * PI, 1.0], g, vec![BoundaryFace::Upper]).unwrap();
        let s = second_fundamental_form(&p, &[1.0f64, 1.0]).unwrap();
        assert!((s.l_aa - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symbolic_and_numeric_tau_derivatives_agree() {
        let f = bump3();
        let base = Interval::new(0.0, 1.0);
        let sym = PatchMetric::warped_circle(base, &f, 1.0).unwrap();
        let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let num = sym.affine_pullback(&identity, &[0.0, 0.0], sym.lower().to_vec(), sym.upper().to_vec()).unwrap();
        for x in [[0.3f64, 0.25], [1.0, 0.6], [2.0, 1.0]] {
            let a = derivative_scalars(&sym, &x).unwrap();
            let b = derivative_scalars(&num, &x).unwrap();
            assert!(a.symbolic && !b.symbolic);
            assert!((a.tau_m - b.tau_m).abs() < 1e-6, "{a:?} {b:?}");
            assert!((a.tau_kk - b.tau_kk).abs() < 1e-6, "{a:?} {b:?}");
        }
    }

    #[test]
    fn affine_reparametrization_preserves_scalars() {
        let f = bump3();
        let p = PatchMetric::warped_circle(Interval::new(0.0, 1.0), &f, 1.3).unwrap();
        // θ = 2u + 0.5 v + 0.1, x = 0.5 v  on u ∈ [0, π], v ∈ [0, 2]
        let a = vec![vec![2.0, 0.5], vec![0.0, 0.5]];
        let c = [0.1, 0.0];
        let q = p.affine_pullback(&a, &c, vec![0.0, 0.0], vec![PI, 2.0]).unwrap();
        for (u, v) in [(0.3, 0.0), (1.1, 0.7), (2.0, 2.0)] {
            let y: [f64; 2] = [u, v];
            let x: [f64; 2] = [2.0 * u + 0.5 * v + 0.1, 0.5 * v];
            let s = sample_point(&p, &x).unwrap();
            let t = sample_point(&q, &y).unwrap();
            assert!((s.tau - t.tau).abs() < 1e-8);
            assert!((s.riemann_squared() - t.riemann_squared()).abs() < 1e-8);
            match (s.boundary, t.boundary) {
                (Some(sb), Some(tb)) => {
                    assert!((sb.l_aa - tb.l_aa).abs() < 1e-8);
                    assert!((sb.r_amam - tb.r_amam).abs() < 1e-8);
                    assert!(tb.l_aa_bb.abs() < 1e-6);
                }
                (None, None) => {}
                _ => panic!("boundary classification changed"),
            }
            let (ds, dt) = (s.derivatives.unwrap(), t.derivatives.unwrap());
            assert!((ds.tau_kk - dt.tau_kk).abs() < 1e-6);
        }
    }

    #[test]
    fn three_dimensional_warped_torus() {
        let f = bump3();
        let gram = vec![vec![1.0, 0.3], vec![0.3, 2.0]];
        let p = PatchMetric::warped(Interval::new(0.0, 1.0), &f, &gram).unwrap();
        let x = [0.2f64, 0.7, 0.4];
        let s = sample_point(&p, &x).unwrap();
        assert!(s.symmetry_defect() < 1e-12);
        let phi1 = f.derivative(0).eval1(0.4) / 2.0;
        let phi2 = f.nth_derivative(2).eval1(0.4) / 2.0;
        assert!((s.tau - (-4.0 * phi2 - 6.0 * phi1 * phi1)).abs() < 1e-12);
        let frame = Mat::from_rows(&s.frame);
        let jet = Jet::at(&p, &x, 0).unwrap();
        let gram_frame = frame.matmul(&jet.g).matmul(&frame.transpose());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram_frame[(i, j)] - want).abs() < 1e-12);
            }
        }
        let b = sample_point(&p, &[0.2, 0.7, 1.0]).unwrap().boundary.unwrap();
        let (c, sn) = (0.6f64.cos(), 0.6f64.sin());
        let rotated = sample_point(&p, &[0.2, 0.7, 1.0]).unwrap().rotated_tangential(&[vec![c, -sn], vec![sn, c]]);
        let rb = rotated.boundary.clone().unwrap();
        assert!((b.l_ab_l_ab - rb.l_ab_l_ab).abs() < 1e-12);
        assert!((b.r_ambm_l_ab() - rb.r_ambm_l_ab()).abs() < 1e-12);
        assert!((b.l_cubed_trace() - rb.l_cubed_trace()).abs() < 1e-12);
        let unrotated = sample_point(&p, &[0.2, 0.7, 1.0]).unwrap();
        assert!((rotated.ricci_squared() - unrotated.ricci_squared()).abs() < 1e-12);
        assert!((rotated.riemann_squared() - unrotated.riemann_squared()).abs() < 1e-12);
    }

    #[test]
    fn singular_metric_is_rejected() {
        let r = ScalarExpr::var(0);
        let g = vec![vec![ScalarExpr::one(), ScalarExpr::zero()], vec![ScalarExpr::zero(), r.powi(2)]];
        let p = PatchMetric::new(vec![0.0, 0.0], vec![1.0, 1.0], g, Vec::new()).unwrap();
        assert!(matches!(christoffel(&p, &[0.0f64, 0.5]), Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn json_dump_round_trips() {
        let p = PatchMetric::unit_sphere(0.2, 3.0).unwrap();
        let s = sample_point(&p, &[0.1, 1.0]).unwrap();
        let back: CurvatureSample<f64> = serde_json::from_value(sample_json(&s)).unwrap();
        assert_eq!(back, s);
    }
}
