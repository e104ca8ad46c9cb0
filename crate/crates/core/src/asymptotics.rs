//! Heat-trace and heat-content expansion coefficients: geometric evaluation of
//! the local formulas and numerical recovery from sampled heat functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::heat::{HeatSeries, SeriesKind};
use crate::linalg::{least_squares, singular_values, Mat};
use crate::manifold::{geometry_summary, gram_matrix, Interval, ManifoldSpec};
use crate::quadrature::GaussLegendre;
use crate::scalar::Real;
use crate::tensor::{sample_point, BoundaryFace, CurvatureSample, PatchMetric};

/// Gauss–Legendre nodes per base interval.
pub const QUADRATURE_NODES: usize = 64;

/// Largest admissible condition number of the normalized fit basis.
pub const MAX_FIT_CONDITION: f64 = 1e12;

/// Highest fitted order.
pub const MAX_FIT_ORDER: usize = 6;

/// `a_0 … a_4` and `β_0 … β_4` of one manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricCoefficients {
    pub dim: usize,
    pub trace: [f64; 5],
    pub content: [f64; 5],
    /// Largest difference between one- and two-panel quadrature over all orders.
    pub quadrature_error: f64,
}

/// Interior integrands `τ`, `12τ_;kk + 5τ² − 2|ρ|² + 2|R|²`.
fn interior_terms(s: &CurvatureSample<f64>) -> [f64; 2] {
    let d = s.derivatives.expect("sample carries derivatives");
    [s.tau, 12.0 * d.tau_kk + 5.0 * s.tau * s.tau - 2.0 * s.ricci_squared() + 2.0 * s.riemann_squared()]
}

/// Boundary integrands of `a_2, a_3, a_4` and `β_2, β_3, β_4`, without their
/// dimensional prefactors.
fn boundary_terms(s: &CurvatureSample<f64>) -> [f64; 6] {
    let b = s.boundary.as_ref().expect("sample on a boundary face");
    let d = s.derivatives.expect("sample carries derivatives");
    let (l_aa, l2) = (b.l_aa, b.l_ab_l_ab);
    let a2 = 2.0 * l_aa;
    let a3 = 16.0 * s.tau + 8.0 * b.r_amam + 7.0 * l_aa * l_aa - 10.0 * l2;
    let a4 = -18.0 * d.tau_m + 20.0 * s.tau * l_aa + 4.0 * b.r_amam * l_aa - 12.0 * b.r_ambm_l_ab()
        + 4.0 * b.r_abcb_l_ac()
        + 24.0 * b.l_aa_bb
        + 40.0 / 21.0 * l_aa * l_aa * l_aa
        - 88.0 / 7.0 * b.l_ab_l_ab_l_cc()
        + 320.0 / 21.0 * b.l_cubed_trace();
    let b2 = 0.5 * l_aa;
    let b3 = l_aa * l_aa / 12.0 - l2 / 6.0 - b.r_amma / 6.0;
    let b4 = -b.l_ab_l_ab_l_cc() / 16.0 + b.l_cubed_trace() / 8.0 - b.r_ambm_l_ab() / 16.0
        + b.r_abcb_l_ac() / 16.0
        + d.tau_m / 32.0;
    [a2, a3, a4, b2, b3, b4]
}

fn sqrt_det(patch: &PatchMetric, x: &[f64], upto: usize) -> Result<f64> {
    if upto == 0 {
        return Ok(1.0);
    }
    let g = Mat::from_fn(upto, upto, |i, j| metric_entry(patch, x, i, j));
    let det = g.determinant();
    if !(det > 0.0) {
        return Err(Error::SingularMetric { condition: f64::INFINITY });
    }
    Ok(det.sqrt())
}

fn metric_entry(patch: &PatchMetric, x: &[f64], i: usize, j: usize) -> f64 {
    patch.metric_component(i, j).eval(x)
}

/// Interior integrals `(∫τ, ∫{…a_4…}, Vol)` with `panels` Gauss–Legendre panels.
fn interior_integrals(patch: &PatchMetric, rule: &GaussLegendre<f64>, panels: usize) -> Result<[f64; 3]> {
    let m = patch.dim();
    let (lo, hi) = (patch.lower()[m - 1], patch.upper()[m - 1]);
    let tangential_volume: f64 = (0..m - 1).map(|i| patch.upper()[i] - patch.lower()[i]).product();
    let mid: Vec<f64> = (0..m - 1).map(|i| 0.5 * (patch.lower()[i] + patch.upper()[i])).collect();
    let width = (hi - lo) / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| rule.on_interval(lo + p as f64 * width, lo + (p + 1) as f64 * width).collect::<Vec<_>>())
        .collect();
    let parts: Vec<[f64; 3]> = nodes
        .par_iter()
        .map(|&(x, w)| {
            let mut point = mid.clone();
            point.push(x);
            let s = sample_point(patch, &point)?;
            let dv = w * sqrt_det(patch, &point, m)? * tangential_volume;
            let [t, q] = interior_terms(&s);
            Ok([t * dv, q * dv, dv])
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().fold([0.0; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]))
}

/// Boundary integrals of the six boundary integrands plus the boundary volume.
fn boundary_integrals(patch: &PatchMetric) -> Result<[f64; 7]> {
    let m = patch.dim();
    let tangential_volume: f64 = (0..m - 1).map(|i| patch.upper()[i] - patch.lower()[i]).product();
    let mut out = [0.0; 7];
    for &face in patch.boundary_faces() {
        let mut point: Vec<f64> = (0..m - 1).map(|i| 0.5 * (patch.lower()[i] + patch.upper()[i])).collect();
        point.push(match face {
            BoundaryFace::Lower => patch.lower()[m - 1],
            BoundaryFace::Upper => patch.upper()[m - 1],
        });
        let s = sample_point(patch, &point)?;
        let dv = sqrt_det(patch, &point, m - 1)? * tangential_volume;
        for (o, v) in out.iter_mut().zip(boundary_terms(&s)) {
            *o += v * dv;
        }
        out[6] += dv;
    }
    Ok(out)
}

fn assemble(m: usize, interior: [f64; 3], boundary: [f64; 7]) -> ([f64; 5], [f64; 5]) {
    let pi4 = 4.0 * std::f64::consts::PI;
    let vol_pref = pi4.powf(-(m as f64) / 2.0);
    let bdy_pref = pi4.powf(-(m as f64 - 1.0) / 2.0);
    let [int_tau, int_a4, vol] = interior;
    let [b_a2, b_a3, b_a4, b_b2, b_b3, b_b4, bvol] = boundary;
    let trace = [
        vol_pref * vol,
        -0.25 * bdy_pref * bvol,
        vol_pref / 6.0 * (int_tau + b_a2),
        -bdy_pref / 384.0 * b_a3,
        vol_pref / 360.0 * (int_a4 + b_a4),
    ];
    let root_pi = std::f64::consts::PI.sqrt();
    let content = [vol, -2.0 / root_pi * bvol, b_b2, -2.0 / root_pi * b_b3, b_b4];
    (trace, content)
}

/// Coefficients of a patch whose integrands are invariant along the first
/// `m − 1` coordinates (as on warped products with flat fibers): the interior
/// integral reduces to the last coordinate and each boundary face is sampled
/// once, times the tangential coordinate volume.
pub fn patch_coefficients(patch: &PatchMetric) -> Result<GeometricCoefficients> {
    let m = patch.dim();
    let rule = GaussLegendre::new(QUADRATURE_NODES);
    let (one, two) = rayon::join(|| interior_integrals(patch, &rule, 1), || interior_integrals(patch, &rule, 2));
    let (one, two) = (one?, two?);
    let boundary = boundary_integrals(patch)?;
    let (trace, content) = assemble(m, two, boundary);
    let (trace1, content1) = assemble(m, one, boundary);
    let quadrature_error = trace
        .iter()
        .zip(&trace1)
        .chain(content.iter().zip(&content1))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(GeometricCoefficients { dim: m, trace, content, quadrature_error })
}

/// Gram matrix of a flat closed fiber in lattice coordinates on `[0, 1]^k`.
fn flat_fiber_gram(fiber: &ManifoldSpec) -> Result<Vec<Vec<f64>>> {
    match fiber {
        ManifoldSpec::Circle { radius } => {
            let len = 2.0 * std::f64::consts::PI * radius;
            Ok(vec![vec![len * len]])
        }
        ManifoldSpec::FlatTorus { gram } => {
            gram_matrix(gram)?;
            Ok(gram.clone())
        }
        ManifoldSpec::AbstractFiber { dim: 1, volume, .. } => Ok(vec![vec![volume * volume]]),
        ManifoldSpec::Product { factors } => {
            let blocks = factors.iter().map(flat_fiber_gram).collect::<Result<Vec<_>>>()?;
            let k: usize = blocks.iter().map(|b| b.len()).sum();
            let mut g = vec![vec![0.0; k]; k];
            let mut at = 0;
            for b in blocks {
                for (i, row) in b.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        g[at + i][at + j] = v;
                    }
                }
                at += b.len();
            }
            Ok(g)
        }
        other => Err(Error::UnsupportedGeometry(format!(
            "fiber of type {} has no flat chart",
            spec_name(other)
        ))),
    }
}

fn spec_name(spec: &ManifoldSpec) -> &'static str {
    match spec {
        ManifoldSpec::Interval(_) => "interval",
        ManifoldSpec::Circle { .. } => "circle",
        ManifoldSpec::FlatTorus { .. } => "flat_torus",
        ManifoldSpec::AbstractFiber { .. } => "abstract_fiber",
        ManifoldSpec::Product { .. } => "product",
        ManifoldSpec::WarpedProduct { .. } => "warped_product",
    }
}

fn is_flat(spec: &ManifoldSpec) -> bool {
    match spec {
        ManifoldSpec::Interval(_) | ManifoldSpec::Circle { .. } | ManifoldSpec::FlatTorus { .. } => true,
        ManifoldSpec::AbstractFiber { dim, .. } => *dim == 1,
        ManifoldSpec::Product { factors } => factors.iter().all(is_flat),
        ManifoldSpec::WarpedProduct { .. } => false,
    }
}

/// `a_0 … a_4` and `β_0 … β_4` for intervals, flat products and warped
/// products over an interval with a flat fiber.
pub fn geometric_coefficients(spec: &ManifoldSpec) -> Result<GeometricCoefficients> {
    let summary = geometry_summary(spec)?;
    match spec {
        ManifoldSpec::WarpedProduct { base, f, fiber } => {
            let gram = flat_fiber_gram(fiber)?;
            patch_coefficients(&PatchMetric::warped(*base, f, &gram)?)
        }
        s if is_flat(s) => {
            let m = summary.dim;
            let pi4 = 4.0 * std::f64::consts::PI;
            let trace = [
                pi4.powf(-(m as f64) / 2.0) * summary.volume,
                -0.25 * pi4.powf(-(m as f64 - 1.0) / 2.0) * summary.boundary_volume,
                0.0,
                0.0,
                0.0,
            ];
            let content = if s.has_boundary() {
                [summary.volume, -2.0 / std::f64::consts::PI.sqrt() * summary.boundary_volume, 0.0, 0.0, 0.0]
            } else {
                [summary.volume, 0.0, 0.0, 0.0, 0.0]
            };
            Ok(GeometricCoefficients { dim: m, trace, content, quadrature_error: 0.0 })
        }
        other => Err(Error::UnsupportedGeometry(format!(
            "no coefficient formulas for {} with curved or abstract factors",
            spec_name(other)
        ))),
    }
}

pub fn geometric_trace_coefficients(spec: &ManifoldSpec) -> Result<[f64; 5]> {
    Ok(geometric_coefficients(spec)?.trace)
}

pub fn geometric_content_coefficients(spec: &ManifoldSpec) -> Result<[f64; 5]> {
    Ok(geometric_coefficients(spec)?.content)
}

/// The exponent of `t` multiplying coefficient `n`.
pub fn expansion_power(kind: SeriesKind, dim: usize, n: usize) -> f64 {
    match kind {
        SeriesKind::Trace => (n as f64 - dim as f64) / 2.0,
        _ => n as f64 / 2.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Highest order `K`; coefficients `c_0 … c_K` are fitted.
    pub order: usize,
    /// Relative weighted residual above which the fit is refused.
    pub residual_threshold: f64,
    pub max_condition: f64,
}

impl FitOptions {
    pub fn new(order: usize) -> Self {
        FitOptions { order, residual_threshold: 1e-8, max_condition: MAX_FIT_CONDITION }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.residual_threshold = threshold;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit<T> {
    pub kind: SeriesKind,
    pub dim: usize,
    pub coefficients: Vec<T>,
    pub powers: Vec<f64>,
    /// `‖W(Ac − y)‖ / ‖Wy‖` with weights `W = t^{-p_0}`.
    pub residual: T,
    /// Condition number of the column-normalized weighted basis.
    pub condition: T,
    pub t_window: (T, T),
    pub samples: usize,
}

/// Weighted least-squares fit of `Σ_{n ≤ K} c_n t^{p_n}` to `(t, value)` samples.
///
/// Rows are weighted by `t^{-p_0}` to equalize the leading term, columns are
/// normalized to unit length and the system is solved by Householder QR.
pub fn fit_expansion<T: Real>(
    samples: &[(T, T)],
    dim: usize,
    kind: SeriesKind,
    opts: &FitOptions,
) -> Result<AsymptoticFit<T>> {
    let k = opts.order;
    if k > MAX_FIT_ORDER {
        return Err(Error::InvalidArgument(format!("fit order {k} exceeds {MAX_FIT_ORDER}")));
    }
    let cols = k + 1;
    if samples.len() < (3 * k).max(cols) {
        return Err(Error::InvalidArgument(format!(
            "{} samples are too few for order {k} (need {})",
            samples.len(),
            (3 * k).max(cols)
        )));
    }
    if samples.iter().any(|&(t, v)| !(t > T::zero()) || !v.is_finite()) {
        return Err(Error::InvalidArgument("samples need positive times and finite values".into()));
    }
    let powers: Vec<f64> = (0..cols).map(|n| expansion_power(kind, dim, n)).collect();
    let lead = T::lit(powers[0]);
    let rows = samples.len();
    let mut a = Mat::from_fn(rows, cols, |i, j| {
        let t = samples[i].0;
        t.powf(T::lit(powers[j]) - lead)
    });
    let b: Vec<T> = samples.iter().map(|&(t, v)| v * t.powf(-lead)).collect();
    let mut scale = vec![T::zero(); cols];
    for j in 0..cols {
        scale[j] = (0..rows).map(|i| a[(i, j)] * a[(i, j)]).sum::<T>().sqrt();
        for i in 0..rows {
            a[(i, j)] /= scale[j];
        }
    }
    let sv = singular_values(&a);
    let smin = sv.last().copied().unwrap_or_else(T::zero);
    let condition = if smin > T::zero() { sv[0] / smin } else { T::infinity() };
    if !(condition.to_f64_lossy() <= opts.max_condition) {
        return Err(Error::IllConditioned { condition: condition.to_f64_lossy() });
    }
    let (x, res) = least_squares(&a, &b).ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    let bnorm = b.iter().map(|&v| v * v).sum::<T>().sqrt();
    let residual = if bnorm > T::zero() { res / bnorm } else { res };
    if !(residual.to_f64_lossy() <= opts.residual_threshold) {
        return Err(Error::AcceptanceFailed(format!(
            "relative residual {:.3e} exceeds {:.3e}",
            residual.to_f64_lossy(),
            opts.residual_threshold
        )));
    }
    let coefficients = x.iter().zip(&scale).map(|(&c, &s)| c / s).collect();
    let (tmin, tmax) = samples.iter().fold((T::infinity(), T::zero()), |(lo, hi), &(t, _)| (lo.min(t), hi.max(t)));
    Ok(AsymptoticFit { kind, dim, coefficients, powers, residual, condition, t_window: (tmin, tmax), samples: rows })
}

/// Samples a heat series on `ts`, requiring each tail to be below
/// `tail_fraction · |value|`.
pub fn sample_series<T: Real>(series: &HeatSeries<T>, ts: &[T], tail_fraction: T) -> Result<Vec<(T, T)>> {
    Ok(series.evaluate_grid(ts, Some(tail_fraction))?.into_iter().map(|v| (v.t, v.value)).collect())
}

/// JSON report comparing fitted and geometric coefficients order by order.
pub fn coefficient_report(
    geometric: &[f64],
    fit: &AsymptoticFit<f64>,
    tolerances: &[f64],
) -> Value {
    let orders: Vec<Value> = fit
        .coefficients
        .iter()
        .enumerate()
        .map(|(n, &c)| {
            let expected = geometric.get(n).copied();
            let tol = tolerances.get(n).copied();
            let pass = match (expected, tol) {
                (Some(e), Some(t)) => Some((c - e).abs() <= t),
                _ => None,
            };
            json!({ "order": n, "power": fit.powers[n], "fitted": c, "geometric": expected, "tolerance": tol, "pass": pass })
        })
        .collect();
    json!({
        "kind": fit.kind.as_str(),
        "dim": fit.dim,
        "coefficients_geometric": geometric,
        "coefficients_fitted": fit.coefficients,
        "residual": fit.residual,
        "condition": fit.condition,
        "t_window": [fit.t_window.0, fit.t_window.1],
        "samples": fit.samples,
        "tolerances": tolerances,
        "orders": orders,
    })
}

/// Boundary volume of `[a, b] ×_f N` for a check against `geometry_summary`.
pub fn warped_boundary_volume(base: Interval, f: &crate::expr::ScalarExpr, fiber_volume: f64) -> f64 {
    fiber_volume * (f.eval1(base.a).exp() + f.eval1(base.b).exp())
}
