//! Heat trace, heat content and weighted heat content as truncated spectral
//! series with explicit tail bounds, plus a Crank–Nicolson PDE oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::linalg::SymTridiagonal;
use crate::manifold::{geometry_summary, validate_spec, Interval, ManifoldSpec};
use crate::quadrature::{adaptive_integrate, simpson, simpson_with_error};
use crate::scalar::Real;
use crate::spectral::dump::format_real;
use crate::spectral::{
    interval_spectrum_below, sector_operator, solve_sector, Convention, PruferOptions, SpectralResolution,
    SpectrumRequest,
};

/// Relative tail size above which evaluation refuses by default.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-12;

/// Points per decade of the default geometric t-grid.
pub const DEFAULT_POINTS_PER_DECADE: usize = 40;

pub const HEAT_CSV_HEADER: &str = "t,value,tail_bound,kind";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Trace,
    Content,
    WeightedContent,
    PdeOracle,
}

impl SeriesKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesKind::Trace => "trace",
            SeriesKind::Content => "content",
            SeriesKind::WeightedContent => "weighted_content",
            SeriesKind::PdeOracle => "pde_oracle",
        }
    }
}

/// Counting-function model `N(λ) ≈ C λ^{m/2}`, equivalently `λ_n ≈ (n/C)^{2/m}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylFit {
    /// Least-squares `C` over the top half of the computed spectrum.
    pub coefficient: f64,
    /// `2/m`.
    pub exponent: f64,
    /// `C' >= C` used in the tail bound: 1.1 × the largest of the fit and the
    /// observed ratios `N(λ)/λ^{m/2}` over the top half.
    pub envelope: f64,
}

/// How the tail of a content series is bounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContentTail {
    /// `Σ_{λ>Λ} w ≤ residual_mass`.
    Bessel { residual_mass: f64 },
    /// Cross terms `a_n b_n` with `Σ a² ≤ A`, `Σ b² ≤ B` over the tail.
    CauchySchwarz { residual_a: f64, residual_b: f64 },
}

/// Terms `(λ_n, w_n)` of `Σ w_n e^{-tλ_n}` with what is needed to bound the tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatSeries<T> {
    pub kind: SeriesKind,
    pub terms: Vec<(T, T)>,
    pub cutoff: T,
    pub dim: usize,
    pub weyl_fit: Option<WeylFit>,
    pub content_tail: Option<ContentTail>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatValue<T> {
    pub t: T,
    pub value: T,
    pub tail_bound: T,
}

fn fit_weyl<T: Real>(res: &SpectralResolution<T>, dim: usize) -> Option<WeylFit> {
    let half = dim as f64 / 2.0;
    let mut counting = Vec::with_capacity(res.levels.len());
    let mut n = 0usize;
    for l in &res.levels {
        n += l.multiplicity;
        let lam = l.value.to_f64_lossy();
        if lam > 0.0 {
            counting.push((lam, n as f64));
        }
    }
    let len = counting.len();
    if len < 2 {
        return None;
    }
    let top = &counting[len / 2..];
    let (num, den) = top.iter().fold((0.0, 0.0), |(a, b), &(lam, count)| {
        let p = lam.powf(half);
        (a + count * p, b + p * p)
    });
    let coefficient = num / den;
    let observed = top.iter().map(|&(lam, count)| count / lam.powf(half)).fold(0.0, f64::max);
    Some(WeylFit { coefficient, exponent: 2.0 / dim as f64, envelope: 1.1 * coefficient.max(observed) })
}

/// `Γ(s, z)` for `s` a positive integer or half-integer.
pub fn upper_incomplete_gamma_half_integer(s: f64, z: f64) -> f64 {
    let twice = (2.0 * s).round();
    assert!(twice >= 1.0 && (2.0 * s - twice).abs() < 1e-12, "s must be a positive half-integer");
    let (mut a, mut g) = if twice as i64 % 2 == 0 {
        (1.0, (-z).exp())
    } else {
        (0.5, std::f64::consts::PI.sqrt() * libm::erfc(z.sqrt()))
    };
    while a < s - 1e-9 {
        g = a * g + z.powf(a) * (-z).exp();
        a += 1.0;
    }
    g
}

impl<T: Real> HeatSeries<T> {
    /// Trace series of an `dim`-dimensional manifold: weights are multiplicities.
    pub fn trace(res: &SpectralResolution<T>, dim: usize) -> Self {
        HeatSeries {
            kind: SeriesKind::Trace,
            terms: res.levels.iter().map(|l| (l.value, T::from_usize_lossy(l.multiplicity))).collect(),
            cutoff: res.cutoff,
            dim,
            weyl_fit: fit_weyl(res, dim),
            content_tail: None,
        }
    }

    /// Content series `Σ e^{-tλ} σ_n(1)²`; `volume` bounds the tail via Bessel.
    pub fn content(res: &SpectralResolution<T>, dim: usize, volume: T) -> Result<Self> {
        let mass = res.mass_coeffs.as_ref().ok_or(Error::MissingEigenfunctions)?;
        let terms: Vec<(T, T)> = res.levels.iter().zip(mass).map(|(l, &s)| (l.value, s * s)).collect();
        let captured: T = terms.iter().fold(T::zero(), |a, t| a + t.1);
        Ok(HeatSeries {
            kind: SeriesKind::Content,
            terms,
            cutoff: res.cutoff,
            dim,
            weyl_fit: None,
            content_tail: Some(ContentTail::Bessel {
                residual_mass: residual(volume, captured).to_f64_lossy(),
            }),
        })
    }

    /// Evaluates the series and its tail bound at `t`, refusing when
    /// `tail > threshold · |value|`.
    pub fn evaluate_with(&self, t: T, threshold: Option<T>) -> Result<HeatValue<T>> {
        if !(t > T::zero()) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("time {t} must be positive")));
        }
        let value = self.terms.iter().rev().fold(T::zero(), |acc, &(lam, w)| acc + w * (-t * lam).exp());
        let tail_bound = self.tail(t);
        if let Some(th) = threshold {
            if !(tail_bound <= th * value.abs()) {
                return Err(Error::TailDominates {
                    t: t.to_f64_lossy(),
                    value: value.to_f64_lossy(),
                    tail: tail_bound.to_f64_lossy(),
                });
            }
        }
        Ok(HeatValue { t, value, tail_bound })
    }

    pub fn evaluate(&self, t: T) -> Result<HeatValue<T>> {
        self.evaluate_with(t, Some(T::lit(DEFAULT_TAIL_THRESHOLD)))
    }

    /// Evaluates on a grid in parallel; results are in grid order.
    pub fn evaluate_grid(&self, ts: &[T], threshold: Option<T>) -> Result<Vec<HeatValue<T>>> {
        ts.par_iter().map(|&t| self.evaluate_with(t, threshold)).collect()
    }

    /// Upper bound on the discarded terms `Σ_{λ>Λ} w e^{-tλ}`.
    pub fn tail(&self, t: T) -> T {
        let lam = self.cutoff.to_f64_lossy();
        let tf = t.to_f64_lossy();
        let decay = (-tf * lam).exp();
        let bound = match self.kind {
            SeriesKind::Trace => {
                let Some(fit) = self.weyl_fit else {
                    return T::infinity();
                };
                let half = self.dim as f64 / 2.0;
                let counted: f64 = self.terms.iter().map(|x| x.1.to_f64_lossy()).sum();
                // ∫_Λ^∞ e^{-ts} dN(s) ≤ C' t^{-m/2} Γ(m/2+1, tΛ) − e^{-tΛ} N(Λ)
                let envelope = fit.envelope * tf.powf(-half) * upper_incomplete_gamma_half_integer(half + 1.0, tf * lam);
                (envelope - decay * counted).max(0.0)
            }
            _ => match self.content_tail {
                Some(ContentTail::Bessel { residual_mass }) => decay * residual_mass,
                Some(ContentTail::CauchySchwarz { residual_a, residual_b }) => {
                    decay * (residual_a * residual_b).sqrt()
                }
                None => f64::INFINITY,
            },
        };
        T::lit(bound)
    }
}

/// `max(total − captured, 0)` padded for rounding in the captured sum.
fn residual<T: Real>(total: T, captured: T) -> T {
    (total - captured).max(T::zero()) + T::lit(64.0) * T::epsilon() * total.abs()
}

pub fn heat_trace<T: Real>(series: &HeatSeries<T>, t: T) -> Result<HeatValue<T>> {
    series.evaluate(t)
}

pub fn heat_content<T: Real>(series: &HeatSeries<T>, t: T) -> Result<HeatValue<T>> {
    series.evaluate(t)
}

/// Mass coefficients `σ_n(1)` and an absolute quadrature error estimate.
///
/// Closed forms (stored on the resolution) are used when present; otherwise
/// Simpson quadrature on eigenfunction samples against their declared density;
/// closed manifolds carry mass only in the constant mode.
pub fn mass_coefficients<T: Real>(res: &SpectralResolution<T>, spec: &ManifoldSpec) -> Result<(Vec<T>, T)> {
    if let Some(m) = &res.mass_coeffs {
        return Ok((m.clone(), T::zero()));
    }
    if let Some(ef) = &res.eigenfunctions {
        return Ok(mass_from_samples(res, ef));
    }
    if !spec.has_boundary() {
        let volume = T::lit(geometry_summary(spec)?.volume);
        let mut m = vec![T::zero(); res.levels.len()];
        if let (Some(first), Some(level)) = (m.first_mut(), res.levels.first()) {
            if level.value == T::zero() {
                *first = volume.sqrt();
            }
        }
        return Ok((m, T::zero()));
    }
    Err(Error::MissingEigenfunctions)
}

fn mass_from_samples<T: Real>(
    res: &SpectralResolution<T>,
    ef: &crate::spectral::EigenfunctionSamples<T>,
) -> (Vec<T>, T) {
    let h = ef.spacing();
    let density: Vec<T> = ef.grid().into_iter().map(|x| ef.density.eval1(x)).collect();
    let mut err = T::zero();
    let vals = ef
        .values
        .iter()
        .take(res.levels.len())
        .map(|row| {
            let integrand: Vec<T> = row.iter().zip(&density).map(|(&u, &d)| u * d).collect();
            let (v, e) = simpson_with_error(&integrand, h);
            err = err.max(e);
            v
        })
        .collect();
    (vals, err)
}

/// Geometric t-grid from `tmin` to `tmax` inclusive with `per_decade` points per decade.
pub fn geometric_grid(tmin: f64, tmax: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(tmin > 0.0 && tmax > tmin && per_decade > 0) {
        return Err(Error::InvalidArgument(format!(
            "t-grid needs 0 < tmin < tmax and a positive density (got {tmin}, {tmax}, {per_decade})"
        )));
    }
    let decades = (tmax / tmin).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    Ok((0..=n)
        .map(|i| if i == n { tmax } else { tmin * (tmax / tmin).powf(i as f64 / n as f64) })
        .collect())
}

/// CSV with header `t,value,tail_bound,kind`.
pub fn heat_csv<T: Real>(values: &[HeatValue<T>], kind: SeriesKind) -> String {
    let mut out = String::from(HEAT_CSV_HEADER);
    out.push('\n');
    for v in values {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_real(v.t.to_f64_lossy()),
            format_real(v.value.to_f64_lossy()),
            format_real(v.tail_bound.to_f64_lossy()),
            kind.as_str()
        ));
    }
    out
}

/// Series for `β(1, e^f, ·)(t)` on the base from the `μ = 0` sector.
///
/// Drift: `w_n = c_n²` with `c_n = ∫ u_n e^f dx` for `u_n` orthonormal in
/// `L²(e^f dx)`. Paper-literal: `w_n = ⟨1, ψ_n⟩⟨e^f, ψ_n⟩` with `ψ_n`
/// orthonormal in `L²(dx)`.
pub fn weighted_content_series<T: Real>(
    base: Interval,
    f: &ScalarExpr,
    cutoff: T,
    convention: Convention,
    opts: &PruferOptions<T>,
) -> Result<HeatSeries<T>> {
    let op = sector_operator(base, f, 1, T::zero(), convention);
    let sol = solve_sector(&op, f, SpectrumRequest::Cutoff(cutoff), true, opts)?;
    let (a, b) = (base.a, base.b);
    let ef_integral = T::lit(adaptive_integrate(|x: f64| f.eval1(x).exp(), a, b, 1e-14).0);
    let (terms, tail) = match convention {
        Convention::Drift => {
            let terms: Vec<(T, T)> =
                sol.eigenvalues.iter().zip(&sol.moments[0]).map(|(&l, &c)| (l, c * c)).collect();
            let captured = terms.iter().fold(T::zero(), |s, t| s + t.1);
            (terms, ContentTail::Bessel { residual_mass: residual(ef_integral, captured).to_f64_lossy() })
        }
        Convention::PaperLiteral => {
            let e2f = T::lit(adaptive_integrate(|x: f64| (2.0 * f.eval1(x)).exp(), a, b, 1e-14).0);
            let ones = &sol.moments[0];
            let dens = &sol.moments[1];
            let terms = sol
                .eigenvalues
                .iter()
                .zip(ones.iter().zip(dens))
                .map(|(&l, (&p, &q))| (l, p * q))
                .collect();
            let sa = ones.iter().fold(T::zero(), |s, &v| s + v * v);
            let sb = dens.iter().fold(T::zero(), |s, &v| s + v * v);
            (
                terms,
                ContentTail::CauchySchwarz {
                    residual_a: residual(T::lit(base.length()), sa).to_f64_lossy(),
                    residual_b: residual(e2f, sb).to_f64_lossy(),
                },
            )
        }
    };
    Ok(HeatSeries {
        kind: SeriesKind::WeightedContent,
        terms,
        cutoff: sol.cutoff,
        dim: 1,
        weyl_fit: None,
        content_tail: Some(tail),
    })
}

fn scaled(mut series: HeatSeries<f64>, factor: f64, dim: usize) -> HeatSeries<f64> {
    for term in &mut series.terms {
        term.1 *= factor;
    }
    series.content_tail = series.content_tail.map(|t| match t {
        ContentTail::Bessel { residual_mass } => ContentTail::Bessel { residual_mass: residual_mass * factor },
        ContentTail::CauchySchwarz { residual_a, residual_b } => {
            ContentTail::CauchySchwarz { residual_a: residual_a * factor, residual_b: residual_b * factor }
        }
    });
    series.dim = dim;
    series
}

/// Content series through the only sector carrying mass: closed factors and
/// fibers contribute their volume, the boundary factor its spectrum. Warped
/// products use the weighted base series under `convention`.
pub fn content_series(spec: &ManifoldSpec, cutoff: f64, convention: Convention) -> Result<HeatSeries<f64>> {
    validate_spec(spec)?;
    let dim = spec.dim();
    match spec {
        ManifoldSpec::Interval(iv) => HeatSeries::content(&interval_spectrum_below(iv.length(), cutoff), 1, iv.length()),
        ManifoldSpec::WarpedProduct { base, f, fiber } => {
            let volume = geometry_summary(fiber)?.volume;
            let series = weighted_content_series(*base, f, cutoff, convention, &PruferOptions::default())?;
            Ok(scaled(series, volume, dim))
        }
        ManifoldSpec::Product { factors } => {
            let mut boundary = factors.iter().filter(|f| f.has_boundary());
            let (Some(b), None) = (boundary.next(), boundary.next()) else {
                return Err(Error::UnsupportedGeometry("content needs exactly one factor with boundary".into()));
            };
            let closed: f64 = factors
                .iter()
                .filter(|f| !f.has_boundary())
                .map(|f| geometry_summary(f).map(|s| s.volume))
                .product::<Result<f64>>()?;
            Ok(scaled(content_series(b, cutoff, convention)?, closed, dim))
        }
        _ => Err(Error::UnsupportedGeometry("heat content of a closed manifold is its volume".into())),
    }
}

/// A cutoff at which the Bessel tail `e^{-tΛ}·mass` is below `rel · mass`.
pub fn content_cutoff_for(t: f64, rel: f64) -> f64 {
    (-rel.ln() + 5.0) / t
}

/// `β(1, e^f, ·)(t)` on the base. Multiplying by the fiber volume gives the
/// heat content of the warped product. `m` is the fiber dimension; the
/// constant-in-fiber sector does not depend on it.
pub fn weighted_heat_content_base<T: Real>(
    base: Interval,
    f: &ScalarExpr,
    m: usize,
    t: T,
    convention: Convention,
) -> Result<HeatValue<T>> {
    if m == 0 {
        return Err(Error::InvalidArgument("fiber dimension must be positive".into()));
    }
    let cutoff = T::lit(content_cutoff_for(t.to_f64_lossy(), 1e-14));
    let series = weighted_content_series(base, f, cutoff, convention, &PruferOptions::default())?;
    series.evaluate(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeOptions {
    /// Panels on the coarse grid (even); the fine grid doubles it.
    pub nx: usize,
    /// Time steps on the coarse grid; the fine grid doubles it.
    pub steps: usize,
    /// Backward-Euler half steps before Crank–Nicolson.
    pub startup_half_steps: usize,
}

impl Default for PdeOptions {
    fn default() -> Self {
        PdeOptions { nx: 512, steps: 512, startup_half_steps: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeContent<T> {
    pub coarse: T,
    pub fine: T,
    pub extrapolated: T,
    pub error_estimate: T,
}

/// `V · ∫ u(x, t) e^f dx` for `u_t = e^{-f}(e^f u')'`, `u(a) = u(b) = 0`,
/// `u(·, 0) = 1`, on two grids with Richardson extrapolation.
pub fn pde_heat_content_oracle<T: Real>(
    base: Interval,
    f: &ScalarExpr,
    fiber_volume: T,
    t: T,
    opts: &PdeOptions,
) -> Result<PdeContent<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument(format!("time {t} must be positive")));
    }
    if opts.nx < 4 || opts.nx % 2 != 0 || opts.steps == 0 {
        return Err(Error::InvalidArgument("PDE grid needs an even nx >= 4 and steps >= 1".into()));
    }
    let (coarse, fine) = rayon::join(
        || crank_nicolson_content(base, f, t, opts.nx, opts.steps, opts.startup_half_steps),
        || crank_nicolson_content(base, f, t, 2 * opts.nx, 2 * opts.steps, opts.startup_half_steps),
    );
    let (coarse, fine) = (coarse? * fiber_volume, fine? * fiber_volume);
    let extrapolated = (T::lit(4.0) * fine - coarse) / T::lit(3.0);
    Ok(PdeContent { coarse, fine, extrapolated, error_estimate: (fine - extrapolated).abs() })
}

fn crank_nicolson_content<T: Real>(
    base: Interval,
    f: &ScalarExpr,
    t: T,
    nx: usize,
    steps: usize,
    startup: usize,
) -> Result<T> {
    let a = T::lit(base.a);
    let h = T::lit(base.length()) / T::from_usize_lossy(nx);
    let node = |i: usize| a + h * T::from_usize_lossy(i);
    let fvals: Vec<T> = (0..=nx).map(|i| f.eval1(node(i))).collect();
    let h2 = h * h;
    // symmetrized operator acting on v = e^{f/2} u at interior nodes
    let mut diag = Vec::with_capacity(nx - 1);
    let mut off = Vec::with_capacity(nx - 2);
    for i in 1..nx {
        let left = f.eval1(node(i) - T::lit(0.5) * h).exp();
        let right = f.eval1(node(i) + T::lit(0.5) * h).exp();
        diag.push((left + right) / (h2 * fvals[i].exp()));
        if i + 1 < nx {
            off.push(-right / (h2 * (T::lit(0.5) * (fvals[i] + fvals[i + 1])).exp()));
        }
    }
    let op = SymTridiagonal { diag, off };
    let half: Vec<T> = (1..nx).map(|i| (T::lit(0.5) * fvals[i]).exp()).collect();
    let mut v: Vec<T> = half.clone();
    let content = |v: &[T]| {
        let mut samples = Vec::with_capacity(nx + 1);
        samples.push(T::zero());
        samples.extend(v.iter().zip(&half).map(|(&vi, &hi)| vi * hi));
        samples.push(T::zero());
        simpson(&samples, h)
    };
    let k = t / T::from_usize_lossy(steps);
    let startup = startup.min(2 * steps);
    let initial = content(&v);
    let mut last = initial;
    let mut elapsed = T::zero();
    for _ in 0..startup {
        v = op.solve_shifted(T::lit(0.5) * k, T::one(), &v);
        elapsed += T::lit(0.5) * k;
    }
    let full_steps = steps - startup / 2 - startup % 2;
    let cn_rhs = |v: &[T]| -> Vec<T> {
        let av = op.mul_vec(v);
        v.iter().zip(&av).map(|(&x, &y)| x - T::lit(0.5) * k * y).collect()
    };
    for _ in 0..full_steps {
        let rhs = cn_rhs(&v);
        v = op.solve_shifted(T::lit(0.5) * k, T::one(), &rhs);
        elapsed += k;
        let now = content(&v);
        if !now.is_finite() || now > last + T::lit(1e-10) * initial {
            return Err(Error::StepSizeUnstable(format!(
                "content rose from {last} to {now} at t = {elapsed}"
            )));
        }
        last = now;
    }
    // an odd startup count leaves half a step
    if startup % 2 == 1 {
        v = op.solve_shifted(T::lit(0.5) * k, T::one(), &v);
    }
    Ok(content(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::bump;
    use crate::spectral::{circle_spectrum, interval_spectrum};
    use std::f64::consts::PI;

    #[test]
    fn content_series_factors_through_the_boundary_factor() {
        let cyl = ManifoldSpec::product(vec![ManifoldSpec::interval(0.0, PI), ManifoldSpec::Circle { radius: 2.0 }]);
        let s = content_series(&cyl, 200.0, Convention::Drift).unwrap();
        let i = content_series(&ManifoldSpec::interval(0.0, PI), 200.0, Convention::Drift).unwrap();
        let (a, b) = (s.evaluate(0.5).unwrap().value, i.evaluate(0.5).unwrap().value);
        assert!((a - 4.0 * PI * b).abs() < 1e-13 * a);
        assert!(content_series(&ManifoldSpec::Circle { radius: 1.0 }, 10.0, Convention::Drift).is_err());
    }

    #[test]
    fn circle_traces() {
        let c1 = HeatSeries::trace(&circle_spectrum(1.0, 400.0), 1);
        let c2 = HeatSeries::trace(&circle_spectrum(2.0, 400.0), 1);
        let t1 = heat_trace(&c1, 4.0f64).unwrap();
        let t2 = heat_trace(&c2, 4.0f64).unwrap();
        assert!((t1.value - 1.036_631_502_847_818).abs() < 1e-13);
        assert!((t2.value - 1.772_637_204_826_652).abs() < 1e-13);
        assert!(t1.tail_bound < 1e-12 * t1.value);
    }

    #[test]
    fn trace_tail_bounds_the_truncation() {
        let full = HeatSeries::trace(&circle_spectrum(1.0, 1e4), 1);
        let short = HeatSeries::trace(&circle_spectrum(1.0, 50.0), 1);
        for t in [0.02f64, 0.05, 0.1, 0.3] {
            let exact = full.evaluate_with(t, None).unwrap().value;
            let v = short.evaluate_with(t, None).unwrap();
            assert!(exact - v.value <= v.tail_bound, "t={t}: missing {} > bound {}", exact - v.value, v.tail_bound);
            assert!(v.tail_bound < 1e3 * (exact - v.value).max(1e-300));
        }
        assert!(matches!(short.evaluate(0.01), Err(Error::TailDominates { .. })));
    }

    #[test]
    fn incomplete_gamma_values() {
        assert!((upper_incomplete_gamma_half_integer(1.0, 2.0) - (-2.0f64).exp()).abs() < 1e-15);
        // Γ(3/2, 1) = 0.5·√π·erfc(1) + e^{-1}
        let want = 0.5 * PI.sqrt() * libm::erfc(1.0) + (-1.0f64).exp();
        assert!((upper_incomplete_gamma_half_integer(1.5, 1.0) - want).abs() < 1e-15);
        // Γ(3, 0) = 2
        assert!((upper_incomplete_gamma_half_integer(3.0, 0.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn interval_content_at_one() {
        let s = HeatSeries::content(&interval_spectrum_below(PI, 200.0), 1, PI).unwrap();
        let v = heat_content(&s, 1.0f64).unwrap();
        assert!((v.value - 0.936_832_222_222_248).abs() < 1e-13, "{}", v.value);
        // closed-form series (8/π) Σ e^{-(2k+1)² t}/(2k+1)²
        let direct: f64 = (0..50).map(|k| {
            let n = (2 * k + 1) as f64;
            8.0 / PI * (-n * n).exp() / (n * n)
        }).sum();
        assert!((v.value - direct).abs() < 1e-14);
    }

    #[test]
    fn mass_from_samples_matches_closed_form() {
        let mut res = interval_spectrum(1.0f64, 8);
        let closed = res.mass_coeffs.take().unwrap();
        let (m, err) = mass_coefficients(&res, &ManifoldSpec::interval(0.0, 1.0)).unwrap();
        for (x, y) in m.iter().zip(&closed) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(err < 1e-9);
        let circ = circle_spectrum(1.0, 5.0);
        let (m, _) = mass_coefficients(
            &SpectralResolution { mass_coeffs: None, ..circ },
            &ManifoldSpec::circle(1.0),
        )
        .unwrap();
        assert!((m[0] - (2.0 * PI).sqrt()).abs() < 1e-15 && m[1] == 0.0);
    }

    #[test]
    fn grid_is_geometric_and_inclusive() {
        let g = geometric_grid(1e-3, 1e-1, 40).unwrap();
        assert_eq!(g.len(), 81);
        assert_eq!(g[0], 1e-3);
        assert_eq!(*g.last().unwrap(), 1e-1);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
        assert!(geometric_grid(1.0, 0.5, 40).is_err());
    }

    #[test]
    fn weighted_content_flat_and_constant() {
        let base = Interval::new(0.0, PI);
        let flat = weighted_heat_content_base(base, &ScalarExpr::zero(), 1, 0.5f64, Convention::Drift).unwrap();
        let iv = HeatSeries::content(&interval_spectrum_below(PI, 400.0), 1, PI).unwrap();
        let want = iv.evaluate(0.5).unwrap().value;
        assert!((flat.value - want).abs() < 1e-11);
        let c = 0.7f64;
        for conv in [Convention::Drift, Convention::PaperLiteral] {
            let v = weighted_heat_content_base(base, &ScalarExpr::constant(c), 2, 0.5, conv).unwrap();
            assert!((v.value - c.exp() * want).abs() < 1e-10 * v.value);
        }
    }

    #[test]
    fn pde_oracle_matches_interval_series() {
        let base = Interval::new(0.0, PI);
        let r = pde_heat_content_oracle(base, &ScalarExpr::zero(), 1.0f64, 1.0, &PdeOptions::default()).unwrap();
        assert!((r.extrapolated - 0.936_832_222_222_248).abs() < 3.0 * r.error_estimate.max(1e-9));
    }

    #[test]
    fn pde_oracle_matches_weighted_content_for_bump() {
        let base = Interval::new(0.0, PI);
        let f = bump(0.3, PI);
        for t in [0.1f64, 0.5, 1.0] {
            let spectral = weighted_heat_content_base(base, &f, 1, t, Convention::Drift).unwrap().value;
            let pde = pde_heat_content_oracle(base, &f, 1.0f64, t, &PdeOptions::default()).unwrap();
            assert!(
                (spectral - pde.extrapolated).abs() <= 3.0 * pde.error_estimate,
                "t={t}: {spectral} vs {} ± {}",
                pde.extrapolated,
                pde.error_estimate
            );
        }
    }

    #[test]
    fn pde_oracle_limits() {
        let base = Interval::new(0.0, 1.0);
        let f = bump(0.5, 1.0);
        let vol = adaptive_integrate(|x: f64| f.eval1(x).exp(), 0.0, 1.0, 1e-14).0;
        let early = pde_heat_content_oracle(base, &f, 2.0f64, 1e-6, &PdeOptions::default()).unwrap();
        assert!((early.extrapolated - 2.0 * vol).abs() < 1e-2);
        let late = pde_heat_content_oracle(base, &f, 1.0f64, 5.0, &PdeOptions::default()).unwrap();
        assert!(late.extrapolated.abs() < 1e-9);
    }
}
