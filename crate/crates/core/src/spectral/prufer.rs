//! Dirichlet eigenvalues of `-w'' + q w = λ w` by modified Prüfer shooting.
//!
//! With `w = ρ sin θ`, `w' = S ρ cos θ` for a fixed scale `S > 0`:
//!
//! ```text
//! θ'      = S cos²θ + ((λ - q)/S) sin²θ
//! (ln ρ)' = (S - (λ - q)/S) sin θ cos θ
//! ```
//!
//! `θ(a) = 0`, and the n-th eigenvalue is the unique λ with `θ(b; λ) = nπ`.
//! Because `θ' = S > 0` whenever `sin θ = 0`, `⌊θ(b; Λ)/π⌋` counts the
//! eigenvalues `<= Λ`, which is the completeness certificate.

use rayon::prelude::*;

use super::{with_slack, Certificate, EigenfunctionSamples, Level, SpectralResolution, EIGENFUNCTION_GRID};
use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::ode::{integrate, Stepper, Tolerances};
use crate::quadrature::simpson;
use crate::scalar::Real;

/// `-w'' + q w = λ w` on `[a, b]` with `w(a) = w(b) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchrodingerProblem<T> {
    pub q: ScalarExpr,
    pub a: T,
    pub b: T,
    /// Up to two weights `g`; the moments `∫ g w_n dx` of the normalized
    /// eigenfunctions are returned alongside the eigenvalues.
    pub moment_weights: Vec<ScalarExpr>,
}

impl<T: Real> SchrodingerProblem<T> {
    pub fn new(q: ScalarExpr, a: T, b: T) -> Self {
        SchrodingerProblem { q, a, b, moment_weights: Vec::new() }
    }

    pub fn with_moments(mut self, weights: Vec<ScalarExpr>) -> Self {
        self.moment_weights = weights;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectrumRequest<T> {
    /// Every eigenvalue `<= Λ`.
    Cutoff(T),
    /// The lowest `n` eigenvalues.
    Count(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct PruferOptions<T> {
    pub tolerances: Tolerances<T>,
    /// Relative step size at which the Newton iteration stops.
    pub rel_tol: T,
    pub max_iterations: usize,
    /// Sample normalized eigenfunctions on a uniform grid of `grid` points.
    pub eigenfunctions: bool,
    pub grid: usize,
}

impl<T: Real> Default for PruferOptions<T> {
    fn default() -> Self {
        PruferOptions {
            tolerances: Tolerances::default(),
            rel_tol: T::lit(1e-13),
            max_iterations: 200,
            eigenfunctions: false,
            grid: EIGENFUNCTION_GRID,
        }
    }
}

impl<T: Real> PruferOptions<T> {
    pub fn with_eigenfunctions(mut self) -> Self {
        self.eigenfunctions = true;
        self
    }
}

/// Raw output of the shooting solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SchrodingerSolution<T> {
    pub eigenvalues: Vec<T>,
    /// `moments[k][n] = ∫ g_k w_n dx` for each requested weight.
    pub moments: Vec<Vec<T>>,
    /// Normalized `w_n` on the uniform grid, when requested.
    pub samples: Option<Vec<Vec<T>>>,
    /// Certified cutoff and the oscillation count below it.
    pub cutoff: T,
    pub below_cutoff: usize,
}

struct Potential<T> {
    q: ScalarExpr,
    min: T,
    max: T,
    mean: T,
}

impl<T: Real> Potential<T> {
    fn sample(q: &ScalarExpr, a: T, b: T) -> Result<Self> {
        let n = 4097;
        let h = (b - a) / T::from_usize_lossy(n - 1);
        let vals: Vec<T> = (0..n).map(|i| q.eval1(a + h * T::from_usize_lossy(i))).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("potential is not finite on the interval".into()));
        }
        let min = vals.iter().copied().fold(T::infinity(), T::min);
        let max = vals.iter().copied().fold(T::neg_infinity(), T::max);
        let mean = simpson(&vals, h) / (b - a);
        Ok(Potential { q: q.clone(), min, max, mean })
    }

    #[inline]
    fn at(&self, x: T) -> T {
        if let Some(c) = self.q.as_constant() {
            T::lit(c)
        } else {
            self.q.eval1(x)
        }
    }
}

fn scale_for<T: Real>(lambda: T, pot: &Potential<T>, length: T) -> T {
    let floor = (T::PI() / length).powi(2);
    (lambda - pot.mean).max(floor).sqrt()
}

/// Phase and its λ-derivative at `b`.
fn shoot<T: Real>(
    pot: &Potential<T>,
    a: T,
    b: T,
    lambda: T,
    s: T,
    tol: &Tolerances<T>,
) -> Option<(T, T)> {
    let mut rhs = |x: T, y: &[T; 2]| {
        let (sn, cs) = y[0].sin_cos();
        let r = (lambda - pot.at(x)) / s;
        let two_sc = T::lit(2.0) * sn * cs;
        [s * cs * cs + r * sn * sn, two_sc * (r - s) * y[1] + sn * sn / s]
    };
    let mut st = Stepper { h: T::zero(), steps: 0 };
    let y = integrate(&mut rhs, a, [T::zero(); 2], b, tol, &mut st)?;
    Some((y[0], y[1]))
}

fn count_below<T: Real>(
    pot: &Potential<T>,
    a: T,
    b: T,
    cutoff: T,
    tol: &Tolerances<T>,
) -> Result<usize> {
    let cutoff = with_slack(cutoff);
    let s = scale_for(cutoff, pot, b - a);
    let (theta, _) = shoot(pot, a, b, cutoff, s, tol).ok_or_else(|| Error::ConvergenceFailure {
        index: 0,
        detail: "phase integration failed while counting".into(),
    })?;
    Ok((theta / T::PI()).floor().to_usize().unwrap_or(0))
}

fn solve_index<T: Real>(
    pot: &Potential<T>,
    a: T,
    b: T,
    n: usize,
    opts: &PruferOptions<T>,
) -> Result<(T, T)> {
    let length = b - a;
    let target = T::from_usize_lossy(n) * T::PI();
    let free = (target / length).powi(2);
    let pad = T::lit(1e-9) * T::one().max(free.abs()) + T::lit(1e-3) * (pot.max - pot.min);
    let mut lo = free + pot.min - pad;
    let mut hi = free + pot.max + pad;
    let s = scale_for(free + pot.mean, pot, length);
    let fail = |detail: &str| Error::ConvergenceFailure { index: n, detail: detail.to_string() };
    let eval = |lambda: T| {
        shoot(pot, a, b, lambda, s, &opts.tolerances)
            .map(|(th, d)| (th - target, d))
            .ok_or_else(|| fail("phase integration failed"))
    };

    let mut widen = T::one().max(pot.max - pot.min);
    let mut tries = 0;
    while eval(lo)?.0 > T::zero() {
        lo = lo - widen;
        widen = widen + widen;
        tries += 1;
        if tries > 60 {
            return Err(fail("could not bracket from below"));
        }
    }
    widen = T::one().max(pot.max - pot.min);
    while eval(hi)?.0 < T::zero() {
        hi = hi + widen;
        widen = widen + widen;
        tries += 1;
        if tries > 120 {
            return Err(fail("could not bracket from above"));
        }
    }

    let mut lambda = (free + pot.mean).max(lo).min(hi);
    for _ in 0..opts.max_iterations {
        let (g, dg) = eval(lambda)?;
        if g == T::zero() {
            return Ok((lambda, s));
        }
        if g < T::zero() {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - g / dg;
        let next = if dg > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            T::lit(0.5) * (lo + hi)
        };
        let step = (next - lambda).abs();
        lambda = next;
        if step <= opts.rel_tol * T::one().max(lambda.abs()) || hi - lo <= opts.rel_tol * T::one().max(lambda.abs()) {
            return Ok((lambda, s));
        }
    }
    Err(fail("Newton/bisection did not converge"))
}

/// Moments, normalization and optional samples for one eigenpair.
fn eigenfunction_data<T: Real>(
    pot: &Potential<T>,
    weights: &[ScalarExpr],
    a: T,
    b: T,
    lambda: T,
    s: T,
    n: usize,
    opts: &PruferOptions<T>,
) -> Result<(Vec<T>, Option<Vec<T>>)> {
    let g0 = weights.first();
    let g1 = weights.get(1);
    let mut rhs = |x: T, y: &[T; 5]| {
        let (sn, cs) = y[0].sin_cos();
        let r = (lambda - pot.at(x)) / s;
        let amp = y[1].exp();
        let w = amp * sn;
        [
            s * cs * cs + r * sn * sn,
            (s - r) * sn * cs,
            w * w,
            g0.map_or(T::zero(), |g| g.eval1(x) * w),
            g1.map_or(T::zero(), |g| g.eval1(x) * w),
        ]
    };
    let fail = |detail: &str| Error::ConvergenceFailure { index: n, detail: detail.to_string() };
    let tol = opts.tolerances;
    let mut st = Stepper { h: T::zero(), steps: 0 };
    let mut y = [T::zero(); 5];
    let mut raw = Vec::new();
    if opts.eigenfunctions {
        let grid = opts.grid.max(3);
        let h = (b - a) / T::from_usize_lossy(grid - 1);
        raw.reserve(grid);
        raw.push(T::zero());
        for i in 1..grid {
            let x0 = a + h * T::from_usize_lossy(i - 1);
            let x1 = if i == grid - 1 { b } else { a + h * T::from_usize_lossy(i) };
            y = integrate(&mut rhs, x0, y, x1, &tol, &mut st)
                .ok_or_else(|| fail("sampling integration failed"))?;
            raw.push(y[1].exp() * y[0].sin());
        }
    } else {
        y = integrate(&mut rhs, a, y, b, &tol, &mut st)
            .ok_or_else(|| fail("moment integration failed"))?;
    }
    let norm = y[2].sqrt();
    let moments: Vec<T> = [y[3], y[4]].iter().take(weights.len()).map(|&m| m / norm).collect();
    if !opts.eigenfunctions {
        return Ok((moments, None));
    }
    let samples: Vec<T> = raw.into_iter().map(|v| v / norm).collect();
    let nodes = interior_sign_changes(&samples);
    if nodes != n - 1 {
        return Err(fail(&format!("eigenfunction has {nodes} interior zeros, expected {}", n - 1)));
    }
    Ok((moments, Some(samples)))
}

/// Sign changes between strictly nonzero interior samples.
pub(crate) fn interior_sign_changes<T: Real>(samples: &[T]) -> usize {
    if samples.len() < 3 {
        return 0;
    }
    let peak = samples.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let floor = peak * T::lit(1e-9);
    let mut last: Option<bool> = None;
    let mut changes = 0;
    for &v in &samples[1..samples.len() - 1] {
        if v.abs() <= floor {
            continue;
        }
        let positive = v > T::zero();
        if let Some(p) = last {
            if p != positive {
                changes += 1;
            }
        }
        last = Some(positive);
    }
    changes
}

/// Runs the shooting solver and returns eigenvalues, moments and optional samples.
pub fn solve_schrodinger<T: Real>(
    problem: &SchrodingerProblem<T>,
    request: SpectrumRequest<T>,
    opts: &PruferOptions<T>,
) -> Result<SchrodingerSolution<T>> {
    let (a, b) = (problem.a, problem.b);
    if !(a < b) {
        return Err(Error::EmptyInterval { a: a.to_f64_lossy(), b: b.to_f64_lossy() });
    }
    if problem.moment_weights.len() > 2 {
        return Err(Error::InvalidArgument("at most two moment weights are supported".into()));
    }
    let pot = Potential::sample(&problem.q, a, b)?;
    let count = match request {
        SpectrumRequest::Cutoff(c) => {
            if c < pot.min {
                0
            } else {
                count_below(&pot, a, b, c, &opts.tolerances)?
            }
        }
        SpectrumRequest::Count(n) => n,
    };
    let solved: Vec<Result<(T, Vec<T>, Option<Vec<T>>)>> = (1..=count)
        .into_par_iter()
        .map(|n| {
            let (lambda, s) = solve_index(&pot, a, b, n, opts)?;
            let (moments, samples) = if opts.eigenfunctions || !problem.moment_weights.is_empty() {
                eigenfunction_data(&pot, &problem.moment_weights, a, b, lambda, s, n, opts)?
            } else {
                (Vec::new(), None)
            };
            Ok((lambda, moments, samples))
        })
        .collect();
    let mut eigenvalues = Vec::with_capacity(count);
    let mut moments = vec![Vec::with_capacity(count); problem.moment_weights.len()];
    let mut samples = opts.eigenfunctions.then(|| Vec::with_capacity(count));
    for item in solved {
        let (lambda, m, s) = item?;
        eigenvalues.push(lambda);
        for (dst, v) in moments.iter_mut().zip(m) {
            dst.push(v);
        }
        if let (Some(all), Some(s)) = (samples.as_mut(), s) {
            all.push(s);
        }
    }
    if let Some(i) = eigenvalues.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::ConvergenceFailure {
            index: i + 2,
            detail: "eigenvalues are not strictly increasing".into(),
        });
    }
    let cutoff = match request {
        SpectrumRequest::Cutoff(c) => c,
        SpectrumRequest::Count(_) => eigenvalues.last().copied().unwrap_or(pot.min.min(T::zero())),
    };
    if let SpectrumRequest::Count(_) = request {
        if count > 0 {
            let certified = count_below(&pot, a, b, cutoff, &opts.tolerances)?;
            if certified != count {
                return Err(Error::ConvergenceFailure {
                    index: count,
                    detail: format!("oscillation count {certified} at the last eigenvalue"),
                });
            }
        }
    }
    Ok(SchrodingerSolution { eigenvalues, moments, samples, cutoff, below_cutoff: count })
}

/// Dirichlet spectrum of `-w'' + q w` as a [`SpectralResolution`]. Mass
/// coefficients are `∫ w_n dx`; samples (when requested) are normalized in `L²(dx)`.
pub fn schrodinger_dirichlet_spectrum<T: Real>(
    problem: &SchrodingerProblem<T>,
    request: SpectrumRequest<T>,
    opts: &PruferOptions<T>,
) -> Result<SpectralResolution<T>> {
    let with_mass = SchrodingerProblem {
        moment_weights: vec![ScalarExpr::one()],
        ..problem.clone()
    };
    let sol = solve_schrodinger(&with_mass, request, opts)?;
    let levels = sol
        .eigenvalues
        .iter()
        .map(|&v| Level { value: v, multiplicity: 1, sectors: Vec::new() })
        .collect();
    Ok(SpectralResolution {
        levels,
        cutoff: sol.cutoff,
        certificate: Certificate::OscillationCount { below_cutoff: sol.below_cutoff },
        mass_coeffs: sol.moments.into_iter().next(),
        eigenfunctions: sol.samples.map(|values| EigenfunctionSamples {
            a: problem.a,
            b: problem.b,
            values,
            density: ScalarExpr::one(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymTridiagonal;
    use std::f64::consts::PI;

    fn free(a: f64, b: f64) -> SchrodingerProblem<f64> {
        SchrodingerProblem::new(ScalarExpr::zero(), a, b)
    }

    #[test]
    fn free_interval_matches_closed_form() {
        let r = schrodinger_dirichlet_spectrum(&free(0.0, PI), SpectrumRequest::Cutoff(10.0), &PruferOptions::default())
            .unwrap();
        assert_eq!(r.count(), 3);
        for (got, want) in r.values().iter().zip([1.0, 4.0, 9.0]) {
            assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
        }
        assert_eq!(r.certificate, Certificate::OscillationCount { below_cutoff: 3 });
        let unit = schrodinger_dirichlet_spectrum(&free(0.0, 1.0), SpectrumRequest::Count(40), &PruferOptions::default())
            .unwrap();
        for (k, got) in unit.values().iter().enumerate() {
            let want = ((k + 1) as f64 * PI).powi(2);
            assert!((got - want).abs() <= 1e-10 * want, "{k}: {got} vs {want}");
        }
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let p = SchrodingerProblem::new(ScalarExpr::constant(2.5), 0.0, PI);
        let r = schrodinger_dirichlet_spectrum(&p, SpectrumRequest::Cutoff(30.0), &PruferOptions::default()).unwrap();
        assert_eq!(r.count(), 5);
        for (k, got) in r.values().iter().enumerate() {
            let want = ((k + 1) * (k + 1)) as f64 + 2.5;
            assert!((got - want).abs() <= 1e-10 * want);
        }
    }

    #[test]
    fn samples_are_normalized_with_correct_nodes_and_mass() {
        let opts = PruferOptions::default().with_eigenfunctions();
        let r = schrodinger_dirichlet_spectrum(&free(0.0, 1.0), SpectrumRequest::Count(6), &opts).unwrap();
        let ef = r.eigenfunctions.as_ref().unwrap();
        let h = ef.spacing();
        let mass = r.mass_coeffs.as_ref().unwrap();
        for (k, row) in ef.values.iter().enumerate() {
            let n = k + 1;
            let sq: Vec<f64> = row.iter().map(|v| v * v).collect();
            assert!((simpson(&sq, h) - 1.0).abs() < 1e-8);
            assert_eq!(interior_sign_changes(row), k);
            let want = if n % 2 == 1 { 2.0 * 2f64.sqrt() / (n as f64 * PI) } else { 0.0 };
            assert!((mass[k] - want).abs() < 1e-10, "{n}: {} vs {want}", mass[k]);
            assert!((simpson(row, h) - want).abs() < 1e-9);
        }
    }

    // second-order finite differences on a uniform grid, Richardson over (N, 2N)
    fn fd_oracle(q: &ScalarExpr, a: f64, b: f64, n: usize, k: usize) -> Vec<f64> {
        let build = |n: usize| {
            let h = (b - a) / n as f64;
            let diag: Vec<f64> = (1..n).map(|i| 2.0 / (h * h) + q.eval1(a + h * i as f64)).collect();
            let off = vec![-1.0 / (h * h); n - 2];
            SymTridiagonal { diag, off }.smallest_eigenvalues(k, 1e-15).unwrap()
        };
        let coarse = build(n);
        let fine = build(2 * n);
        coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
    }

    #[test]
    fn smooth_potential_matches_finite_difference_oracle() {
        let x = ScalarExpr::x();
        let q = (ScalarExpr::constant(-2.0) * x.clone() * (ScalarExpr::one() - x)).exp();
        let p = SchrodingerProblem::new(q.clone(), 0.0, 1.0);
        let r = schrodinger_dirichlet_spectrum(&p, SpectrumRequest::Count(5), &PruferOptions::default()).unwrap();
        let oracle = fd_oracle(&q, 0.0, 1.0, 4000, 5);
        for (got, want) in r.values().iter().zip(&oracle) {
            assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn f32_solver_runs() {
        let mut opts = PruferOptions::<f32>::default();
        opts.tolerances = Tolerances { rtol: 1e-6, atol: 1e-6, max_steps: 100_000 };
        opts.rel_tol = 1e-6;
        let p = SchrodingerProblem::new(ScalarExpr::zero(), 0.0f32, std::f32::consts::PI);
        let r = schrodinger_dirichlet_spectrum(&p, SpectrumRequest::Count(3), &opts).unwrap();
        for (got, want) in r.values().iter().zip([1.0f32, 4.0, 9.0]) {
            assert!((got - want).abs() < 1e-3 * want);
        }
    }
}
