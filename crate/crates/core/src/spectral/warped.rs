//! Warped products `[a, b] ×_f M` by separation of variables over fiber eigenvalues.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::prufer::{solve_schrodinger, SchrodingerProblem, SchrodingerSolution};
use super::{
    with_slack, circle_spectrum, levels_from_values, merge_levels, product_spectrum, torus_spectrum, Certificate,
    Level, PruferOptions, SectorShare, SpectralResolution, SpectrumRequest, MULTISET_REL_TOL,
};
use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::manifold::{geometry_summary, validate_spec, Interval, ManifoldSpec};
use crate::scalar::Real;

/// Which one-dimensional operator represents a fiber sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `-e^{-f}(e^f u')' + μ e^{-2f/m} u`, conjugated by `e^{f/2}` to a
    /// Schrödinger operator with `q = f''/2 + f'²/4 + μ e^{-2f/m}`.
    #[default]
    Drift,
    /// `-u'' + μ e^{-2f/m} u`.
    PaperLiteral,
}

impl Convention {
    pub fn as_str(&self) -> &'static str {
        match self {
            Convention::Drift => "drift",
            Convention::PaperLiteral => "paper_literal",
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drift" => Ok(Convention::Drift),
            "paper_literal" => Ok(Convention::PaperLiteral),
            other => Err(Error::InvalidArgument(format!(
                "unknown convention `{other}` (expected drift or paper_literal)"
            ))),
        }
    }
}

/// One fiber sector as a Dirichlet Schrödinger problem on the base.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorOperator<T> {
    pub base: Interval,
    pub q: ScalarExpr,
    /// Density `e^f` of the geometric inner product on the base.
    pub weight: ScalarExpr,
    pub convention: Convention,
    pub mu: T,
}

/// `e^{-2f/m}`.
fn fiber_factor(f: &ScalarExpr, m: usize) -> ScalarExpr {
    f.clone().scale(-2.0 / m as f64).exp()
}

pub fn sector_operator<T: Real>(
    base: Interval,
    f: &ScalarExpr,
    m: usize,
    mu: T,
    convention: Convention,
) -> SectorOperator<T> {
    assert!(m > 0, "fiber dimension must be positive");
    let coupling = fiber_factor(f, m).scale(mu.to_f64_lossy());
    let q = match convention {
        Convention::Drift => {
            let d1 = f.derivative(0);
            let d2 = d1.derivative(0);
            ScalarExpr::sum([d2.scale(0.5), d1.powi(2).scale(0.25), coupling])
        }
        Convention::PaperLiteral => coupling,
    };
    SectorOperator { base, q, weight: f.clone().exp(), convention, mu }
}

impl<T: Real> SectorOperator<T> {
    pub fn problem(&self) -> SchrodingerProblem<T> {
        SchrodingerProblem::new(self.q.clone(), T::lit(self.base.a), T::lit(self.base.b))
    }
}

/// A certified lower bound for `min_x e^{-2f(x)/m}` on the base: the sampled
/// minimum reduced by the largest sampled slope times the sample spacing.
pub fn sector_potential_lower_bound<T: Real>(base: Interval, f: &ScalarExpr, m: usize) -> T {
    let g = fiber_factor(f, m);
    let dg = g.derivative(0);
    let n = 4096;
    let h = base.length() / n as f64;
    let mut min = f64::INFINITY;
    let mut slope = 0.0f64;
    for i in 0..=n {
        let x = base.a + h * i as f64;
        min = min.min(g.eval1(x));
        slope = slope.max(dg.eval1(x).abs());
    }
    T::lit((min - 2.0 * slope * h).max(0.0))
}

/// Spectrum of a closed manifold below `cutoff`.
pub fn fiber_spectrum<T: Real>(spec: &ManifoldSpec, cutoff: T) -> Result<SpectralResolution<T>> {
    validate_spec(spec)?;
    match spec {
        ManifoldSpec::Circle { radius } => Ok(circle_spectrum(T::lit(*radius), cutoff)),
        ManifoldSpec::FlatTorus { gram } => torus_spectrum(gram, cutoff),
        ManifoldSpec::AbstractFiber { volume, spectrum, .. } => {
            let vals: Vec<T> = spectrum.iter().map(|&v| T::lit(v)).filter(|&v| v <= with_slack(cutoff)).collect();
            let levels = levels_from_values(&vals, T::lit(MULTISET_REL_TOL));
            // a lone zero is the complete spectrum of a point-like factor
            let top = if spectrum.len() == 1 { f64::INFINITY } else { spectrum.last().copied().unwrap_or(0.0) };
            let mut mass = vec![T::zero(); levels.len()];
            if let Some(m) = mass.first_mut() {
                *m = T::lit(volume.sqrt());
            }
            Ok(SpectralResolution {
                levels,
                cutoff: cutoff.min(T::lit(top)),
                certificate: Certificate::ExplicitList,
                mass_coeffs: Some(mass),
                eigenfunctions: None,
            })
        }
        ManifoldSpec::Product { factors } => {
            let parts = factors
                .iter()
                .map(|f| fiber_spectrum(f, cutoff))
                .collect::<Result<Vec<_>>>()?;
            product_spectrum(&parts, cutoff)
        }
        ManifoldSpec::Interval(_) | ManifoldSpec::WarpedProduct { .. } => Err(Error::FiberHasBoundary),
    }
}

/// Solves one sector below `cutoff`. Moments: drift → `∫ w e^{f/2}`;
/// paper-literal → `∫ w` and `∫ w e^f`.
pub(crate) fn solve_sector<T: Real>(
    op: &SectorOperator<T>,
    f: &ScalarExpr,
    request: SpectrumRequest<T>,
    moments: bool,
    opts: &PruferOptions<T>,
) -> Result<SchrodingerSolution<T>> {
    let mut problem = op.problem();
    if moments {
        problem.moment_weights = match op.convention {
            Convention::Drift => vec![f.clone().scale(0.5).exp()],
            Convention::PaperLiteral => vec![ScalarExpr::one(), f.clone().exp()],
        };
    }
    solve_schrodinger(&problem, request, opts)
}

/// Union of sector spectra for a warped product with the given fiber resolution.
pub fn warped_union<T: Real>(
    base: Interval,
    f: &ScalarExpr,
    m: usize,
    fiber_volume: T,
    fiber: &SpectralResolution<T>,
    cutoff: T,
    convention: Convention,
    opts: &PruferOptions<T>,
) -> Result<SpectralResolution<T>> {
    let ground_op = sector_operator(base, f, m, T::zero(), convention);
    let ground = solve_sector(&ground_op, f, SpectrumRequest::Cutoff(cutoff), convention == Convention::Drift, opts)?;
    let base_lower = match ground.eigenvalues.first() {
        Some(&v) => v,
        None => solve_sector(&ground_op, f, SpectrumRequest::Count(1), false, opts)?.eigenvalues[0],
    };
    let emin = sector_potential_lower_bound::<T>(base, f, m);
    let required = if emin > T::zero() {
        (cutoff - base_lower).max(T::zero()) / emin
    } else {
        T::infinity()
    };
    if fiber.cutoff < required {
        return Err(Error::FiberSpectrumTooShort {
            available: fiber.cutoff.to_f64_lossy(),
            required: required.to_f64_lossy(),
        });
    }
    let used: Vec<&Level<T>> = fiber.levels.iter().take_while(|l| l.value <= with_slack(required)).collect();
    let skipped_from_mu = fiber.levels.get(used.len()).map(|l| l.value.to_f64_lossy());

    let sectors: Vec<Result<Vec<Level<T>>>> = used
        .par_iter()
        .map(|lvl| {
            let values = if lvl.value == T::zero() {
                ground.eigenvalues.clone()
            } else {
                let op = sector_operator(base, f, m, lvl.value, convention);
                solve_sector(&op, f, SpectrumRequest::Cutoff(cutoff), false, opts)?.eigenvalues
            };
            Ok(values
                .into_iter()
                .map(|v| Level {
                    value: v,
                    multiplicity: lvl.multiplicity,
                    sectors: vec![SectorShare { mu: lvl.value, multiplicity: lvl.multiplicity }],
                })
                .collect())
        })
        .collect();
    let mut all: Vec<(Level<T>, Option<T>)> = Vec::new();
    for (s, lvl) in sectors.into_iter().zip(&used) {
        let s = s?;
        let ground_sector = lvl.value == T::zero();
        for (k, level) in s.into_iter().enumerate() {
            let mass = if ground_sector && convention == Convention::Drift {
                Some(fiber_volume.sqrt() * ground.moments[0][k])
            } else {
                None
            };
            all.push((level, mass));
        }
    }
    all.sort_by(|x, y| x.0.value.partial_cmp(&y.0.value).unwrap());
    let rel = T::lit(MULTISET_REL_TOL);
    let masses: Option<Vec<T>> = (convention == Convention::Drift).then(|| {
        let mut out: Vec<(T, T, usize)> = Vec::new();
        for (level, mass) in &all {
            let m2 = mass.map_or(T::zero(), |v| v);
            match out.last_mut() {
                Some(last) if super::close(last.0, level.value, rel) => {
                    last.1 = (last.1 * last.1 + m2 * m2).sqrt();
                    last.2 += 1;
                }
                _ => out.push((level.value, m2, 1)),
            }
        }
        out.into_iter().map(|(_, m, _)| m).collect()
    });
    let levels = merge_levels(all.into_iter().map(|(l, _)| l).collect(), rel);
    Ok(SpectralResolution {
        levels,
        cutoff,
        certificate: Certificate::SectorUnion {
            sectors: used.len(),
            skipped_from_mu,
            base_lower_bound: base_lower.to_f64_lossy(),
        },
        mass_coeffs: masses,
        eigenfunctions: None,
    })
}

/// Spectrum of a `WarpedProduct` spec below `cutoff` under `convention`.
pub fn warped_product_spectrum<T: Real>(
    spec: &ManifoldSpec,
    cutoff: T,
    convention: Convention,
    opts: &PruferOptions<T>,
) -> Result<SpectralResolution<T>> {
    validate_spec(spec)?;
    let ManifoldSpec::WarpedProduct { base, f, fiber } = spec else {
        return Err(Error::InvalidArgument("expected a warped product".into()));
    };
    let m = fiber.dim();
    let volume = T::lit(geometry_summary(fiber)?.volume);
    let emin = sector_potential_lower_bound::<T>(*base, f, m);
    // the free Dirichlet ground state bounds every sector from below up to the potential minimum
    let fiber_cutoff = if emin > T::zero() {
        let floor = lowest_base_bound(*base, f, convention);
        ((cutoff - floor).max(T::zero()) / emin) * T::lit(1.0 + 1e-9) + T::lit(1e-9)
    } else {
        cutoff
    };
    let fiber_res = fiber_spectrum(fiber, fiber_cutoff)?;
    warped_union(*base, f, m, volume, &fiber_res, cutoff, convention, opts)
}

/// `(π/L)² + min q₀`, a lower bound for the ground sector's first eigenvalue.
fn lowest_base_bound<T: Real>(base: Interval, f: &ScalarExpr, convention: Convention) -> T {
    let q0 = sector_operator::<T>(base, f, 1, T::zero(), convention).q;
    let n = 4096;
    let h = base.length() / n as f64;
    let dq = q0.derivative(0);
    let mut min = f64::INFINITY;
    let mut slope = 0.0f64;
    for i in 0..=n {
        let x = base.a + h * i as f64;
        min = min.min(q0.eval1(x));
        slope = slope.max(dq.eval1(x).abs());
    }
    T::lit((std::f64::consts::PI / base.length()).powi(2) + min - 2.0 * slope * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::bump;
    use std::f64::consts::PI;

    fn opts() -> PruferOptions<f64> {
        PruferOptions::default()
    }

    #[test]
    fn sector_potentials() {
        let base = Interval::new(0.0, 1.0);
        for c in [Convention::Drift, Convention::PaperLiteral] {
            let op = sector_operator(base, &ScalarExpr::zero(), 1, 4.0, c);
            assert!((op.q.eval1(0.3f64) - 4.0).abs() < 1e-15);
        }
        let drift = sector_operator(base, &ScalarExpr::x(), 1, 0.0, Convention::Drift);
        for x in [0.0, 0.4, 1.0] {
            assert!((drift.q.eval1::<f64>(x) - 0.25).abs() < 1e-15);
        }
        let lit = sector_operator(base, &ScalarExpr::x(), 1, 0.0, Convention::PaperLiteral);
        assert_eq!(lit.q.eval1(0.7f64), 0.0);
    }

    #[test]
    fn flat_warped_product_is_the_sumset() {
        let spec = ManifoldSpec::warped(Interval::new(0.0, PI), ScalarExpr::zero(), ManifoldSpec::circle(1.0));
        let r = warped_product_spectrum(&spec, 5.0, Convention::Drift, &opts()).unwrap();
        assert_eq!(r.multiplicities(), vec![1, 2, 1, 4]);
        for (got, want) in r.values().iter().zip([1.0, 2.0, 4.0, 5.0]) {
            assert!((got - want).abs() < 1e-10 * want);
        }
        // brute force over n >= 1, k in Z
        let mut brute = 0;
        for n in 1..=3i32 {
            for k in -3i32..=3 {
                if n * n + k * k <= 5 {
                    brute += 1;
                }
            }
        }
        assert_eq!(r.count(), brute);
    }

    #[test]
    fn constant_warp_shifts_each_sector() {
        let c = 0.4;
        let base = Interval::new(0.0, PI);
        let f = ScalarExpr::constant(c);
        for conv in [Convention::Drift, Convention::PaperLiteral] {
            let op = sector_operator(base, &f, 2, 3.0, conv);
            let s = solve_sector(&op, &f, SpectrumRequest::Count(4), false, &opts()).unwrap();
            for (k, v) in s.eigenvalues.iter().enumerate() {
                let want = ((k + 1) * (k + 1)) as f64 + 3.0 * (-c).exp();
                assert!((v - want).abs() < 1e-10 * want);
            }
        }
    }

    #[test]
    fn sectors_are_monotone_in_mu() {
        let base = Interval::new(0.0, PI);
        let f = bump(0.3, PI);
        let mut prev: Option<Vec<f64>> = None;
        for mu in [0.0, 1.0, 4.0, 9.0] {
            let op = sector_operator(base, &f, 1, mu, Convention::Drift);
            let s = solve_sector(&op, &f, SpectrumRequest::Count(5), false, &opts()).unwrap();
            if let Some(p) = &prev {
                assert!(p.iter().zip(&s.eigenvalues).all(|(a, b)| a <= b));
            }
            prev = Some(s.eigenvalues);
        }
    }

    #[test]
    fn fiber_swap_with_equal_spectrum_gives_equal_output() {
        let base = Interval::new(0.0, PI);
        let f = bump(0.3, PI);
        let a = ManifoldSpec::warped(base, f.clone(), ManifoldSpec::circle(1.0));
        let spectrum: Vec<f64> = std::iter::once(0.0)
            .chain((1..=10).flat_map(|k| [(k * k) as f64; 2]))
            .collect();
        let b = ManifoldSpec::warped(
            base,
            f,
            ManifoldSpec::AbstractFiber { dim: 1, volume: 2.0 * PI, spectrum },
        );
        let ra = warped_product_spectrum(&a, 20.0, Convention::Drift, &opts()).unwrap();
        let rb = warped_product_spectrum(&b, 20.0, Convention::Drift, &opts()).unwrap();
        assert_eq!(ra.levels, rb.levels);
        assert!(ra.is_sorted_nonnegative());
    }

    #[test]
    fn short_abstract_fiber_is_rejected() {
        let spec = ManifoldSpec::warped(
            Interval::new(0.0, PI),
            ScalarExpr::zero(),
            ManifoldSpec::AbstractFiber { dim: 1, volume: 1.0, spectrum: vec![0.0, 1.0] },
        );
        let err = warped_product_spectrum(&spec, 30.0, Convention::Drift, &opts()).unwrap_err();
        assert!(matches!(err, Error::FiberSpectrumTooShort { .. }));
    }

    #[test]
    fn ground_sector_mass_matches_interval_closed_form_when_flat() {
        let spec = ManifoldSpec::warped(Interval::new(0.0, PI), ScalarExpr::zero(), ManifoldSpec::circle(1.0));
        let r = warped_product_spectrum(&spec, 10.0, Convention::Drift, &opts()).unwrap();
        let m = r.mass_coeffs.unwrap();
        // levels 1, 2, 4, 5, 8, 9, 10; constant-fiber modes at 1, 4, 9
        for (level, s) in r.levels.iter().zip(&m) {
            let n = level.value.sqrt().round() as usize;
            let ground_odd = n % 2 == 1 && (level.value - (n * n) as f64).abs() < 1e-9;
            let want = if ground_odd { (2.0 * PI).sqrt() * 2.0 * (2.0 / PI).sqrt() / n as f64 } else { 0.0 };
            let v = level.value;
            assert!((s.abs() - want).abs() < 1e-9, "{v}: {s} vs {want}");
        }
    }
}
