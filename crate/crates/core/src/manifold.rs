//! Declarative manifold descriptions, validation, and elementary metric data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{deserialize_real, deserialize_reals, ScalarExpr};
use crate::linalg::{symmetric_eigen, Mat};
use crate::quadrature::adaptive_integrate;

/// The closed interval `[a, b]` with the standard metric `dx²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(deserialize_with = "deserialize_real")]
    pub a: f64,
    #[serde(deserialize_with = "deserialize_real")]
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Interval { a, b }
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

/// A compact Riemannian manifold the laboratory knows how to handle.
///
/// JSON form is internally tagged by `"type"`; see the README for examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ManifoldSpec {
    Interval(Interval),
    Circle {
        #[serde(deserialize_with = "deserialize_real")]
        radius: f64,
    },
    /// `R^d / L` where the rows of the Gram matrix are inner products of a lattice basis.
    FlatTorus { gram: Vec<Vec<f64>> },
    /// A closed manifold known only through its dimension, volume and spectrum.
    AbstractFiber {
        dim: usize,
        #[serde(deserialize_with = "deserialize_real")]
        volume: f64,
        #[serde(deserialize_with = "deserialize_reals")]
        spectrum: Vec<f64>,
    },
    Product { factors: Vec<ManifoldSpec> },
    /// `base ×_f fiber` with metric `dx² + e^{2f/m} g_fiber`, `m = dim(fiber)`.
    WarpedProduct {
        base: Interval,
        f: ScalarExpr,
        fiber: Box<ManifoldSpec>,
    },
}

/// Dimension, volume and boundary volume. Zero-dimensional boundaries use
/// counting measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub dim: usize,
    pub volume: f64,
    pub boundary_volume: f64,
}

impl ManifoldSpec {
    pub fn interval(a: f64, b: f64) -> Self {
        ManifoldSpec::Interval(Interval::new(a, b))
    }

    pub fn circle(radius: f64) -> Self {
        ManifoldSpec::Circle { radius }
    }

    pub fn flat_torus(gram: Vec<Vec<f64>>) -> Self {
        ManifoldSpec::FlatTorus { gram }
    }

    pub fn product(factors: Vec<ManifoldSpec>) -> Self {
        ManifoldSpec::Product { factors }
    }

    pub fn warped(base: Interval, f: ScalarExpr, fiber: ManifoldSpec) -> Self {
        ManifoldSpec::WarpedProduct { base, f, fiber: Box::new(fiber) }
    }

    pub fn has_boundary(&self) -> bool {
        match self {
            ManifoldSpec::Interval(_) | ManifoldSpec::WarpedProduct { .. } => true,
            ManifoldSpec::Circle { .. }
            | ManifoldSpec::FlatTorus { .. }
            | ManifoldSpec::AbstractFiber { .. } => false,
            ManifoldSpec::Product { factors } => factors.iter().any(|f| f.has_boundary()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ManifoldSpec::Interval(_) | ManifoldSpec::Circle { .. } => 1,
            ManifoldSpec::FlatTorus { gram } => gram.len(),
            ManifoldSpec::AbstractFiber { dim, .. } => *dim,
            ManifoldSpec::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
            ManifoldSpec::WarpedProduct { fiber, .. } => 1 + fiber.dim(),
        }
    }
}

/// Checks every structural invariant, returning the spec unchanged when valid.
pub fn validate_spec(spec: &ManifoldSpec) -> Result<&ManifoldSpec> {
    match spec {
        ManifoldSpec::Interval(iv) => validate_interval(iv)?,
        ManifoldSpec::Circle { radius } => {
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(Error::InvalidSpec(format!("circle radius {radius} must be positive")));
            }
        }
        ManifoldSpec::FlatTorus { gram } => {
            gram_matrix(gram)?;
        }
        ManifoldSpec::AbstractFiber { dim, volume, spectrum } => {
            if *dim == 0 {
                return Err(Error::InvalidSpec("abstract fiber dimension must be positive".into()));
            }
            if !(volume.is_finite() && *volume > 0.0) {
                return Err(Error::InvalidSpec(format!("fiber volume {volume} must be positive")));
            }
            if spectrum.iter().any(|v| !v.is_finite() || *v < 0.0)
                || spectrum.windows(2).any(|w| w[1] < w[0])
            {
                return Err(Error::SpectrumNotSorted);
            }
            if spectrum.first() != Some(&0.0) {
                return Err(Error::SpectrumMissingZero);
            }
        }
        ManifoldSpec::Product { factors } => {
            if factors.is_empty() {
                return Err(Error::InvalidSpec("product needs at least one factor".into()));
            }
            for f in factors {
                validate_spec(f)?;
            }
            if factors.iter().filter(|f| f.has_boundary()).count() > 1 {
                return Err(Error::InvalidSpec(
                    "at most one product factor may have boundary".into(),
                ));
            }
        }
        ManifoldSpec::WarpedProduct { base, f, fiber } => {
            validate_interval(base)?;
            validate_spec(fiber)?;
            if fiber.has_boundary() {
                return Err(Error::FiberHasBoundary);
            }
            if f.max_var().unwrap_or(0) > 0 {
                return Err(Error::InvalidSpec("warping function must depend on x only".into()));
            }
            let n = 256;
            for k in 0..=n {
                let x = base.a + base.length() * k as f64 / n as f64;
                if !f.eval1(x).is_finite() || !f.eval1(x).exp().is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "warping function is not finite at x = {x}"
                    )));
                }
            }
        }
    }
    Ok(spec)
}

fn validate_interval(iv: &Interval) -> Result<()> {
    if !(iv.a.is_finite() && iv.b.is_finite()) {
        return Err(Error::InvalidSpec("interval endpoints must be finite".into()));
    }
    if iv.a >= iv.b {
        return Err(Error::EmptyInterval { a: iv.a, b: iv.b });
    }
    Ok(())
}

/// Validated Gram matrix as a dense matrix.
pub fn gram_matrix(gram: &[Vec<f64>]) -> Result<Mat<f64>> {
    let d = gram.len();
    if d == 0 || gram.iter().any(|r| r.len() != d) {
        return Err(Error::MalformedGram("Gram matrix must be square and non-empty".into()));
    }
    if gram.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::MalformedGram("Gram matrix entries must be finite".into()));
    }
    let g = Mat::from_rows(gram);
    let scale = gram.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if g.max_asymmetry() > 1e-12 * scale {
        return Err(Error::MalformedGram("Gram matrix must be symmetric".into()));
    }
    let (eig, _) = symmetric_eigen(&g);
    if eig[0] <= 0.0 {
        return Err(Error::NonPositiveDefiniteGram { min_eigenvalue: eig[0] });
    }
    Ok(g)
}

/// Dimension, volume and boundary volume of a valid spec.
pub fn geometry_summary(spec: &ManifoldSpec) -> Result<GeometrySummary> {
    validate_spec(spec)?;
    Ok(summary_unchecked(spec))
}

fn summary_unchecked(spec: &ManifoldSpec) -> GeometrySummary {
    match spec {
        ManifoldSpec::Interval(iv) => {
            GeometrySummary { dim: 1, volume: iv.length(), boundary_volume: 2.0 }
        }
        ManifoldSpec::Circle { radius } => GeometrySummary {
            dim: 1,
            volume: 2.0 * std::f64::consts::PI * radius,
            boundary_volume: 0.0,
        },
        ManifoldSpec::FlatTorus { gram } => GeometrySummary {
            dim: gram.len(),
            volume: Mat::from_rows(gram).determinant().sqrt(),
            boundary_volume: 0.0,
        },
        ManifoldSpec::AbstractFiber { dim, volume, .. } => {
            GeometrySummary { dim: *dim, volume: *volume, boundary_volume: 0.0 }
        }
        ManifoldSpec::Product { factors } => {
            let parts: Vec<GeometrySummary> = factors.iter().map(summary_unchecked).collect();
            let volume = parts.iter().map(|p| p.volume).product();
            // at most one factor carries boundary
            let boundary_volume = (0..parts.len())
                .map(|i| {
                    parts[i].boundary_volume
                        * parts
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != i)
                            .map(|(_, p)| p.volume)
                            .product::<f64>()
                })
                .sum();
            GeometrySummary { dim: parts.iter().map(|p| p.dim).sum(), volume, boundary_volume }
        }
        ManifoldSpec::WarpedProduct { base, f, fiber } => {
            let fib = summary_unchecked(fiber);
            let (integral, _) =
                adaptive_integrate(|x: f64| f.eval1(x).exp(), base.a, base.b, 1e-13);
            GeometrySummary {
                dim: 1 + fib.dim,
                volume: fib.volume * integral,
                boundary_volume: fib.volume * (f.eval1(base.a).exp() + f.eval1(base.b).exp()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn interval_validation() {
        assert!(validate_spec(&ManifoldSpec::interval(0.0, PI)).is_ok());
        assert_eq!(
            validate_spec(&ManifoldSpec::interval(1.0, 1.0)),
            Err(Error::EmptyInterval { a: 1.0, b: 1.0 })
        );
    }

    #[test]
    fn indefinite_gram_is_rejected() {
        let err = validate_spec(&ManifoldSpec::flat_torus(vec![vec![1.0, 2.0], vec![2.0, 1.0]]))
            .unwrap_err();
        match err {
            Error::NonPositiveDefiniteGram { min_eigenvalue } => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fiber_and_spectrum_invariants() {
        let bad_fiber = ManifoldSpec::warped(
            Interval::new(0.0, 1.0),
            ScalarExpr::zero(),
            ManifoldSpec::interval(0.0, 1.0),
        );
        assert_eq!(validate_spec(&bad_fiber), Err(Error::FiberHasBoundary));
        let no_zero = ManifoldSpec::AbstractFiber { dim: 1, volume: 1.0, spectrum: vec![1.0, 2.0] };
        assert_eq!(validate_spec(&no_zero), Err(Error::SpectrumMissingZero));
        let two_boundaries = ManifoldSpec::product(vec![
            ManifoldSpec::interval(0.0, 1.0),
            ManifoldSpec::interval(0.0, 1.0),
        ]);
        assert!(matches!(validate_spec(&two_boundaries), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn summaries() {
        let iv = geometry_summary(&ManifoldSpec::interval(0.0, PI)).unwrap();
        assert_eq!((iv.dim, iv.volume, iv.boundary_volume), (1, PI, 2.0));

        let cyl = geometry_summary(&ManifoldSpec::product(vec![
            ManifoldSpec::interval(0.0, PI),
            ManifoldSpec::circle(1.0),
        ]))
        .unwrap();
        assert_eq!(cyl.dim, 2);
        assert!((cyl.volume - 2.0 * PI * PI).abs() < 1e-12);
        assert!((cyl.boundary_volume - 4.0 * PI).abs() < 1e-12);

        let flat_warp = geometry_summary(&ManifoldSpec::warped(
            Interval::new(0.0, 1.0),
            ScalarExpr::zero(),
            ManifoldSpec::circle(1.0),
        ))
        .unwrap();
        assert!((flat_warp.volume - 2.0 * PI).abs() < 1e-12);
        assert!((flat_warp.boundary_volume - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn warped_volume_uses_exp_f() {
        // ∫_0^1 e^{x} dx = e - 1
        let w = geometry_summary(&ManifoldSpec::warped(
            Interval::new(0.0, 1.0),
            ScalarExpr::x(),
            ManifoldSpec::AbstractFiber { dim: 2, volume: 3.0, spectrum: vec![0.0] },
        ))
        .unwrap();
        assert_eq!(w.dim, 3);
        assert!((w.volume - 3.0 * (1f64.exp() - 1.0)).abs() < 1e-12 * w.volume);
        assert!((w.boundary_volume - 3.0 * (1.0 + 1f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn json_schema() {
        let text = r#"{"type":"warped_product","base":{"a":0,"b":"pi"},
            "f":{"op":"mul","args":[{"const":0.5},{"op":"sin","args":[{"var":"x"}]}]},
            "fiber":{"type":"circle","radius":1}}"#;
        let spec: ManifoldSpec = serde_json::from_str(text).unwrap();
        assert!(validate_spec(&spec).is_ok());
        assert_eq!(spec.dim(), 2);
        let round: ManifoldSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(round, spec);
        let iv: ManifoldSpec = serde_json::from_str(r#"{"type":"interval","a":0,"b":"pi"}"#).unwrap();
        assert_eq!(iv, ManifoldSpec::interval(0.0, PI));
    }
}
