use super::{with_slack, Certificate, EigenfunctionSamples, Level, SpectralResolution, EIGENFUNCTION_GRID};
use crate::expr::ScalarExpr;
use crate::scalar::Real;

fn interval_mass<T: Real>(length: T, k: usize) -> T {
    if k % 2 == 1 {
        T::lit(2.0) * (T::lit(2.0) * length).sqrt() / (T::from_usize_lossy(k) * T::PI())
    } else {
        T::zero()
    }
}

/// First `count` Dirichlet eigenvalues `(kπ/L)²` of `[0, L]`, with the closed-form
/// eigenfunctions `√(2/L) sin(kπx/L)` sampled on the standard grid.
pub fn interval_spectrum<T: Real>(length: T, count: usize) -> SpectralResolution<T> {
    assert!(length > T::zero(), "interval length must be positive");
    let levels: Vec<Level<T>> = (1..=count)
        .map(|k| Level {
            value: (T::from_usize_lossy(k) * (T::PI() / length)).powi(2),
            multiplicity: 1,
            sectors: Vec::new(),
        })
        .collect();
    let mass = (1..=count).map(|k| interval_mass(length, k)).collect();
    let n = EIGENFUNCTION_GRID;
    let h = length / T::from_usize_lossy(n - 1);
    let norm = (T::lit(2.0) / length).sqrt();
    let values = (1..=count)
        .map(|k| {
            let w = T::from_usize_lossy(k) * (T::PI() / length);
            (0..n).map(|i| norm * (w * h * T::from_usize_lossy(i)).sin()).collect()
        })
        .collect();
    let cutoff = levels.last().map_or(T::zero(), |l: &Level<T>| l.value);
    SpectralResolution {
        levels,
        cutoff,
        certificate: Certificate::ClosedForm,
        mass_coeffs: Some(mass),
        eigenfunctions: Some(EigenfunctionSamples {
            a: T::zero(),
            b: length,
            values,
            density: ScalarExpr::one(),
        }),
    }
}

/// All Dirichlet eigenvalues of `[0, L]` not exceeding `cutoff`, with mass coefficients.
pub fn interval_spectrum_below<T: Real>(length: T, cutoff: T) -> SpectralResolution<T> {
    let mut levels = Vec::new();
    let mut mass = Vec::new();
    let mut k = 1;
    let limit = with_slack(cutoff);
    loop {
        let v = (T::from_usize_lossy(k) * (T::PI() / length)).powi(2);
        if v > limit {
            break;
        }
        levels.push(Level { value: v, multiplicity: 1, sectors: Vec::new() });
        mass.push(interval_mass(length, k));
        k += 1;
    }
    SpectralResolution {
        levels,
        cutoff,
        certificate: Certificate::ClosedForm,
        mass_coeffs: Some(mass),
        eigenfunctions: None,
    }
}

/// Spectrum of the circle of radius `r`: 0 once, then `k²/r²` twice for `k >= 1`.
pub fn circle_spectrum<T: Real>(radius: T, cutoff: T) -> SpectralResolution<T> {
    assert!(radius > T::zero(), "circle radius must be positive");
    let mut levels = vec![Level { value: T::zero(), multiplicity: 1, sectors: Vec::new() }];
    let mut k = 1;
    let limit = with_slack(cutoff);
    loop {
        let v = (T::from_usize_lossy(k) / radius).powi(2);
        if v > limit {
            break;
        }
        levels.push(Level { value: v, multiplicity: 2, sectors: Vec::new() });
        k += 1;
    }
    let mut mass = vec![T::zero(); levels.len()];
    mass[0] = (T::lit(2.0) * T::PI() * radius).sqrt();
    SpectralResolution {
        levels,
        cutoff,
        certificate: Certificate::ClosedForm,
        mass_coeffs: Some(mass),
        eigenfunctions: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;
    use std::f64::consts::PI;

    #[test]
    fn interval_closed_forms() {
        let r = interval_spectrum(PI, 3);
        for (got, want) in r.values().iter().zip([1.0, 4.0, 9.0]) {
            assert!((got - want).abs() < 1e-13);
        }
        assert!(interval_spectrum::<f64>(PI, 0).levels.is_empty());
        let unit = interval_spectrum(1.0, 2);
        assert!((unit.values()[0] - PI * PI).abs() < 1e-12);
        assert!((unit.values()[1] - 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn interval_mass_matches_worked_example() {
        let r = interval_spectrum(PI, 6);
        let m = r.mass_coeffs.as_ref().unwrap();
        for (k, &s) in m.iter().enumerate() {
            let n = k + 1;
            let want = if n % 2 == 1 { 2.0 * (2.0 / PI).sqrt() / n as f64 } else { 0.0 };
            assert!((s - want).abs() < 1e-14);
        }
        // samples are L²-normalized and integrate to the mass coefficient
        let ef = r.eigenfunctions.as_ref().unwrap();
        let h = ef.spacing();
        for (k, row) in ef.values.iter().enumerate() {
            let sq: Vec<f64> = row.iter().map(|v| v * v).collect();
            assert!((simpson(&sq, h) - 1.0).abs() < 1e-9);
            assert!((simpson(row, h) - m[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn circle_multiplicities() {
        let r = circle_spectrum(1.0, 5.0);
        assert_eq!(r.values(), vec![0.0, 1.0, 4.0]);
        assert_eq!(r.multiplicities(), vec![1, 2, 2]);
        let r2 = circle_spectrum(2.0, 1.1);
        assert_eq!(r2.values(), vec![0.0, 0.25, 1.0]);
        assert_eq!(r2.multiplicities(), vec![1, 2, 2]);
        let r0 = circle_spectrum(1.0, 0.0);
        assert_eq!(r0.values(), vec![0.0]);
    }
}
