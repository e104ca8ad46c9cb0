//! Riemannian products: the spectrum is the sumset of the factor spectra.

use super::{
    with_slack, close, spectrum_of, Certificate, Convention, Level, PruferOptions, SpectralResolution,
    MULTISET_REL_TOL,
};
use crate::error::{Error, Result};
use crate::manifold::ManifoldSpec;
use crate::scalar::Real;

/// Sumset of factor spectra below `cutoff`. Factor `i` must be certified up to
/// `cutoff - Σ_{j≠i} lowest_j`.
pub fn product_spectrum<T: Real>(
    factors: &[SpectralResolution<T>],
    cutoff: T,
) -> Result<SpectralResolution<T>> {
    if factors.is_empty() {
        return Err(Error::InvalidArgument("product needs at least one factor".into()));
    }
    let lowest: Vec<Option<T>> = factors.iter().map(|f| f.lowest()).collect();
    if lowest.iter().any(|l| l.is_none()) {
        // some factor has nothing below its cutoff; only fine if that is certified
        for (i, f) in factors.iter().enumerate() {
            if f.levels.is_empty() {
                let others: T = lowest
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, l)| l.unwrap_or(T::zero()))
                    .fold(T::zero(), |s, v| s + v);
                if f.cutoff < cutoff - others {
                    return Err(Error::FactorCutoffInsufficient {
                        available: f.cutoff.to_f64_lossy(),
                        required: (cutoff - others).to_f64_lossy(),
                    });
                }
            }
        }
        return Ok(SpectralResolution {
            mass_coeffs: Some(Vec::new()),
            ..SpectralResolution::empty(cutoff, sumset_certificate(factors))
        });
    }
    let total_lowest: T = lowest.iter().map(|l| l.unwrap()).fold(T::zero(), |s, v| s + v);
    for (f, l) in factors.iter().zip(&lowest) {
        let required = cutoff - (total_lowest - l.unwrap());
        if f.cutoff < required {
            return Err(Error::FactorCutoffInsufficient {
                available: f.cutoff.to_f64_lossy(),
                required: required.to_f64_lossy(),
            });
        }
    }
    let with_mass = factors.iter().all(|f| f.mass_coeffs.is_some());
    let mut acc: Vec<(Level<T>, T)> = vec![(
        Level { value: T::zero(), multiplicity: 1, sectors: Vec::new() },
        T::one(),
    )];
    for (idx, f) in factors.iter().enumerate() {
        let rest: T = lowest[idx + 1..].iter().map(|l| l.unwrap()).fold(T::zero(), |s, v| s + v);
        let mut next = Vec::new();
        for (a, ma) in &acc {
            for (k, b) in f.levels.iter().enumerate() {
                let v = a.value + b.value;
                if v + rest > with_slack(cutoff) {
                    break;
                }
                let mb = f.mass_coeffs.as_ref().map_or(T::zero(), |m| m[k]);
                next.push((
                    Level { value: v, multiplicity: a.multiplicity * b.multiplicity, sectors: Vec::new() },
                    *ma * mb,
                ));
            }
        }
        acc = next;
    }
    acc.sort_by(|x, y| x.0.value.partial_cmp(&y.0.value).unwrap());
    let rel = T::lit(MULTISET_REL_TOL);
    let mut levels: Vec<Level<T>> = Vec::new();
    let mut mass: Vec<T> = Vec::new();
    for (l, m) in acc {
        match levels.last_mut() {
            Some(last) if close(last.value, l.value, rel) => {
                last.multiplicity += l.multiplicity;
                let prev = mass.last_mut().unwrap();
                *prev = (*prev * *prev + m * m).sqrt();
            }
            _ => {
                levels.push(l);
                mass.push(m);
            }
        }
    }
    Ok(SpectralResolution {
        levels,
        cutoff,
        certificate: sumset_certificate(factors),
        mass_coeffs: with_mass.then_some(mass),
        eigenfunctions: None,
    })
}

fn sumset_certificate<T: Real>(factors: &[SpectralResolution<T>]) -> Certificate {
    Certificate::Sumset { factor_cutoffs: factors.iter().map(|f| f.cutoff.to_f64_lossy()).collect() }
}

/// Computes each factor to the cutoff it needs, then forms the sumset.
pub fn product_spectrum_of_specs<T: Real>(
    factors: &[ManifoldSpec],
    cutoff: T,
    convention: Convention,
    opts: &PruferOptions<T>,
) -> Result<SpectralResolution<T>> {
    // closed factors have lowest eigenvalue 0, so only the boundary factor lowers their cutoffs
    let boundary = factors.iter().position(|f| f.has_boundary());
    let boundary_res = match boundary {
        Some(i) => Some(spectrum_of(&factors[i], cutoff, convention, opts)?),
        None => None,
    };
    let floor = boundary_res.as_ref().and_then(|r| r.lowest()).unwrap_or(T::zero());
    let closed_cutoff = (cutoff - floor).max(T::zero());
    let mut parts = Vec::with_capacity(factors.len());
    for (i, f) in factors.iter().enumerate() {
        if Some(i) == boundary {
            parts.push(boundary_res.clone().unwrap());
        } else {
            parts.push(spectrum_of(f, closed_cutoff, convention, opts)?);
        }
    }
    product_spectrum(&parts, cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{circle_spectrum, interval_spectrum_below};
    use std::f64::consts::PI;

    #[test]
    fn interval_times_circle() {
        let r = product_spectrum(&[interval_spectrum_below(PI, 3.0), circle_spectrum(1.0, 3.0)], 3.0).unwrap();
        assert_eq!(r.values(), vec![1.0, 2.0]);
        assert_eq!(r.multiplicities(), vec![1, 2]);
        let r2 = product_spectrum(&[interval_spectrum_below(PI, 1.3), circle_spectrum(2.0, 1.3)], 1.3).unwrap();
        assert_eq!(r2.values(), vec![1.0, 1.25]);
        assert_eq!(r2.multiplicities(), vec![1, 2]);
    }

    #[test]
    fn point_fiber_is_identity() {
        let point = ManifoldSpec::AbstractFiber { dim: 1, volume: 1.0, spectrum: vec![0.0] };
        let r = product_spectrum_of_specs(
            &[ManifoldSpec::interval(0.0, PI), point],
            50.0,
            Convention::Drift,
            &PruferOptions::default(),
        )
        .unwrap();
        let base = interval_spectrum_below(PI, 50.0);
        assert_eq!(r.values(), base.values());
        assert_eq!(r.mass_coeffs, base.mass_coeffs);
    }

    #[test]
    fn cylinder_mass_is_scaled_interval_mass() {
        let spec = [ManifoldSpec::interval(0.0, PI), ManifoldSpec::circle(2.0)];
        let r = product_spectrum_of_specs(&spec, 30.0, Convention::Drift, &PruferOptions::default()).unwrap();
        let total: f64 = r.mass_coeffs.as_ref().unwrap().iter().map(|m| m * m).sum();
        let interval: f64 = interval_spectrum_below(PI, 30.0).mass_coeffs.unwrap().iter().map(|m| m * m).sum();
        assert!((total - 4.0 * PI * interval).abs() < 1e-12);
    }

    #[test]
    fn insufficient_factor_cutoff() {
        let err = product_spectrum(&[interval_spectrum_below(PI, 3.0), circle_spectrum(1.0, 1.0)], 3.0).unwrap_err();
        assert!(matches!(err, Error::FactorCutoffInsufficient { .. }));
    }
}
