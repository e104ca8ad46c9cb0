//! Dirichlet and closed-manifold spectral resolutions.
//!
//! Every routine returns a [`SpectralResolution`]: eigenvalue levels with
//! multiplicities, a cutoff below which the list is certified complete, and
//! optionally the mass coefficients `σ_n(1) = ∫ φ_n` and sampled eigenfunctions.

mod closed;
pub mod dump;
mod fd2d;
mod lattice;
mod product;
mod prufer;
mod warped;

use serde::{Deserialize, Serialize};

pub use closed::{circle_spectrum, interval_spectrum, interval_spectrum_below};
pub use fd2d::{fd2d_warped_spectrum, fd2d_warped_operator_dense, Fd2dResult, FdGrid};
pub use lattice::{
    dual_norms_exact, torus_spectrum, torus_spectrum_with_budget, ExactGram, LATTICE_BUDGET,
};
pub use product::{product_spectrum, product_spectrum_of_specs};
pub use prufer::{
    schrodinger_dirichlet_spectrum, solve_schrodinger, PruferOptions, SchrodingerProblem,
    SchrodingerSolution, SpectrumRequest,
};
pub(crate) use warped::solve_sector;
pub use warped::{
    fiber_spectrum, sector_operator, sector_potential_lower_bound, warped_product_spectrum,
    warped_union, Convention, SectorOperator,
};

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::manifold::{validate_spec, ManifoldSpec};
use crate::scalar::Real;

/// Relative tolerance for deciding that two eigenvalues coincide.
pub const MULTISET_REL_TOL: f64 = 1e-9;

/// Uniform samples per base eigenfunction.
pub const EIGENFUNCTION_GRID: usize = 2049;

/// Contribution of one fiber sector to a warped-product eigenvalue level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorShare<T> {
    pub mu: T,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level<T> {
    pub value: T,
    pub multiplicity: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sectors: Vec<SectorShare<T>>,
}

/// Why the list is complete below its cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// Eigenvalues known in closed form.
    ClosedForm,
    /// Prüfer phase at the cutoff counts exactly this many eigenvalues below it.
    OscillationCount { below_cutoff: usize },
    /// All dual-lattice points inside the norm ball were enumerated.
    LatticeNormBound { reduced_radius_sq: f64, points: usize },
    /// Sumset of factor spectra, each certified to the listed cutoff.
    Sumset { factor_cutoffs: Vec<f64> },
    /// Union over fiber sectors; sectors with `mu >= skipped_from_mu` provably
    /// contribute nothing below the cutoff.
    SectorUnion { sectors: usize, skipped_from_mu: Option<f64>, base_lower_bound: f64 },
    /// Spectrum supplied as an explicit list, complete up to its largest entry.
    ExplicitList,
}

/// Sampled base eigenfunctions on a uniform grid over `[a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenfunctionSamples<T> {
    pub a: T,
    pub b: T,
    /// One row of samples per level, normalized in `L²(density dx)`.
    pub values: Vec<Vec<T>>,
    /// Density of the measure the samples are normalized against.
    pub density: ScalarExpr,
}

impl<T: Real> EigenfunctionSamples<T> {
    pub fn grid_len(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn spacing(&self) -> T {
        (self.b - self.a) / T::from_usize_lossy(self.grid_len().saturating_sub(1).max(1))
    }

    pub fn grid(&self) -> Vec<T> {
        let h = self.spacing();
        (0..self.grid_len()).map(|i| self.a + h * T::from_usize_lossy(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResolution<T> {
    pub levels: Vec<Level<T>>,
    /// Every eigenvalue `<= cutoff` is present.
    pub cutoff: T,
    pub certificate: Certificate,
    /// Mass of each level: signed `σ_n(1)` for simple levels, otherwise the norm of
    /// the projection of the constant function 1 onto the eigenspace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_coeffs: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenfunctions: Option<EigenfunctionSamples<T>>,
}

impl<T: Real> SpectralResolution<T> {
    pub fn empty(cutoff: T, certificate: Certificate) -> Self {
        SpectralResolution {
            levels: Vec::new(),
            cutoff,
            certificate,
            mass_coeffs: None,
            eigenfunctions: None,
        }
    }

    /// Eigenvalues repeated according to multiplicity.
    pub fn eigenvalues(&self) -> Vec<T> {
        self.levels
            .iter()
            .flat_map(|l| std::iter::repeat(l.value).take(l.multiplicity))
            .collect()
    }

    /// Total number of eigenvalues counted with multiplicity.
    pub fn count(&self) -> usize {
        self.levels.iter().map(|l| l.multiplicity).sum()
    }

    pub fn values(&self) -> Vec<T> {
        self.levels.iter().map(|l| l.value).collect()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.multiplicity).collect()
    }

    pub fn lowest(&self) -> Option<T> {
        self.levels.first().map(|l| l.value)
    }

    pub fn is_sorted_nonnegative(&self) -> bool {
        self.levels.iter().all(|l| l.value >= T::zero() && l.multiplicity > 0)
            && self.levels.windows(2).all(|w| w[0].value < w[1].value)
    }

    /// Keeps only levels `<= cutoff` and lowers the certified cutoff accordingly.
    pub fn truncated(&self, cutoff: T) -> Self {
        let keep = self.levels.iter().take_while(|l| l.value <= cutoff).count();
        let mut out = self.clone();
        out.levels.truncate(keep);
        if let Some(m) = out.mass_coeffs.as_mut() {
            m.truncate(keep);
        }
        if let Some(e) = out.eigenfunctions.as_mut() {
            e.values.truncate(keep);
        }
        out.cutoff = self.cutoff.min(cutoff);
        out
    }
}

/// Groups a list of eigenvalues into levels, merging values within the relative
/// tolerance. The input need not be sorted.
pub fn levels_from_values<T: Real>(values: &[T], rel_tol: T) -> Vec<Level<T>> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut levels: Vec<Level<T>> = Vec::new();
    for v in sorted {
        match levels.last_mut() {
            Some(last) if close(last.value, v, rel_tol) => last.multiplicity += 1,
            _ => levels.push(Level { value: v, multiplicity: 1, sectors: Vec::new() }),
        }
    }
    levels
}

/// Merges levels that coincide within the relative tolerance, summing
/// multiplicities and concatenating sector shares. Input must be sorted by value.
pub fn merge_levels<T: Real>(levels: Vec<Level<T>>, rel_tol: T) -> Vec<Level<T>> {
    let mut out: Vec<Level<T>> = Vec::with_capacity(levels.len());
    for l in levels {
        match out.last_mut() {
            Some(last) if close(last.value, l.value, rel_tol) => {
                last.multiplicity += l.multiplicity;
                for s in l.sectors {
                    match last.sectors.iter_mut().find(|t| t.mu == s.mu) {
                        Some(t) => t.multiplicity += s.multiplicity,
                        None => last.sectors.push(s),
                    }
                }
            }
            _ => out.push(l),
        }
    }
    out
}

/// Cutoffs are inclusive up to a relative slack well inside [`MULTISET_REL_TOL`],
/// so eigenvalues that sit exactly on the cutoff survive rounding.
#[inline]
pub(crate) fn with_slack<T: Real>(cutoff: T) -> T {
    cutoff + T::lit(1e-10) * T::one().max(cutoff.abs())
}

#[inline]
pub(crate) fn close<T: Real>(a: T, b: T, rel_tol: T) -> bool {
    (a - b).abs() <= rel_tol * T::one().max(a.abs().max(b.abs()))
}

/// First position where two sorted multisets differ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultisetMismatch {
    pub index: usize,
    pub left: Option<f64>,
    pub right: Option<f64>,
}

/// Compares two eigenvalue lists (with multiplicity) element by element after sorting.
pub fn compare_multisets<T: Real>(
    left: &[T],
    right: &[T],
    rel_tol: T,
) -> std::result::Result<(), MultisetMismatch> {
    let mut l = left.to_vec();
    let mut r = right.to_vec();
    l.sort_by(|a, b| a.partial_cmp(b).unwrap());
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = l.len().max(r.len());
    for i in 0..n {
        match (l.get(i), r.get(i)) {
            (Some(&a), Some(&b)) if close(a, b, rel_tol) => continue,
            (a, b) => {
                return Err(MultisetMismatch {
                    index: i,
                    left: a.map(|v| v.to_f64_lossy()),
                    right: b.map(|v| v.to_f64_lossy()),
                })
            }
        }
    }
    Ok(())
}

/// Spectrum of any valid spec below `cutoff`. Warped products use `convention`.
pub fn spectrum_of<T: Real>(
    spec: &ManifoldSpec,
    cutoff: T,
    convention: Convention,
    options: &PruferOptions<T>,
) -> Result<SpectralResolution<T>> {
    validate_spec(spec)?;
    if cutoff < T::zero() || !cutoff.is_finite() {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff} must be non-negative")));
    }
    match spec {
        ManifoldSpec::Interval(iv) => Ok(interval_spectrum_below(T::lit(iv.length()), cutoff)),
        ManifoldSpec::WarpedProduct { .. } => {
            warped_product_spectrum(spec, cutoff, convention, options)
        }
        ManifoldSpec::Product { factors } => product_spectrum_of_specs(factors, cutoff, convention, options),
        closed => fiber_spectrum(closed, cutoff),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_merge_within_tolerance() {
        let lv = levels_from_values(&[4.0, 1.0, 1.0 + 1e-12, 4.0 + 1e-3], 1e-9);
        assert_eq!(lv.len(), 3);
        assert_eq!(lv[0].multiplicity, 2);
        let expanded: Vec<f64> = SpectralResolution {
            levels: lv,
            cutoff: 5.0,
            certificate: Certificate::ClosedForm,
            mass_coeffs: None,
            eigenfunctions: None,
        }
        .eigenvalues();
        assert_eq!(expanded.len(), 4);
    }

    #[test]
    fn multiset_comparison_locates_mismatch() {
        assert!(compare_multisets(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0], 1e-9).is_ok());
        let m = compare_multisets(&[1.0, 2.0, 3.0], &[1.0, 2.5, 3.0], 1e-9).unwrap_err();
        assert_eq!(m.index, 1);
        let short = compare_multisets(&[1.0, 2.0], &[1.0], 1e-9).unwrap_err();
        assert_eq!((short.index, short.right), (1, None));
    }
}
