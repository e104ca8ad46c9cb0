//! Dirichlet spectra, heat trace, heat content and heat-invariant asymptotics
//! on intervals, circles, flat tori, products and warped products.
//!
//! Numerical routines are generic over [`Real`] (`f32`, `f64`); the aliases at
//! the bottom of this file fix the scalar to `f64`.

pub mod asymptotics;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod heat;
pub mod linalg;
pub mod manifold;
pub mod ode;
pub mod quadrature;
pub mod scalar;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use expr::ScalarExpr;
pub use manifold::{geometry_summary, validate_spec, GeometrySummary, Interval, ManifoldSpec};
pub use scalar::Real;
pub use spectral::Convention;
pub use heat::{heat_content, heat_trace, weighted_heat_content_base, SeriesKind};

pub type SpectralResolution = spectral::SpectralResolution<f64>;
pub type PruferOptions = spectral::PruferOptions<f64>;
pub type HeatSeries = heat::HeatSeries<f64>;
pub type HeatValue = heat::HeatValue<f64>;
