pub mod ode;
pub mod profiles;
pub mod riccati;
pub mod spline;
pub mod vertical;
pub mod dispersion;
pub mod spectral;
pub mod fields;
pub mod residuals;
pub mod obstruction;
