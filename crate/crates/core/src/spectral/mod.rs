//! Periodic grid, Fourier multipliers, Sobolev norms and mollification.

mod field;
mod fourier;
mod grid;
mod mollifier;

pub use field::RealField;
pub use fourier::{bessel_potential, derivative, h_minus1_inner, sobolev_norm, Fourier};
pub use grid::Grid1D;
pub use mollifier::{bump, mollify, Mollifier, MollifierSpec};

/// Convenience constructor mirroring [`Grid1D::new`].
pub fn make_grid(half_length: f64, n_points: usize) -> crate::Result<Grid1D> {
    Grid1D::new(half_length, n_points)
}
