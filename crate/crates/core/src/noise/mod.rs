//! Multiplicative noise field `mu(t, xi) = sum_i e^i(xi) W^i_t + e^0(xi) t`.

mod basis;
mod brownian;
mod ito;

pub use basis::{
    build_noise_basis, multiplier_norm_bound, multiplier_norm_empirical, multiplier_probes,
    zeta_tail, EmpiricalMultiplierNorm, NoiseFamily, NoiseMode, NoiseModel, NoiseSpec, TailKind,
    TailReport, Window,
};
pub use brownian::{derive_seed, mix64, BrownianIncrements, IncrementsView};
pub(crate) use ito::increment_coefficient;
pub use ito::{ito_integral, ito_integral_with, noise_increment, ItoIntegral, Quadrature};
