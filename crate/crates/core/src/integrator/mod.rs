//! Numerical evaluation for inputs without closed forms.

mod distance;
mod quadrature;
mod spec;
mod transform;

pub use distance::{
    dist_to_gaussians, l2_distance_closed_form, DistanceOpts, DistanceResult, GaussianClass,
};
pub use quadrature::{
    bl_integral_numeric, bl_integrand, blbp_ratio, lp_norm_numeric, norm_pow_on, Grid, NormResult,
    QuadMethod, QuadResult, QuadratureOpts, RatioResult, ENVELOPE_CUTOFF,
};
pub use spec::{unit_bump, FunctionSpec, GridFunction};
pub use transform::{fourier_numeric, grid_lp_norm};
