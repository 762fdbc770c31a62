//! Hausdorff–Young constants, the Fourier-side constant, and the stable
//! Hausdorff–Young and strengthened multilinear checks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::datum::Datum;
use crate::error::{BlError, Result};
use crate::gaussian::{self, ComplexGaussianSpec};
use crate::integrator::{
    self, dist_to_gaussians, fourier_numeric, DistanceOpts, FunctionSpec, GaussianClass,
    QuadratureOpts,
};
use crate::linalg::{self, Mat};
use crate::optim::{nelder_mead, NelderMeadOpts};

/// Sharp Hausdorff–Young constant `(p^{1/p} / p'^{1/p'})^{1/2}` for `1 ≤ p ≤ 2`.
pub fn a_p(p: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(BlError::Exponent(format!("A_p needs 1 <= p <= 2, got {p}")));
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let pp = p / (p - 1.0);
    Ok((p.powf(1.0 / p) / pp.powf(1.0 / pp)).sqrt())
}

/// Conjugate exponent, `∞` at `p = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// `bl_value · ∏_j A_{p_j}^{−d_j}`.
pub fn fbl_constant(datum: &Datum, bl_value: f64) -> Result<f64> {
    if !bl_value.is_finite() {
        return Err(BlError::Invalid("the constant must be finite".into()));
    }
    let mut out = bl_value;
    for f in datum.factors() {
        out /= a_p(f.p)?.powi(f.dim() as i32);
    }
    Ok(out)
}

/// Supremum of `|∫∏ f_j∘B_j| / ∏‖f̂_j‖_{p_j'}` over centered Gaussians
/// `f_j = exp(−⟨C_j y, y⟩)`, using closed-form transforms and norms; a
/// multi-start Nelder–Mead over Cholesky factors of the `C_j`.
pub fn fourier_side_gaussian_sup(datum: &Datum, starts: usize, seed: u64) -> Result<f64> {
    for f in datum.factors() {
        a_p(f.p)?;
    }
    let dims = datum.dims();
    let tri: Vec<usize> = dims.iter().map(|k| k * (k + 1) / 2).collect();
    let len: usize = tri.iter().sum();
    let decode = |x: &[f64]| -> Vec<Mat> {
        let mut out = Vec::with_capacity(dims.len());
        let mut k = 0;
        for &dj in &dims {
            let mut l = Mat::zeros(dj, dj);
            for i in 0..dj {
                for j in 0..=i {
                    l[(i, j)] = if i == j {
                        x[k].clamp(-20.0, 20.0).exp()
                    } else {
                        x[k]
                    };
                    k += 1;
                }
            }
            out.push(&l * l.transpose());
        }
        out
    };
    let d = datum.d() as f64;
    let log_ratio = |x: &[f64]| -> f64 {
        let cs = decode(x);
        let mut total = Mat::zeros(datum.d(), datum.d());
        let mut log_den = 0.0;
        for (f, c) in datum.factors().iter().zip(&cs) {
            total += f.map.transpose() * c * &f.map;
            let g = match ComplexGaussianSpec::centered(c) {
                Ok(g) => g,
                Err(_) => return f64::NEG_INFINITY,
            };
            let norm = gaussian::fourier(&g).and_then(|h| gaussian::lp_norm(&h, conjugate(f.p)));
            match norm {
                Ok(v) if v > 0.0 => log_den += v.ln(),
                _ => return f64::NEG_INFINITY,
            }
        }
        match linalg::log_det_spd(&linalg::symmetrize(&total)) {
            Ok(ld) => 0.5 * d * PI.ln() - 0.5 * ld - log_den,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let nm = NelderMeadOpts {
        max_evals: 20_000,
        ftol_rel: 1e-15,
        ftol_abs: 1e-300,
        xtol: 1e-10,
    };
    let step = vec![0.3; len];
    let mut best = f64::NEG_INFINITY;
    for s in 0..starts.max(1) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
        let mut x: Vec<f64> = (0..len)
            .map(|_| {
                if s == 0 {
                    0.0
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect();
        for _ in 0..4 {
            let r = nelder_mead(|x| -log_ratio(x), &x, &step, &nm);
            x = r.x;
        }
        best = best.max(log_ratio(&x));
    }
    Ok(best.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyOpts {
    pub quadrature: QuadratureOpts,
    pub distance: DistanceOpts,
    /// Compute `dist_ratio` and `implied_c` (needs `1 < p < 2`).
    pub stability: bool,
}

impl Default for HyOpts {
    fn default() -> Self {
        HyOpts {
            quadrature: QuadratureOpts::default(),
            distance: DistanceOpts::default(),
            stability: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HYReport {
    pub p: f64,
    /// `‖f̂‖_{p'} / (A_p^d ‖f‖_p)`.
    pub ratio: f64,
    /// Best-found upper bound for `dist_p(f, complex Gaussians) / ‖f‖_p`.
    pub dist_ratio: Option<f64>,
    /// `(1 − ratio) / dist_ratio²`.
    pub implied_c: Option<f64>,
    pub norm: f64,
    pub transform_norm: f64,
    pub closed_form: bool,
    /// Relative error estimate of the norm computation (0 in closed form).
    pub error_estimate: f64,
}

/// `‖f̂‖_{p'}`, in closed form for Gaussians and on a transform grid otherwise.
pub fn transform_norm(f: &FunctionSpec, p: f64, opts: &QuadratureOpts) -> Result<(f64, bool)> {
    let pp = conjugate(p);
    if let Some(g) = f.as_closed_gaussian() {
        return Ok((gaussian::lp_norm(&gaussian::fourier(&g)?, pp)?, true));
    }
    let grid = fourier_numeric(f, opts)?;
    let v = if pp.is_finite() {
        integrator::grid_lp_norm(&grid, pp)
    } else {
        (0..grid.len())
            .map(|k| grid.value(k).norm())
            .fold(0.0, f64::max)
    };
    Ok((v, false))
}

pub fn hy_ratio(f: &FunctionSpec, p: f64, opts: &HyOpts) -> Result<HYReport> {
    let ap = a_p(p)?;
    let n = f.dim();
    let norm = integrator::lp_norm_numeric(f, p, &opts.quadrature)?;
    if !(norm.value > 0.0) {
        return Err(BlError::Invalid("f has zero norm".into()));
    }
    let (tn, closed) = transform_norm(f, p, &opts.quadrature)?;
    let ratio = tn / (ap.powi(n as i32) * norm.value);
    let (dist_ratio, implied_c) = if opts.stability && p > 1.0 && p < 2.0 {
        let r = dist_to_gaussians(f, p, GaussianClass::Complex, &opts.distance)?;
        let c = (r.relative > 0.0).then(|| (1.0 - ratio) / (r.relative * r.relative));
        (Some(r.relative), c)
    } else {
        (None, None)
    };
    Ok(HYReport {
        p,
        ratio,
        dist_ratio,
        implied_c,
        norm: norm.value,
        transform_norm: tn,
        closed_form: closed && norm.closed_form,
        error_estimate: norm.error_estimate / norm.value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrengthenedCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub transform_norms: Vec<f64>,
}

/// Compares `|∫∏ f_j∘B_j|` with `BL·∏ A_{p_j}^{−d_j} ‖f̂_j‖_{p_j'}`.
pub fn strengthened_bl_check(
    datum: &Datum,
    fs: &[FunctionSpec],
    bl_value: f64,
    opts: &QuadratureOpts,
    tol: f64,
) -> Result<StrengthenedCheck> {
    let mut rhs = fbl_constant(datum, bl_value)?;
    let lhs = integrator::bl_integral_numeric(datum, fs, opts)?
        .value
        .norm();
    let mut norms = Vec::with_capacity(fs.len());
    for (f, fac) in fs.iter().zip(datum.factors()) {
        let vanishes = f
            .components(1.0, true, opts.bump_points)?
            .iter()
            .all(|c| !c.log_k.is_finite());
        let (tn, _) = if vanishes {
            (0.0, true)
        } else {
            transform_norm(f, fac.p, opts)?
        };
        norms.push(tn);
        rhs *= tn;
    }
    Ok(StrengthenedCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + tol),
        transform_norms: norms,
    })
}
