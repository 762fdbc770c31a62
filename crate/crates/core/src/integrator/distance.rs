//! Best-found `L^p` distance from a function to a Gaussian class.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::{Grid, QuadratureOpts};
use super::spec::FunctionSpec;
use crate::error::{BlError, Result};
use crate::gaussian::{self, ComplexGaussianSpec};
use crate::linalg::{self, CMat, CVector, Mat, Vector};
use crate::optim::{nelder_mead, NelderMeadOpts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GaussianClass {
    /// `c·exp(−⟨A(x−v), x−v⟩)` with `c > 0` and real `v`.
    RealPositive,
    /// `c·exp(−⟨A x, x⟩ + w·x)` with complex `c`, `w` and real `A`.
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceOpts {
    pub quadrature: QuadratureOpts,
    /// Local searches, including the deterministic starts.
    pub starts: usize,
    pub seed: u64,
    pub max_evals: usize,
}

impl Default for DistanceOpts {
    fn default() -> Self {
        DistanceOpts {
            quadrature: QuadratureOpts::default(),
            starts: 16,
            seed: 0,
            max_evals: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceResult {
    /// Best value found; an upper bound for the infimum.
    pub dist_upper_bound: f64,
    pub norm: f64,
    /// `dist_upper_bound / norm`.
    pub relative: f64,
    pub argmin: ComplexGaussianSpec,
    pub class: GaussianClass,
    /// False when no local search met its tolerance.
    pub converged: bool,
    pub exact_member: bool,
}

/// Parameter vector layout: Cholesky factor of `A` (log diagonal), center
/// `μ`, `ln|c|`, then for the complex class `arg c` and a frequency `η`, so
/// `g(y) = c·exp(−⟨A(y−μ), y−μ⟩ + i η·y)`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    complex: bool,
}

impl Layout {
    fn tri(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    fn len(&self) -> usize {
        self.tri() + self.n + 1 + if self.complex { 1 + self.n } else { 0 }
    }

    fn decode(&self, x: &[f64]) -> (Mat, Vector, Complex64, Vector) {
        let n = self.n;
        let mut l = Mat::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                l[(i, j)] = if i == j {
                    x[k].clamp(-30.0, 30.0).exp()
                } else {
                    x[k]
                };
                k += 1;
            }
        }
        let a = &l * l.transpose();
        let mu = Vector::from_column_slice(&x[k..k + n]);
        k += n;
        let log_c = x[k].clamp(-700.0, 700.0);
        k += 1;
        let (arg, eta) = if self.complex {
            (x[k], Vector::from_column_slice(&x[k + 1..k + 1 + n]))
        } else {
            (0.0, Vector::zeros(n))
        };
        (a, mu, Complex64::from_polar(log_c.exp(), arg), eta)
    }

    fn encode(&self, a: &Mat, mu: &Vector, c: Complex64, eta: &Vector) -> Option<Vec<f64>> {
        let l = a.clone().cholesky()?.l();
        let mut x = Vec::with_capacity(self.len());
        for i in 0..self.n {
            for j in 0..=i {
                x.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
            }
        }
        x.extend(mu.iter());
        x.push(c.norm().ln());
        if self.complex {
            x.push(c.arg());
            x.extend(eta.iter());
        }
        Some(x)
    }

    fn spec(&self, x: &[f64]) -> Result<ComplexGaussianSpec> {
        let (a, mu, c, eta) = self.decode(x);
        spec_from(&a, &mu, c, &eta)
    }
}

fn spec_from(a: &Mat, mu: &Vector, c: Complex64, eta: &Vector) -> Result<ComplexGaussianSpec> {
    // c e^{−(y−μ)ᵀA(y−μ) + iη·y} = c e^{−μᵀAμ} e^{−yᵀAy + (2Aμ + iη)·y}
    let w = linalg::cvec_from_parts(&(a * mu * 2.0), eta);
    let c = c * (-mu.dot(&(a * mu))).exp();
    ComplexGaussianSpec::new(c, linalg::to_complex(a), w)
}

/// `|z|^p` from `|z|²`, avoiding `powf` for common exponents.
#[inline]
fn abs_pow(z2: f64, p: f64) -> f64 {
    if p == 2.0 {
        z2
    } else if p == 1.0 {
        z2.sqrt()
    } else if p == 1.5 {
        let r = z2.sqrt();
        r * r.sqrt()
    } else {
        z2.powf(0.5 * p)
    }
}

struct Objective<'a> {
    layout: Layout,
    nodes: &'a [f64],
    weight: f64,
    values: &'a [Complex64],
    p: f64,
}

impl Objective<'_> {
    /// `∫|f − g|^p` on the grid plus the closed-form mass of `g` the grid misses.
    fn eval(&self, x: &[f64]) -> f64 {
        let (a, mu, c, eta) = self.layout.decode(x);
        let n = self.layout.n;
        if a.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let mut diff = linalg::KahanSum::default();
        let mut own = linalg::KahanSum::default();
        for (k, f) in self.values.iter().enumerate() {
            let y = &self.nodes[k * n..(k + 1) * n];
            let mut quad = 0.0;
            let mut lin = 0.0;
            for i in 0..n {
                let di = y[i] - mu[i];
                let mut row = 0.0;
                for j in 0..n {
                    row += a[(i, j)] * (y[j] - mu[j]);
                }
                quad += row * di;
                lin += eta[i] * y[i];
            }
            let g = if self.layout.complex {
                c * Complex64::from_polar((-quad).exp(), lin)
            } else {
                Complex64::new(c.re * (-quad).exp(), 0.0)
            };
            diff.add(abs_pow((f - g).norm_sqr(), self.p));
            own.add(abs_pow(g.norm_sqr(), self.p));
        }
        // ‖g‖_p^p = |c|^p (π/p)^{n/2} det(A)^{−1/2}
        let det = a.determinant();
        if !(det > 0.0) {
            return f64::INFINITY;
        }
        let exact = c.norm().powf(self.p) * (PI / self.p).powf(0.5 * n as f64) / det.sqrt();
        let missing = (exact - own.value() * self.weight).max(0.0);
        diff.value() * self.weight + missing
    }
}

fn moment_start(
    nodes: &[f64],
    values: &[Complex64],
    n: usize,
    p: f64,
    weight: f64,
) -> Option<(Mat, Vector, Complex64)> {
    let mut mass = 0.0;
    let mut mean = Vector::zeros(n);
    let mut peak = (0.0, Complex64::new(0.0, 0.0));
    for (k, f) in values.iter().enumerate() {
        let w = f.norm().powf(p);
        let y = Vector::from_column_slice(&nodes[k * n..(k + 1) * n]);
        mass += w;
        mean += y * w;
        if f.norm() > peak.0 {
            peak = (f.norm(), *f);
        }
    }
    if !(mass > 0.0) {
        return None;
    }
    mean /= mass;
    let mut cov = Mat::zeros(n, n);
    for (k, f) in values.iter().enumerate() {
        let w = f.norm().powf(p);
        let y = Vector::from_column_slice(&nodes[k * n..(k + 1) * n]) - &mean;
        cov += &y * y.transpose() * w;
    }
    cov /= mass;
    let cov = linalg::symmetrize(&cov);
    let inv = linalg::spd_inverse(&cov).ok()?;
    // |g|^p ∝ exp(−p⟨A y, y⟩) has covariance (2pA)⁻¹
    let a = inv / (2.0 * p);
    let det = a.determinant();
    let modulus = (mass * weight * det.sqrt() / (PI / p).powf(0.5 * n as f64)).powf(1.0 / p);
    let phase = if peak.0 > 0.0 {
        peak.1 / peak.0
    } else {
        Complex64::new(1.0, 0.0)
    };
    Some((a, mean, phase * modulus))
}

/// Minimizes `‖f − g‖_p` over the chosen Gaussian class by multi-start
/// Nelder–Mead on a fixed quadrature grid. Starts: moment matching of `|f|^p`,
/// the Gaussian part of `f` when there is one, then seeded perturbations of
/// the best point so far. The returned value is an upper bound for the
/// infimum.
pub fn dist_to_gaussians(
    f: &FunctionSpec,
    p: f64,
    class: GaussianClass,
    opts: &DistanceOpts,
) -> Result<DistanceResult> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(BlError::Exponent(format!(
            "p = {p} must be finite and at least 1"
        )));
    }
    f.validate()?;
    let n = f.dim();
    let norm = super::lp_norm_numeric(f, p, &opts.quadrature)?.value;
    if !(norm > 0.0) {
        return Err(BlError::Invalid(
            "distance needs a function with positive norm".into(),
        ));
    }

    if let Some(g) = f.as_closed_gaussian() {
        let member = match class {
            GaussianClass::RealPositive => g.is_positive(),
            GaussianClass::Complex => g.in_complex_class(),
        };
        if member {
            return Ok(DistanceResult {
                dist_upper_bound: 0.0,
                norm,
                relative: 0.0,
                argmin: g,
                class,
                converged: true,
                exact_member: true,
            });
        }
    }

    let layout = Layout {
        n,
        complex: class == GaussianClass::Complex,
    };
    let grid = Grid::for_norm(&[f], p, &opts.quadrature)?
        .ok_or_else(|| BlError::Invalid("function vanishes on the grid".into()))?;
    let (nodes, weight) = grid.nodes();
    let values: Vec<Complex64> = nodes.par_chunks(n).map(|y| f.eval(y)).collect();
    let obj = Objective {
        layout,
        nodes: &nodes,
        weight,
        values: &values,
        p,
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some((a, mu, c)) = moment_start(&nodes, &values, n, p, weight) {
        let c = if layout.complex {
            c
        } else {
            Complex64::new(c.norm(), 0.0)
        };
        starts.extend(layout.encode(&a, &mu, c, &Vector::zeros(n)));
    }
    if let Some(g) = f.gaussian_part() {
        let a = g.re_s();
        let mu = g.envelope_center();
        let eta = g.w.map(|z| z.im);
        // amplitude at the envelope center
        let peak = g.eval(mu.as_slice());
        let c = if layout.complex {
            peak
        } else {
            Complex64::new(peak.norm(), 0.0)
        };
        starts.extend(layout.encode(&a, &mu, c, &eta));
    }
    if starts.is_empty() {
        starts.push(
            layout
                .encode(
                    &Mat::identity(n, n),
                    &Vector::zeros(n),
                    Complex64::new(1.0, 0.0),
                    &Vector::zeros(n),
                )
                .expect("identity is positive definite"),
        );
    }

    let nm = NelderMeadOpts {
        max_evals: opts.max_evals,
        ftol_rel: 1e-10,
        ftol_abs: 1e-14 * norm.powf(p),
        xtol: 1e-8,
    };
    let step: Vec<f64> = vec![0.1; layout.len()];
    let run = |x0: &[f64]| {
        let first = nelder_mead(|x| obj.eval(x), x0, &step, &nm);
        // one restart shakes off a collapsed simplex
        let second = nelder_mead(|x| obj.eval(x), &first.x, &step, &nm);
        if second.f <= first.f {
            second
        } else {
            first
        }
    };

    let mut results: Vec<_> = starts.par_iter().map(|s| run(s)).collect();
    let best_of = |rs: &[crate::optim::NelderMeadResult]| {
        rs.iter()
            .min_by(|a, b| a.f.total_cmp(&b.f))
            .cloned()
            .expect("at least one start")
    };
    let extra = opts.starts.saturating_sub(results.len());
    if extra > 0 {
        let anchor = best_of(&results);
        let perturbed: Vec<Vec<f64>> = (0..extra)
            .map(|k| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(7919).wrapping_add(k as u64));
                anchor
                    .x
                    .iter()
                    .map(|v| v + rng.random_range(-0.5..0.5))
                    .collect()
            })
            .collect();
        results.extend(perturbed.par_iter().map(|s| run(s)).collect::<Vec<_>>());
    }
    let best = best_of(&results);
    let converged = results.iter().any(|r| r.converged);
    let dist = best.f.max(0.0).powf(1.0 / p);
    Ok(DistanceResult {
        dist_upper_bound: dist,
        norm,
        relative: dist / norm,
        argmin: layout.spec(&best.x)?,
        class,
        converged,
        exact_member: false,
    })
}

/// `inf_c ‖f − c·h‖_2² = ‖f‖² − |⟨f, h⟩|²/‖h‖²` for Gaussians, in closed form.
pub(crate) fn l2_residual_sq(f: &ComplexGaussianSpec, h: &ComplexGaussianSpec) -> Result<f64> {
    let inner = |a: &ComplexGaussianSpec, b: &ComplexGaussianSpec| -> Result<Complex64> {
        // ∫ a·conj(b)
        let s: CMat = &a.s + b.s.map(|z| z.conj());
        let w: CVector = &a.w + b.w.map(|z| z.conj());
        Ok(a.c * b.c.conj() * gaussian::gaussian_integral(&s, &w)?)
    };
    let ff = inner(f, f)?.re;
    let hh = inner(h, h)?.re;
    let fh = inner(f, h)?;
    Ok((ff - fh.norm_sqr() / hh).max(0.0))
}

/// Best-found relative `L²` distance from a complex Gaussian (possibly with a
/// quadratic phase) to the complex Gaussian class, using the closed-form
/// residual; independent of the quadrature grid.
pub fn l2_distance_closed_form(f: &ComplexGaussianSpec, starts: usize, seed: u64) -> Result<f64> {
    let n = f.n();
    let layout = Layout { n, complex: true };
    let norm = gaussian::lp_norm(f, 2.0)?;
    let obj = |x: &[f64]| -> f64 {
        let (a, mu, _, eta) = layout.decode(x);
        match spec_from(&a, &mu, Complex64::new(1.0, 0.0), &eta) {
            Ok(h) => l2_residual_sq(f, &h).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    let base = layout
        .encode(
            &f.re_s(),
            &f.envelope_center(),
            Complex64::new(1.0, 0.0),
            &f.w.map(|z| z.im),
        )
        .ok_or_else(|| BlError::Numerical("Re S not positive definite".into()))?;
    let nm = NelderMeadOpts {
        max_evals: 4000,
        ftol_rel: 1e-13,
        ftol_abs: 1e-300,
        xtol: 1e-10,
    };
    let step = vec![0.2; layout.len()];
    let mut best = f64::INFINITY;
    for k in 0..starts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let x0: Vec<f64> = if k == 0 {
            base.clone()
        } else {
            base.iter()
                .map(|v| v + rng.random_range(-1.0..1.0))
                .collect()
        };
        let r = nelder_mead(obj, &x0, &step, &nm);
        let r = nelder_mead(obj, &r.x, &step, &nm);
        best = best.min(r.f);
    }
    Ok(best.sqrt() / norm)
}
