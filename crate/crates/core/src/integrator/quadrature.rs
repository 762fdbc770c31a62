//! Tensor-grid and Monte Carlo quadrature over whitened Gaussian envelopes.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::{Component, FunctionSpec, GAUSS_STEP};
use crate::datum::Datum;
use crate::error::{BlError, Result};
use crate::gaussian;
use crate::linalg::{self, ComplexKahan, KahanSum, Mat, Vector};

/// Contours below this fraction of the envelope peak are truncated.
pub const ENVELOPE_CUTOFF: f64 = 1e-14;
const MAX_FACTOR_DIM: usize = 8;
const CHUNK: usize = 8192;
const MC_BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadMethod {
    TensorGrid,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureOpts {
    pub method: QuadMethod,
    /// Minimum number of grid points across the truncated box on each axis.
    pub points_per_axis: usize,
    /// Scales the truncation radius.
    pub radius_multiplier: f64,
    pub mc_samples: usize,
    pub seed: Option<u64>,
    pub target_rel_error: f64,
    /// Hard cap on tensor-grid nodes; the grid is coarsened to fit.
    pub max_points: usize,
    /// Grid points across the diameter of a bump.
    pub bump_points: f64,
    /// Multiplies every grid spacing (values below 1 refine).
    pub spacing_scale: f64,
}

impl Default for QuadratureOpts {
    fn default() -> Self {
        QuadratureOpts {
            method: QuadMethod::TensorGrid,
            points_per_axis: 16,
            radius_multiplier: 1.0,
            mc_samples: 100_000,
            seed: None,
            target_rel_error: 1e-6,
            max_points: 40_000_000,
            bump_points: 128.0,
            spacing_scale: 1.0,
        }
    }
}

impl QuadratureOpts {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        QuadratureOpts {
            method: QuadMethod::MonteCarlo,
            mc_samples: samples,
            seed: Some(seed),
            ..Default::default()
        }
    }

    pub fn refined(&self, factor: f64) -> Self {
        QuadratureOpts {
            spacing_scale: self.spacing_scale / factor,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            QuadMethod::TensorGrid if self.points_per_axis < 16 => Err(BlError::config(
                "points_per_axis",
                "must be at least 16 for the tensor grid",
            )),
            QuadMethod::MonteCarlo if self.seed.is_none() => Err(BlError::config(
                "seed",
                "required for monte-carlo quadrature",
            )),
            QuadMethod::MonteCarlo if self.mc_samples < 2 => {
                Err(BlError::config("mc_samples", "need at least two samples"))
            }
            _ if !(self.radius_multiplier > 0.0) => {
                Err(BlError::config("radius_multiplier", "must be positive"))
            }
            _ if !(self.target_rel_error > 0.0) => {
                Err(BlError::config("target_rel_error", "must be positive"))
            }
            _ if !(self.spacing_scale > 0.0) || !(self.bump_points >= 8.0) => Err(BlError::config(
                "spacing_scale",
                "spacing controls must be positive",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: Complex64,
    /// Tensor grid: `|I_h − I_{2h}|`; Monte Carlo: one standard error.
    pub error_estimate: f64,
    pub points: usize,
    /// Set when the error estimate exceeds the target or the grid was coarsened.
    pub flagged: bool,
}

impl QuadResult {
    fn zero() -> Self {
        QuadResult {
            value: Complex64::new(0.0, 0.0),
            error_estimate: 0.0,
            points: 0,
            flagged: false,
        }
    }

    pub fn rel_error(&self) -> f64 {
        let v = self.value.norm();
        if v > 0.0 {
            self.error_estimate / v
        } else if self.error_estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// One factor of a multilinear integrand, viewed through its map.
pub(crate) struct Slot {
    pub map: Mat,
    pub comps: Vec<Component>,
}

/// A tensor grid `x = x̄ + T z`, `z_i = k_i h_i`, laid over the region where a
/// product of Gaussian envelopes is above the cutoff.
#[derive(Debug, Clone)]
pub struct Grid {
    d: usize,
    xbar: Vector,
    t: Mat,
    jac: f64,
    h: Vec<f64>,
    lo: Vec<i64>,
    n: Vec<usize>,
    /// Peak of the envelope bound in log scale.
    log_peak: f64,
    coarsened: bool,
    target: f64,
    mc: Option<(usize, u64)>,
}

fn combos(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &s in sizes {
        let mut next = Vec::with_capacity(out.len() * s);
        for c in &out {
            for k in 0..s {
                let mut c2 = c.clone();
                c2.push(k);
                next.push(c2);
            }
        }
        out = next;
    }
    out
}

impl Grid {
    /// Builds the grid for `∫ ∏_j g_j(B_j x) dx` where each `g_j` is bounded by
    /// the envelopes in `slots[j].comps`. Returns `None` when a factor vanishes.
    pub(crate) fn plan(d: usize, slots: &[Slot], opts: &QuadratureOpts) -> Result<Option<Grid>> {
        opts.validate()?;
        let mut slots: Vec<Slot> = slots
            .iter()
            .map(|s| Slot {
                map: s.map.clone(),
                comps: s
                    .comps
                    .iter()
                    .filter(|c| c.log_k.is_finite())
                    .cloned()
                    .collect(),
            })
            .collect();
        if slots.iter().any(|s| s.comps.is_empty()) {
            return Ok(None);
        }
        for s in &slots {
            if s.map.ncols() != d || s.map.nrows() > MAX_FACTOR_DIM {
                return Err(BlError::Dimension(
                    "factor map incompatible with grid".into(),
                ));
            }
        }
        // whitening envelope
        let mut e = Mat::zeros(d, d);
        for s in &slots {
            let r = if s.comps.len() == 1 {
                s.comps[0].r.clone()
            } else {
                let lam = s
                    .comps
                    .iter()
                    .map(|c| linalg::min_eig(&c.r))
                    .fold(f64::INFINITY, f64::min);
                Mat::identity(s.map.nrows(), s.map.nrows()) * lam.max(0.0)
            };
            e += s.map.transpose() * r * &s.map;
        }
        let e = linalg::symmetrize(&e);
        if linalg::require_pd(&e, "integrand envelope").is_err() {
            return Err(BlError::Quadrature(
                "no decaying envelope detected; the tensor grid needs an explicit box".into(),
            ));
        }

        struct Peak {
            center: Vector,
            q: Mat,
            log_peak: f64,
        }
        let sizes: Vec<usize> = slots.iter().map(|s| s.comps.len()).collect();
        let mut peaks = Vec::new();
        for combo in combos(&sizes) {
            let mut q = Mat::zeros(d, d);
            let mut rhs = Vector::zeros(d);
            for (s, &k) in slots.iter().zip(&combo) {
                let c = &s.comps[k];
                q += s.map.transpose() * &c.r * &s.map;
                rhs += s.map.transpose() * (&c.r * &c.center);
            }
            let q = linalg::symmetrize(&q);
            let center = linalg::spd_inverse(&q)? * rhs;
            let mut log_peak = 0.0;
            for (s, &k) in slots.iter().zip(&combo) {
                let c = &s.comps[k];
                let r = &s.map * &center - &c.center;
                log_peak += c.log_k - r.dot(&(&c.r * &r));
            }
            peaks.push(Peak {
                center,
                q,
                log_peak,
            });
        }
        let best = peaks
            .iter()
            .max_by(|a, b| a.log_peak.total_cmp(&b.log_peak))
            .expect("at least one combination");
        let global = best.log_peak;
        let xbar = best.center.clone();

        let l = e.clone().cholesky().expect("checked positive definite").l();
        let lt = l.transpose();
        let t = lt
            .clone()
            .try_inverse()
            .ok_or_else(|| BlError::Numerical("singular whitening".into()))?;
        let jac = t.determinant().abs();

        let cut = -ENVELOPE_CUTOFF.ln();
        let mut zlo = vec![0.0f64; d];
        let mut zhi = vec![0.0f64; d];
        for p in &peaks {
            let slack = p.log_peak - global + cut;
            if slack <= 0.0 {
                continue;
            }
            let rad = opts.radius_multiplier * slack.sqrt();
            let qz = linalg::symmetrize(&(t.transpose() * &p.q * &t));
            let qinv = linalg::spd_inverse(&qz)?;
            let zc = &lt * (&p.center - &xbar);
            for i in 0..d {
                let hw = rad * qinv[(i, i)].sqrt();
                zlo[i] = zlo[i].min(zc[i] - hw);
                zhi[i] = zhi[i].max(zc[i] + hw);
            }
        }

        let mut res = Mat::zeros(d, d);
        for s in &slots {
            let bt = &s.map * &t;
            for c in &s.comps {
                res += bt.transpose() * &c.res * &bt;
            }
        }
        let mut h: Vec<f64> = (0..d)
            .map(|i| {
                let width = zhi[i] - zlo[i];
                let need = if res[(i, i)] > 0.0 {
                    1.0 / res[(i, i)].sqrt()
                } else {
                    f64::INFINITY
                };
                GAUSS_STEP
                    .min(need)
                    .min(width / opts.points_per_axis as f64)
                    * opts.spacing_scale
            })
            .collect();

        let extents = |h: &[f64]| -> (Vec<i64>, Vec<usize>) {
            let mut lo = Vec::with_capacity(d);
            let mut n = Vec::with_capacity(d);
            for i in 0..d {
                let a = (zlo[i] / h[i] / 2.0).floor() as i64 * 2;
                let b = (zhi[i] / h[i] / 2.0).ceil() as i64 * 2;
                lo.push(a);
                n.push((b - a + 1) as usize);
            }
            (lo, n)
        };
        let (mut lo, mut n) = extents(&h);
        let mut coarsened = false;
        let total = |n: &[usize]| n.iter().fold(1f64, |a, &k| a * k as f64);
        while total(&n) > opts.max_points as f64 {
            coarsened = true;
            let f = (total(&n) / opts.max_points as f64)
                .powf(1.0 / d as f64)
                .max(1.01);
            h.iter_mut().for_each(|x| *x *= f);
            (lo, n) = extents(&h);
        }
        let mc = match opts.method {
            QuadMethod::MonteCarlo => Some((opts.mc_samples, opts.seed.expect("validated"))),
            QuadMethod::TensorGrid => None,
        };
        slots.clear();
        Ok(Some(Grid {
            d,
            xbar,
            t,
            jac,
            h,
            lo,
            n,
            log_peak: global,
            coarsened,
            target: opts.target_rel_error,
            mc,
        }))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points(&self) -> usize {
        self.n.iter().product()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn log_peak(&self) -> f64 {
        self.log_peak
    }

    fn x_at(&self, z: &[f64], x: &mut [f64]) {
        for i in 0..self.d {
            let mut v = self.xbar[i];
            for k in 0..self.d {
                v += self.t[(i, k)] * z[k];
            }
            x[i] = v;
        }
    }

    /// Node coordinates (flattened, `d` per node) and the common weight of the
    /// fine tensor grid.
    pub fn nodes(&self) -> (Vec<f64>, f64) {
        let d = self.d;
        let total = self.points();
        let mut out = vec![0.0; total * d];
        let mut z = vec![0.0; d];
        for flat in 0..total {
            let mut rem = flat;
            for i in (0..d).rev() {
                let k = self.lo[i] + (rem % self.n[i]) as i64;
                rem /= self.n[i];
                z[i] = k as f64 * self.h[i];
            }
            self.x_at(&z, &mut out[flat * d..(flat + 1) * d]);
        }
        (out, self.jac * self.h.iter().product::<f64>())
    }

    /// Integrates `f` over `ℝ^d` with the planned method.
    pub fn integrate<F>(&self, f: F) -> QuadResult
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        match self.mc {
            Some((samples, seed)) => self.monte_carlo(&f, samples, seed),
            None => self.tensor(&f),
        }
    }

    fn tensor<F>(&self, f: &F) -> QuadResult
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let d = self.d;
        let total = self.points();
        let chunks = total.div_ceil(CHUNK);
        let partial: Vec<(Complex64, Complex64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut fine = ComplexKahan::default();
                let mut coarse = ComplexKahan::default();
                let mut z = vec![0.0; d];
                let mut x = vec![0.0; d];
                let end = ((c + 1) * CHUNK).min(total);
                for flat in c * CHUNK..end {
                    let mut rem = flat;
                    let mut even = true;
                    for i in (0..d).rev() {
                        let k = self.lo[i] + (rem % self.n[i]) as i64;
                        rem /= self.n[i];
                        even &= k % 2 == 0;
                        z[i] = k as f64 * self.h[i];
                    }
                    self.x_at(&z, &mut x);
                    let v = f(&x);
                    fine.add(v);
                    if even {
                        coarse.add(v);
                    }
                }
                (fine.value(), coarse.value())
            })
            .collect();
        let mut fine = ComplexKahan::default();
        let mut coarse = ComplexKahan::default();
        for (a, b) in partial {
            fine.add(a);
            coarse.add(b);
        }
        let vol = self.jac * self.h.iter().product::<f64>();
        let value = fine.value() * vol;
        let coarse = coarse.value() * vol * 2f64.powi(d as i32);
        let err = (value - coarse).norm();
        QuadResult {
            value,
            error_estimate: err,
            points: total,
            flagged: self.coarsened || err > self.target * value.norm().max(1e-300),
        }
    }

    fn monte_carlo<F>(&self, f: &F, samples: usize, seed: u64) -> QuadResult
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let d = self.d;
        let batches = samples.div_ceil(MC_BATCH);
        let log_norm = 0.5 * d as f64 * std::f64::consts::PI.ln();
        let partial: Vec<(Complex64, f64)> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b as u64);
                let count = MC_BATCH.min(samples - b * MC_BATCH);
                let mut sum = ComplexKahan::default();
                let mut sq = KahanSum::default();
                let mut z = vec![0.0; d];
                let mut x = vec![0.0; d];
                for _ in 0..count {
                    let mut r2 = 0.0;
                    for zi in z.iter_mut() {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        *zi = g * std::f64::consts::FRAC_1_SQRT_2;
                        r2 += *zi * *zi;
                    }
                    self.x_at(&z, &mut x);
                    // density of N(0, I/2) is π^{−d/2} e^{−|z|²}
                    let w = (log_norm + r2).exp() * self.jac;
                    let v = f(&x) * w;
                    sum.add(v);
                    sq.add(v.norm_sqr());
                }
                (sum.value(), sq.value())
            })
            .collect();
        let mut sum = ComplexKahan::default();
        let mut sq = KahanSum::default();
        for (a, b) in partial {
            sum.add(a);
            sq.add(b);
        }
        let n = samples as f64;
        let mean = sum.value() / n;
        let var = ((sq.value() / n - mean.norm_sqr()) * n / (n - 1.0)).max(0.0);
        let err = (var / n).sqrt();
        QuadResult {
            value: mean,
            error_estimate: err,
            points: samples,
            flagged: err > self.target * mean.norm().max(1e-300),
        }
    }

    /// Grid for `∫ |f|^p` over every spec in `fs` at once.
    pub fn for_norm(fs: &[&FunctionSpec], p: f64, opts: &QuadratureOpts) -> Result<Option<Grid>> {
        let n = fs.first().map(|f| f.dim()).unwrap_or(0);
        let mut comps = Vec::new();
        for f in fs {
            f.validate()?;
            if f.dim() != n {
                return Err(BlError::Dimension("specs differ in dimension".into()));
            }
            comps.extend(f.components(p, false, opts.bump_points)?);
        }
        Grid::plan(
            n,
            &[Slot {
                map: Mat::identity(n, n),
                comps,
            }],
            opts,
        )
    }

    /// Grid for the multilinear form over every tuple in `tuples` at once.
    pub fn for_bl(
        datum: &Datum,
        tuples: &[&[FunctionSpec]],
        opts: &QuadratureOpts,
    ) -> Result<Option<Grid>> {
        let mut slots: Vec<Slot> = datum
            .factors()
            .iter()
            .map(|f| Slot {
                map: f.map.clone(),
                comps: Vec::new(),
            })
            .collect();
        for fs in tuples {
            check_tuple(datum, fs)?;
            for (slot, f) in slots.iter_mut().zip(fs.iter()) {
                slot.comps
                    .extend(f.components(1.0, false, opts.bump_points)?);
            }
        }
        Grid::plan(datum.d(), &slots, opts)
    }
}

fn check_tuple(datum: &Datum, fs: &[FunctionSpec]) -> Result<()> {
    if fs.len() != datum.m() {
        return Err(BlError::Dimension(format!(
            "{} functions for {} factors",
            fs.len(),
            datum.m()
        )));
    }
    for (j, (f, dj)) in fs.iter().zip(datum.dims()).enumerate() {
        f.validate()?;
        if f.dim() != dj {
            return Err(BlError::Dimension(format!(
                "f_{j} lives in dimension {}, factor {j} maps to {dj}",
                f.dim()
            )));
        }
    }
    Ok(())
}

/// `∏_j f_j(B_j x)` at `x`.
pub fn bl_integrand(datum: &Datum, fs: &[FunctionSpec], x: &[f64]) -> Complex64 {
    let mut y = [0.0f64; MAX_FACTOR_DIM];
    let mut acc = Complex64::new(1.0, 0.0);
    for (fac, f) in datum.factors().iter().zip(fs) {
        let k = fac.dim();
        for (r, yr) in y.iter_mut().enumerate().take(k) {
            let mut v = 0.0;
            for (c, xc) in x.iter().enumerate() {
                v += fac.map[(r, c)] * xc;
            }
            *yr = v;
        }
        acc *= f.eval(&y[..k]);
        if acc == Complex64::new(0.0, 0.0) {
            break;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormResult {
    pub value: f64,
    pub error_estimate: f64,
    pub flagged: bool,
    pub closed_form: bool,
}

/// `∫ |f|^p` on a prepared grid.
pub fn norm_pow_on(grid: &Grid, f: &FunctionSpec, p: f64) -> QuadResult {
    grid.integrate(|y| Complex64::new(f.eval(y).norm().powf(p), 0.0))
}

/// `‖f‖_p`, in closed form for single Gaussians and by quadrature otherwise.
pub fn lp_norm_numeric(f: &FunctionSpec, p: f64, opts: &QuadratureOpts) -> Result<NormResult> {
    if !(p >= 1.0) {
        return Err(BlError::Exponent(format!("p = {p} is below 1")));
    }
    f.validate()?;
    if let Some(g) = f.as_closed_gaussian() {
        return Ok(NormResult {
            value: gaussian::lp_norm(&g, p)?,
            error_estimate: 0.0,
            flagged: false,
            closed_form: true,
        });
    }
    if !p.is_finite() {
        return Err(BlError::Exponent(
            "numeric L^∞ norms are not supported".into(),
        ));
    }
    let Some(grid) = Grid::for_norm(&[f], p, opts)? else {
        return Ok(NormResult {
            value: 0.0,
            error_estimate: 0.0,
            flagged: false,
            closed_form: false,
        });
    };
    let r = norm_pow_on(&grid, f, p);
    let i = r.value.re.max(0.0);
    let value = i.powf(1.0 / p);
    let error_estimate = if i > 0.0 {
        value * r.error_estimate / (p * i)
    } else {
        r.error_estimate.powf(1.0 / p)
    };
    Ok(NormResult {
        value,
        error_estimate,
        flagged: r.flagged,
        closed_form: false,
    })
}

/// `∫_{ℝ^d} ∏_j f_j(B_j x) dx`.
pub fn bl_integral_numeric(
    datum: &Datum,
    fs: &[FunctionSpec],
    opts: &QuadratureOpts,
) -> Result<QuadResult> {
    if opts.method == QuadMethod::TensorGrid && datum.d() > 4 {
        return Err(BlError::Quadrature(format!(
            "tensor grid limited to d ≤ 4 (d = {}); use monte-carlo",
            datum.d()
        )));
    }
    match Grid::for_bl(datum, &[fs], opts)? {
        None => Ok(QuadResult::zero()),
        Some(grid) => Ok(grid.integrate(|x| bl_integrand(datum, fs, x))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioResult {
    pub ratio: f64,
    pub integral: Complex64,
    pub norms: Vec<f64>,
    /// Relative error estimate assembled from the parts.
    pub rel_error: f64,
    pub flagged: bool,
}

/// `|∫∏ f_j∘B_j| / ∏‖f_j‖_{p_j}`.
pub fn blbp_ratio(
    datum: &Datum,
    fs: &[FunctionSpec],
    opts: &QuadratureOpts,
) -> Result<RatioResult> {
    let integral = bl_integral_numeric(datum, fs, opts)?;
    let mut norms = Vec::with_capacity(fs.len());
    let mut rel = integral.rel_error();
    let mut flagged = integral.flagged;
    for (j, (f, p)) in fs.iter().zip(datum.exponents()).enumerate() {
        let n = lp_norm_numeric(f, p, opts)?;
        if !(n.value > 0.0) {
            return Err(BlError::Invalid(format!("f_{j} has zero L^{p} norm")));
        }
        rel += n.error_estimate / n.value;
        flagged |= n.flagged;
        norms.push(n.value);
    }
    let denom: f64 = norms.iter().product();
    Ok(RatioResult {
        ratio: integral.value.norm() / denom,
        integral: integral.value,
        norms,
        rel_error: if integral.value.norm() > 0.0 {
            rel
        } else {
            0.0
        },
        flagged,
    })
}
