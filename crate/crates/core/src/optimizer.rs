//! Maximization of the Gaussian functional: the Brascamp–Lieb constant,
//! its maximizer, divergence detection and reduction to geometric form.
//!
//! Tuples are parametrized by Cholesky factors `A_j = L_j L_jᵀ` with the
//! diagonal of `L_j` stored as logarithms, so every parameter vector is a
//! valid tuple.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datum::{self, Datum, GeometricCheck};
use crate::error::{BlError, Result};
use crate::gaussian_bl::{self, GaussianTuple};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOpts {
    pub max_iters: usize,
    /// Stop once the sup-norm of the parameter gradient falls below this.
    pub grad_tol: f64,
    /// Fixed-point stopping tolerance (value change or EL residual).
    pub tol: f64,
    pub restarts: usize,
    pub warm_start_iters: usize,
    pub seed: u64,
    /// Log-normal spread of random starting tuples.
    pub start_spread: f64,
}

impl Default for OptimizerOpts {
    fn default() -> Self {
        OptimizerOpts {
            max_iters: 2000,
            grad_tol: 1e-11,
            tol: 1e-14,
            restarts: 8,
            warm_start_iters: 25,
            seed: 0,
            start_spread: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub value: f64,
    pub eig_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerResult {
    pub value: f64,
    pub maximizer: GaussianTuple,
    pub el_residual: f64,
    pub restarts_agree: bool,
    pub divergence_flag: bool,
    pub converged: bool,
    /// Whether the recorded values never decreased.
    pub monotone: bool,
    pub iterations: usize,
    pub seed: u64,
    pub trace: Vec<TracePoint>,
    /// Largest normalized distance between a restart's maximizer and the best.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restart_spread: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub restart_values: Vec<f64>,
}

const DIVERGENCE_GROWTH: f64 = 1e6;
const DIVERGENCE_RATIO: f64 = 1e-8;
const DIVERGENCE_WINDOW: usize = 50;
const AGREEMENT_TOL: f64 = 1e-5;

/// `max_j ‖A_j^{−1} − B_j M_A^{−1} B_jᵀ‖` in operator norm.
pub fn el_residual(datum: &Datum, tuple: &GaussianTuple) -> Result<f64> {
    let m = gaussian_bl::m_matrix(datum, tuple)?;
    let minv = linalg::spd_inverse(&m)?;
    let mut worst = 0.0_f64;
    for (f, a) in datum.factors().iter().zip(&tuple.a) {
        let diff = linalg::spd_inverse(a)? - &f.map * &minv * f.map.transpose();
        worst = worst.max(linalg::sym_op_norm(&diff));
    }
    Ok(worst)
}

fn pi_correction(datum: &Datum) -> f64 {
    let sd = datum::scaling_defect(datum);
    if sd.abs() > datum::SCALING_TOL {
        0.5 * sd * PI.ln()
    } else {
        0.0
    }
}

fn eig_ratio(m: &Mat) -> f64 {
    let (vals, _) = linalg::sym_eigen(m);
    let hi = vals[vals.len() - 1];
    if hi > 0.0 {
        vals[0] / hi
    } else {
        0.0
    }
}

/// Scales `A` so that `det M_A = 1` without the PD guard used by
/// [`gaussian_bl::normalize_det`]; `None` once `M` is numerically singular.
fn renormalize(datum: &Datum, a: &mut [Mat]) -> Option<Mat> {
    let m = gaussian_bl::assemble_m(datum, a);
    let ld = linalg::log_det_spd(&m).ok()?;
    let r = (-ld / datum.d() as f64).exp();
    if !r.is_finite() || r <= 0.0 {
        return None;
    }
    for aj in a.iter_mut() {
        *aj *= r;
    }
    Some(m * r)
}

/// Tracks the divergence rule: value grown by more than `1e6` from the
/// start while the eigenvalue ratio of `M` stayed below `1e-8` for 50
/// consecutive iterations.
struct DivergenceMonitor {
    log_start: f64,
    low_ratio_run: usize,
}

impl DivergenceMonitor {
    fn new(log_start: f64) -> Self {
        DivergenceMonitor {
            log_start,
            low_ratio_run: 0,
        }
    }

    fn observe(&mut self, log_value: f64, ratio: f64) -> bool {
        if ratio < DIVERGENCE_RATIO {
            self.low_ratio_run += 1;
        } else {
            self.low_ratio_run = 0;
        }
        self.low_ratio_run >= DIVERGENCE_WINDOW
            && log_value - self.log_start > DIVERGENCE_GROWTH.ln()
    }
}

/// Sets `A_j` for factors with `p_j = ∞` (which do not enter the value) to
/// their stationary choice.
fn settle_inert_factors(datum: &Datum, a: &mut [Mat]) {
    if datum.factors().iter().all(|f| f.q() != 0.0) {
        return;
    }
    let m = gaussian_bl::assemble_m(datum, a);
    if let Ok(minv) = linalg::spd_inverse(&m) {
        for (f, aj) in datum.factors().iter().zip(a.iter_mut()) {
            if f.q() == 0.0 {
                if let Ok(inv) = linalg::spd_inverse(&(&f.map * &minv * f.map.transpose())) {
                    *aj = inv;
                }
            }
        }
    }
}

struct Finish {
    a: Vec<Mat>,
    trace: Vec<TracePoint>,
    iterations: usize,
    converged: bool,
    diverged: bool,
}

fn finish(datum: &Datum, run: Finish, seed: u64) -> Result<OptimizerResult> {
    let Finish {
        mut a,
        trace,
        iterations,
        converged,
        diverged,
    } = run;
    let monotone = trace
        .windows(2)
        .all(|w| w[1].value >= w[0].value * (1.0 - 1e-12));
    let fallback_value = trace.last().map(|t| t.value).unwrap_or(f64::NAN);
    // M numerically singular at the end of a run counts as loss of PD
    let lost_pd = linalg::require_pd(&gaussian_bl::assemble_m(datum, &a), "M_A").is_err();
    if diverged || lost_pd {
        return Ok(OptimizerResult {
            value: fallback_value,
            maximizer: GaussianTuple::centered(a),
            el_residual: f64::INFINITY,
            restarts_agree: false,
            divergence_flag: true,
            converged: false,
            monotone,
            iterations,
            seed,
            trace,
            restart_spread: None,
            restart_values: Vec::new(),
        });
    }
    settle_inert_factors(datum, &mut a);
    let tuple = gaussian_bl::normalize_det(datum, &GaussianTuple::centered(a))?;
    let value = gaussian_bl::gaussian_bl_value(datum, &tuple)?.value;
    let el = el_residual(datum, &tuple)?;
    Ok(OptimizerResult {
        value,
        maximizer: tuple,
        el_residual: el,
        restarts_agree: true,
        divergence_flag: false,
        converged,
        monotone,
        iterations,
        seed,
        trace,
        restart_spread: None,
        restart_values: Vec::new(),
    })
}

/// Iterates `A_j ← (B_j M_A^{−1} B_jᵀ)^{−1}` followed by det-normalization.
pub fn fixed_point_iterate(
    datum: &Datum,
    a0: &GaussianTuple,
    max_iters: usize,
    tol: f64,
) -> Result<OptimizerResult> {
    let run = fixed_point_run(datum, a0, max_iters, tol)?;
    finish(datum, run, 0)
}

fn fixed_point_run(
    datum: &Datum,
    a0: &GaussianTuple,
    max_iters: usize,
    tol: f64,
) -> Result<Finish> {
    gaussian_bl::m_matrix(datum, a0)?;
    let corr = pi_correction(datum);
    let mut a = a0.a.clone();
    let mut m = renormalize(datum, &mut a).ok_or_else(|| BlError::not_pd("M_A", 0.0))?;
    let mut log_v = gaussian_bl::log_value_raw(datum, &a)?;
    let mut monitor = DivergenceMonitor::new(log_v);
    let mut trace = vec![TracePoint {
        iteration: 0,
        value: (log_v + corr).exp(),
        eig_ratio: eig_ratio(&m),
    }];
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        let Ok(minv) = linalg::spd_inverse(&m) else {
            diverged = true;
            break;
        };
        let mut residual = 0.0_f64;
        let mut next = Vec::with_capacity(a.len());
        for (f, aj) in datum.factors().iter().zip(&a) {
            let inner = linalg::symmetrize(&(&f.map * &minv * f.map.transpose()));
            if let Ok(ainv) = linalg::spd_inverse(aj) {
                residual = residual.max(linalg::sym_op_norm(&(&ainv - &inner)));
            }
            match linalg::spd_inverse(&inner) {
                Ok(x) => next.push(x),
                Err(_) => {
                    diverged = true;
                    break;
                }
            }
        }
        if diverged {
            break;
        }
        if residual < tol {
            converged = true;
            break;
        }
        let Some(new_m) = renormalize(datum, &mut next) else {
            diverged = true;
            break;
        };
        let Ok(new_log) = gaussian_bl::log_value_raw(datum, &next) else {
            diverged = true;
            break;
        };
        a = next;
        m = new_m;
        iterations = it;
        let ratio = eig_ratio(&m);
        trace.push(TracePoint {
            iteration: it,
            value: (new_log + corr).exp(),
            eig_ratio: ratio,
        });
        if monitor.observe(new_log, ratio) {
            diverged = true;
            break;
        }
        let change = (new_log - log_v).abs();
        log_v = new_log;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(Finish {
        a,
        trace,
        iterations,
        converged,
        diverged,
    })
}

/// Cholesky parametrization of a tuple.
#[derive(Debug, Clone)]
pub(crate) struct CholeskyParams {
    dims: Vec<usize>,
}

impl CholeskyParams {
    pub(crate) fn new(datum: &Datum) -> Self {
        CholeskyParams { dims: datum.dims() }
    }

    pub(crate) fn len(&self) -> usize {
        self.dims.iter().map(|k| k * (k + 1) / 2).sum()
    }

    pub(crate) fn encode(&self, a: &[Mat]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for (aj, &k) in a.iter().zip(&self.dims) {
            let chol = nalgebra::Cholesky::new(linalg::symmetrize(aj))
                .ok_or_else(|| BlError::not_pd("A_j", linalg::min_eig(aj)))?;
            let l = chol.l();
            for i in 0..k {
                for j in 0..=i {
                    out.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
                }
            }
        }
        Ok(out)
    }

    fn factors(&self, theta: &[f64]) -> Vec<Mat> {
        let mut pos = 0;
        self.dims
            .iter()
            .map(|&k| {
                let mut l = Mat::zeros(k, k);
                for i in 0..k {
                    for j in 0..=i {
                        l[(i, j)] = if i == j { theta[pos].exp() } else { theta[pos] };
                        pos += 1;
                    }
                }
                l
            })
            .collect()
    }

    pub(crate) fn decode(&self, theta: &[f64]) -> Vec<Mat> {
        self.factors(theta)
            .into_iter()
            .map(|l| linalg::symmetrize(&(&l * l.transpose())))
            .collect()
    }

    /// Log-value (without π correction) and its gradient in `θ`.
    pub(crate) fn value_and_grad(&self, datum: &Datum, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let ls = self.factors(theta);
        let a: Vec<Mat> = ls
            .iter()
            .map(|l| linalg::symmetrize(&(l * l.transpose())))
            .collect();
        let m = gaussian_bl::assemble_m(datum, &a);
        let chol = nalgebra::Cholesky::new(m)?;
        let log_det_m = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let minv = linalg::symmetrize(&chol.inverse());
        let mut value = -0.5 * log_det_m;
        let mut grad = Vec::with_capacity(self.len());
        for ((f, l), &k) in datum.factors().iter().zip(&ls).zip(&self.dims) {
            let q = f.q();
            // log det A_j = 2 Σ θ_ii
            let log_det_a = 2.0 * (0..k).map(|i| l[(i, i)].ln()).sum::<f64>();
            value += 0.5 * q * log_det_a;
            // ∂/∂A_j = (q_j/2)(A_j^{-1} − B_j M^{-1} B_jᵀ), and ∂/∂L = 2 G L
            let linv = l.clone().solve_lower_triangular(&Mat::identity(k, k))?;
            let ainv = linv.transpose() * &linv;
            let g = (ainv - &f.map * &minv * f.map.transpose()) * (0.5 * q);
            let gl = &g * l * 2.0;
            for i in 0..k {
                for j in 0..=i {
                    grad.push(if i == j {
                        gl[(i, i)] * l[(i, i)]
                    } else {
                        gl[(i, j)]
                    });
                }
            }
        }
        value.is_finite().then_some((value, grad))
    }

    /// Rescales `θ` so that the decoded tuple has `det M = 1`.
    fn renormalize(&self, datum: &Datum, theta: &mut [f64]) -> Option<Mat> {
        let a = self.decode(theta);
        let m = gaussian_bl::assemble_m(datum, &a);
        let ld = linalg::log_det_spd(&m).ok()?;
        let r = (-ld / datum.d() as f64).exp();
        let sr = r.sqrt();
        let mut pos = 0;
        for &k in &self.dims {
            for i in 0..k {
                for j in 0..=i {
                    if i == j {
                        theta[pos] += 0.5 * r.ln();
                    } else {
                        theta[pos] *= sr;
                    }
                    pos += 1;
                }
            }
        }
        Some(m * r)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// BFGS ascent on the log-value from a given start.
fn ascent_run(datum: &Datum, start: &GaussianTuple, opts: &OptimizerOpts) -> Result<Finish> {
    let params = CholeskyParams::new(datum);
    let n = params.len();
    let corr = pi_correction(datum);
    let mut theta = params.encode(&start.a)?;
    let mut m = params
        .renormalize(datum, &mut theta)
        .ok_or_else(|| BlError::not_pd("M_A", 0.0))?;
    let (mut f, mut g) = params
        .value_and_grad(datum, &theta)
        .ok_or_else(|| BlError::Numerical("initial value not finite".into()))?;
    let mut monitor = DivergenceMonitor::new(f);
    let mut trace = vec![TracePoint {
        iteration: 0,
        value: (f + corr).exp(),
        eig_ratio: eig_ratio(&m),
    }];
    // inverse Hessian approximation of −f
    let mut h = Mat::identity(n, n);
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iters {
        if sup_norm(&g) < opts.grad_tol {
            converged = true;
            break;
        }
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut dir: Vec<f64> = (&h * &gv).iter().cloned().collect();
        let mut slope = dot(&g, &dir);
        if !(slope > 0.0) {
            h = Mat::identity(n, n);
            dir = g.clone();
            slope = dot(&g, &g);
        }
        // Armijo backtracking, expanding while the full step keeps paying off
        let mut step = 1.0;
        let mut accepted: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            if let Some((ft, gt)) = params.value_and_grad(datum, &trial) {
                if ft >= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        if step == 1.0 {
            for _ in 0..30 {
                let bigger = step * 2.0;
                let trial: Vec<f64> = theta
                    .iter()
                    .zip(&dir)
                    .map(|(t, d)| t + bigger * d)
                    .collect();
                match params.value_and_grad(datum, &trial) {
                    Some((ft, gt))
                        if ft > accepted.as_ref().map_or(f, |a| a.1) + 1e-4 * step * slope =>
                    {
                        accepted = Some((trial, ft, gt));
                        step = bigger;
                    }
                    _ => break,
                }
            }
        }
        let Some((mut trial, _, _)) = accepted else {
            // no ascent possible at machine precision
            converged = sup_norm(&g) < opts.grad_tol.sqrt();
            break;
        };
        let Some(new_m) = params.renormalize(datum, &mut trial) else {
            diverged = true;
            break;
        };
        let Some((ft, gt)) = params.value_and_grad(datum, &trial) else {
            diverged = true;
            break;
        };
        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gt).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let sv = nalgebra::DVector::from_column_slice(&s);
            let yv = nalgebra::DVector::from_column_slice(&y);
            let rho = 1.0 / sy;
            let i = Mat::identity(n, n);
            let left = &i - &sv * yv.transpose() * rho;
            let right = &i - &yv * sv.transpose() * rho;
            h = &left * &h * &right + &sv * sv.transpose() * rho;
        }
        let change = ft - f;
        theta = trial;
        f = ft;
        g = gt;
        m = new_m;
        iterations = it;
        let ratio = eig_ratio(&m);
        trace.push(TracePoint {
            iteration: it,
            value: (f + corr).exp(),
            eig_ratio: ratio,
        });
        if monitor.observe(f, ratio) {
            diverged = true;
            break;
        }
        if change.abs() <= 1e-16 * f.abs().max(1.0) && sup_norm(&g) < opts.grad_tol.sqrt() {
            converged = true;
            break;
        }
    }
    Ok(Finish {
        a: params.decode(&theta),
        trace,
        iterations,
        converged,
        diverged,
    })
}

/// Gradient ascent from the identity tuple, or from a seeded random tuple
/// when `opts.seed != 0`.
pub fn gradient_ascent(datum: &Datum, opts: &OptimizerOpts) -> Result<OptimizerResult> {
    let start = starting_tuple(datum, opts.seed, opts.start_spread);
    gradient_ascent_from(datum, &start, opts)
}

pub fn gradient_ascent_from(
    datum: &Datum,
    start: &GaussianTuple,
    opts: &OptimizerOpts,
) -> Result<OptimizerResult> {
    let run = ascent_run(datum, start, opts)?;
    finish(datum, run, opts.seed)
}

fn starting_tuple(datum: &Datum, seed: u64, spread: f64) -> GaussianTuple {
    if seed == 0 {
        return GaussianTuple::identity(datum);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GaussianTuple::centered(
        datum
            .dims()
            .iter()
            .map(|&k| linalg::random_spd(k, spread, &mut rng))
            .collect(),
    )
}

/// One restart: fixed-point warm start, then BFGS ascent.
fn single_restart(datum: &Datum, opts: &OptimizerOpts, seed: u64) -> Result<OptimizerResult> {
    let start = starting_tuple(datum, seed, opts.start_spread);
    let warm = fixed_point_run(datum, &start, opts.warm_start_iters, opts.tol)?;
    if warm.diverged {
        return finish(datum, warm, seed);
    }
    let warm_iters = warm.iterations;
    let mut trace = warm.trace;
    let run = ascent_run(datum, &GaussianTuple::centered(warm.a), opts)?;
    let offset = warm_iters;
    trace.extend(run.trace.into_iter().skip(1).map(|mut t| {
        t.iteration += offset;
        t
    }));
    let iterations = warm_iters + run.iterations;
    finish(
        datum,
        Finish {
            a: run.a,
            trace,
            iterations,
            converged: run.converged,
            diverged: run.diverged,
        },
        seed,
    )
}

/// Seeded restarts merged deterministically; the best value wins, ties go to
/// the smaller EL residual and then to the smaller seed.
pub fn bl_constant(datum: &Datum, opts: &OptimizerOpts) -> Result<OptimizerResult> {
    gaussian_bl::m_matrix(datum, &GaussianTuple::identity(datum))?;
    let seeds: Vec<u64> = (0..opts.restarts.max(1) as u64)
        .map(|k| {
            if k == 0 {
                0
            } else {
                opts.seed.wrapping_mul(1000).wrapping_add(k)
            }
        })
        .collect();
    let runs: Vec<Result<OptimizerResult>> = seeds
        .par_iter()
        .map(|&s| single_restart(datum, opts, s))
        .collect();
    let runs: Vec<OptimizerResult> = runs.into_iter().collect::<Result<_>>()?;

    if runs.iter().all(|r| r.divergence_flag) {
        let mut worst = runs
            .into_iter()
            .max_by(|a, b| a.value.total_cmp(&b.value))
            .expect("at least one restart");
        worst.restarts_agree = false;
        return Ok(worst);
    }

    let finite: Vec<&OptimizerResult> = runs.iter().filter(|r| !r.divergence_flag).collect();
    let mut order: Vec<usize> = (0..finite.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (finite[i], finite[j]);
        let tie = (a.value - b.value).abs() <= 1e-12 * a.value.abs().max(b.value.abs());
        if tie {
            a.el_residual
                .total_cmp(&b.el_residual)
                .then(a.seed.cmp(&b.seed))
        } else {
            b.value.total_cmp(&a.value)
        }
    });
    let best = finite[order[0]];
    let scale = best.maximizer.frobenius();
    let spread = finite
        .iter()
        .map(|r| r.maximizer.distance(&best.maximizer) / scale)
        .fold(0.0_f64, f64::max);
    let agree = runs.iter().all(|r| !r.divergence_flag && r.converged) && spread <= AGREEMENT_TOL;

    let mut out = best.clone();
    out.restarts_agree = agree;
    out.restart_spread = Some(spread);
    out.restart_values = runs.iter().map(|r| r.value).collect();
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometricReduction {
    pub datum: Datum,
    /// `E_j = A_{*j}^{1/2}`.
    #[serde(serialize_with = "ser_mats")]
    pub e: Vec<Mat>,
    /// `F = M^{−1/2}`.
    #[serde(serialize_with = "ser_mat")]
    pub f: Mat,
    pub check: GeometricCheck,
    pub value_at_identity: f64,
    pub el_residual_at_identity: f64,
}

fn ser_mats<S: serde::Serializer>(m: &[Mat], s: S) -> std::result::Result<S::Ok, S::Error> {
    m.iter()
        .map(linalg::mat_to_rows)
        .collect::<Vec<_>>()
        .serialize(s)
}

fn ser_mat<S: serde::Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    linalg::mat_to_rows(m).serialize(s)
}

/// `B̃_j = A_{*j}^{1/2} B_j M^{−1/2}`; geometric whenever `A_*` is stationary.
pub fn geometric_reduce(datum: &Datum, a_star: &GaussianTuple) -> Result<GeometricReduction> {
    let residual = el_residual(datum, a_star)?;
    if residual >= 1e-6 {
        return Err(BlError::Invalid(format!(
            "tuple is not stationary (EL residual {residual:e} >= 1e-6)"
        )));
    }
    let m = gaussian_bl::m_matrix(datum, a_star)?;
    let f = linalg::sym_inv_sqrt(&m);
    let e: Vec<Mat> = a_star.a.iter().map(linalg::sym_sqrt).collect();
    let maps: Vec<(Mat, f64)> = datum
        .factors()
        .iter()
        .zip(&e)
        .map(|(fac, ej)| (ej * &fac.map * &f, fac.p))
        .collect();
    let reduced = Datum::new(datum.d(), maps)?;
    let check = datum::is_geometric(&reduced, 1e-8);
    let id = GaussianTuple::identity(&reduced);
    let value_at_identity = gaussian_bl::gaussian_bl_value(&reduced, &id)?.value;
    let el_residual_at_identity = el_residual(&reduced, &id)?;
    Ok(GeometricReduction {
        datum: reduced,
        e,
        f,
        check,
        value_at_identity,
        el_residual_at_identity,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompactnessReport {
    pub eta: f64,
    pub samples: usize,
    pub high_value_samples: usize,
    /// Smallest `λ_1(M)` over normalized samples with value ≥ η.
    pub min_lambda1: f64,
    pub max_lambda_d: f64,
    /// Eigenvalue band of all `A_j` over samples with value ≥ η.
    pub a_eig_min: f64,
    pub a_eig_max: f64,
    pub ratio_threshold: f64,
    pub low_ratio_samples: usize,
    pub low_ratio_max_value: f64,
    pub low_ratio_all_below_eta: bool,
}

/// Samples normalized tuples around a maximizer and reports eigenvalue bands
/// of the high-value ones; separately builds tuples with `λ_d/λ_1` pushed to
/// `ratio_threshold` and checks that their values fall below `η`.
pub fn compactness_probe(
    datum: &Datum,
    maximizer: &GaussianTuple,
    eta: f64,
    samples: usize,
    ratio_threshold: f64,
    seed: u64,
) -> Result<CompactnessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = gaussian_bl::normalize_det(datum, maximizer)?;
    let roots: Vec<Mat> = center.a.iter().map(linalg::sym_sqrt).collect();
    let mut report = CompactnessReport {
        eta,
        samples,
        high_value_samples: 0,
        min_lambda1: f64::INFINITY,
        max_lambda_d: 0.0,
        a_eig_min: f64::INFINITY,
        a_eig_max: 0.0,
        ratio_threshold,
        low_ratio_samples: 0,
        low_ratio_max_value: 0.0,
        low_ratio_all_below_eta: true,
    };
    for k in 0..samples {
        let sigma = 0.05 + 1.5 * (k as f64 / samples.max(1) as f64);
        let a: Vec<Mat> = roots
            .iter()
            .map(|r| {
                let n = r.nrows();
                let h = linalg::random_spd(n, sigma, &mut rng);
                linalg::symmetrize(&(r * h * r))
            })
            .collect();
        let t = gaussian_bl::normalize_det(datum, &GaussianTuple::centered(a))?;
        let rep = gaussian_bl::gaussian_bl_value(datum, &t)?;
        if rep.value >= eta {
            report.high_value_samples += 1;
            let (vals, _) = linalg::sym_eigen(&rep.m);
            report.min_lambda1 = report.min_lambda1.min(vals[0]);
            report.max_lambda_d = report.max_lambda_d.max(vals[vals.len() - 1]);
            for aj in &t.a {
                let (ev, _) = linalg::sym_eigen(aj);
                report.a_eig_min = report.a_eig_min.min(ev[0]);
                report.a_eig_max = report.a_eig_max.max(ev[ev.len() - 1]);
            }
        }
    }

    // per-factor exponential weights pushed until M degenerates
    for _ in 0..samples.max(1) {
        let base: Vec<Mat> = datum
            .dims()
            .iter()
            .map(|&k| linalg::random_spd(k, 0.3, &mut rng))
            .collect();
        let z: Vec<f64> = (0..datum.m())
            .map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0))
            .collect();
        let weighted = |t: f64| -> Vec<Mat> {
            base.iter()
                .zip(&z)
                .map(|(b, zj)| b * (t * zj).exp())
                .collect()
        };
        let ratio_at = |t: f64| -> f64 { eig_ratio(&gaussian_bl::assemble_m(datum, &weighted(t))) };
        let (mut lo, mut hi) = (0.0, 60.0);
        if ratio_at(lo) <= ratio_threshold || ratio_at(hi) > ratio_threshold {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio_at(mid) > ratio_threshold {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = weighted(hi);
        let Ok(v) = gaussian_bl::log_value_raw(datum, &a) else {
            continue;
        };
        let v = (v + pi_correction(datum)).exp();
        report.low_ratio_samples += 1;
        report.low_ratio_max_value = report.low_ratio_max_value.max(v);
        if v >= eta {
            report.low_ratio_all_below_eta = false;
        }
    }
    Ok(report)
}
