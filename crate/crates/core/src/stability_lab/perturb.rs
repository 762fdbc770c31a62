use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    fit_exponent, geometric_extremizer, paired_log_ratio, Direction, ExponentFit, SweepOpts, Table,
};
use crate::datum::{self, Datum};
use crate::error::{BlError, Result};
use crate::integrator::{dist_to_gaussians, FunctionSpec, GaussianClass, Grid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Opt1Row {
    pub t: f64,
    /// `u(t)/u(0)`, from the paired ratio.
    pub ratio: f64,
    pub deficit: f64,
    pub deficit_neg: f64,
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Opt1Report {
    /// Deficit against `t`.
    pub fit: ExponentFit,
    /// `max_j D_j(t)` against `t`.
    pub distance_fit: ExponentFit,
    /// `min_t max_j D_j(t) / t`.
    pub kappa: f64,
    /// Largest `u(±t)/u(0)`; at most 1 at an extremizer.
    pub max_ratio: f64,
    /// `|δ(t) − δ(−t)| / (δ(t) + δ(−t))` at the smallest `t`.
    pub odd_part: f64,
    pub rows: Vec<Opt1Row>,
}

impl Opt1Report {
    pub fn table(&self) -> Table {
        let m = self.rows.first().map(|r| r.dist.len()).unwrap_or(0);
        let mut cols: Vec<String> = ["t", "ratio", "deficit", "deficit_neg"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((0..m).map(|j| format!("D_{j}")));
        let mut t = Table {
            columns: cols,
            rows: Vec::new(),
        };
        for r in &self.rows {
            let mut row = vec![r.t, r.ratio, r.deficit, r.deficit_neg];
            row.extend(&r.dist);
            t.push(row);
        }
        t
    }
}

fn distances(datum: &Datum, fs: &[FunctionSpec], opts: &SweepOpts) -> Result<Vec<f64>> {
    fs.iter()
        .zip(datum.factors())
        .map(|(f, fac)| {
            if f.as_closed_gaussian().is_some() {
                return Ok(0.0);
            }
            Ok(dist_to_gaussians(f, fac.p, GaussianClass::RealPositive, &opts.distance)?.relative)
        })
        .collect()
}

/// The family `g_j + t·h_j` through an extremizing Gaussian tuple `g`: the
/// deficit `1 − u(t)/u(0)` and the distances, both against `t > 0`.
pub fn opt1_experiment(
    datum: &Datum,
    g: &[FunctionSpec],
    h: &Direction,
    t_grid: &[f64],
    opts: &SweepOpts,
) -> Result<Opt1Report> {
    if t_grid.iter().any(|t| *t < 0.0) {
        return Err(BlError::Invalid(
            "give positive t; the mirrored family is evaluated as well".into(),
        ));
    }
    let ts: Vec<f64> = t_grid.iter().cloned().filter(|t| *t > 0.0).collect();
    let rows: Vec<Result<Opt1Row>> = ts
        .par_iter()
        .map(|&t| {
            let plus = h.member(g, t)?;
            let minus = h.member(g, -t)?;
            let lp = paired_log_ratio(datum, g, &plus, &opts.quadrature)?;
            let lm = paired_log_ratio(datum, g, &minus, &opts.quadrature)?;
            Ok(Opt1Row {
                t,
                ratio: lp.exp(),
                deficit: -lp.exp_m1(),
                deficit_neg: -lm.exp_m1(),
                dist: distances(datum, &plus, opts)?,
            })
        })
        .collect();
    let rows: Vec<Opt1Row> = rows.into_iter().collect::<Result<_>>()?;
    let deficits: Vec<f64> = rows.iter().map(|r| r.deficit).collect();
    let dmax: Vec<f64> = rows
        .iter()
        .map(|r| r.dist.iter().cloned().fold(0.0, f64::max))
        .collect();
    let fit = fit_exponent(&ts, &deficits)?;
    let distance_fit = fit_exponent(&ts, &dmax)?;
    let kappa = dmax
        .iter()
        .zip(&ts)
        .map(|(d, t)| d / t)
        .fold(f64::INFINITY, f64::min);
    let max_ratio = rows
        .iter()
        .flat_map(|r| [1.0 - r.deficit, 1.0 - r.deficit_neg])
        .fold(f64::NEG_INFINITY, f64::max);
    let first = rows
        .iter()
        .min_by(|a, b| a.t.total_cmp(&b.t))
        .expect("fit needs points");
    Ok(Opt1Report {
        fit,
        distance_fit,
        kappa,
        max_ratio,
        odd_part: (first.deficit - first.deficit_neg).abs() / (first.deficit + first.deficit_neg),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Opt2Row {
    pub delta: f64,
    pub shift: f64,
    pub deficit: f64,
    /// `‖f_1‖^{p_1} − 1`.
    pub norm_excess: f64,
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Opt2Report {
    pub factor: usize,
    pub p: f64,
    pub fit: ExponentFit,
    pub distance_fit: ExponentFit,
    /// `deficit / D²` per grid point; tends to zero when `p > 2`.
    pub deficit_over_sq_dist: Vec<f64>,
    /// The squared-distance bound degrades monotonically as `δ → 0`.
    pub squared_bound_fails: bool,
    pub rows: Vec<Opt2Row>,
}

impl Opt2Report {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "delta",
            "shift",
            "deficit",
            "norm_excess",
            "D",
            "deficit_over_sq_dist",
        ]);
        for (r, q) in self.rows.iter().zip(&self.deficit_over_sq_dist) {
            t.push(vec![r.delta, r.shift, r.deficit, r.norm_excess, r.dist, *q]);
        }
        t
    }
}

/// Shift `t(δ) = K·(ln 1/δ)^{3/2}`; grows faster than `ln(1/δ)`.
pub fn shift(delta: f64, k: f64) -> f64 {
    k * (1.0 / delta).ln().powf(1.5)
}

/// A geometric datum with some `p_1 > 2`: one factor of the extremizer gains a
/// small bump translated far away. The deficit decays like `δ^{p_1}` while the
/// distance decays like `δ`, so no squared-distance bound survives.
pub fn opt2_experiment(
    datum: &Datum,
    deltas: &[f64],
    v: &[f64],
    k: f64,
    opts: &SweepOpts,
) -> Result<Opt2Report> {
    if !datum::is_geometric(datum, 1e-8).geometric {
        return Err(BlError::Invalid(
            "the translated-bump family needs a geometric datum".into(),
        ));
    }
    let factor = datum
        .factors()
        .iter()
        .position(|f| f.p > 2.0)
        .ok_or_else(|| BlError::Exponent("no factor has p > 2".into()))?;
    let fac = &datum.factors()[factor];
    let p = fac.p;
    if v.len() != fac.dim() {
        return Err(BlError::Dimension(format!(
            "direction has length {}, factor dimension {}",
            v.len(),
            fac.dim()
        )));
    }
    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(vn > 0.0) || !(k > 0.0) {
        return Err(BlError::Invalid("direction and K must be nonzero".into()));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(BlError::Invalid("δ must lie in (0, 1)".into()));
    }
    let g = geometric_extremizer(datum);
    let g1 = &g[factor];
    let rows: Vec<Result<Opt2Row>> = deltas
        .par_iter()
        .map(|&delta| {
            let s = shift(delta, k);
            let mut fs = g.clone();
            fs[factor] = FunctionSpec::GaussianPlusBump {
                gaussian: g1.as_closed_gaussian().expect("extremizer is Gaussian"),
                amplitude: delta,
                center: v.iter().map(|x| s * x / vn).collect(),
                radius: 1.0,
            };
            let f1 = &fs[factor];
            let lr = paired_log_ratio(datum, &g, &fs, &opts.quadrature)?;
            let grid = Grid::for_norm(&[g1, f1], p, &opts.quadrature)?
                .ok_or_else(|| BlError::Invalid("vanishing factor".into()))?;
            let excess = grid
                .integrate(|y| {
                    Complex64::new(f1.eval(y).norm().powf(p) - g1.eval(y).norm().powf(p), 0.0)
                })
                .value
                .re;
            let dist =
                dist_to_gaussians(f1, p, GaussianClass::RealPositive, &opts.distance)?.relative;
            Ok(Opt2Row {
                delta,
                shift: s,
                deficit: -lr.exp_m1(),
                norm_excess: excess,
                dist,
            })
        })
        .collect();
    let rows: Vec<Opt2Row> = rows.into_iter().collect::<Result<_>>()?;
    let ds: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let fit = fit_exponent(&ds, &rows.iter().map(|r| r.deficit).collect::<Vec<_>>())?;
    let distance_fit = fit_exponent(&ds, &rows.iter().map(|r| r.dist).collect::<Vec<_>>())?;
    let q: Vec<f64> = rows.iter().map(|r| r.deficit / (r.dist * r.dist)).collect();
    // ordered by δ: the ratio must shrink with δ
    let mut by_delta: Vec<(f64, f64)> = ds.iter().cloned().zip(q.iter().cloned()).collect();
    by_delta.sort_by(|a, b| a.0.total_cmp(&b.0));
    let squared_bound_fails =
        by_delta.windows(2).all(|w| w[0].1 < w[1].1) && fit.slope - 2.0 > fit.halfwidth;
    Ok(Opt2Report {
        factor,
        p,
        fit,
        distance_fit,
        deficit_over_sq_dist: q,
        squared_bound_fails,
        rows,
    })
}
