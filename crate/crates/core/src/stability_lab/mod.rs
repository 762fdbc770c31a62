//! Stability experiments: deficits against distances to Gaussians, exponent
//! fits for the perturbation families, tuple stability near the Gaussian
//! maximizer, and the equality cases that defeat Gaussian stability.

mod equality;
mod perturb;
mod sweep;
mod tuple;

pub use equality::{
    complex_extremizer_build, holder_equality_family, phase_nullspace, ComplexExtremizer,
    HolderEquality, HolderProfile,
};
pub use perturb::{
    opt1_experiment, opt2_experiment, shift, Opt1Report, Opt1Row, Opt2Report, Opt2Row,
};
pub use sweep::{
    corollary_sweep, default_eps, sharpened_sweep, CorollaryReport, CorollaryRow, Direction,
    SweepOpts, SweepReport, SweepRow, TupleKind,
};
pub use tuple::{
    tuple_stability_experiment, TupleSample, TupleStabilityOpts, TupleStabilityReport,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::datum::Datum;
use crate::error::{BlError, Result};
use crate::gaussian::ComplexGaussianSpec;
use crate::integrator::{
    bl_integrand, blbp_ratio, dist_to_gaussians, DistanceOpts, FunctionSpec, GaussianClass, Grid,
    QuadratureOpts,
};
use crate::linalg::Mat;

/// Floor used for the sharpened check when the caller gives no constants.
pub const DEFAULT_C: f64 = 1e-3;

/// Rows of numbers under named columns; the CSV payload of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Shortest round-trip exponent formatting, so equal numbers give equal bytes.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| BlError::Invalid(format!("csv: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:e}")))
                .map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| BlError::Invalid(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| BlError::Invalid(e.to_string()))
    }
}

/// Least-squares line through `(ln parameter, ln measured)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub parameter: Vec<f64>,
    pub measured: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence half-width of the slope.
    pub halfwidth: f64,
    pub r2: f64,
}

impl ExponentFit {
    pub fn within(&self, target: f64, band: f64) -> bool {
        (self.slope - target).abs() <= band
    }
}

pub fn fit_exponent(parameter: &[f64], measured: &[f64]) -> Result<ExponentFit> {
    let n = parameter.len();
    if n != measured.len() {
        return Err(BlError::Dimension(
            "parameter and measured lengths differ".into(),
        ));
    }
    if n < 6 {
        return Err(BlError::Invalid(format!(
            "an exponent fit needs at least 6 points, got {n}"
        )));
    }
    let up = parameter.windows(2).all(|w| w[1] > w[0]);
    let down = parameter.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(BlError::Invalid(
            "parameter grid must be strictly monotone".into(),
        ));
    }
    if parameter
        .iter()
        .chain(measured)
        .any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return Err(BlError::Invalid(
            "log-log fit needs finite positive values".into(),
        ));
    }
    let x: Vec<f64> = parameter.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = measured.iter().map(|v| v.ln()).collect();
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| BlError::Invalid(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(ExponentFit {
        parameter: parameter.to_vec(),
        measured: measured.to_vec(),
        slope,
        intercept,
        halfwidth: t * se,
        r2: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
    })
}

/// `n` log-spaced values from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|k| match k {
            0 => a,
            k if k + 1 == n => b,
            k => (la + (lb - la) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// `ln|1 + z|` without cancellation for small `z`.
fn ln_abs_1p(z: Complex64) -> f64 {
    0.5 * (2.0 * z.re + z.norm_sqr()).ln_1p()
}

/// `ln(blbp(pert) / blbp(base))`, integrating the differences of the
/// integrands on grids shared by both tuples so that discretization errors
/// common to the two cancel. Resolves relative changes far below the
/// quadrature error of either value.
pub fn paired_log_ratio(
    datum: &Datum,
    base: &[FunctionSpec],
    pert: &[FunctionSpec],
    opts: &QuadratureOpts,
) -> Result<f64> {
    let grid = Grid::for_bl(datum, &[base, pert], opts)?
        .ok_or_else(|| BlError::Invalid("base tuple vanishes".into()))?;
    let i0 = grid.integrate(|x| bl_integrand(datum, base, x)).value;
    if i0.norm() == 0.0 {
        return Err(BlError::Invalid("base integral vanishes".into()));
    }
    let di = grid
        .integrate(|x| bl_integrand(datum, pert, x) - bl_integrand(datum, base, x))
        .value;
    let mut out = ln_abs_1p(di / i0);
    for ((b, f), fac) in base.iter().zip(pert).zip(datum.factors()) {
        if b == f {
            continue;
        }
        let p = fac.p;
        let g = Grid::for_norm(&[b, f], p, opts)?
            .ok_or_else(|| BlError::Invalid("base factor vanishes".into()))?;
        let n0 = g
            .integrate(|y| Complex64::new(b.eval(y).norm().powf(p), 0.0))
            .value
            .re;
        let dn = g
            .integrate(|y| Complex64::new(f.eval(y).norm().powf(p) - b.eval(y).norm().powf(p), 0.0))
            .value
            .re;
        out -= (dn / n0).ln_1p() / p;
    }
    Ok(out)
}

/// Centered Gaussian `exp(−⟨A y, y⟩)` as a spec.
pub fn centered_spec(a: &Mat) -> Result<FunctionSpec> {
    Ok(FunctionSpec::gaussian(ComplexGaussianSpec::centered(a)?))
}

/// `exp(−π|y|²/p_j)` for every factor; the extremizer of a geometric datum.
pub fn geometric_extremizer(datum: &Datum) -> Vec<FunctionSpec> {
    datum
        .factors()
        .iter()
        .map(|f| FunctionSpec::gaussian(ComplexGaussianSpec::unit_lp(f.dim(), f.p)))
        .collect()
}

/// Largest `c` with `∏(1 − c D_j²) ≥ target`; `None` when every `D_j` vanishes.
pub fn implied_c(dist: &[f64], target: f64) -> Option<f64> {
    let dmax = dist.iter().cloned().fold(0.0_f64, f64::max);
    if dmax == 0.0 {
        return None;
    }
    let prod = |c: f64| {
        dist.iter()
            .map(|d| (1.0 - c * d * d).max(0.0))
            .product::<f64>()
    };
    if target >= 1.0 {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0 / (dmax * dmax));
    if prod(hi) >= target {
        return Some(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if prod(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeficitOpts {
    pub quadrature: QuadratureOpts,
    pub distance: DistanceOpts,
    /// Constants for the sharpened check, one per factor or one for all.
    pub c: Vec<f64>,
    /// Slack added to the right side of the sharpened check.
    pub tol: f64,
    /// Also compute complex-class distances for nonnegative factors.
    pub both_classes: bool,
}

impl Default for DeficitOpts {
    fn default() -> Self {
        DeficitOpts {
            quadrature: QuadratureOpts::default(),
            distance: DistanceOpts::default(),
            c: vec![DEFAULT_C],
            tol: 1e-8,
            both_classes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficitReport {
    pub blbp: f64,
    pub bl_const: f64,
    /// `1 − blbp / bl_const`.
    pub deficit: f64,
    /// Best-found relative distances to Gaussians, one per factor.
    pub dist_ratios: Vec<f64>,
    pub classes: Vec<GaussianClass>,
    pub nonnegative: Vec<bool>,
    /// Complex-class distances for the nonnegative factors, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complex_dist_ratios: Option<Vec<f64>>,
    pub implied_c: Option<f64>,
    pub c_used: Vec<f64>,
    pub holds_sharpened: bool,
    pub rel_error: f64,
    pub flagged: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DeficitReport {
    pub fn sum_sq_dist(&self) -> f64 {
        self.dist_ratios.iter().map(|d| d * d).sum()
    }
}

fn expand_c(c: &[f64], m: usize) -> Result<Vec<f64>> {
    match c.len() {
        1 => Ok(vec![c[0]; m]),
        k if k == m => Ok(c.to_vec()),
        k => Err(BlError::Dimension(format!("{k} constants for {m} factors"))),
    }
}

/// Deficit, per-factor distances and the sharpened check for one tuple.
/// Nonnegative factors are measured against positive Gaussians, where the
/// distance coincides with the complex one.
pub fn deficit_report(
    datum: &Datum,
    fs: &[FunctionSpec],
    bl_const: f64,
    opts: &DeficitOpts,
) -> Result<DeficitReport> {
    datum.require_open_unit_two()?;
    if !(bl_const > 0.0) || !bl_const.is_finite() {
        return Err(BlError::Invalid(format!(
            "bl_const = {bl_const} must be finite and positive"
        )));
    }
    let c_used = expand_c(&opts.c, datum.m())?;
    let r = blbp_ratio(datum, fs, &opts.quadrature)?;
    let mut dist = Vec::with_capacity(fs.len());
    let mut classes = Vec::with_capacity(fs.len());
    let mut nonneg = Vec::with_capacity(fs.len());
    let mut complex = Vec::new();
    for (f, fac) in fs.iter().zip(datum.factors()) {
        let pos = f.is_nonnegative();
        let class = if pos {
            GaussianClass::RealPositive
        } else {
            GaussianClass::Complex
        };
        let d = dist_to_gaussians(f, fac.p, class, &opts.distance)?;
        if opts.both_classes && pos {
            complex.push(
                dist_to_gaussians(f, fac.p, GaussianClass::Complex, &opts.distance)?.relative,
            );
        } else {
            complex.push(d.relative);
        }
        dist.push(d.relative);
        classes.push(class);
        nonneg.push(pos);
    }
    let ratio = r.ratio / bl_const;
    let bound: f64 = dist
        .iter()
        .zip(&c_used)
        .map(|(d, c)| 1.0 - c * d * d)
        .product();
    let slack = opts.tol.max(r.rel_error);
    let mut notes = Vec::new();
    if nonneg.iter().any(|&b| b) {
        notes.push("nonnegative factors: distance to positive Gaussians equals distance to complex Gaussians".into());
    }
    Ok(DeficitReport {
        blbp: r.ratio,
        bl_const,
        deficit: 1.0 - ratio,
        implied_c: implied_c(&dist, ratio),
        dist_ratios: dist,
        classes,
        complex_dist_ratios: opts.both_classes.then_some(complex),
        nonnegative: nonneg,
        c_used,
        holds_sharpened: ratio <= bound + slack,
        rel_error: r.rel_error,
        flagged: r.flagged,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn fit_recovers_power_law() {
        let x = log_grid(1e-3, 1e-1, 8);
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t * t).collect();
        let f = fit_exponent(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(f.halfwidth < 1e-10 && (f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_grids() {
        assert!(fit_exponent(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
        let x = [1.0, 2.0, 2.0, 3.0, 4.0, 5.0];
        assert!(fit_exponent(&x, &[1.0; 6]).is_err());
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(fit_exponent(&x, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn implied_c_solves_product() {
        let d = [0.1, 0.2, 0.0];
        let target = 0.97;
        let c = implied_c(&d, target).unwrap();
        let prod: f64 = d.iter().map(|x| 1.0 - c * x * x).product();
        assert!((prod - target).abs() < 1e-12);
        assert_eq!(implied_c(&[0.0, 0.0], 0.5), None);
        assert_eq!(implied_c(&d, 1.0), Some(0.0));
    }

    #[test]
    fn csv_is_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![0.1, 1e-300]);
        let s = t.to_csv().unwrap();
        assert_eq!(s, "a,b\n1e-1,1e-300\n");
    }

    #[test]
    fn extremizer_has_zero_deficit() {
        let f = catalog::frame_120();
        let fs = geometric_extremizer(&f);
        let r = deficit_report(&f, &fs, 1.0, &DeficitOpts::default()).unwrap();
        assert!(r.deficit.abs() < 1e-5, "{}", r.deficit);
        assert!(r.dist_ratios.iter().all(|&d| d < 1e-12));
        assert!(r.holds_sharpened);
        assert_eq!(r.implied_c, None);
    }

    #[test]
    fn bump_perturbation_has_positive_deficit() {
        let f = catalog::frame_120();
        let mut fs = geometric_extremizer(&f);
        let g = fs[0].as_closed_gaussian().unwrap();
        fs[0] = FunctionSpec::GaussianPlusBump {
            gaussian: g,
            amplitude: 0.3,
            center: vec![0.4],
            radius: 0.8,
        };
        let opts = DeficitOpts {
            both_classes: true,
            distance: DistanceOpts {
                starts: 4,
                ..DistanceOpts::default()
            },
            ..DeficitOpts::default()
        };
        let r = deficit_report(&f, &fs, 1.0, &opts).unwrap();
        assert!(r.deficit > 0.0 && r.implied_c.unwrap() > 0.0);
        assert!(r.holds_sharpened);
        let cx = r.complex_dist_ratios.as_ref().unwrap();
        assert!(
            (cx[0] - r.dist_ratios[0]).abs() < 1e-4 * r.dist_ratios[0],
            "{cx:?} {:?}",
            r.dist_ratios
        );
    }

    #[test]
    fn paired_ratio_matches_direct() {
        let f = catalog::frame_120();
        let base = geometric_extremizer(&f);
        let mut pert = base.clone();
        pert[1] = FunctionSpec::GaussianPlusBump {
            gaussian: base[1].as_closed_gaussian().unwrap(),
            amplitude: 0.2,
            center: vec![-0.3],
            radius: 1.0,
        };
        let q = QuadratureOpts::default();
        let lr = paired_log_ratio(&f, &base, &pert, &q).unwrap();
        let direct =
            blbp_ratio(&f, &pert, &q).unwrap().ratio / blbp_ratio(&f, &base, &q).unwrap().ratio;
        assert!((lr.exp() - direct).abs() < 1e-8, "{} {direct}", lr.exp());
    }
}
