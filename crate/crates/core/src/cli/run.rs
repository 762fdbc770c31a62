use serde::Serialize;
use serde_json::{json, Value};

use super::config::{GridSpec, RunConfig};
use crate::datum::{self, CandidateOpts, Datum};
use crate::error::{BlError, Result};
use crate::fourier::{self, HyOpts};
use crate::integrator::{dist_to_gaussians, DistanceOpts, FunctionSpec, GaussianClass};
use crate::optimizer::{self, OptimizerResult};
use crate::stability_lab::{
    self as lab, centered_spec, DeficitOpts, Direction, ExponentFit, SweepOpts, Table,
    TupleStabilityOpts,
};

/// What a pipeline produced: the summary payload, files to write and any
/// numerical-failure flags.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    /// Pass/fail against the invariant bands, for experiments.
    pub pass: Option<bool>,
    pub files: Vec<(String, String)>,
    pub flags: Vec<String>,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

fn need_datum(cfg: &RunConfig) -> Result<&Datum> {
    cfg.datum
        .as_ref()
        .ok_or_else(|| BlError::config("datum", "this command needs a datum"))
}

fn need_tuple(cfg: &RunConfig) -> Result<&[FunctionSpec]> {
    cfg.tuple
        .as_deref()
        .ok_or_else(|| BlError::config("tuple", "this command needs a tuple of functions"))
}

fn grid(cfg: &RunConfig) -> Vec<f64> {
    match &cfg.experiment.grid {
        Some(GridSpec::Values(v)) => v.clone(),
        _ => unreachable!("grids are resolved while loading"),
    }
}

fn optimizer_flags(r: &OptimizerResult, flags: &mut Vec<String>) {
    if r.divergence_flag {
        flags.push("divergence".into());
    }
    if !r.converged {
        flags.push("not-converged".into());
    }
    // several maximizers are fine; several maximal values are not
    let finite: Vec<f64> = r
        .restart_values
        .iter()
        .cloned()
        .filter(|v| v.is_finite())
        .collect();
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    if !r.divergence_flag && hi - lo > 1e-6 * hi.abs() {
        flags.push("restart-values-disagree".into());
    }
}

fn constant_of(cfg: &RunConfig, datum: &Datum, flags: &mut Vec<String>) -> Result<f64> {
    if let Some(b) = cfg.bl_const {
        return Ok(b);
    }
    let r = optimizer::bl_constant(datum, &cfg.optimizer)?;
    optimizer_flags(&r, flags);
    if r.divergence_flag || !r.value.is_finite() {
        return Err(BlError::Numerical(
            "the constant is infinite for this datum".into(),
        ));
    }
    Ok(r.value)
}

fn distance_opts(cfg: &RunConfig, starts: usize) -> DistanceOpts {
    cfg.distance.clone().unwrap_or(DistanceOpts {
        starts,
        seed: cfg.seed,
        ..DistanceOpts::default()
    })
}

fn sweep_opts(cfg: &RunConfig) -> SweepOpts {
    let d = SweepOpts::default();
    SweepOpts {
        trials: cfg.experiment.trials.unwrap_or(d.trials),
        seed: cfg.seed,
        quadrature: cfg.quadrature.clone(),
        distance: distance_opts(cfg, d.distance.starts),
        c: cfg.experiment.c.unwrap_or(d.c),
        tol: d.tol,
    }
}

fn fit_json(f: &ExponentFit) -> Value {
    json!({
        "slope": f.slope,
        "intercept": f.intercept,
        "halfwidth": f.halfwidth,
        "r2": f.r2,
    })
}

fn csv(name: &str, t: &Table) -> Result<(String, String)> {
    Ok((format!("{name}.csv"), t.to_csv()?))
}

/// An extremizing Gaussian tuple `exp(−⟨C_j y, y⟩)`: `C_j = A_{*j}/p_j` from
/// the optimizer, or the closed form when the datum is geometric.
fn extremizer(
    cfg: &RunConfig,
    datum: &Datum,
    flags: &mut Vec<String>,
) -> Result<Vec<FunctionSpec>> {
    if datum::is_geometric(datum, 1e-8).geometric {
        return Ok(lab::geometric_extremizer(datum));
    }
    let r = optimizer::bl_constant(datum, &cfg.optimizer)?;
    optimizer_flags(&r, flags);
    if r.divergence_flag {
        return Err(BlError::Numerical(
            "the optimizer diverged; no extremizer".into(),
        ));
    }
    r.maximizer
        .a
        .iter()
        .zip(datum.factors())
        .map(|(a, f)| centered_spec(&(a / f.p)))
        .collect()
}

pub fn check(cfg: &RunConfig) -> Result<Outcome> {
    let datum = need_datum(cfg)?;
    let opts = CandidateOpts {
        seed: cfg.seed,
        ..CandidateOpts::for_datum(datum)
    };
    let finiteness = datum::classify_finiteness(datum, opts);
    let simplicity = datum::classify_simplicity(datum, opts);
    Ok(Outcome {
        result: json!({
            "finiteness": to_value(&finiteness),
            "simplicity": to_value(&simplicity),
            "geometric": to_value(&datum::is_geometric(datum, 1e-8)),
            "scaling_defect": datum::scaling_defect(datum),
        }),
        ..Outcome::default()
    })
}

pub fn constant(cfg: &RunConfig) -> Result<Outcome> {
    let datum = need_datum(cfg)?;
    let mut r = optimizer::bl_constant(datum, &cfg.optimizer)?;
    let mut out = Outcome::default();
    optimizer_flags(&r, &mut out.flags);
    let mut t = Table::new(&["iteration", "value", "eig_ratio"]);
    for p in &r.trace {
        t.push(vec![p.iteration as f64, p.value, p.eig_ratio]);
    }
    out.files.push(("trace.csv".into(), t.to_csv()?));
    r.trace.clear();
    out.result = to_value(&r);
    Ok(out)
}

pub fn reduce(cfg: &RunConfig) -> Result<Outcome> {
    let datum = need_datum(cfg)?;
    let r = optimizer::bl_constant(datum, &cfg.optimizer)?;
    let mut out = Outcome::default();
    optimizer_flags(&r, &mut out.flags);
    if r.divergence_flag {
        return Err(BlError::Numerical(
            "the optimizer diverged; nothing to reduce".into(),
        ));
    }
    let red = optimizer::geometric_reduce(datum, &r.maximizer)?;
    if !red.check.geometric {
        out.flags.push("reduction-not-geometric".into());
    }
    out.result = json!({ "value": r.value, "reduction": to_value(&red) });
    Ok(out)
}

pub fn fourier(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut result = serde_json::Map::new();
    if let Some(datum) = &cfg.datum {
        let bl = constant_of(cfg, datum, &mut out.flags)?;
        let mut t = Table::new(&["factor", "p", "p_conjugate", "a_p"]);
        for (j, f) in datum.factors().iter().enumerate() {
            let ap = if f.p <= 2.0 {
                fourier::a_p(f.p)?
            } else {
                f64::NAN
            };
            t.push(vec![j as f64, f.p, fourier::conjugate(f.p), ap]);
        }
        out.files.push(csv("a_p", &t)?);
        result.insert("bl_const".into(), json!(bl));
        match fourier::fbl_constant(datum, bl) {
            Ok(v) => {
                result.insert("fbl_const".into(), json!(v));
            }
            Err(e) => {
                result.insert("fbl_const".into(), Value::Null);
                result.insert("fbl_note".into(), json!(e.to_string()));
            }
        }
        if let Some(tuple) = &cfg.tuple {
            let s = fourier::strengthened_bl_check(datum, tuple, bl, &cfg.quadrature, 1e-6)?;
            result.insert("strengthened".into(), to_value(&s));
        }
    }
    if let Some(f) = &cfg.function {
        let p = cfg
            .p
            .ok_or_else(|| BlError::config("p", "a Hausdorff-Young ratio needs an exponent"))?
            .0;
        let hy = fourier::hy_ratio(
            f,
            p,
            &HyOpts {
                quadrature: cfg.quadrature.clone(),
                distance: distance_opts(cfg, DistanceOpts::default().starts),
                stability: true,
            },
        )?;
        if hy.error_estimate > cfg.quadrature.target_rel_error {
            out.flags.push("quadrature-error".into());
        }
        result.insert("hy".into(), to_value(&hy));
    }
    if result.is_empty() {
        return Err(BlError::config(
            "datum",
            "fourier needs a datum or a function with p",
        ));
    }
    out.result = Value::Object(result);
    Ok(out)
}

pub fn deficit(cfg: &RunConfig) -> Result<Outcome> {
    let datum = need_datum(cfg)?;
    let tuple = need_tuple(cfg)?;
    let mut out = Outcome::default();
    let bl = constant_of(cfg, datum, &mut out.flags)?;
    let d = DeficitOpts::default();
    let r = lab::deficit_report(
        datum,
        tuple,
        bl,
        &DeficitOpts {
            quadrature: cfg.quadrature.clone(),
            distance: distance_opts(cfg, d.distance.starts),
            c: cfg.experiment.c.map(|c| vec![c]).unwrap_or(d.c),
            ..d
        },
    )?;
    if r.flagged {
        out.flags.push("quadrature-error".into());
    }
    let mut t = Table::new(&["factor", "p", "D", "nonnegative"]);
    for (j, (dist, f)) in r.dist_ratios.iter().zip(datum.factors()).enumerate() {
        t.push(vec![j as f64, f.p, *dist, r.nonnegative[j] as u8 as f64]);
    }
    out.files.push(csv("deficit", &t)?);
    out.result = to_value(&r);
    Ok(out)
}

pub fn distance(cfg: &RunConfig) -> Result<Outcome> {
    let f = cfg
        .function
        .as_ref()
        .ok_or_else(|| BlError::config("function", "distance needs a function"))?;
    let p = cfg
        .p
        .ok_or_else(|| BlError::config("p", "distance needs an exponent"))?
        .0;
    let class = cfg.class.unwrap_or(if f.is_nonnegative() {
        GaussianClass::RealPositive
    } else {
        GaussianClass::Complex
    });
    let r = dist_to_gaussians(
        f,
        p,
        class,
        &distance_opts(cfg, DistanceOpts::default().starts),
    )?;
    let mut out = Outcome::default();
    if !r.converged {
        out.flags.push("distance-not-converged".into());
    }
    out.result = to_value(&r);
    Ok(out)
}

pub fn experiment(cfg: &RunConfig) -> Result<Outcome> {
    let name = cfg
        .experiment
        .name
        .as_deref()
        .ok_or_else(|| BlError::config("experiment.name", "no experiment named"))?;
    match name {
        "sweep" => sweep(cfg),
        "opt1" => opt1(cfg),
        "opt2" => opt2(cfg),
        "corollary" => corollary(cfg),
        "tuple" => tuple(cfg),
        "holder" => holder(cfg),
        "complex" => complex(cfg),
        other => Err(BlError::config(
            "experiment.name",
            format!("unknown experiment {other:?}"),
        )),
    }
}

fn sweep(cfg: &RunConfig) -> Result<Outcome> {
    let datum = need_datum(cfg)?;
    let mut out = Outcome::default();
    let bl = constant_of(cfg, datum, &mut out.flags)?;
    let r = lab::sharpened_sweep(datum, bl, &sweep_opts(cfg))?;
    out.files.push(csv("sweep", &r.table(datum.m()))?);
    out.pass = Some(r.passed());
    out.result = json!({
        "bl_const": r.bl_const,
        "c": r.c,
        "trials": r.trials,
        "violations": r.violations,
        "min_implied_c": r.min_implied_c,
        "min_deficit_ratio": r.min_deficit_ratio,
        "max_ratio": r.max_ratio,
    });
    Ok(out)
}

fn opt1(cfg: &RunConfig) -> Result<Outcome> {
    let datum = need_datum(cfg)?;
    let mut out = Outcome::default();
    let g = extremizer(cfg, datum, &mut out.flags)?;
    let h = &Direction::defaults_for(&datum.dims())[0];
    let r = lab::opt1_experiment(datum, &g, h, &grid(cfg), &sweep_opts(cfg))?;
    out.files.push(csv("opt1", &r.table())?);
    out.pass = Some(r.fit.within(2.0, 0.1) && r.kappa > 0.0 && r.max_ratio <= 1.0 + 1e-9);
    out.result = json!({
        "fit": fit_json(&r.fit),
        "distance_fit": fit_json(&r.distance_fit),
        "band": [1.9, 2.1],
        "kappa": r.kappa,
        "max_ratio": r.max_ratio,
        "odd_part": r.odd_part,
    });
    Ok(out)
}

fn opt2(cfg: &RunConfig) -> Result<Outcome> {
    let datum = need_datum(cfg)?;
    let dim = datum
        .factors()
        .iter()
        .find(|f| f.p > 2.0)
        .map(|f| f.dim())
        .ok_or_else(|| BlError::Exponent("no factor has p > 2".into()))?;
    let v = cfg.experiment.v.clone().unwrap_or_else(|| {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        e
    });
    let k = cfg.experiment.k.unwrap_or(1.0);
    let r = lab::opt2_experiment(datum, &grid(cfg), &v, k, &sweep_opts(cfg))?;
    let pass = r.fit.within(r.p, 0.15) && r.distance_fit.within(1.0, 0.1);
    Ok(Outcome {
        files: vec![csv("opt2", &r.table())?],
        pass: Some(pass),
        result: json!({
            "factor": r.factor,
            "p": r.p,
            "fit": fit_json(&r.fit),
            "band": [r.p - 0.15, r.p + 0.15],
            "distance_fit": fit_json(&r.distance_fit),
            "distance_band": [0.9, 1.1],
            "squared_bound_fails": r.squared_bound_fails,
        }),
        flags: Vec::new(),
    })
}

fn corollary(cfg: &RunConfig) -> Result<Outcome> {
    let datum = need_datum(cfg)?;
    let mut out = Outcome::default();
    let g = extremizer(cfg, datum, &mut out.flags)?;
    let dirs = Direction::defaults_for(&datum.dims());
    let r = lab::corollary_sweep(datum, &g, &dirs, &grid(cfg), &sweep_opts(cfg))?;
    out.files.push(csv("corollary", &r.table())?);
    out.pass = Some(r.fit.within(2.0, 0.2));
    out.result = json!({
        "fit": fit_json(&r.fit),
        "band": [1.8, 2.2],
        "inversion_constant": r.inversion_constant,
    });
    Ok(out)
}

fn tuple(cfg: &RunConfig) -> Result<Outcome> {
    let datum = need_datum(cfg)?;
    let d = TupleStabilityOpts::default();
    let r = lab::tuple_stability_experiment(
        datum,
        &TupleStabilityOpts {
            samples: cfg.experiment.samples.unwrap_or(d.samples),
            seed: cfg.seed,
            optimizer: cfg.optimizer,
            ..d
        },
    )?;
    let mut m = Table::new(&["delta", "eps"]);
    for &(delta, eps) in &r.modulus {
        m.push(vec![delta, eps]);
    }
    let mut flags = Vec::new();
    if !r.restarts_agree {
        flags.push("restarts-disagree".into());
    }
    Ok(Outcome {
        files: vec![csv("tuple", &r.table())?, csv("modulus", &m)?],
        pass: Some(
            r.restarts_agree
                && r.restart_spread <= 1e-5
                && r.near_ok
                && r.consistent_offset_change <= 1e-10,
        ),
        result: json!({
            "bl_const": r.bl_const,
            "maximizer": to_value(&r.maximizer),
            "restarts_agree": r.restarts_agree,
            "restart_spread": r.restart_spread,
            "near_max_dist": r.near_max_dist,
            "near_samples": r.near_samples,
            "near_ok": r.near_ok,
            "quadratic_min": r.quadratic_min,
            "quadratic_max": r.quadratic_max,
            "quadratic_over_floor": r.quadratic_over_floor,
            "consistent_offset_change": r.consistent_offset_change,
            "far_restart_dist": r.far_restart_dist,
        }),
        flags,
    })
}

fn holder(cfg: &RunConfig) -> Result<Outcome> {
    let e = &cfg.experiment;
    let exponents = e.exponents.clone().expect("defaults filled");
    let r = lab::holder_equality_family(
        e.d.expect("defaults filled"),
        &exponents,
        e.profile.expect("defaults filled"),
        e.r.expect("defaults filled"),
        &cfg.quadrature,
        &distance_opts(cfg, DistanceOpts::default().starts),
    )?;
    let mut t = Table::new(&["factor", "p", "D"]);
    for (j, (p, dist)) in r.exponents.iter().zip(&r.dist).enumerate() {
        t.push(vec![j as f64, *p, *dist]);
    }
    Ok(Outcome {
        files: vec![csv("holder", &t)?],
        pass: Some(r.flagged),
        result: to_value(&r),
        flags: Vec::new(),
    })
}

fn complex(cfg: &RunConfig) -> Result<Outcome> {
    let vectors = match (&cfg.experiment.vectors, &cfg.datum) {
        (Some(v), _) => v.clone(),
        (None, Some(d)) if d.is_rank_one() => (0..d.m())
            .map(|j| d.map(j).row(0).iter().cloned().collect())
            .collect(),
        _ => {
            return Err(BlError::config(
                "experiment.vectors",
                "give the vectors or a rank-one datum",
            ))
        }
    };
    let r = lab::complex_extremizer_build(
        &vectors,
        cfg.experiment.phase_scale.unwrap_or(1.0),
        &cfg.optimizer,
        &distance_opts(cfg, DistanceOpts::default().starts),
    )?;
    let mut t = Table::new(&["factor", "a", "C", "D"]);
    for j in 0..r.m {
        t.push(vec![
            j as f64,
            r.a[j],
            r.base[j],
            r.dist[j].unwrap_or(f64::NAN),
        ]);
    }
    let dmin = r
        .dist
        .iter()
        .flatten()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        files: vec![csv("complex", &t)?],
        pass: Some(
            r.phase_residual <= 1e-12
                && (r.blbp_modulated - r.bl_const).abs() <= 1e-6
                && dmin >= 1e-2,
        ),
        result: to_value(&r),
        flags: Vec::new(),
    })
}
