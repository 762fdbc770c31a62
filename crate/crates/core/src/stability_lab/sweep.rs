use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_exponent, implied_c, log_grid, paired_log_ratio, ExponentFit, Table};
use crate::datum::{self, CandidateOpts, Datum, Simplicity};
use crate::error::{BlError, Result};
use crate::gaussian::RealGaussian;
use crate::integrator::{
    blbp_ratio, dist_to_gaussians, DistanceOpts, FunctionSpec, GaussianClass, QuadratureOpts,
};
use crate::linalg::{self, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOpts {
    pub trials: usize,
    pub seed: u64,
    pub quadrature: QuadratureOpts,
    pub distance: DistanceOpts,
    /// Constant in the tested bound `deficit ≥ c·Σ D_j²`.
    pub c: f64,
    pub tol: f64,
}

impl Default for SweepOpts {
    fn default() -> Self {
        SweepOpts {
            trials: 500,
            seed: 0,
            quadrature: QuadratureOpts::default(),
            distance: DistanceOpts {
                starts: 4,
                ..DistanceOpts::default()
            },
            c: super::DEFAULT_C,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TupleKind {
    Gaussian,
    OffsetGaussian,
    BumpPerturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub trial: usize,
    pub kind: TupleKind,
    pub blbp: f64,
    pub deficit: f64,
    pub dist: Vec<f64>,
    pub sum_sq_dist: f64,
    pub implied_c: Option<f64>,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub bl_const: f64,
    pub c: f64,
    pub trials: usize,
    pub violations: usize,
    /// Smallest per-tuple implied constant over tuples with some `D_j > 0`.
    pub min_implied_c: Option<f64>,
    /// Smallest `deficit / Σ D_j²` over the same tuples.
    pub min_deficit_ratio: Option<f64>,
    /// Largest `blbp / bl_const` seen; at most `1` up to quadrature error.
    pub max_ratio: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.min_implied_c.is_some_and(|c| c > 0.0)
    }

    pub fn table(&self, m: usize) -> Table {
        let mut cols: Vec<String> = ["trial", "kind", "blbp", "deficit"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((0..m).map(|j| format!("D_{j}")));
        cols.extend(
            ["sum_sq_dist", "implied_c", "violation"]
                .iter()
                .map(|s| s.to_string()),
        );
        let mut t = Table {
            columns: cols,
            rows: Vec::new(),
        };
        for r in &self.rows {
            let mut row = vec![r.trial as f64, r.kind as u8 as f64, r.blbp, r.deficit];
            row.extend(&r.dist);
            row.extend([
                r.sum_sq_dist,
                r.implied_c.unwrap_or(f64::NAN),
                r.violation as u8 as f64,
            ]);
            t.push(row);
        }
        t
    }
}

fn random_tuple(datum: &Datum, kind: TupleKind, rng: &mut ChaCha8Rng) -> Result<Vec<FunctionSpec>> {
    let m = datum.m();
    let forced = rng.random_range(0..m);
    datum
        .factors()
        .iter()
        .enumerate()
        .map(|(j, fac)| {
            let k = fac.dim();
            let scale = std::f64::consts::PI / fac.p * rng.random_range(-0.7f64..0.7).exp();
            let a = linalg::random_spd(k, 0.3, rng) * scale;
            let v = match kind {
                TupleKind::Gaussian => Vector::zeros(k),
                _ => Vector::from_fn(k, |_, _| rng.random_range(-1.0..1.0)),
            };
            let g = RealGaussian::new(1.0, a, v)?.to_complex();
            if kind == TupleKind::BumpPerturbation && (j == forced || rng.random_bool(0.5)) {
                Ok(FunctionSpec::GaussianPlusBump {
                    gaussian: g,
                    amplitude: rng.random_range(0.05..0.6),
                    center: (0..k).map(|_| rng.random_range(-1.2..1.2)).collect(),
                    radius: rng.random_range(0.6..1.2),
                })
            } else {
                Ok(FunctionSpec::gaussian(g))
            }
        })
        .collect()
}

fn factor_distances(datum: &Datum, fs: &[FunctionSpec], opts: &DistanceOpts) -> Result<Vec<f64>> {
    fs.iter()
        .zip(datum.factors())
        .map(|(f, fac)| {
            if f.as_closed_gaussian().is_some() {
                return Ok(0.0);
            }
            let class = if f.is_nonnegative() {
                GaussianClass::RealPositive
            } else {
                GaussianClass::Complex
            };
            Ok(dist_to_gaussians(f, fac.p, class, opts)?.relative)
        })
        .collect()
}

/// Seeded random tuples (centered Gaussians, offset Gaussians and bump
/// perturbations, in rotation) tested against `deficit ≥ c·Σ D_j²`.
pub fn sharpened_sweep(datum: &Datum, bl_const: f64, opts: &SweepOpts) -> Result<SweepReport> {
    datum.require_open_unit_two()?;
    let kinds = [
        TupleKind::Gaussian,
        TupleKind::OffsetGaussian,
        TupleKind::BumpPerturbation,
    ];
    let rows: Vec<Result<SweepRow>> = (0..opts.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(trial as u64 + 1);
            let kind = kinds[trial % 3];
            let fs = random_tuple(datum, kind, &mut rng)?;
            let r = blbp_ratio(datum, &fs, &opts.quadrature)?;
            let mut dopts = opts.distance.clone();
            dopts.seed = opts.distance.seed.wrapping_add(trial as u64);
            let dist = factor_distances(datum, &fs, &dopts)?;
            let ratio = r.ratio / bl_const;
            let deficit = 1.0 - ratio;
            let sum_sq_dist: f64 = dist.iter().map(|d| d * d).sum();
            let tol = opts.tol.max(r.rel_error);
            Ok(SweepRow {
                trial,
                kind,
                blbp: r.ratio,
                deficit,
                implied_c: implied_c(&dist, ratio),
                violation: deficit < opts.c * sum_sq_dist - tol,
                dist,
                sum_sq_dist,
            })
        })
        .collect();
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_>>()?;
    let positive = rows.iter().filter(|r| r.sum_sq_dist > 0.0);
    let min_implied_c = positive
        .clone()
        .filter_map(|r| r.implied_c)
        .reduce(f64::min);
    let min_deficit_ratio = positive.map(|r| r.deficit / r.sum_sq_dist).reduce(f64::min);
    Ok(SweepReport {
        bl_const,
        c: opts.c,
        trials: opts.trials,
        violations: rows.iter().filter(|r| r.violation).count(),
        min_implied_c,
        min_deficit_ratio,
        max_ratio: rows.iter().map(|r| r.blbp / bl_const).fold(0.0, f64::max),
        rows,
    })
}

/// A bump perturbation direction: factor `j` gains
/// `s·weights[j]·φ((y − centers[j])/radii[j])` at amplitude `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Direction {
    pub weights: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

impl Direction {
    pub fn member(&self, base: &[FunctionSpec], s: f64) -> Result<Vec<FunctionSpec>> {
        if self.weights.len() != base.len()
            || self.centers.len() != base.len()
            || self.radii.len() != base.len()
        {
            return Err(BlError::Dimension(
                "direction and base tuple differ in length".into(),
            ));
        }
        base.iter()
            .enumerate()
            .map(|(j, b)| {
                let g = b
                    .as_closed_gaussian()
                    .ok_or_else(|| BlError::Invalid("perturbation base must be Gaussian".into()))?;
                if self.weights[j] == 0.0 {
                    return Ok(b.clone());
                }
                Ok(FunctionSpec::GaussianPlusBump {
                    gaussian: g,
                    amplitude: s * self.weights[j],
                    center: self.centers[j].clone(),
                    radius: self.radii[j],
                })
            })
            .collect()
    }

    /// Two fixed directions for rank-one data, used when none are given.
    pub fn defaults(m: usize) -> Vec<Direction> {
        Self::defaults_for(&vec![1; m])
    }

    /// The default directions for factors of dimensions `dims`; the centers
    /// move along the first coordinate.
    pub fn defaults_for(dims: &[usize]) -> Vec<Direction> {
        let m = dims.len();
        let spread = |shift: f64| -> Vec<Vec<f64>> {
            dims.iter()
                .enumerate()
                .map(|(j, &d)| {
                    let mut c = vec![0.2; d];
                    c[0] = shift + 0.3 * j as f64;
                    c
                })
                .collect()
        };
        vec![
            Direction {
                weights: vec![1.0; m],
                centers: spread(0.4),
                radii: vec![1.0; m],
            },
            Direction {
                weights: (0..m).map(|j| if j == 0 { 1.0 } else { 0.5 }).collect(),
                centers: spread(-0.5),
                radii: vec![0.8; m],
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryRow {
    pub eps: f64,
    pub direction: usize,
    pub amplitude: f64,
    pub max_dist: f64,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryReport {
    /// `ln δ` against `ln ε`, with `δ` the largest deficit at each `ε`.
    pub fit: ExponentFit,
    /// `max_j D_j / √deficit` over every member; bounded along the family.
    pub inversion_constant: f64,
    pub rows: Vec<CorollaryRow>,
}

impl CorollaryReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["eps", "direction", "amplitude", "max_dist", "deficit"]);
        for r in &self.rows {
            t.push(vec![
                r.eps,
                r.direction as f64,
                r.amplitude,
                r.max_dist,
                r.deficit,
            ]);
        }
        t
    }
}

/// Finds `s` with `max_j D_j(s) = target` by a secant iteration in log
/// coordinates, kept inside a bisection bracket.
fn solve_amplitude(target: f64, d_of: &dyn Fn(f64) -> Result<f64>, s0: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut s = s0;
    let mut prev: Option<(f64, f64)> = None;
    let mut best = (s, f64::NAN);
    for _ in 0..30 {
        let d = d_of(s)?;
        best = (s, d);
        if (d / target - 1.0).abs() < 1e-3 {
            break;
        }
        if d < target {
            lo = lo.max(s);
        } else {
            hi = hi.min(s);
        }
        let slope = match prev {
            Some((sp, dp)) if sp != s && dp > 0.0 && d > 0.0 => {
                ((d / dp).ln() / (s / sp).ln()).clamp(0.5, 2.0)
            }
            _ => 1.0,
        };
        prev = Some((s, d));
        let mut next = s * (target / d).powf(1.0 / slope);
        if !(next > lo && next < hi) {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * s
            };
        }
        s = next;
    }
    Ok(best)
}

/// Deficits of bump-perturbed extremizers at prescribed distances `ε`.
/// `base` must be an extremizing Gaussian tuple; deficits are measured
/// relative to it on shared grids.
pub fn corollary_sweep(
    datum: &Datum,
    base: &[FunctionSpec],
    directions: &[Direction],
    eps: &[f64],
    opts: &SweepOpts,
) -> Result<CorollaryReport> {
    datum.require_open_unit_two()?;
    let simple = datum::classify_simplicity(datum, CandidateOpts::for_datum(datum)).tag;
    if simple == Simplicity::NotSimpleWithWitness {
        return Err(BlError::Invalid(
            "the perturbation sweep needs a simple datum".into(),
        ));
    }
    let max_dist = |fs: &[FunctionSpec]| -> Result<f64> {
        Ok(factor_distances(datum, fs, &opts.distance)?
            .into_iter()
            .fold(0.0, f64::max))
    };
    let cells: Vec<(usize, usize)> = (0..directions.len())
        .flat_map(|k| (0..eps.len()).map(move |i| (k, i)))
        .collect();
    let mut slope0 = Vec::with_capacity(directions.len());
    for dir in directions {
        let d = max_dist(&dir.member(base, 0.1)?)?;
        if !(d > 0.0) {
            return Err(BlError::Invalid(
                "perturbation family is degenerate: all distances vanish".into(),
            ));
        }
        slope0.push(d / 0.1);
    }
    let rows: Vec<Result<CorollaryRow>> = cells
        .par_iter()
        .map(|&(k, i)| {
            let dir = &directions[k];
            let d_of = |s: f64| max_dist(&dir.member(base, s)?);
            let (s, d) = solve_amplitude(eps[i], &d_of, eps[i] / slope0[k])?;
            let lr = paired_log_ratio(datum, base, &dir.member(base, s)?, &opts.quadrature)?;
            Ok(CorollaryRow {
                eps: eps[i],
                direction: k,
                amplitude: s,
                max_dist: d,
                deficit: -lr.exp_m1(),
            })
        })
        .collect();
    let rows: Vec<CorollaryRow> = rows.into_iter().collect::<Result<_>>()?;
    let delta: Vec<f64> = (0..eps.len())
        .map(|i| {
            rows.iter()
                .filter(|r| r.eps == eps[i])
                .map(|r| r.deficit)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let fit = fit_exponent(eps, &delta)?;
    let inversion_constant = rows
        .iter()
        .map(|r| r.max_dist / r.deficit.max(0.0).sqrt())
        .fold(0.0, f64::max);
    Ok(CorollaryReport {
        fit,
        inversion_constant,
        rows,
    })
}

/// Default `ε` grid of the corollary sweep.
pub fn default_eps() -> Vec<f64> {
    log_grid(1e-3, 2e-2, 8)
}
