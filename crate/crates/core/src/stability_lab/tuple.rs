use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{log_grid, Table};
use crate::datum::{self, CandidateOpts, Datum, Simplicity};
use crate::error::{BlError, Result};
use crate::gaussian_bl::{self, GaussianTuple};
use crate::linalg::{self, Mat, Vector};
use crate::optimizer::{self, OptimizerOpts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TupleStabilityOpts {
    pub samples: usize,
    pub seed: u64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub optimizer: OptimizerOpts,
    /// Ascents from far random tuples.
    pub far_starts: usize,
    pub far_spread: f64,
    /// Samples with `value ≥ (1 − near_deficit)·BL` must lie within `near_radius`.
    pub near_deficit: f64,
    pub near_radius: f64,
}

impl Default for TupleStabilityOpts {
    fn default() -> Self {
        TupleStabilityOpts {
            samples: 400,
            seed: 0,
            sigma_min: 1e-4,
            sigma_max: 1.0,
            optimizer: OptimizerOpts::default(),
            far_starts: 4,
            far_spread: 2.5,
            near_deficit: 1e-4,
            near_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TupleSample {
    pub sigma: f64,
    pub offset_scale: f64,
    pub value_ratio: f64,
    pub log_c: f64,
    /// `‖A − A_*‖_F / ‖A_*‖_F` after normalizing `det M = 1`.
    pub a_dist: f64,
    /// Distance of the offsets to the consistent subspace.
    pub v_dist: f64,
    #[serde(skip)]
    floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TupleStabilityReport {
    pub bl_const: f64,
    pub maximizer: GaussianTuple,
    pub restarts_agree: bool,
    pub restart_spread: f64,
    /// Largest normalized distance to `A_*` among near-maximal samples.
    pub near_max_dist: f64,
    pub near_samples: usize,
    pub near_ok: bool,
    /// `(δ, ε(δ))`: largest `a_dist` among samples with deficit at most `δ`.
    pub modulus: Vec<(f64, f64)>,
    /// Range of `−ln c / dist(v, V)²` over offset samples.
    pub quadratic_min: f64,
    pub quadratic_max: f64,
    /// Smallest `−ln c / (floor·dist(v, V)²)` with `floor = min_j q_j λ_min(A_j)`
    /// of the sample; at least 1.
    pub quadratic_over_floor: f64,
    /// Largest relative value change under consistent offsets.
    pub consistent_offset_change: f64,
    /// Largest normalized distance to `A_*` after ascents from far tuples.
    pub far_restart_dist: f64,
    pub samples: Vec<TupleSample>,
}

impl TupleStabilityReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "sigma",
            "offset_scale",
            "value_ratio",
            "log_c",
            "a_dist",
            "v_dist",
        ]);
        for s in &self.samples {
            t.push(vec![
                s.sigma,
                s.offset_scale,
                s.value_ratio,
                s.log_c,
                s.a_dist,
                s.v_dist,
            ]);
        }
        t
    }
}

fn random_symmetric(k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let g = Mat::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    linalg::symmetrize(&g)
}

/// Samples Gaussian tuples `A_*^{1/2} e^{σH} A_*^{1/2}` around the maximizer,
/// with offsets part of the time, and measures how the value controls the
/// distance to the maximizer and of the offsets to the consistent subspace.
pub fn tuple_stability_experiment(
    datum: &Datum,
    opts: &TupleStabilityOpts,
) -> Result<TupleStabilityReport> {
    let verdict = datum::classify_simplicity(datum, CandidateOpts::for_datum(datum));
    if verdict.tag == Simplicity::NotSimpleWithWitness {
        return Err(BlError::Invalid(
            "tuple stability needs a simple datum".into(),
        ));
    }
    let opt = optimizer::bl_constant(datum, &opts.optimizer)?;
    if opt.divergence_flag {
        return Err(BlError::Invalid("the optimizer diverged".into()));
    }
    let bl = opt.value;
    let a_star = gaussian_bl::normalize_det(datum, &opt.maximizer)?;
    let star_norm = a_star.frobenius();
    let roots: Vec<Mat> = a_star.a.iter().map(linalg::sym_sqrt).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sigmas = log_grid(opts.sigma_min, opts.sigma_max, opts.samples.max(2));
    let taus = log_grid(1e-3, 1.0, opts.samples.max(2));

    let mut samples = Vec::with_capacity(opts.samples);
    for k in 0..opts.samples {
        let sigma = sigmas[k];
        let hs: Vec<Mat> = datum
            .dims()
            .iter()
            .map(|&d| random_symmetric(d, &mut rng))
            .collect();
        let scale = hs
            .iter()
            .map(|h| h.norm_squared())
            .sum::<f64>()
            .sqrt()
            .max(1e-300);
        let a: Vec<Mat> = hs
            .iter()
            .zip(&roots)
            .map(|(h, r)| r * linalg::sym_fn(&(h * (sigma / scale)), f64::exp) * r)
            .collect();
        let tuple = gaussian_bl::normalize_det(datum, &GaussianTuple::centered(a))?;
        let a_dist = tuple.distance(&a_star) / star_norm;
        // every other sample carries offsets: a consistent part plus a perturbation
        let offset_scale = if k % 2 == 1 {
            taus[(k * 7919) % taus.len()]
        } else {
            0.0
        };
        let with_offsets = if offset_scale > 0.0 {
            let x0 = Vector::from_fn(datum.d(), |_, _| rng.random_range(-1.0..1.0));
            let offs: Vec<Vector> = gaussian_bl::consistent_offsets(datum, &x0)
                .into_iter()
                .map(|v| {
                    let n = v.len();
                    v + Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)) * offset_scale
                })
                .collect();
            tuple.clone().with_offsets(offs)
        } else {
            tuple.clone()
        };
        let cs = gaussian_bl::complete_square(datum, &with_offsets)?;
        let centered = gaussian_bl::gaussian_bl_value(datum, &tuple)?.value;
        let v_dist = with_offsets
            .offsets
            .as_ref()
            .map(|o| gaussian_bl::distance_to_consistent(datum, o))
            .unwrap_or(0.0);
        samples.push(TupleSample {
            sigma,
            offset_scale,
            value_ratio: cs.c * centered / bl,
            log_c: cs.log_c,
            a_dist,
            v_dist,
            floor: datum
                .factors()
                .iter()
                .zip(&tuple.a)
                .map(|(f, a)| f.q() * linalg::min_eig(a))
                .fold(f64::INFINITY, f64::min),
        });
    }

    let near: Vec<&TupleSample> = samples
        .iter()
        .filter(|s| s.value_ratio >= 1.0 - opts.near_deficit)
        .collect();
    let near_max_dist = near.iter().map(|s| s.a_dist).fold(0.0, f64::max);
    let modulus: Vec<(f64, f64)> = log_grid(1e-10, 1.0, 21)
        .into_iter()
        .map(|delta| {
            let eps = samples
                .iter()
                .filter(|s| 1.0 - s.value_ratio <= delta)
                .map(|s| s.a_dist)
                .fold(0.0, f64::max);
            (delta, eps)
        })
        .collect();
    let quad: Vec<f64> = samples
        .iter()
        .filter(|s| s.v_dist > 1e-9)
        .map(|s| -s.log_c / (s.v_dist * s.v_dist))
        .collect();
    let quadratic_over_floor = samples
        .iter()
        .filter(|s| s.v_dist > 1e-9)
        .map(|s| -s.log_c / (s.floor * s.v_dist * s.v_dist))
        .fold(f64::INFINITY, f64::min);

    let mut consistent_offset_change: f64 = 0.0;
    for _ in 0..5 {
        let x0 = Vector::from_fn(datum.d(), |_, _| rng.random_range(-2.0..2.0));
        let t = a_star
            .clone()
            .with_offsets(gaussian_bl::consistent_offsets(datum, &x0));
        let v = gaussian_bl::offset_gaussian_ratio(datum, &t)?;
        consistent_offset_change = consistent_offset_change.max((v / bl - 1.0).abs());
    }

    let mut far_restart_dist: f64 = 0.0;
    for s in 0..opts.far_starts {
        let mut frng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1000 + s as u64));
        let start = GaussianTuple::centered(
            datum
                .dims()
                .iter()
                .map(|&d| linalg::random_spd(d, opts.far_spread, &mut frng))
                .collect(),
        );
        let run = optimizer::gradient_ascent_from(datum, &start, &opts.optimizer)?;
        let found = gaussian_bl::normalize_det(datum, &run.maximizer)?;
        far_restart_dist = far_restart_dist.max(found.distance(&a_star) / star_norm);
    }

    Ok(TupleStabilityReport {
        bl_const: bl,
        restarts_agree: opt.restarts_agree,
        restart_spread: opt.restart_spread.unwrap_or(0.0),
        near_samples: near.len(),
        near_ok: near_max_dist <= opts.near_radius,
        near_max_dist,
        modulus,
        quadratic_min: quad.iter().cloned().fold(f64::INFINITY, f64::min),
        quadratic_max: quad.iter().cloned().fold(0.0, f64::max),
        quadratic_over_floor,
        consistent_offset_change,
        far_restart_dist,
        maximizer: a_star,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn frame_is_stable() {
        let opts = TupleStabilityOpts {
            samples: 60,
            far_starts: 2,
            ..TupleStabilityOpts::default()
        };
        let r = tuple_stability_experiment(&catalog::frame_120(), &opts).unwrap();
        assert!(r.restarts_agree && r.restart_spread <= 1e-5);
        assert!(r.near_samples > 0 && r.near_ok, "{}", r.near_max_dist);
        assert!(r.consistent_offset_change <= 1e-10);
        assert!(
            r.quadratic_over_floor >= 1.0 - 1e-9,
            "{}",
            r.quadratic_over_floor
        );
        assert!(r.far_restart_dist < 1e-5);
        assert!(r.modulus.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn refuses_non_simple() {
        assert!(tuple_stability_experiment(
            &catalog::loomis_whitney(),
            &TupleStabilityOpts::default()
        )
        .is_err());
    }
}
