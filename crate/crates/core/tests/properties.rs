//! Randomized invariants across the modules.

use std::path::Path;
use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use blstab::catalog;
use blstab::cli::{Overrides, RunConfig};
use blstab::datum::{self, CandidateOpts, Datum, SubspaceBasis};
use blstab::fourier::{self, HyOpts};
use blstab::gaussian::{self, ComplexGaussianSpec};
use blstab::gaussian_bl::{self, GaussianTuple};
use blstab::integrator::{self, DistanceOpts, FunctionSpec, GaussianClass, Grid, QuadratureOpts};
use blstab::linalg::{self, CMat, CVector, Mat, Vector};
use blstab::optimizer::{self, OptimizerOpts};
use blstab::stability_lab::{self as lab, DeficitOpts};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_complex_spec(n: usize, r: &mut ChaCha8Rng) -> ComplexGaussianSpec {
    let a = linalg::random_spd(n, 0.4, r);
    let b = linalg::symmetrize(&Mat::from_fn(n, n, |_, _| r.random_range(-0.5..0.5)));
    let s = linalg::complex_from_parts(&a, &b);
    let w = CVector::from_fn(n, |_, _| {
        Complex64::new(r.random_range(-0.5..0.5), r.random_range(-0.5..0.5))
    });
    ComplexGaussianSpec::new(
        Complex64::new(r.random_range(0.5..1.5), r.random_range(-0.5..0.5)),
        s,
        w,
    )
    .unwrap()
}

fn random_tuple(datum: &Datum, spread: f64, r: &mut ChaCha8Rng) -> GaussianTuple {
    GaussianTuple::centered(
        datum
            .dims()
            .iter()
            .map(|&k| linalg::random_spd(k, spread, r))
            .collect(),
    )
}

/// A few data with their constants, computed once.
fn pool() -> &'static Vec<(Datum, f64)> {
    static POOL: OnceLock<Vec<(Datum, f64)>> = OnceLock::new();
    POOL.get_or_init(|| {
        [
            catalog::frame_120(),
            catalog::young_trilinear(),
            catalog::random_rank_one(2, 4, 3),
            catalog::random_planes(3, 3, 5),
        ]
        .into_iter()
        .map(|d| {
            let bl = optimizer::bl_constant(&d, &OptimizerOpts::default())
                .unwrap()
                .value;
            (d, bl)
        })
        .collect()
    })
}

fn fast_distance() -> DistanceOpts {
    DistanceOpts {
        starts: 3,
        ..DistanceOpts::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subcriticality_ignores_the_basis(seed in any::<u64>(), k in 1usize..=3) {
        let mut r = rng(seed);
        let datum = catalog::random_planes(3, 3, seed);
        let rows = Mat::from_fn(k, 3, |_, _| r.random_range(-1.0..1.0));
        let v = SubspaceBasis::span(&rows);
        let q = linalg::random_orthogonal(v.dim(), &mut r);
        let w = SubspaceBasis::from_orthonormal(&q * v.rows()).unwrap();
        prop_assert!(v.same_subspace(&w));
        let (a, b) = (datum::subcriticality_defect(&datum, &v), datum::subcriticality_defect(&datum, &w));
        prop_assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn full_space_defect_is_minus_scaling_defect(seed in any::<u64>(), d in 1usize..=3, m in 2usize..=5) {
        let datum = catalog::random_rank_one(d, m.max(d), seed);
        let full = datum::subcriticality_defect(&datum, &SubspaceBasis::full(d));
        prop_assert!((full + datum::scaling_defect(&datum)).abs() <= 1e-12);
    }

    #[test]
    fn finiteness_is_deterministic(seed in any::<u64>()) {
        let datum = catalog::random_planes(3, 3, seed);
        let opts = CandidateOpts { seed, ..CandidateOpts::for_datum(&datum) };
        let a = serde_json::to_string(&datum::classify_finiteness(&datum, opts)).unwrap();
        let b = serde_json::to_string(&datum::classify_finiteness(&datum, opts)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lp_norm_matches_quadrature(seed in any::<u64>(), n in 1usize..=3, p in 1.0f64..4.0) {
        let mut r = rng(seed);
        let g = random_complex_spec(n, &mut r);
        let half = g.scaled(Complex64::new(0.5, 0.0));
        let split = FunctionSpec::SumOfGaussians { terms: vec![half.clone(), half] };
        let numeric = integrator::lp_norm_numeric(&split, p, &QuadratureOpts::default()).unwrap();
        prop_assert!(!numeric.closed_form);
        let closed = gaussian::lp_norm(&g, p).unwrap();
        prop_assert!((numeric.value / closed - 1.0).abs() <= 1e-6, "{} vs {}", numeric.value, closed);
    }

    #[test]
    fn real_gaussians_attain_hausdorff_young(seed in any::<u64>(), n in 1usize..=3, p in 1.0f64..=2.0) {
        let g = ComplexGaussianSpec::centered(&linalg::random_spd(n, 0.6, &mut rng(seed))).unwrap();
        let lhs = gaussian::lp_norm(&gaussian::fourier(&g).unwrap(), fourier::conjugate(p)).unwrap();
        let rhs = fourier::a_p(p).unwrap().powi(n as i32) * gaussian::lp_norm(&g, p).unwrap();
        prop_assert!((lhs / rhs - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn gaussian_integral_is_continuous(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let g = random_complex_spec(n, &mut r);
        let base = gaussian::gaussian_integral(&g.s, &g.w).unwrap();
        let nudge = linalg::symmetrize(&Mat::from_fn(n, n, |_, _| r.random_range(-1e-8..1e-8)));
        let s2: CMat = &g.s + linalg::complex_from_parts(&Mat::zeros(n, n), &nudge);
        let moved = gaussian::gaussian_integral(&s2, &g.w).unwrap();
        prop_assert!((moved - base).norm() <= 1e-6 * base.norm());
    }

    #[test]
    fn value_has_scaling_symmetry(seed in any::<u64>(), which in 0usize..4, ri in 0usize..4) {
        let (datum, _) = &pool()[which];
        let mut r = rng(seed);
        let t = random_tuple(datum, 0.5, &mut r);
        let v = gaussian_bl::gaussian_bl_value(datum, &t).unwrap().value;
        let s = [0.25, 0.5, 2.0, 4.0][ri];
        let scaled = GaussianTuple::centered(t.a.iter().map(|a| a * s).collect());
        let amps: Vec<f64> = (0..datum.m()).map(|_| r.random_range(0.1..10.0)).collect();
        let vs = gaussian_bl::gaussian_bl_value(datum, &scaled.with_amplitudes(amps)).unwrap().value;
        prop_assert!((vs / v - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn values_never_exceed_the_constant(seed in any::<u64>(), which in 0usize..4, spread in 0.05f64..1.5) {
        let (datum, bl) = &pool()[which];
        let t = random_tuple(datum, spread, &mut rng(seed));
        let v = gaussian_bl::gaussian_bl_value(datum, &t).unwrap().value;
        prop_assert!(v <= bl * (1.0 + 1e-6), "{} > {}", v, bl);
        prop_assert!(*bl >= v - 1e-8);
    }

    #[test]
    fn completing_the_square(seed in any::<u64>(), which in 0usize..4, eps in 1e-3f64..1.0) {
        let (datum, _) = &pool()[which];
        let mut r = rng(seed);
        let t = random_tuple(datum, 0.5, &mut r);
        let x0 = Vector::from_fn(datum.d(), |_, _| r.random_range(-2.0..2.0));
        let consistent = gaussian_bl::consistent_offsets(datum, &x0);
        let c = gaussian_bl::complete_square(datum, &t.clone().with_offsets(consistent.clone())).unwrap().c;
        prop_assert!((c - 1.0).abs() <= 1e-10);

        // a unit direction orthogonal to the consistent subspace, scaled by eps
        let dims = datum.dims();
        let total: usize = dims.iter().sum();
        let b = Mat::from_fn(total, datum.d(), |i, k| {
            let (mut j, mut row) = (0, i);
            while row >= dims[j] { row -= dims[j]; j += 1; }
            datum.map(j)[(row, k)]
        });
        let proj = &b * b.clone().pseudo_inverse(1e-12).unwrap();
        let raw = Vector::from_fn(total, |_, _| r.random_range(-1.0..1.0));
        let off = &raw - &proj * &raw;
        prop_assume!(off.norm() > 1e-6);
        let off = off.normalize() * eps;
        let mut k = 0;
        let perturbed: Vec<Vector> = consistent
            .iter()
            .map(|v| {
                let n = v.len();
                let out = v + off.rows(k, n);
                k += n;
                out
            })
            .collect();
        let c = gaussian_bl::complete_square(datum, &t.with_offsets(perturbed)).unwrap().c;
        prop_assert!(c <= 1.0 + 1e-12);
        prop_assert!(c < 1.0 - 1e-8, "c = {}", c);
    }

    #[test]
    fn phases_only_decrease_the_modulus(seed in any::<u64>(), which in 0usize..4) {
        let (datum, _) = &pool()[which];
        let mut r = rng(seed);
        let base = random_tuple(datum, 0.5, &mut r);
        let phases: Vec<Mat> = datum
            .dims()
            .iter()
            .map(|&k| linalg::symmetrize(&Mat::from_fn(k, k, |_, _| r.random_range(-2.0..2.0))))
            .collect();
        let m = gaussian_bl::modulated_blbp(datum, &base, &phases).unwrap().norm();
        let c = gaussian_bl::centered_blbp_p(datum, &base).unwrap();
        prop_assert!(m <= c * (1.0 + 1e-10));
    }

    #[test]
    fn a_p_is_below_one_inside(p in 1.0001f64..1.9999) {
        let a = fourier::a_p(p).unwrap();
        prop_assert!(a < 1.0 && a > 0.0);
    }

    #[test]
    fn fourier_constant_dominates(a in 0.5f64..=0.75, b in 0.5f64..=0.75, bl in 0.5f64..3.0, snap in any::<bool>()) {
        // three lines in the plane with Σ 1/p_j = 2, every p_j in [1, 2]
        let (a, b) = if snap { (0.5, 0.5) } else { (a, b) };
        let line = |x: f64, y: f64| Mat::from_row_slice(1, 2, &[x, y]);
        let datum = Datum::new(
            2,
            vec![(line(1.0, 0.0), 1.0 / a), (line(0.0, 1.0), 1.0 / b), (line(0.6, 0.8), 1.0 / (2.0 - a - b))],
        )
        .unwrap();
        let f = fourier::fbl_constant(&datum, bl).unwrap();
        if snap {
            prop_assert!((f / bl - 1.0).abs() <= 1e-12);
        } else if a > 0.5 || b > 0.5 || a + b > 1.0 {
            prop_assert!(f > bl);
        }
    }

    #[test]
    fn hausdorff_young_holds(seed in any::<u64>(), p in 1.0f64..=2.0, kind in 0usize..3) {
        let mut r = rng(seed);
        let g = random_complex_spec(1, &mut r);
        let f = match kind {
            0 => FunctionSpec::gaussian(g),
            1 => FunctionSpec::SumOfGaussians { terms: vec![g, random_complex_spec(1, &mut r)] },
            _ => FunctionSpec::Bump { center: vec![r.random_range(-1.0..1.0)], radius: r.random_range(0.5..2.0), amplitude: 1.0, power: 1.0 },
        };
        let hy = fourier::hy_ratio(&f, p, &HyOpts { stability: false, ..HyOpts::default() }).unwrap();
        prop_assert!(hy.ratio <= 1.0 + 1e-6, "ratio {}", hy.ratio);
    }

    #[test]
    fn monte_carlo_is_seeded(seed in any::<u64>()) {
        let datum = catalog::frame_120();
        let fs = lab::geometric_extremizer(&datum);
        let opts = QuadratureOpts::monte_carlo(2000, seed);
        let a = integrator::bl_integral_numeric(&datum, &fs, &opts).unwrap();
        let b = integrator::bl_integral_numeric(&datum, &fs, &opts).unwrap();
        prop_assert_eq!(a.value, b.value);
    }

    #[test]
    fn phase_identity_is_exact(seed in any::<u64>(), shape in 0usize..3) {
        let (d, m) = [(1, 2), (2, 4), (2, 5)][shape];
        let mut r = rng(seed);
        let vs: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let (a, nullity) = lab::phase_nullspace(&vs).unwrap();
        prop_assert_eq!(nullity, m - d * (d + 1) / 2);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() <= 1e-12);
        prop_assert!(a.iter().find(|x| x.abs() > 1e-12).unwrap() > &0.0);
        let mut total = Mat::zeros(d, d);
        for (aj, v) in a.iter().zip(&vs) {
            let v = Vector::from_column_slice(v);
            total += &v * v.transpose() * *aj;
        }
        prop_assert!(linalg::sym_op_norm(&total) <= 1e-12);
    }

    #[test]
    fn fits_recover_power_laws(slope in -4.0f64..4.0, c in 0.01f64..100.0, n in 6usize..20) {
        let x = lab::log_grid(1e-3, 1e-1, n);
        let y: Vec<f64> = x.iter().map(|t| c * t.powf(slope)).collect();
        let fit = lab::fit_exponent(&x, &y).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-9);
        prop_assert!(fit.within(slope, 1e-6));
    }

    #[test]
    fn implied_c_meets_its_target(ds in prop::collection::vec(0.0f64..3.0, 1..5), target in 1e-6f64..0.5) {
        if let Some(c) = lab::implied_c(&ds, target) {
            let prod: f64 = ds.iter().map(|d| 1.0 - c * d * d).product();
            prop_assert!(prod >= target * (1.0 - 1e-9));
        } else {
            prop_assert!(ds.iter().all(|d| *d == 0.0));
        }
    }

    #[test]
    fn config_hash_ignores_key_order(seed in any::<u64>(), restarts in 1usize..10, tol in 1e-14f64..1e-8) {
        let cfg = json!({
            "datum": "frame-120",
            "seed": seed % 1000,
            "optimizer": {"restarts": restarts, "tol": tol, "grad_tol": 1e-10},
            "quadrature": {"points_per_axis": 20, "bump_points": 64.0},
            "experiment": {"name": "opt1", "points": 7},
        });
        let shuffled = shuffle(&cfg, &mut rng(seed));
        let load = |v: Value| RunConfig::from_value(v, Path::new("."), &Overrides::default()).unwrap();
        let (a, b) = (load(cfg), load(shuffled));
        prop_assert_eq!(a.canonical_json(), b.canonical_json());
        prop_assert_eq!(a.hash(), b.hash());
    }
}

/// Reverses or rotates the keys of every object, depending on the seed.
fn shuffle(v: &Value, r: &mut ChaCha8Rng) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> =
                m.iter().map(|(k, v)| (k.clone(), shuffle(v, r))).collect();
            let k = r.random_range(0..entries.len().max(1));
            entries.rotate_left(k);
            if r.random::<bool>() {
                entries.reverse();
            }
            Value::Object(entries.into_iter().collect::<Map<_, _>>())
        }
        Value::Array(a) => Value::Array(a.iter().map(|x| shuffle(x, r)).collect()),
        other => other.clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn deficit_reports_are_consistent(seed in any::<u64>(), amp in 0.0f64..0.5) {
        let datum = catalog::frame_120();
        let mut r = rng(seed);
        let base = lab::geometric_extremizer(&datum);
        let fs: Vec<FunctionSpec> = base
            .iter()
            .map(|g| FunctionSpec::GaussianPlusBump {
                gaussian: g.as_closed_gaussian().unwrap(),
                amplitude: amp * r.random_range(0.0..1.0),
                center: vec![r.random_range(-1.0..1.0)],
                radius: r.random_range(0.5..1.5),
            })
            .collect();
        let rep = lab::deficit_report(
            &datum,
            &fs,
            1.0,
            &DeficitOpts { distance: fast_distance(), both_classes: true, ..DeficitOpts::default() },
        )
        .unwrap();
        prop_assert!(rep.deficit >= -1e-8 && rep.deficit <= 1.0);
        prop_assert!(rep.blbp <= 1.0 + 1e-4);
        prop_assert!(rep.dist_ratios.iter().all(|d| *d >= 0.0));
        // nonnegative inputs: the positive and complex classes give the same distance
        let complex = rep.complex_dist_ratios.as_ref().unwrap();
        for (a, b) in rep.dist_ratios.iter().zip(complex) {
            prop_assert!((a - b).abs() <= 1e-4 * a.max(1e-3), "{} vs {}", a, b);
        }
    }

    #[test]
    fn distance_is_an_upper_bound(seed in any::<u64>(), p in 1.1f64..2.5) {
        let mut r = rng(seed);
        let g = |r: &mut ChaCha8Rng| ComplexGaussianSpec::centered(&Mat::from_element(1, 1, r.random_range(0.5..2.0))).unwrap();
        let f = FunctionSpec::SumOfGaussians { terms: vec![g(&mut r), g(&mut r).scaled(Complex64::new(0.5, 0.0))] };
        let res = integrator::dist_to_gaussians(&f, p, GaussianClass::RealPositive, &fast_distance()).unwrap();
        let grid = Grid::for_norm(&[&f], p, &QuadratureOpts::default()).unwrap().unwrap();
        for _ in 0..4 {
            let h = g(&mut r).scaled(Complex64::new(r.random_range(0.5..2.0), 0.0));
            let direct = grid
                .integrate(|y| Complex64::new((f.eval(y) - h.eval(y)).norm().powf(p), 0.0))
                .value
                .re
                .powf(1.0 / p);
            prop_assert!(res.dist_upper_bound <= direct + 1e-9);
        }
    }

    #[test]
    fn optimizer_is_deterministic(seed in any::<u64>()) {
        let datum = catalog::random_rank_one(2, 3, seed);
        let opts = OptimizerOpts { restarts: 2, seed, ..OptimizerOpts::default() };
        let a = optimizer::bl_constant(&datum, &opts).unwrap();
        let b = optimizer::bl_constant(&datum, &opts).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn reductions_are_geometric(seed in any::<u64>()) {
        let datum = catalog::random_rank_one(2, 4, seed);
        let opt = optimizer::bl_constant(&datum, &OptimizerOpts::default()).unwrap();
        let red = optimizer::geometric_reduce(&datum, &opt.maximizer).unwrap();
        prop_assert!(red.check.geometric);
        prop_assert!(datum::scaling_defect(&red.datum).abs() <= 1e-12);
        prop_assert!((red.value_at_identity - 1.0).abs() <= 1e-8);
        prop_assert!(red.el_residual_at_identity < 1e-8);
        let again = optimizer::bl_constant(&red.datum, &OptimizerOpts::default()).unwrap();
        prop_assert!((again.value - 1.0).abs() <= 1e-6);
    }
}
