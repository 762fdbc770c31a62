//! End-to-end acceptance run: one pass/fail line per criterion.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use blstab::catalog;
use blstab::cli;
use blstab::datum::Datum;
use blstab::fourier::{self, HyOpts};
use blstab::gaussian::{ComplexGaussianSpec, RealGaussian};
use blstab::gaussian_bl::{self, GaussianTuple};
use blstab::integrator::{self, FunctionSpec, QuadratureOpts};
use blstab::linalg::{self, Mat, Vector};
use blstab::optimizer::{self, OptimizerOpts};
use blstab::stability_lab::{self as lab, Direction, HolderProfile, SweepOpts, TupleStabilityOpts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let o = f();
    println!(
        "criterion {id:>2} [{}] {name}: {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        t0.elapsed().as_secs_f64()
    );
    o.pass
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn geometric_constants() -> Outcome {
    let coord = Datum::new(
        2,
        vec![
            (Mat::from_row_slice(1, 2, &[1.0, 0.0]), 1.0),
            (Mat::from_row_slice(1, 2, &[0.0, 1.0]), 1.0),
        ],
    )
    .unwrap();
    let mut data = vec![
        ("coordinate", coord),
        ("holder-3-1.5", catalog::holder_pair(3.0, 1.5)),
        ("frame-120", catalog::frame_120()),
    ];
    for seed in [11, 12] {
        let d = catalog::random_rank_one(2, 4, seed);
        let opt = optimizer::bl_constant(&d, &OptimizerOpts::default()).unwrap();
        let red = optimizer::geometric_reduce(&d, &opt.maximizer).unwrap();
        assert!(red.check.geometric);
        data.push(("reduced", red.datum));
    }
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for (_, d) in &data {
        let t0 = Instant::now();
        let r = optimizer::bl_constant(d, &OptimizerOpts::default()).unwrap();
        slowest = slowest.max(t0.elapsed());
        worst = worst.max((r.value - 1.0).abs());
    }
    Outcome {
        pass: worst <= 1e-6 && slowest < Duration::from_secs(30),
        detail: format!(
            "max |BL − 1| = {worst:.2e}, slowest {:.2} s",
            slowest.as_secs_f64()
        ),
    }
}

/// Random datum with `d ≤ 3` satisfying the scaling condition.
fn random_datum(rng: &mut ChaCha8Rng, k: u64) -> Datum {
    match k % 3 {
        0 => catalog::random_rank_one(2, 3, rng.random()),
        1 => catalog::random_rank_one(3, 4, rng.random()),
        _ => catalog::random_planes(3, 2, rng.random()),
    }
}

fn closed_form_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = QuadratureOpts::default();
    let mut worst_centered: f64 = 0.0;
    for k in 0..50 {
        let d = random_datum(&mut rng, k);
        let a: Vec<Mat> = d
            .dims()
            .iter()
            .map(|&n| linalg::random_spd(n, 0.5, &mut rng))
            .collect();
        let value = gaussian_bl::gaussian_bl_value(&d, &GaussianTuple::centered(a.clone()))
            .unwrap()
            .value;
        // q-convention input f_j corresponds to f_j^{q_j} here
        let fs: Vec<FunctionSpec> = a
            .iter()
            .zip(d.factors())
            .map(|(a, f)| {
                FunctionSpec::gaussian(ComplexGaussianSpec::centered(&(a * f.q())).unwrap())
            })
            .collect();
        let r = integrator::blbp_ratio(&d, &fs, &q).unwrap().ratio;
        worst_centered = worst_centered.max(rel(r, value));
    }
    let mut worst_offset: f64 = 0.0;
    for k in 0..100 {
        let d = random_datum(&mut rng, k);
        let a: Vec<Mat> = d
            .dims()
            .iter()
            .map(|&n| linalg::random_spd(n, 0.5, &mut rng))
            .collect();
        let v: Vec<Vector> = d
            .dims()
            .iter()
            .map(|&n| Vector::from_fn(n, |_, _| rng.random_range(-0.7..0.7)))
            .collect();
        let t = GaussianTuple::centered(a.clone()).with_offsets(v.clone());
        let value = gaussian_bl::offset_gaussian_ratio(&d, &t).unwrap();
        let fs: Vec<FunctionSpec> = a
            .iter()
            .zip(&v)
            .zip(d.factors())
            .map(|((a, v), f)| {
                FunctionSpec::gaussian(
                    RealGaussian::new(1.0, a * f.q(), v.clone())
                        .unwrap()
                        .to_complex(),
                )
            })
            .collect();
        let r = integrator::blbp_ratio(&d, &fs, &q).unwrap().ratio;
        worst_offset = worst_offset.max(rel(r, value));
    }
    Outcome {
        pass: worst_centered <= 1e-5 && worst_offset <= 1e-3,
        detail: format!("centered max rel {worst_centered:.2e}, offset max rel {worst_offset:.2e}"),
    }
}

/// `det(M)^{−1/2} ∏ a_j^{q_j/2}` for scalar tuples on the Young datum.
fn young_value(a: [f64; 3]) -> f64 {
    let q = 2.0 / 3.0;
    let vs = [[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]];
    let mut m = [[0.0; 2]; 2];
    for (aj, v) in a.iter().zip(vs) {
        for i in 0..2 {
            for k in 0..2 {
                m[i][k] += q * aj * v[i] * v[k];
            }
        }
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    det.powf(-0.5) * a.iter().map(|x| x.powf(q / 2.0)).product::<f64>()
}

fn young_brute_force() -> Outcome {
    // by the symmetry exchanging the first two slots, tuples (1, 1, s) suffice
    let f = |s: f64| young_value([1.0, 1.0, s]);
    let (mut lo, mut hi) = (1e-3_f64, 1e3_f64);
    for _ in 0..6 {
        let grid: Vec<f64> = (0..=200)
            .map(|k| lo * (hi / lo).powf(k as f64 / 200.0))
            .collect();
        let best = (0..grid.len())
            .max_by(|&i, &j| f(grid[i]).total_cmp(&f(grid[j])))
            .unwrap();
        lo = grid[best.saturating_sub(1)];
        hi = grid[(best + 1).min(grid.len() - 1)];
    }
    let brute = f(0.5 * (lo + hi));
    let opt =
        optimizer::bl_constant(&catalog::young_trilinear(), &OptimizerOpts::default()).unwrap();
    // sharp Young constant on the line: A_{3/2}^3
    let beckner = fourier::a_p(1.5).unwrap().powi(3);
    Outcome {
        pass: rel(opt.value, brute) <= 1e-6,
        detail: format!(
            "optimizer {:.10}, brute force {brute:.10}, A_{{3/2}}^3 = {beckner:.10}",
            opt.value
        ),
    }
}

fn fourier_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in [
        catalog::frame_120(),
        catalog::young_trilinear(),
        catalog::loomis_whitney(),
    ] {
        let bl = optimizer::bl_constant(&d, &OptimizerOpts::default())
            .unwrap()
            .value;
        let predicted = fourier::fbl_constant(&d, bl).unwrap();
        let direct = fourier::fourier_side_gaussian_sup(&d, 4, 5).unwrap();
        worst = worst.max(rel(direct, predicted));
    }
    Outcome {
        pass: worst <= 1e-4,
        detail: format!("max rel gap {worst:.2e} over 3 data"),
    }
}

fn hausdorff_young() -> Outcome {
    let opts = HyOpts::default();
    let mut closed: f64 = 0.0;
    let mut grid: f64 = 0.0;
    for (a, p) in [(0.7, 1.2), (PI, 4.0 / 3.0), (2.5, 1.6), (1.0, 1.9)] {
        let g = ComplexGaussianSpec::centered(&Mat::from_element(1, 1, a)).unwrap();
        closed = closed.max(
            (fourier::hy_ratio(&FunctionSpec::gaussian(g.clone()), p, &opts)
                .unwrap()
                .ratio
                - 1.0)
                .abs(),
        );
        // two halves of the same Gaussian force the grid transform
        let half = g.scaled(num_complex::Complex64::new(0.5, 0.0));
        let split = FunctionSpec::SumOfGaussians {
            terms: vec![half.clone(), half],
        };
        let r = fourier::hy_ratio(&split, p, &opts).unwrap();
        assert!(!r.closed_form);
        grid = grid.max((r.ratio - 1.0).abs());
    }
    let bump = FunctionSpec::Bump {
        center: vec![0.0],
        radius: 1.0,
        amplitude: 1.0,
        power: 1.0,
    };
    let b = fourier::hy_ratio(&bump, 4.0 / 3.0, &opts).unwrap();
    let c = b.implied_c.unwrap_or(0.0);
    Outcome {
        pass: closed <= 1e-9 && grid <= 1e-3 && b.ratio < 1.0 - 1e-4 && c > 0.0,
        detail: format!(
            "closed {closed:.1e}, grid {grid:.1e}, bump ratio {:.6}, implied c {c:.3e}",
            b.ratio
        ),
    }
}

fn sharpened_sweep() -> Outcome {
    let t0 = Instant::now();
    let r = lab::sharpened_sweep(&catalog::frame_120(), 1.0, &SweepOpts::default()).unwrap();
    let elapsed = t0.elapsed();
    Outcome {
        pass: r.passed() && r.trials == 500 && elapsed < Duration::from_secs(1800),
        detail: format!(
            "{} violations in {} tuples, min implied c {:.3e}, min deficit/ΣD² {:.3e}",
            r.violations,
            r.trials,
            r.min_implied_c.unwrap_or(0.0),
            r.min_deficit_ratio.unwrap_or(0.0)
        ),
    }
}

fn opt1() -> Outcome {
    let f = catalog::frame_120();
    let g = lab::geometric_extremizer(&f);
    let h = &Direction::defaults(3)[0];
    let r = lab::opt1_experiment(
        &f,
        &g,
        h,
        &lab::log_grid(1e-3, 1e-1, 8),
        &SweepOpts::default(),
    )
    .unwrap();
    Outcome {
        pass: r.fit.within(2.0, 0.1) && r.kappa > 0.0 && r.max_ratio <= 1.0 + 1e-9,
        detail: format!(
            "deficit slope {:.4} ± {:.4}, distance slope {:.4}, κ {:.3e}",
            r.fit.slope, r.fit.halfwidth, r.distance_fit.slope, r.kappa
        ),
    }
}

fn opt2() -> Outcome {
    let f = catalog::holder_pair(3.0, 1.5);
    let r = lab::opt2_experiment(
        &f,
        &lab::log_grid(1e-1, 1e-3, 8),
        &[1.0],
        1.0,
        &SweepOpts::default(),
    )
    .unwrap();
    Outcome {
        pass: r.fit.within(3.0, 0.15) && r.distance_fit.within(1.0, 0.1),
        detail: format!(
            "deficit slope {:.4}, distance slope {:.4}, squared bound fails: {}",
            r.fit.slope, r.distance_fit.slope, r.squared_bound_fails
        ),
    }
}

fn corollary() -> Outcome {
    let f = catalog::frame_120();
    let g = lab::geometric_extremizer(&f);
    let r = lab::corollary_sweep(
        &f,
        &g,
        &Direction::defaults(3),
        &lab::default_eps(),
        &SweepOpts::default(),
    )
    .unwrap();
    Outcome {
        pass: r.fit.within(2.0, 0.2),
        detail: format!(
            "slope {:.4} ± {:.4}, inversion constant {:.3}",
            r.fit.slope, r.fit.halfwidth, r.inversion_constant
        ),
    }
}

fn complex_extremizer() -> Outcome {
    let vs = [
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
        vec![1.0, -1.0],
    ];
    let r = lab::complex_extremizer_build(
        &vs,
        1.0,
        &OptimizerOpts::default(),
        &integrator::DistanceOpts::default(),
    )
    .unwrap();
    let dmin = r
        .dist
        .iter()
        .flatten()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Outcome {
        pass: r.phase_residual <= 1e-12
            && (r.blbp_modulated - r.bl_const).abs() <= 1e-6
            && dmin >= 1e-2,
        detail: format!(
            "residual {:.1e}, |blbp| {:.9} vs BL {:.9}, min distance {dmin:.4}",
            r.phase_residual, r.blbp_modulated, r.bl_const
        ),
    }
}

fn tuple_stability() -> Outcome {
    let r = lab::tuple_stability_experiment(&catalog::frame_120(), &TupleStabilityOpts::default())
        .unwrap();
    Outcome {
        pass: r.restarts_agree
            && r.restart_spread <= 1e-5
            && r.near_ok
            && r.consistent_offset_change <= 1e-10,
        detail: format!(
            "restart spread {:.1e}, {} near samples within {:.4}, offset change {:.1e}",
            r.restart_spread, r.near_samples, r.near_max_dist, r.consistent_offset_change
        ),
    }
}

fn holder_non_stability() -> Outcome {
    let q = QuadratureOpts::default();
    let dopts = integrator::DistanceOpts::default();
    let a =
        lab::holder_equality_family(1, &[2.0, 2.0], HolderProfile::Bump, 1.0, &q, &dopts).unwrap();
    let b = lab::holder_equality_family(1, &[3.0, 3.0, 3.0], HolderProfile::Bump, 1.0, &q, &dopts)
        .unwrap();
    let dmin = a
        .dist
        .iter()
        .chain(&b.dist)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Outcome {
        pass: a.flagged && b.flagged,
        detail: format!(
            "blbp {:.2e} / {:.2e} from 1, min distance {dmin:.4}",
            (a.blbp - 1.0).abs(),
            (b.blbp - 1.0).abs()
        ),
    }
}

/// Every file of a run directory, with wall-clock fields dropped from the record.
fn run_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let name = e.file_name().to_string_lossy().into_owned();
            let mut bytes = std::fs::read(e.path()).unwrap();
            if name == "record.json" {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                let m = v.as_object_mut().unwrap();
                m.remove("started_unix_ms");
                m.remove("finished_unix_ms");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            (name, bytes)
        })
        .collect();
    out.sort();
    out
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let bump = json!({"variant": "Bump", "center": [0.3], "radius": 1.0});
    let gauss = json!({"variant": "ClosedGaussian", "gaussian": {"c_re": 1.0, "S_re": [[2.0]]}});
    let runs: Vec<(Vec<&str>, serde_json::Value)> = vec![
        (vec!["check"], json!({"datum": "loomis-whitney"})),
        (
            vec!["constant"],
            json!({"datum": "young-trilinear", "seed": 7}),
        ),
        (
            vec!["reduce"],
            json!({"datum": {"d": 2, "factors": [
            {"matrix": [[1.0, 0.2]], "p": 1.5}, {"matrix": [[0.3, 1.0]], "p": 1.5},
            {"matrix": [[1.0, -0.7]], "p": 1.5}]}}),
        ),
        (
            vec!["fourier"],
            json!({"datum": "frame-120", "function": bump, "p": 1.5}),
        ),
        (
            vec!["deficit"],
            json!({"datum": "frame-120", "bl_const": 1.0,
            "tuple": [bump, gauss, gauss], "distance": {"starts": 4}}),
        ),
        (vec!["distance"], json!({"function": bump, "p": 1.5})),
        (
            vec!["experiment", "sweep"],
            json!({"datum": "frame-120", "bl_const": 1.0, "experiment": {"trials": 24}}),
        ),
        (vec!["experiment", "opt1"], json!({"datum": "frame-120"})),
        (vec!["experiment", "opt2"], json!({"datum": "holder-3-1.5"})),
        (
            vec!["experiment", "corollary"],
            json!({"datum": "frame-120", "experiment": {"points": 6}}),
        ),
        (
            vec!["experiment", "tuple"],
            json!({"datum": "frame-120", "experiment": {"samples": 40}}),
        ),
        (vec!["experiment", "holder"], json!({})),
        (
            vec!["experiment", "complex"],
            json!({"experiment": {"vectors": [[1.0], [-1.0]]}, "distance": {"starts": 4}}),
        ),
    ];
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (k, (cmd, cfg)) in runs.iter().enumerate() {
        let path = tmp.path().join(format!("cfg{k}.json"));
        std::fs::write(&path, cfg.to_string()).unwrap();
        let argv = |config: &std::path::Path, out: &std::path::Path| {
            let mut a: Vec<String> = vec!["blstab".into()];
            a.extend(cmd.iter().map(|s| s.to_string()));
            a.extend(["--config".into(), config.display().to_string()]);
            a.extend(["--output-dir".into(), out.display().to_string()]);
            a
        };
        let (out1, out2) = (first.join(k.to_string()), second.join(k.to_string()));
        let code = cli::dispatch(argv(&path, &out1));
        let run_dir = std::fs::read_dir(&out1)
            .unwrap()
            .next()
            .unwrap()
            .unwrap()
            .path();
        // rerun from the persisted canonical config
        let code2 = cli::dispatch(argv(&run_dir.join("config.json"), &out2));
        let again = out2.join(run_dir.file_name().unwrap());
        if code != 0 || code != code2 || !again.is_dir() || run_files(&run_dir) != run_files(&again)
        {
            mismatches.push(format!("{} (exit {code}/{code2})", cmd.join(" ")));
        }
        compared += run_files(&run_dir).len();
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: format!(
            "{} runs, {compared} files identical on rerun{}",
            runs.len(),
            if mismatches.is_empty() {
                String::new()
            } else {
                format!("; differ: {mismatches:?}")
            }
        ),
    }
}

#[test]
fn acceptance() {
    let results = [
        run(1, "geometric constants", geometric_constants),
        run(2, "closed-form oracles", closed_form_oracles),
        run(3, "Young trilinear brute force", young_brute_force),
        run(4, "Fourier invariance", fourier_invariance),
        run(5, "Hausdorff-Young", hausdorff_young),
        run(6, "sharpened-inequality sweep", sharpened_sweep),
        run(7, "power-2 perturbation exponent", opt1),
        run(8, "translated-bump exponents", opt2),
        run(9, "deficit against squared distance", corollary),
        run(10, "quadratic-phase extremizer", complex_extremizer),
        run(11, "tuple stability", tuple_stability),
        run(
            12,
            "Hölder equality without stability",
            holder_non_stability,
        ),
        run(
            13,
            "reproducibility through the command line",
            reproducibility,
        ),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
