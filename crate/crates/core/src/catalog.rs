//! Named data used throughout tests, experiments and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datum::Datum;
use crate::linalg::Mat;

/// Coordinate projections `(x, y) ↦ y` and `(x, y) ↦ x` with `p = (1, 1)`.
pub fn loomis_whitney() -> Datum {
    Datum::rank_one(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[1.0, 1.0]).unwrap()
}

/// Two identity maps on the line (Hölder's inequality).
pub fn holder_pair(p1: f64, p2: f64) -> Datum {
    Datum::rank_one(&[vec![1.0], vec![1.0]], &[p1, p2]).unwrap()
}

/// `m` identity maps on the line, each with exponent `m`.
pub fn holder_equal(m: usize) -> Datum {
    Datum::rank_one(&vec![vec![1.0]; m], &vec![m as f64; m]).unwrap()
}

/// Three unit vectors at 120° in the plane with `p_j = 3/2`; geometric.
pub fn frame_120() -> Datum {
    let vecs: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            vec![t.cos(), t.sin()]
        })
        .collect();
    Datum::rank_one(&vecs, &[1.5; 3]).unwrap()
}

/// Trilinear Young form `∫ f(x) g(y) h(x − y)` with `p_j = 3/2`.
pub fn young_trilinear() -> Datum {
    Datum::rank_one(
        &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, -1.0]],
        &[1.5; 3],
    )
    .unwrap()
}

/// Four functionals in the plane with `p_j = 2` whose squares are linearly
/// dependent: `2x² + 2y² − (x+y)² − (x−y)² = 0`.
pub fn quadratic_phase_square() -> Datum {
    Datum::rank_one(
        &[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, -1.0],
        ],
        &[2.0; 4],
    )
    .unwrap()
}

/// Satisfies the scaling condition but the line `span{e_2}` is supercritical,
/// so the constant is infinite.
pub fn supercritical_line() -> Datum {
    Datum::rank_one(
        &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        &[1.0, 2.0, 2.0],
    )
    .unwrap()
}

/// `m` Gaussian random functionals on `R^d` with `p_j = m/d`.
pub fn random_rank_one(d: usize, m: usize, seed: u64) -> Datum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vecs: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    Datum::rank_one(&vecs, &vec![m as f64 / d as f64; m]).unwrap()
}

/// `m` random surjections `R^d -> R^2` with equal exponents `p = 2m/d`.
pub fn random_planes(d: usize, m: usize, seed: u64) -> Datum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 2.0 * m as f64 / d as f64;
    let factors = (0..m)
        .map(|_| (Mat::from_fn(2, d, |_, _| rng.sample(StandardNormal)), p))
        .collect();
    Datum::new(d, factors).unwrap()
}

/// Looks a catalog datum up by name.
pub fn by_name(name: &str) -> Option<Datum> {
    Some(match name {
        "loomis-whitney" => loomis_whitney(),
        "holder-2-2" => holder_pair(2.0, 2.0),
        "holder-3-1.5" => holder_pair(3.0, 1.5),
        "frame-120" => frame_120(),
        "young-trilinear" => young_trilinear(),
        "quadratic-phase-square" => quadratic_phase_square(),
        "supercritical-line" => supercritical_line(),
        _ => return None,
    })
}
