use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::datum::{self, Datum};
use crate::error::{BlError, Result};
use crate::gaussian::ComplexGaussianSpec;
use crate::gaussian_bl::{self, GaussianTuple};
use crate::integrator::{
    blbp_ratio, dist_to_gaussians, l2_distance_closed_form, DistanceOpts, FunctionSpec,
    GaussianClass, QuadratureOpts,
};
use crate::linalg::{self, Mat};
use crate::optimizer::{self, OptimizerOpts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HolderProfile {
    /// The unit bump on the ball of radius 1.
    Bump,
    /// `e^{−π|y|²}`; every power is again a Gaussian.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderEquality {
    pub exponents: Vec<f64>,
    pub profile: HolderProfile,
    pub r: f64,
    pub blbp: f64,
    pub dist: Vec<f64>,
    /// `blbp = 1` within the tolerance.
    pub equality: bool,
    /// Every factor is at least 0.1 away from the Gaussians.
    pub far_from_gaussians: bool,
    /// Equality without closeness: the stability statement fails.
    pub flagged: bool,
}

/// `f_j = ψ^{r/p_j}` on `m` copies of the identity map: all `|f_j|^{p_j}` equal
/// `ψ^r`, so Hölder's inequality is an equality whatever `ψ` is.
pub fn holder_equality_family(
    d: usize,
    exponents: &[f64],
    profile: HolderProfile,
    r: f64,
    quadrature: &QuadratureOpts,
    distance: &DistanceOpts,
) -> Result<HolderEquality> {
    let q: f64 = exponents.iter().map(|p| 1.0 / p).sum();
    if (q - 1.0).abs() > 1e-12 {
        return Err(BlError::Exponent(format!("Σ 1/p_j = {q}, expected 1")));
    }
    if !(r > 0.0) {
        return Err(BlError::Invalid("r must be positive".into()));
    }
    let datum = Datum::new(
        d,
        exponents
            .iter()
            .map(|&p| (Mat::identity(d, d), p))
            .collect(),
    )?;
    let fs: Vec<FunctionSpec> = exponents
        .iter()
        .map(|&p| match profile {
            HolderProfile::Bump => Ok(FunctionSpec::Bump {
                center: vec![0.0; d],
                radius: 1.0,
                amplitude: 1.0,
                power: r / p,
            }),
            HolderProfile::Gaussian => Ok(FunctionSpec::gaussian(ComplexGaussianSpec::centered(
                &(Mat::identity(d, d) * (PI * r / p)),
            )?)),
        })
        .collect::<Result<_>>()?;
    // |f_j|^{p_j} must agree pointwise
    for k in 0..8 {
        let y = vec![-0.9 + 0.25 * k as f64; d];
        let vals: Vec<f64> = fs
            .iter()
            .zip(exponents)
            .map(|(f, p)| f.eval(&y).norm().powf(*p))
            .collect();
        if vals
            .iter()
            .any(|v| (v - vals[0]).abs() > 1e-12 * vals[0].max(1e-300))
        {
            return Err(BlError::Numerical(
                "powers |f_j|^{p_j} are not proportional".into(),
            ));
        }
    }
    let blbp = blbp_ratio(&datum, &fs, quadrature)?.ratio;
    let dist = fs
        .iter()
        .zip(exponents)
        .map(|(f, &p)| Ok(dist_to_gaussians(f, p, GaussianClass::RealPositive, distance)?.relative))
        .collect::<Result<Vec<f64>>>()?;
    let equality = (blbp - 1.0).abs() <= 1e-8;
    let far_from_gaussians = dist.iter().all(|&v| v >= 0.1);
    Ok(HolderEquality {
        exponents: exponents.to_vec(),
        profile,
        r,
        blbp,
        equality,
        far_from_gaussians,
        flagged: equality && far_from_gaussians,
        dist,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexExtremizer {
    pub d: usize,
    pub m: usize,
    pub p: f64,
    pub general_position: bool,
    /// Unit nullspace vector, first nonzero coordinate positive.
    pub a: Vec<f64>,
    pub nullity: usize,
    /// `‖Σ a_j v_j v_jᵀ‖`.
    pub phase_residual: f64,
    pub bl_const: f64,
    /// `p`-convention Gaussian extremizer, `f_j = exp(−C_j y²)`.
    pub base: Vec<f64>,
    pub blbp_base: f64,
    pub blbp_modulated: f64,
    /// Relative `L²`-type distances of the modulated factors to complex
    /// Gaussians: the smaller of the closed-form and grid searches.
    pub dist: Vec<Option<f64>>,
}

fn quadratic_coordinates(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut out: Vec<f64> = v.iter().map(|x| x * x).collect();
    for i in 0..d {
        for k in i + 1..d {
            out.push(std::f64::consts::SQRT_2 * v[i] * v[k]);
        }
    }
    out
}

/// Unit nullspace vector of the coefficient map `a ↦ Σ a_j ⟨x, v_j⟩²`.
pub fn phase_nullspace(vectors: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
    let m = vectors.len();
    let rows: Vec<Vec<f64>> = vectors.iter().map(|v| quadratic_coordinates(v)).collect();
    let k = rows[0].len();
    let qt = Mat::from_fn(k, m, |i, j| rows[j][i]);
    let null = linalg::null_space_basis(&qt);
    if null.nrows() == 0 {
        return Err(BlError::Invalid(
            "no phase extremizer from this construction (trivial nullspace)".into(),
        ));
    }
    let mut a: Vec<f64> = null.row(0).iter().cloned().collect();
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let lead = a.iter().find(|x| x.abs() > 1e-12).cloned().unwrap_or(1.0);
    let s = lead.signum() / n;
    a.iter_mut().for_each(|x| *x *= s);
    // canonical zeros
    a.iter_mut().for_each(|x| {
        if x.abs() < 1e-15 {
            *x = 0.0
        }
    });
    Ok((a, null.nrows()))
}

/// Gaussian extremizer times quadratic phases `e^{i a_j y²}` whose total
/// phase `Σ a_j ⟨x, v_j⟩²` vanishes identically, so the value is unchanged.
pub fn complex_extremizer_build(
    vectors: &[Vec<f64>],
    phase_scale: f64,
    optimizer: &OptimizerOpts,
    distance: &DistanceOpts,
) -> Result<ComplexExtremizer> {
    let m = vectors.len();
    let d = vectors.first().map(|v| v.len()).unwrap_or(0);
    if d == 0 {
        return Err(BlError::Dimension("no vectors".into()));
    }
    let p = m as f64 / d as f64;
    let datum = Datum::rank_one(vectors, &vec![p; m])?;
    let (a, nullity) = phase_nullspace(vectors)?;
    let mut total = Mat::zeros(d, d);
    for (aj, v) in a.iter().zip(vectors) {
        let v = linalg::Vector::from_column_slice(v);
        total += &v * v.transpose() * *aj;
    }
    let phase_residual = linalg::sym_op_norm(&total);

    let opt = optimizer::bl_constant(&datum, optimizer)?;
    if opt.divergence_flag || !opt.value.is_finite() {
        return Err(BlError::Invalid(
            "the constant is infinite for this configuration".into(),
        ));
    }
    let c: Vec<Mat> = opt.maximizer.a.iter().map(|x| x / p).collect();
    let base = GaussianTuple::centered(c.clone());
    let blbp_base = gaussian_bl::centered_blbp_p(&datum, &base)?;
    let phases: Vec<Mat> = a
        .iter()
        .map(|x| Mat::from_element(1, 1, x * phase_scale))
        .collect();
    let blbp_modulated = gaussian_bl::modulated_blbp(&datum, &base, &phases)?.norm();

    let mut dist = Vec::with_capacity(m);
    for (cj, ph) in c.iter().zip(&phases) {
        if ph[(0, 0)] == 0.0 {
            dist.push(None);
            continue;
        }
        let g = ComplexGaussianSpec::centered(cj)?.modulated(ph);
        let f = FunctionSpec::gaussian(g.clone());
        let grid = dist_to_gaussians(&f, p, GaussianClass::Complex, distance)?.relative;
        let best = if p == 2.0 {
            grid.min(l2_distance_closed_form(
                &g,
                distance.starts.max(4),
                distance.seed,
            )?)
        } else {
            grid
        };
        dist.push(Some(best));
    }

    Ok(ComplexExtremizer {
        d,
        m,
        p,
        general_position: datum::general_position(vectors),
        a,
        nullity,
        phase_residual,
        bl_const: opt.value,
        base: c.iter().map(|x| x[(0, 0)]).collect(),
        blbp_base,
        blbp_modulated,
        dist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_examples() {
        let (a, k) = phase_nullspace(&[vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(k, 1);
        let s = 0.5f64.sqrt();
        assert!((a[0] - s).abs() < 1e-14 && (a[1] + s).abs() < 1e-14);

        let vs = [
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, -1.0],
        ];
        let (a, k) = phase_nullspace(&vs).unwrap();
        assert_eq!(k, 1);
        let n = 10f64.sqrt();
        for (x, e) in a.iter().zip([2.0, 2.0, -1.0, -1.0]) {
            assert!((x - e / n).abs() < 1e-12);
        }
        assert!(phase_nullspace(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn line_pair_build() {
        let r = complex_extremizer_build(
            &[vec![1.0], vec![-1.0]],
            1.0,
            &OptimizerOpts::default(),
            &DistanceOpts {
                starts: 4,
                ..DistanceOpts::default()
            },
        )
        .unwrap();
        assert!(r.phase_residual < 1e-12);
        assert!((r.bl_const - 1.0).abs() < 1e-9);
        assert!((r.blbp_modulated - r.bl_const).abs() < 1e-9);
        assert!(r.dist.iter().all(|d| d.unwrap() > 1e-2));
    }

    #[test]
    fn holder_gaussian_control() {
        let r = holder_equality_family(
            1,
            &[2.0, 2.0],
            HolderProfile::Gaussian,
            1.0,
            &QuadratureOpts::default(),
            &DistanceOpts::default(),
        )
        .unwrap();
        assert!(r.equality);
        assert!(r.dist.iter().all(|&d| d < 1e-9));
        assert!(!r.flagged);
    }

    #[test]
    fn holder_sums_checked() {
        let q = QuadratureOpts::default();
        assert!(holder_equality_family(
            1,
            &[2.0, 3.0],
            HolderProfile::Bump,
            0.2,
            &q,
            &DistanceOpts::default()
        )
        .is_err());
    }
}
