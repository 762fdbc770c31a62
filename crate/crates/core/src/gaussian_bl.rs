//! The Brascamp–Lieb functional evaluated in closed form on Gaussian tuples.
//!
//! For centered inputs `f_j(y) = exp(−⟨A_j y, y⟩)` in the `q`-convention the
//! ratio is `det(M_A)^{−1/2} ∏_j det(A_j)^{q_j/2}` with
//! `M_A = Σ_j q_j B_jᵀ A_j B_j`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::datum::{self, Datum};
use crate::error::{BlError, Result};
use crate::gaussian::{self, ComplexGaussianSpec};
use crate::linalg::{self, CMat, CVector, Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTuple {
    pub a: Vec<Mat>,
    pub offsets: Option<Vec<Vector>>,
    pub amplitudes: Option<Vec<f64>>,
}

impl GaussianTuple {
    pub fn centered(a: Vec<Mat>) -> Self {
        GaussianTuple {
            a,
            offsets: None,
            amplitudes: None,
        }
    }

    pub fn identity(datum: &Datum) -> Self {
        GaussianTuple::centered(datum.dims().iter().map(|&k| Mat::identity(k, k)).collect())
    }

    /// One scalar per factor; only meaningful for rank-one data.
    pub fn scalars(values: &[f64]) -> Self {
        GaussianTuple::centered(values.iter().map(|&a| Mat::from_element(1, 1, a)).collect())
    }

    pub fn with_offsets(mut self, offsets: Vec<Vector>) -> Self {
        self.offsets = Some(offsets);
        self
    }

    pub fn with_amplitudes(mut self, amplitudes: Vec<f64>) -> Self {
        self.amplitudes = Some(amplitudes);
        self
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn scaled(&self, r: f64) -> Self {
        GaussianTuple {
            a: self.a.iter().map(|m| m * r).collect(),
            offsets: self.offsets.clone(),
            amplitudes: self.amplitudes.clone(),
        }
    }

    pub fn centered_part(&self) -> Self {
        GaussianTuple::centered(self.a.clone())
    }

    pub fn validate(&self, datum: &Datum) -> Result<()> {
        if self.a.len() != datum.m() {
            return Err(BlError::Dimension(format!(
                "tuple has {} factors, datum has {}",
                self.a.len(),
                datum.m()
            )));
        }
        for (j, (a, dj)) in self.a.iter().zip(datum.dims()).enumerate() {
            if a.nrows() != dj || a.ncols() != dj {
                return Err(BlError::Dimension(format!(
                    "A_{j} is {}x{}, factor dimension is {dj}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            linalg::require_pd(a, &format!("A_{j}"))?;
        }
        if let Some(v) = &self.offsets {
            if v.len() != datum.m() || v.iter().zip(datum.dims()).any(|(v, dj)| v.len() != dj) {
                return Err(BlError::Dimension(
                    "offset shapes do not match datum".into(),
                ));
            }
        }
        if let Some(c) = &self.amplitudes {
            if c.len() != datum.m() || c.iter().any(|&x| !(x > 0.0)) {
                return Err(BlError::Invalid(
                    "amplitudes must be positive, one per factor".into(),
                ));
            }
        }
        Ok(())
    }

    /// Frobenius distance between concatenated matrices.
    pub fn distance(&self, other: &GaussianTuple) -> f64 {
        self.a
            .iter()
            .zip(&other.a)
            .map(|(x, y)| (x - y).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn frobenius(&self) -> f64 {
        self.a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
    }

    /// The factors as functions `c_j exp(−⟨A_j(y−v_j), y−v_j⟩)`.
    pub fn specs(&self) -> Vec<ComplexGaussianSpec> {
        (0..self.len())
            .map(|j| {
                let n = self.a[j].nrows();
                let v = self
                    .offsets
                    .as_ref()
                    .map(|o| o[j].clone())
                    .unwrap_or_else(|| Vector::zeros(n));
                let c = self.amplitudes.as_ref().map(|c| c[j]).unwrap_or(1.0);
                gaussian::RealGaussian {
                    c,
                    a: self.a[j].clone(),
                    v,
                }
                .to_complex()
            })
            .collect()
    }
}

impl Serialize for GaussianTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            a: Vec<Vec<Vec<f64>>>,
            #[serde(skip_serializing_if = "Option::is_none")]
            offsets: Option<Vec<Vec<f64>>>,
            #[serde(skip_serializing_if = "Option::is_none")]
            amplitudes: Option<Vec<f64>>,
        }
        Repr {
            a: self.a.iter().map(linalg::mat_to_rows).collect(),
            offsets: self
                .offsets
                .as_ref()
                .map(|o| o.iter().map(|v| v.iter().cloned().collect()).collect()),
            amplitudes: self.amplitudes.clone(),
        }
        .serialize(s)
    }
}

/// `Σ_j q_j B_jᵀ A_j B_j` together with its smallest eigenvalue.
pub fn m_matrix_checked(datum: &Datum, tuple: &GaussianTuple) -> Result<(Mat, f64)> {
    tuple.validate(datum)?;
    let m = assemble_m(datum, &tuple.a);
    let min = linalg::min_eig(&m);
    linalg::require_pd(&m, "M_A (maps share a common kernel: constant is infinite)")?;
    Ok((m, min))
}

pub fn m_matrix(datum: &Datum, tuple: &GaussianTuple) -> Result<Mat> {
    m_matrix_checked(datum, tuple).map(|(m, _)| m)
}

pub(crate) fn assemble_m(datum: &Datum, a: &[Mat]) -> Mat {
    let d = datum.d();
    let mut m = Mat::zeros(d, d);
    for (f, aj) in datum.factors().iter().zip(a) {
        let q = f.q();
        if q != 0.0 {
            m += f.map.transpose() * aj * &f.map * q;
        }
    }
    linalg::symmetrize(&m)
}

#[derive(Debug, Clone, Serialize)]
pub struct CenteredValueReport {
    #[serde(skip)]
    pub m: Mat,
    pub value: f64,
    pub det_m: f64,
    pub smallest_eigenvalue: f64,
    pub normalized: bool,
    pub scaling_defect: f64,
    /// Set when the scaling condition fails; `value` then carries the
    /// `π^{(d − Σ q_j d_j)/2}` factor and the constant is infinite.
    pub scaling_warning: bool,
}

/// Natural log of the centered value, without the π correction.
pub(crate) fn log_value_raw(datum: &Datum, a: &[Mat]) -> Result<f64> {
    let m = assemble_m(datum, a);
    let mut out = -0.5 * linalg::log_det_spd(&m)?;
    for (f, aj) in datum.factors().iter().zip(a) {
        let q = f.q();
        if q != 0.0 {
            out += 0.5 * q * linalg::log_det_spd(aj)?;
        }
    }
    Ok(out)
}

pub fn gaussian_bl_value(datum: &Datum, tuple: &GaussianTuple) -> Result<CenteredValueReport> {
    let (m, min) = m_matrix_checked(datum, tuple)?;
    let sd = datum::scaling_defect(datum);
    let warn = sd.abs() > datum::SCALING_TOL;
    let mut log_v = log_value_raw(datum, &tuple.a)?;
    if warn {
        log_v += 0.5 * sd * PI.ln();
    }
    let det_m = linalg::log_det_spd(&m)?.exp();
    Ok(CenteredValueReport {
        value: log_v.exp(),
        det_m,
        smallest_eigenvalue: min,
        normalized: (det_m - 1.0).abs() <= 1e-10,
        scaling_defect: sd,
        scaling_warning: warn,
        m,
    })
}

/// The `p`-convention ratio `|∫∏ h_j∘B_j| / ∏‖h_j‖_{p_j}` for
/// `h_j = exp(−⟨C_j y, y⟩)`; equals the centered value at `A_j = p_j C_j`.
pub fn centered_blbp_p(datum: &Datum, c: &GaussianTuple) -> Result<f64> {
    c.validate(datum)?;
    let d = datum.d() as f64;
    let mut total = Mat::zeros(datum.d(), datum.d());
    let mut log_norms = 0.0;
    for (f, cj) in datum.factors().iter().zip(&c.a) {
        total += f.map.transpose() * cj * &f.map;
        if f.p.is_finite() {
            let dj = f.dim() as f64;
            log_norms += (0.5 * dj * PI.ln() - 0.5 * linalg::log_det_spd(&(cj * f.p))?) / f.p;
        }
    }
    let total = linalg::symmetrize(&total);
    linalg::require_pd(&total, "Σ B_jᵀ C_j B_j")?;
    Ok((0.5 * d * PI.ln() - 0.5 * linalg::log_det_spd(&total)? - log_norms).exp())
}

/// Rescales `A ↦ rA` so that `det(M_{rA}) = 1`.
pub fn normalize_det(datum: &Datum, tuple: &GaussianTuple) -> Result<GaussianTuple> {
    let m = m_matrix(datum, tuple)?;
    let r = (-linalg::log_det_spd(&m)? / datum.d() as f64).exp();
    Ok(tuple.scaled(r))
}

#[derive(Debug, Clone)]
pub struct CompletedSquare {
    pub xbar: Vector,
    pub c: f64,
    pub log_c: f64,
    pub centered: GaussianTuple,
}

/// Rewrites `∏ f_j(B_j x)^{q_j}` for offset inputs as `c·exp(−⟨M(x−x̄), x−x̄⟩)`.
/// Amplitudes are ignored (the ratio does not see them).
pub fn complete_square(datum: &Datum, tuple: &GaussianTuple) -> Result<CompletedSquare> {
    let m = m_matrix(datum, tuple)?;
    let zero: Vec<Vector> = datum.dims().iter().map(|&k| Vector::zeros(k)).collect();
    let offsets = tuple.offsets.as_ref().unwrap_or(&zero);
    let mut rhs = Vector::zeros(datum.d());
    for ((f, a), v) in datum.factors().iter().zip(&tuple.a).zip(offsets) {
        rhs += f.map.transpose() * (a * v) * f.q();
    }
    let xbar = linalg::spd_inverse(&m)? * rhs;
    let mut log_c = 0.0;
    for ((f, a), v) in datum.factors().iter().zip(&tuple.a).zip(offsets) {
        let r = &f.map * &xbar - v;
        log_c -= f.q() * r.dot(&(a * &r));
    }
    let log_c = log_c.min(0.0);
    Ok(CompletedSquare {
        xbar,
        c: log_c.exp(),
        log_c,
        centered: tuple.centered_part(),
    })
}

/// `q`-convention ratio for offset Gaussian inputs: `c · value(centered)`.
pub fn offset_gaussian_ratio(datum: &Datum, tuple: &GaussianTuple) -> Result<f64> {
    let cs = complete_square(datum, tuple)?;
    Ok(cs.c * gaussian_bl_value(datum, &cs.centered)?.value)
}

/// Offsets `v_j = B_j x0`; these lie in the consistent subspace.
pub fn consistent_offsets(datum: &Datum, x0: &Vector) -> Vec<Vector> {
    datum.factors().iter().map(|f| &f.map * x0).collect()
}

/// Euclidean distance from the offset tuple to `{(B_j x)_j : x ∈ R^d}`.
pub fn distance_to_consistent(datum: &Datum, offsets: &[Vector]) -> f64 {
    let rows: usize = datum.dims().iter().sum();
    let mut stacked = Mat::zeros(rows, datum.d());
    let mut rhs = Vector::zeros(rows);
    let mut r0 = 0;
    for (f, v) in datum.factors().iter().zip(offsets) {
        stacked
            .view_mut((r0, 0), (f.dim(), datum.d()))
            .copy_from(&f.map);
        rhs.rows_mut(r0, f.dim()).copy_from(v);
        r0 += f.dim();
    }
    let svd = stacked.clone().svd(true, true);
    let x = svd
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| Vector::zeros(datum.d()));
    (stacked * x - rhs).norm()
}

/// Complex ratio `∫∏ f_j(B_j x) dx / ∏‖f_j‖_{p_j}` for
/// `f_j = exp(−⟨C_j y, y⟩)·exp(i⟨P_j y, y⟩)`; its modulus is the functional.
pub fn modulated_blbp(datum: &Datum, base: &GaussianTuple, phases: &[Mat]) -> Result<Complex64> {
    base.validate(datum)?;
    if phases.len() != datum.m() {
        return Err(BlError::Dimension(
            "one phase matrix per factor required".into(),
        ));
    }
    let d = datum.d();
    let mut s = CMat::zeros(d, d);
    let mut log_norms = 0.0;
    for ((f, cj), pj) in datum.factors().iter().zip(&base.a).zip(phases) {
        if pj.shape() != cj.shape() {
            return Err(BlError::Dimension(
                "phase matrix shape differs from factor".into(),
            ));
        }
        let local = linalg::complex_from_parts(cj, &(-pj));
        let b = linalg::to_complex(&f.map);
        s += b.transpose() * local * &b;
        let g = ComplexGaussianSpec::centered(cj)?;
        log_norms += gaussian::lp_norm(&g, f.p)?.ln();
    }
    let re = s.map(|z| z.re);
    linalg::require_pd(&re, "Re S_total")?;
    let integral = gaussian::gaussian_integral(&s, &CVector::zeros(d))?;
    Ok(integral * (-log_norms).exp())
}
