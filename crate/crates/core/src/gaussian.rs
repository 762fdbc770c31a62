//! Closed-form algebra of real and complex Gaussians.
//!
//! A complex Gaussian is `y ↦ c·exp(−⟨S y, y⟩ + w·y)` with `S` complex
//! symmetric and `Re S` positive definite. Fourier transforms use the
//! convention `f̂(ξ) = ∫ f(x) e^{−2πi⟨x, ξ⟩} dx`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::datum::Datum;
use crate::error::{BlError, Result};
use crate::linalg::{self, CMat, CVector, Mat, Vector};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `y ↦ c·exp(−⟨A(y−v), y−v⟩)` with `c > 0` and `A` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGaussian {
    pub c: f64,
    pub a: Mat,
    pub v: Vector,
}

impl RealGaussian {
    pub fn new(c: f64, a: Mat, v: Vector) -> Result<Self> {
        if !(c > 0.0) {
            return Err(BlError::Invalid(format!(
                "amplitude must be positive, got {c}"
            )));
        }
        if v.len() != a.nrows() {
            return Err(BlError::Dimension(
                "offset length differs from matrix size".into(),
            ));
        }
        linalg::require_pd(&a, "Gaussian matrix A")?;
        Ok(RealGaussian { c, a, v })
    }

    pub fn centered(a: Mat) -> Result<Self> {
        let n = a.nrows();
        RealGaussian::new(1.0, a, Vector::zeros(n))
    }

    pub fn eval(&self, y: &Vector) -> f64 {
        let r = y - &self.v;
        self.c * (-(r.dot(&(&self.a * &r)))).exp()
    }

    /// The same function as `c'·exp(−⟨A y, y⟩ + w·y)`.
    pub fn to_complex(&self) -> ComplexGaussianSpec {
        let av = &self.a * &self.v;
        let c = self.c * (-(self.v.dot(&av))).exp();
        ComplexGaussianSpec {
            c: Complex64::new(c, 0.0),
            s: linalg::to_complex(&self.a),
            w: (av * 2.0).map(|x| Complex64::new(x, 0.0)),
        }
    }
}

/// `c·e^{−⟨Q x, x⟩ + v·x}` rewritten as `c'·e^{−⟨Q(x−v'), x−v'⟩}` by
/// completing the square: `v' = Q⁻¹v/2`, `c' = c·e^{⟨Q⁻¹v, v⟩/4}`.
pub fn convert_parametrizations(q: &Mat, v: &Vector, c: f64) -> Result<RealGaussian> {
    linalg::require_pd(q, "quadratic form Q")?;
    let qinv_v = linalg::spd_inverse(q)? * v;
    let shift = &qinv_v * 0.5;
    let amp = c * (qinv_v.dot(v) / 4.0).exp();
    RealGaussian::new(amp, q.clone(), shift)
}

/// `y ↦ c·exp(−⟨S y, y⟩ + w·y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGaussianSpec {
    pub c: Complex64,
    pub s: CMat,
    pub w: CVector,
}

impl ComplexGaussianSpec {
    pub fn new(c: Complex64, s: CMat, w: CVector) -> Result<Self> {
        let n = s.nrows();
        if s.ncols() != n || w.len() != n {
            return Err(BlError::Dimension("Gaussian spec shape mismatch".into()));
        }
        if c == Complex64::new(0.0, 0.0) {
            return Err(BlError::Invalid("amplitude must be nonzero".into()));
        }
        let asym = (&s - s.transpose())
            .iter()
            .fold(0.0_f64, |a, z| a.max(z.norm()));
        if asym > 1e-12 * s.iter().fold(1.0_f64, |a, z| a.max(z.norm())) {
            return Err(BlError::Invalid(
                "exponent matrix S must be symmetric".into(),
            ));
        }
        let spec = ComplexGaussianSpec { c, s, w };
        linalg::require_pd(&spec.re_s(), "Re S")?;
        Ok(spec)
    }

    /// `exp(−⟨A y, y⟩)`.
    pub fn centered(a: &Mat) -> Result<Self> {
        let n = a.nrows();
        ComplexGaussianSpec::new(
            Complex64::new(1.0, 0.0),
            linalg::to_complex(a),
            CVector::zeros(n),
        )
    }

    /// `exp(−π|x|²/p)` on `R^n`; unit `L^p` norm.
    pub fn unit_lp(n: usize, p: f64) -> Self {
        Self::centered(&(Mat::identity(n, n) * (PI / p))).unwrap()
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn re_s(&self) -> Mat {
        self.s.map(|z| z.re)
    }

    pub fn im_s(&self) -> Mat {
        self.s.map(|z| z.im)
    }

    pub fn re_w(&self) -> Vector {
        self.w.map(|z| z.re)
    }

    /// Membership in the complex Gaussian class: real quadratic part.
    pub fn in_complex_class(&self) -> bool {
        let scale = self.s.iter().fold(1.0_f64, |a, z| a.max(z.norm()));
        self.s.iter().all(|z| z.im.abs() <= 1e-14 * scale)
    }

    /// Positive Gaussian: real quadratic part, real linear term, `c > 0`.
    pub fn is_positive(&self) -> bool {
        self.in_complex_class()
            && self.w.iter().all(|z| z.im == 0.0)
            && self.c.im == 0.0
            && self.c.re > 0.0
    }

    pub fn eval(&self, y: &[f64]) -> Complex64 {
        let n = self.n();
        let mut quad = Complex64::new(0.0, 0.0);
        let mut lin = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for k in 0..n {
                row += self.s[(i, k)] * y[k];
            }
            quad += row * y[i];
            lin += self.w[i] * y[i];
        }
        self.c * (lin - quad).exp()
    }

    /// `log |g|` as a real quadratic: returns `(Re S, Re w, ln|c|)`.
    pub fn modulus_exponent(&self) -> (Mat, Vector, f64) {
        (self.re_s(), self.re_w(), self.c.norm().ln())
    }

    /// Multiplies by `exp(i⟨P y, y⟩)` for real symmetric `P`.
    pub fn modulated(&self, phase: &Mat) -> Self {
        let mut out = self.clone();
        out.s -= linalg::to_complex(phase) * I;
        out
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        out.c *= factor;
        out
    }

    /// Center of the modulus envelope, `(Re S)⁻¹ Re w / 2`.
    pub fn envelope_center(&self) -> Vector {
        let r = self.re_s();
        linalg::spd_inverse(&r)
            .map(|inv| inv * self.re_w() * 0.5)
            .unwrap_or_else(|_| Vector::zeros(self.n()))
    }
}

/// `det(S)^{−1/2}` on the branch continuous from real positive-definite `S`,
/// for complex symmetric `S = R + iJ` with `R ≻ 0`. Writing
/// `S = R^{1/2}(I + iK)R^{1/2}` with `K = R^{−1/2} J R^{−1/2}` real symmetric,
/// every factor `1 + iμ_k` lies in the right half plane, so principal square
/// roots stay continuous along `R + tiJ`.
pub fn inv_sqrt_det(s: &CMat) -> Result<Complex64> {
    let r = s.map(|z| z.re);
    let j = s.map(|z| z.im);
    linalg::require_pd(&r, "Re S")?;
    let r_inv_sqrt = linalg::sym_inv_sqrt(&r);
    let k = &r_inv_sqrt * j * &r_inv_sqrt;
    let (mu, _) = linalg::sym_eigen(&k);
    let log_det_r = linalg::log_det_spd(&r)?;
    let mut out = Complex64::new((-0.5 * log_det_r).exp(), 0.0);
    for m in mu.iter() {
        out /= Complex64::new(1.0, *m).sqrt();
    }
    Ok(out)
}

/// `∫_{R^n} exp(−⟨S x, x⟩ + w·x) dx = π^{n/2} det(S)^{−1/2} exp(⟨S⁻¹w, w⟩/4)`.
pub fn gaussian_integral(s: &CMat, w: &CVector) -> Result<Complex64> {
    let n = s.nrows();
    if s.ncols() != n || w.len() != n {
        return Err(BlError::Dimension("integral shape mismatch".into()));
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let pref = inv_sqrt_det(s)? * PI.powf(n as f64 / 2.0);
    let sol = s
        .clone()
        .lu()
        .solve(w)
        .ok_or_else(|| BlError::Numerical("singular exponent matrix".into()))?;
    let quad = linalg::cbilinear(&sol, &CMat::identity(n, n), w);
    Ok(pref * (quad / 4.0).exp())
}

/// `log ∫ |g|^p` in closed form (only `|c|`, `Re S`, `Re w` matter).
pub fn log_lp_norm_pow(g: &ComplexGaussianSpec, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(BlError::Exponent(format!("p = {p} must be at least 1")));
    }
    let n = g.n() as f64;
    let (r, rw, log_c) = g.modulus_exponent();
    let rinv = linalg::spd_inverse(&r)?;
    let peak = rw.dot(&(&rinv * &rw)) / 4.0;
    if p.is_infinite() {
        return Ok(log_c + peak);
    }
    let log_det = linalg::log_det_spd(&(&r * p))?;
    Ok(p * log_c + 0.5 * n * PI.ln() - 0.5 * log_det + p * peak)
}

/// `‖g‖_{L^p}`; `p = ∞` gives the supremum.
pub fn lp_norm(g: &ComplexGaussianSpec, p: f64) -> Result<f64> {
    let lg = log_lp_norm_pow(g, p)?;
    Ok(if p.is_infinite() {
        lg.exp()
    } else {
        (lg / p).exp()
    })
}

/// Exact Fourier transform: `ĝ(ξ) = c' exp(−⟨π² S⁻¹ ξ, ξ⟩ − πi (S⁻¹w)·ξ)`
/// with `c' = c π^{n/2} det(S)^{−1/2} exp(⟨S⁻¹w, w⟩/4)`.
pub fn fourier(g: &ComplexGaussianSpec) -> Result<ComplexGaussianSpec> {
    let n = g.n();
    let lu = g.s.clone().lu();
    let s_inv = lu
        .try_inverse()
        .ok_or_else(|| BlError::Numerical("singular exponent matrix".into()))?;
    let s_inv = (&s_inv + s_inv.transpose()) * Complex64::new(0.5, 0.0);
    let s_inv_w = &s_inv * &g.w;
    let quad = linalg::cbilinear(&s_inv_w, &CMat::identity(n, n), &g.w);
    let c = g.c * PI.powf(n as f64 / 2.0) * inv_sqrt_det(&g.s)? * (quad / 4.0).exp();
    let s_new = &s_inv * Complex64::new(PI * PI, 0.0);
    let w_new = s_inv_w * (-I * PI);
    ComplexGaussianSpec::new(c, s_new, w_new)
}

/// Accumulated exponent of `x ↦ ∏_j f_j(B_j x)^{weight_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pullback {
    pub s: CMat,
    pub w: CVector,
    pub c: Complex64,
}

impl Pullback {
    /// `∫_{R^d}` of the pulled-back product.
    pub fn integral(&self) -> Result<Complex64> {
        Ok(self.c * gaussian_integral(&self.s, &self.w)?)
    }
}

pub fn pullback_exponent(
    specs: &[ComplexGaussianSpec],
    datum: &Datum,
    weights: &[f64],
) -> Result<Pullback> {
    if specs.len() != datum.m() || weights.len() != datum.m() {
        return Err(BlError::Dimension(format!(
            "expected {} factors, got {} specs and {} weights",
            datum.m(),
            specs.len(),
            weights.len()
        )));
    }
    let d = datum.d();
    let mut s = CMat::zeros(d, d);
    let mut w = CVector::zeros(d);
    let mut c = Complex64::new(1.0, 0.0);
    for ((g, f), &wt) in specs.iter().zip(datum.factors()).zip(weights) {
        if g.n() != f.dim() {
            return Err(BlError::Dimension(format!(
                "spec of dimension {} on factor of dimension {}",
                g.n(),
                f.dim()
            )));
        }
        if wt == 0.0 {
            continue;
        }
        let b = linalg::to_complex(&f.map);
        let scale = Complex64::new(wt, 0.0);
        s += b.transpose() * &g.s * &b * scale;
        w += b.transpose() * &g.w * scale;
        c *= g.c.powf(wt);
    }
    Ok(Pullback { s, w, c })
}

// ---- JSON ------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct GaussianSpecFile {
    pub c_re: f64,
    #[serde(default)]
    pub c_im: f64,
    pub S_re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub S_im: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_re: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_im: Option<Vec<f64>>,
}

impl TryFrom<GaussianSpecFile> for ComplexGaussianSpec {
    type Error = BlError;

    fn try_from(f: GaussianSpecFile) -> Result<Self> {
        let re = linalg::mat_from_rows(&f.S_re, 0)?;
        let n = re.nrows();
        let im = match f.S_im {
            Some(rows) => linalg::mat_from_rows(&rows, n)?,
            None => Mat::zeros(n, n),
        };
        if im.shape() != re.shape() {
            return Err(BlError::Dimension("S_re and S_im shapes differ".into()));
        }
        let wr = Vector::from_vec(f.w_re.unwrap_or_else(|| vec![0.0; n]));
        let wi = Vector::from_vec(f.w_im.unwrap_or_else(|| vec![0.0; n]));
        if wr.len() != n || wi.len() != n {
            return Err(BlError::Dimension(
                "linear term length differs from S".into(),
            ));
        }
        ComplexGaussianSpec::new(
            Complex64::new(f.c_re, f.c_im),
            linalg::complex_from_parts(&re, &im),
            linalg::cvec_from_parts(&wr, &wi),
        )
    }
}

impl From<&ComplexGaussianSpec> for GaussianSpecFile {
    fn from(g: &ComplexGaussianSpec) -> Self {
        GaussianSpecFile {
            c_re: g.c.re,
            c_im: g.c.im,
            S_re: linalg::mat_to_rows(&g.re_s()),
            S_im: Some(linalg::mat_to_rows(&g.im_s())),
            w_re: Some(g.w.iter().map(|z| z.re).collect()),
            w_im: Some(g.w.iter().map(|z| z.im).collect()),
        }
    }
}

impl Serialize for ComplexGaussianSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GaussianSpecFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexGaussianSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ComplexGaussianSpec::try_from(GaussianSpecFile::deserialize(d)?)
            .map_err(serde::de::Error::custom)
    }
}
