//! Function specifications consumed by the numeric integrator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BlError, Result};
use crate::gaussian::ComplexGaussianSpec;
use crate::linalg::{self, Mat, Vector};

/// Standard `C^∞` bump `exp(−1/(1−|u|²))` on the unit ball, zero outside.
pub fn unit_bump(u2: f64) -> f64 {
    if u2 < 1.0 {
        (-1.0 / (1.0 - u2)).exp()
    } else {
        0.0
    }
}

fn bump_at(y: &[f64], center: &[f64], radius: f64) -> f64 {
    let u2: f64 = y
        .iter()
        .zip(center)
        .map(|(a, c)| ((a - c) / radius).powi(2))
        .sum();
    unit_bump(u2)
}

fn one() -> f64 {
    1.0
}

/// Complex samples on an axis-aligned grid; row-major with the last axis
/// fastest. Evaluation interpolates multilinearly and is zero outside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFunction {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub im: Vec<f64>,
}

impl GridFunction {
    pub fn new(
        origin: Vec<f64>,
        spacing: Vec<f64>,
        shape: Vec<usize>,
        values: &[Complex64],
    ) -> Self {
        GridFunction {
            origin,
            spacing,
            shape,
            re: values.iter().map(|z| z.re).collect(),
            im: values.iter().map(|z| z.im).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.shape.len();
        if n == 0 || self.origin.len() != n || self.spacing.len() != n {
            return Err(BlError::Dimension(
                "grid origin/spacing/shape lengths differ".into(),
            ));
        }
        if self.spacing.iter().any(|h| !(*h > 0.0)) {
            return Err(BlError::Invalid("grid spacing must be positive".into()));
        }
        if self.shape.iter().any(|&k| k < 2) {
            return Err(BlError::Invalid(
                "grid needs at least two samples per axis".into(),
            ));
        }
        if self.re.len() != self.len() || (!self.im.is_empty() && self.im.len() != self.len()) {
            return Err(BlError::Dimension(
                "grid sample count differs from shape".into(),
            ));
        }
        Ok(())
    }

    pub fn value(&self, flat: usize) -> Complex64 {
        Complex64::new(self.re[flat], self.im.get(flat).copied().unwrap_or(0.0))
    }

    pub fn values(&self) -> Vec<Complex64> {
        (0..self.len()).map(|k| self.value(k)).collect()
    }

    /// Coordinates of the sample with multi-index `idx`.
    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.origin)
            .zip(&self.spacing)
            .map(|((&i, o), h)| o + i as f64 * h)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn upper(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.origin[i] + (self.shape[i] - 1) as f64 * self.spacing[i])
            .collect()
    }

    pub fn eval(&self, y: &[f64]) -> Complex64 {
        let n = self.n();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for i in 0..n {
            let t = (y[i] - self.origin[i]) / self.spacing[i];
            if !(t >= 0.0) || t > (self.shape[i] - 1) as f64 {
                return Complex64::new(0.0, 0.0);
            }
            let k = (t.floor() as usize).min(self.shape[i] - 2);
            base[i] = k;
            frac[i] = t - k as f64;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0;
            for i in 0..n {
                let up = (corner >> i) & 1 == 1;
                w *= if up { frac[i] } else { 1.0 - frac[i] };
                flat = flat * self.shape[i] + base[i] + up as usize;
            }
            if w != 0.0 {
                acc += self.value(flat) * w;
            }
        }
        acc
    }
}

/// Inputs to the numeric integrator, tagged by `"variant"` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
pub enum FunctionSpec {
    ClosedGaussian {
        gaussian: ComplexGaussianSpec,
    },
    SumOfGaussians {
        terms: Vec<ComplexGaussianSpec>,
    },
    /// `g + amplitude·φ((y − center)/radius)`.
    GaussianPlusBump {
        gaussian: ComplexGaussianSpec,
        amplitude: f64,
        center: Vec<f64>,
        radius: f64,
    },
    /// `amplitude·φ((y − center)/radius)^power`.
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        power: f64,
    },
    GridFunction {
        grid: GridFunction,
    },
    /// `base(y)·exp(i⟨P y, y⟩)`.
    ModulatedGaussian {
        base: ComplexGaussianSpec,
        #[serde(with = "linalg::rows")]
        phase: Mat,
    },
}

/// A Gaussian-shaped upper bound `|f(y)|^e ≤ exp(log_k − ⟨r(y−c), y−c⟩)` for
/// one piece of a function, with a local spacing requirement `res`: grid
/// steps `h` along a unit direction `u` should satisfy `h²·uᵀ res u ≤ 1`.
#[derive(Debug, Clone)]
pub(crate) struct Component {
    pub r: Mat,
    pub center: Vector,
    pub log_k: f64,
    pub res: Mat,
}

/// Grid steps per unit Gaussian width (in `exp(−z²)` units).
pub(crate) const GAUSS_STEP: f64 = 0.35;

fn gaussian_component(g: &ComplexGaussianSpec, power: f64, modulus: bool) -> Result<Component> {
    let (r, rw, log_c) = g.modulus_exponent();
    let rinv = linalg::spd_inverse(&r)?;
    let center = &rinv * &rw * 0.5;
    let log_k = log_c + rw.dot(&center) * 0.5;
    let n = g.n();
    let mut res = &r * (power.max(1.0) / (GAUSS_STEP * GAUSS_STEP));
    if !modulus {
        let j_abs = linalg::sym_fn(&g.im_s(), f64::abs);
        res += j_abs / (GAUSS_STEP * GAUSS_STEP);
        let wi = g.w.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        res += Mat::identity(n, n) * (wi / std::f64::consts::PI).powi(2);
    }
    Ok(Component {
        r: &r * power,
        center,
        log_k: log_k * power,
        res,
    })
}

fn bump_component(
    center: &[f64],
    radius: f64,
    amplitude: f64,
    shape_power: f64,
    power: f64,
    bump_points: f64,
) -> Component {
    let n = center.len();
    let per_step = bump_points / (2.0 * radius);
    Component {
        r: Mat::identity(n, n) * (shape_power * power / (radius * radius)),
        center: Vector::from_column_slice(center),
        log_k: amplitude.abs().ln() * power,
        res: Mat::identity(n, n) * (per_step * per_step),
    }
}

impl FunctionSpec {
    pub fn gaussian(g: ComplexGaussianSpec) -> Self {
        FunctionSpec::ClosedGaussian { gaussian: g }
    }

    pub fn dim(&self) -> usize {
        match self {
            FunctionSpec::ClosedGaussian { gaussian } => gaussian.n(),
            FunctionSpec::SumOfGaussians { terms } => terms.first().map_or(0, |g| g.n()),
            FunctionSpec::GaussianPlusBump { gaussian, .. } => gaussian.n(),
            FunctionSpec::Bump { center, .. } => center.len(),
            FunctionSpec::GridFunction { grid } => grid.n(),
            FunctionSpec::ModulatedGaussian { base, .. } => base.n(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionSpec::ClosedGaussian { .. } => Ok(()),
            FunctionSpec::SumOfGaussians { terms } => {
                if terms.is_empty() {
                    return Err(BlError::Invalid(
                        "SumOfGaussians needs at least one term".into(),
                    ));
                }
                let n = terms[0].n();
                if terms.iter().any(|g| g.n() != n) {
                    return Err(BlError::Dimension(
                        "SumOfGaussians terms differ in dimension".into(),
                    ));
                }
                Ok(())
            }
            FunctionSpec::GaussianPlusBump {
                gaussian,
                amplitude,
                center,
                radius,
            } => {
                if center.len() != gaussian.n() {
                    return Err(BlError::Dimension(
                        "bump center dimension differs from Gaussian".into(),
                    ));
                }
                if !(*radius > 0.0) || !amplitude.is_finite() {
                    return Err(BlError::Invalid("bump radius must be positive".into()));
                }
                Ok(())
            }
            FunctionSpec::Bump {
                center,
                radius,
                amplitude,
                power,
            } => {
                if center.is_empty()
                    || !(*radius > 0.0)
                    || !(*power > 0.0)
                    || !amplitude.is_finite()
                {
                    return Err(BlError::Invalid(
                        "bump needs a center, positive radius and positive power".into(),
                    ));
                }
                Ok(())
            }
            FunctionSpec::GridFunction { grid } => grid.validate(),
            FunctionSpec::ModulatedGaussian { base, phase } => {
                if phase.nrows() != base.n() || phase.ncols() != base.n() {
                    return Err(BlError::Dimension(
                        "phase matrix shape differs from base".into(),
                    ));
                }
                if (phase - phase.transpose()).abs().max() > 1e-12 {
                    return Err(BlError::Invalid("phase matrix must be symmetric".into()));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, y: &[f64]) -> Complex64 {
        match self {
            FunctionSpec::ClosedGaussian { gaussian } => gaussian.eval(y),
            FunctionSpec::SumOfGaussians { terms } => terms.iter().map(|g| g.eval(y)).sum(),
            FunctionSpec::GaussianPlusBump {
                gaussian,
                amplitude,
                center,
                radius,
            } => gaussian.eval(y) + amplitude * bump_at(y, center, *radius),
            FunctionSpec::Bump {
                center,
                radius,
                amplitude,
                power,
            } => {
                let b = bump_at(y, center, *radius);
                Complex64::new(
                    if b > 0.0 {
                        amplitude * b.powf(*power)
                    } else {
                        0.0
                    },
                    0.0,
                )
            }
            FunctionSpec::GridFunction { grid } => grid.eval(y),
            FunctionSpec::ModulatedGaussian { base, phase } => {
                let n = y.len();
                let mut q = 0.0;
                for i in 0..n {
                    for k in 0..n {
                        q += phase[(i, k)] * y[i] * y[k];
                    }
                }
                base.eval(y) * Complex64::new(0.0, q).exp()
            }
        }
    }

    /// The function as a single closed-form complex Gaussian, when it is one.
    pub fn as_closed_gaussian(&self) -> Option<ComplexGaussianSpec> {
        match self {
            FunctionSpec::ClosedGaussian { gaussian } => Some(gaussian.clone()),
            FunctionSpec::SumOfGaussians { terms } if terms.len() == 1 => Some(terms[0].clone()),
            FunctionSpec::GaussianPlusBump {
                gaussian,
                amplitude,
                ..
            } if *amplitude == 0.0 => Some(gaussian.clone()),
            FunctionSpec::ModulatedGaussian { base, phase } => Some(base.modulated(phase)),
            _ => None,
        }
    }

    /// Whether every sample of the function is real and nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        let pos = |g: &ComplexGaussianSpec| g.is_positive();
        match self {
            FunctionSpec::ClosedGaussian { gaussian } => pos(gaussian),
            FunctionSpec::SumOfGaussians { terms } => terms.iter().all(pos),
            FunctionSpec::GaussianPlusBump {
                gaussian,
                amplitude,
                ..
            } => pos(gaussian) && *amplitude >= 0.0,
            FunctionSpec::Bump { amplitude, .. } => *amplitude >= 0.0,
            FunctionSpec::GridFunction { grid } => {
                grid.im.iter().all(|x| *x == 0.0) && grid.re.iter().all(|x| *x >= 0.0)
            }
            FunctionSpec::ModulatedGaussian { base, phase } => {
                pos(base) && phase.iter().all(|x| *x == 0.0)
            }
        }
    }

    /// The Gaussian a perturbation was built from, if any.
    pub fn gaussian_part(&self) -> Option<ComplexGaussianSpec> {
        match self {
            FunctionSpec::ClosedGaussian { gaussian }
            | FunctionSpec::GaussianPlusBump { gaussian, .. } => Some(gaussian.clone()),
            FunctionSpec::SumOfGaussians { terms } => terms
                .iter()
                .max_by(|a, b| {
                    let la = crate::gaussian::log_lp_norm_pow(a, 1.0).unwrap_or(f64::NEG_INFINITY);
                    let lb = crate::gaussian::log_lp_norm_pow(b, 1.0).unwrap_or(f64::NEG_INFINITY);
                    la.total_cmp(&lb)
                })
                .cloned(),
            FunctionSpec::ModulatedGaussian { base, .. } => Some(base.clone()),
            _ => None,
        }
    }

    /// Modulus bounds of `|f|^power`; `modulus` drops oscillation-driven
    /// resolution requirements.
    pub(crate) fn components(
        &self,
        power: f64,
        modulus: bool,
        bump_points: f64,
    ) -> Result<Vec<Component>> {
        Ok(match self {
            FunctionSpec::ClosedGaussian { gaussian } => {
                vec![gaussian_component(gaussian, power, modulus)?]
            }
            FunctionSpec::SumOfGaussians { terms } => terms
                .iter()
                .map(|g| gaussian_component(g, power, modulus))
                .collect::<Result<_>>()?,
            FunctionSpec::GaussianPlusBump {
                gaussian,
                amplitude,
                center,
                radius,
            } => vec![
                gaussian_component(gaussian, power, modulus)?,
                bump_component(center, *radius, *amplitude, 1.0, power, bump_points),
            ],
            FunctionSpec::Bump {
                center,
                radius,
                amplitude,
                power: shape,
            } => vec![bump_component(
                center,
                *radius,
                *amplitude,
                *shape,
                power,
                bump_points,
            )],
            FunctionSpec::GridFunction { grid } => {
                let n = grid.n();
                let hi = grid.upper();
                let center = Vector::from_fn(n, |i, _| 0.5 * (grid.origin[i] + hi[i]));
                let r = Mat::from_diagonal(&Vector::from_fn(n, |i, _| {
                    let hw = 0.5 * (hi[i] - grid.origin[i]);
                    power / (hw * hw)
                }));
                let kmax = (0..grid.len())
                    .map(|k| grid.value(k).norm())
                    .fold(0.0, f64::max);
                let res = Mat::from_diagonal(&Vector::from_fn(n, |i, _| grid.spacing[i].powi(-2)));
                vec![Component {
                    r,
                    center,
                    log_k: power * (kmax.ln() + n as f64),
                    res,
                }]
            }
            FunctionSpec::ModulatedGaussian { base, phase } => {
                vec![gaussian_component(&base.modulated(phase), power, modulus)?]
            }
        })
    }
}
