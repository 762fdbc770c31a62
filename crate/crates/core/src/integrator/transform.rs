//! Grid Fourier transform `f̂(ξ) = ∫ f(x) e^{−2πi⟨x,ξ⟩} dx`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::quadrature::{QuadratureOpts, ENVELOPE_CUTOFF};
use super::spec::{Component, FunctionSpec, GridFunction};
use crate::error::{BlError, Result};
use crate::gaussian;
use crate::linalg;

/// Share of `Σ|f̂|²` allowed on the boundary faces of the frequency box.
const BOUNDARY_ENERGY: f64 = 1e-8;

/// Axis-aligned box `[lo, hi]` covering every component above the cutoff.
fn envelope_box(
    comps: &[Component],
    n: usize,
    radius_multiplier: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let comps: Vec<&Component> = comps.iter().filter(|c| c.log_k.is_finite()).collect();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let global = comps
        .iter()
        .map(|c| c.log_k)
        .fold(f64::NEG_INFINITY, f64::max);
    for c in comps {
        let slack = c.log_k - global - ENVELOPE_CUTOFF.ln();
        let rinv = linalg::spd_inverse(&c.r)?;
        for i in 0..n {
            let hw = radius_multiplier * (slack * rinv[(i, i)]).sqrt();
            lo[i] = lo[i].min(c.center[i] - hw);
            hi[i] = hi[i].max(c.center[i] + hw);
        }
    }
    Ok((lo, hi))
}

/// Applies the 1-d transform along `axis` of a row-major array.
fn transform_axis(
    data: &[Complex64],
    shape: &[usize],
    axis: usize,
    kernel: &[Complex64],
    n_out: usize,
) -> Vec<Complex64> {
    let n_in = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![Complex64::new(0.0, 0.0); outer * n_out * inner];
    out.par_chunks_mut(n_out * inner)
        .enumerate()
        .for_each(|(o, block)| {
            let src = &data[o * n_in * inner..(o + 1) * n_in * inner];
            for k in 0..n_out {
                let row = &kernel[k * n_in..(k + 1) * n_in];
                for i in 0..inner {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (l, w) in row.iter().enumerate() {
                        acc += src[l * inner + i] * w;
                    }
                    block[k * inner + i] = acc;
                }
            }
        });
    out
}

/// Samples of `f̂` on a frequency grid. The spatial grid follows the envelope
/// of `f`; the frequency box covers the transformed Gaussian envelopes and is
/// capped at the Nyquist frequency of the spatial grid.
pub fn fourier_numeric(f: &FunctionSpec, opts: &QuadratureOpts) -> Result<GridFunction> {
    opts.validate()?;
    f.validate()?;
    let n = f.dim();
    let comps = f.components(1.0, false, opts.bump_points)?;
    if comps.iter().all(|c| !c.log_k.is_finite()) {
        let values = vec![Complex64::new(0.0, 0.0); 2usize.pow(n as u32)];
        return Ok(GridFunction::new(
            vec![0.0; n],
            vec![1.0; n],
            vec![2; n],
            &values,
        ));
    }
    let (xlo, xhi) = envelope_box(&comps, n, opts.radius_multiplier)?;
    let mut res = linalg::Mat::zeros(n, n);
    for c in &comps {
        res += &c.res;
    }
    let h: Vec<f64> = (0..n)
        .map(|i| {
            let width = xhi[i] - xlo[i];
            (1.0 / res[(i, i)].sqrt()).min(width / opts.points_per_axis as f64) * opts.spacing_scale
        })
        .collect();
    let nx: Vec<usize> = (0..n)
        .map(|i| ((xhi[i] - xlo[i]) / h[i]).ceil() as usize + 1)
        .collect();

    // frequency box from the transforms of the Gaussian pieces, else Nyquist
    let nyquist: Vec<f64> = h.iter().map(|h| 0.5 / h).collect();
    let gaussians: Vec<_> = match f {
        FunctionSpec::ClosedGaussian { .. } | FunctionSpec::ModulatedGaussian { .. } => {
            f.as_closed_gaussian().into_iter().collect()
        }
        FunctionSpec::SumOfGaussians { terms } => terms.clone(),
        _ => Vec::new(),
    };
    let (mut klo, mut khi) = (
        nyquist.iter().map(|v| -v).collect::<Vec<_>>(),
        nyquist.clone(),
    );
    if !gaussians.is_empty() {
        let mut fc = Vec::new();
        for g in &gaussians {
            fc.extend(FunctionSpec::gaussian(gaussian::fourier(g)?).components(
                1.0,
                false,
                opts.bump_points,
            )?);
        }
        let (lo, hi) = envelope_box(&fc, n, opts.radius_multiplier)?;
        for i in 0..n {
            klo[i] = lo[i].max(-nyquist[i]);
            khi[i] = hi[i].min(nyquist[i]);
        }
    }
    let dk: Vec<f64> = (0..n).map(|i| 0.25 / (xhi[i] - xlo[i])).collect();
    let nk: Vec<usize> = (0..n)
        .map(|i| ((khi[i] - klo[i]) / dk[i]).ceil() as usize + 1)
        .collect();
    let total_in: f64 = nx.iter().map(|&v| v as f64).product();
    let total_out: f64 = nk.iter().map(|&v| v as f64).product();
    if total_in.max(total_out) > opts.max_points as f64 {
        return Err(BlError::Quadrature(format!(
            "transform grid of {total_in:.0} -> {total_out:.0} nodes exceeds the budget"
        )));
    }

    // samples, last axis fastest
    let total = nx.iter().product::<usize>();
    let mut data: Vec<Complex64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                x[i] = xlo[i] + (rem % nx[i]) as f64 * h[i];
                rem /= nx[i];
            }
            f.eval(&x)
        })
        .collect();
    let mut shape = nx.clone();
    for axis in 0..n {
        let kernel: Vec<Complex64> = (0..nk[axis])
            .flat_map(|k| {
                let xi = klo[axis] + k as f64 * dk[axis];
                let (xl, ha) = (xlo[axis], h[axis]);
                (0..nx[axis])
                    .map(move |l| Complex64::from_polar(ha, -2.0 * PI * (xl + l as f64 * ha) * xi))
            })
            .collect();
        data = transform_axis(&data, &shape, axis, &kernel, nk[axis]);
        shape[axis] = nk[axis];
    }

    let grid = GridFunction::new(klo, dk, nk, &data);
    check_boundary(&grid)?;
    Ok(grid)
}

fn check_boundary(grid: &GridFunction) -> Result<()> {
    let n = grid.n();
    let mut total = 0.0;
    let mut edge = 0.0;
    let mut idx = vec![0usize; n];
    for flat in 0..grid.len() {
        let mut rem = flat;
        for i in (0..n).rev() {
            idx[i] = rem % grid.shape[i];
            rem /= grid.shape[i];
        }
        let e = grid.value(flat).norm_sqr();
        total += e;
        if idx
            .iter()
            .zip(&grid.shape)
            .any(|(&k, &s)| k == 0 || k + 1 == s)
        {
            edge += e;
        }
    }
    if total > 0.0 && edge > BOUNDARY_ENERGY * total {
        return Err(BlError::Quadrature(format!(
            "aliasing: {:.2e} of the transform energy sits on the grid boundary; enlarge the box or refine",
            edge / total
        )));
    }
    Ok(())
}

/// `(Σ |F|^p · cell)^{1/p}` over the samples of a grid function.
pub fn grid_lp_norm(grid: &GridFunction, p: f64) -> f64 {
    let mut acc = linalg::KahanSum::default();
    for k in 0..grid.len() {
        acc.add(grid.value(k).norm().powf(p));
    }
    (acc.value() * grid.cell_volume()).powf(1.0 / p)
}
