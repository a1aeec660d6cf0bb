//! Separable resampling with the Keys cubic and the prefiltered cubic B-spline.
//!
//! Output pixel centres map to source coordinates by
//! `x_src = (x_out + 0.5) / factor - 0.5`. Borders use half-sample symmetric
//! reflection. When shrinking with the Keys kernel the kernel is stretched by
//! `1 / factor` (antialiasing), so the taps of a `1/s` reduction are
//! `w(x / s) / s`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{reflect_index, Luma};

/// Keys cubic convolution parameter.
pub const KEYS_A: f64 = -0.5;

/// Pole of the cubic B-spline interpolation prefilter, `sqrt(3) - 2`.
pub const BSPLINE_POLE: f64 = -0.267_949_192_431_122_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    BicubicKeys,
    CubicBspline,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::BicubicKeys => "bicubic-keys",
            KernelKind::CubicBspline => "cubic-bspline",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bicubic-keys" | "bicubic" => Ok(KernelKind::BicubicKeys),
            "cubic-bspline" | "bspline" => Ok(KernelKind::CubicBspline),
            other => Err(Error::InvalidArgument(format!("unknown kernel {other:?}"))),
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleKernel {
    pub kind: KernelKind,
}

impl ResampleKernel {
    pub const BICUBIC: Self = Self {
        kind: KernelKind::BicubicKeys,
    };
    pub const BSPLINE: Self = Self {
        kind: KernelKind::CubicBspline,
    };

    pub fn new(kind: KernelKind) -> Self {
        Self { kind }
    }

    /// Half-width in source pixels.
    pub fn support(&self) -> f64 {
        2.0
    }

    pub fn weight(&self, x: f64) -> f64 {
        match self.kind {
            KernelKind::BicubicKeys => keys_weight(x),
            KernelKind::CubicBspline => bspline_weight(x),
        }
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_weight(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x < 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Centred cubic B-spline basis function.
pub fn bspline_weight(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        2.0 / 3.0 - x * x + 0.5 * x * x * x
    } else if x < 2.0 {
        let t = 2.0 - x;
        t * t * t / 6.0
    } else {
        0.0
    }
}

/// Interpolation coefficients of a cubic B-spline through `samples`, under
/// half-sample symmetric extension.
pub fn bspline_prefilter(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let z = BSPLINE_POLE;
    let gain = (1.0 - z) * (1.0 - 1.0 / z);

    // Causal initialisation: sum_{k>=0} z^k x(-k) over the reflected signal,
    // truncated once z^k is below double precision.
    let horizon = (f64::EPSILON.ln() / z.abs().ln()).ceil() as isize;
    let mut zk = 1.0;
    let mut acc = 0.0;
    for k in 0..=horizon {
        acc += zk * samples[reflect_index(-k, n)];
        zk *= z;
    }
    let mut c = vec![0.0; n];
    c[0] = gain * acc;
    for k in 1..n {
        c[k] = gain * samples[k] + z * c[k - 1];
    }
    // Anti-causal initialisation for half-sample symmetry: c(n) = c(n-1).
    c[n - 1] *= z / (z - 1.0);
    for k in (0..n - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
    c
}

/// Per-output-sample tap table for one axis.
struct Taps {
    /// first source index (may be negative; reflected on use)
    start: Vec<isize>,
    /// `len` weights per output sample
    weights: Vec<f64>,
    len: usize,
}

impl Taps {
    fn build(kernel: ResampleKernel, n_out: usize, factor: f64) -> Self {
        let stretch = if kernel.kind == KernelKind::BicubicKeys && factor < 1.0 {
            1.0 / factor
        } else {
            1.0
        };
        let radius = kernel.support() * stretch;
        let len = (2.0 * radius).ceil() as usize + 1;
        let mut start = Vec::with_capacity(n_out);
        let mut weights = Vec::with_capacity(n_out * len);
        for i in 0..n_out {
            let x = (i as f64 + 0.5) / factor - 0.5;
            let first = (x - radius).ceil() as isize;
            start.push(first);
            let mut row = vec![0.0; len];
            for (t, w) in row.iter_mut().enumerate() {
                let j = first + t as isize;
                *w = kernel.weight((x - j as f64) / stretch) / stretch;
            }
            let sum: f64 = row.iter().sum();
            if sum != 0.0 {
                for w in &mut row {
                    *w /= sum;
                }
            }
            weights.extend_from_slice(&row);
        }
        Self {
            start,
            weights,
            len,
        }
    }

    #[inline]
    fn apply(&self, i: usize, src: &[f64]) -> f64 {
        let n = src.len();
        let w = &self.weights[i * self.len..(i + 1) * self.len];
        let first = self.start[i];
        let mut acc = 0.0;
        for (t, &wt) in w.iter().enumerate() {
            if wt != 0.0 {
                acc += wt * src[reflect_index(first + t as isize, n)];
            }
        }
        acc
    }
}

fn output_len(n: usize, factor: f64) -> usize {
    (n as f64 * factor).round() as usize
}

/// Resample by `factor` in both axes, rows first then columns.
pub fn resample(img: &Luma, factor: f64, kernel: ResampleKernel) -> Result<Luma> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "resample factor must be positive, got {factor}"
        )));
    }
    let (h, w) = img.dims();
    let (oh, ow) = (output_len(h, factor), output_len(w, factor));
    if oh == 0 || ow == 0 {
        return Err(Error::ZeroSizedOutput(format!(
            "{h}x{w} by {factor} gives {oh}x{ow}"
        )));
    }
    let prefilter = kernel.kind == KernelKind::CubicBspline;

    let col_taps = Taps::build(kernel, ow, factor);
    let mut horiz = vec![0.0; h * ow];
    horiz
        .par_chunks_mut(ow)
        .enumerate()
        .for_each(|(r, out)| {
            let row = img.row(r);
            let coeffs;
            let src = if prefilter {
                coeffs = bspline_prefilter(row);
                &coeffs[..]
            } else {
                row
            };
            for (c, o) in out.iter_mut().enumerate() {
                *o = col_taps.apply(c, src);
            }
        });

    // columns: work on the transposed intermediate so every pass is row-contiguous
    let mut transposed = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            transposed[c * h + r] = horiz[r * ow + c];
        }
    }
    let row_taps = Taps::build(kernel, oh, factor);
    let mut vert_t = vec![0.0; ow * oh];
    vert_t
        .par_chunks_mut(oh)
        .enumerate()
        .for_each(|(c, out)| {
            let col = &transposed[c * h..(c + 1) * h];
            let coeffs;
            let src = if prefilter {
                coeffs = bspline_prefilter(col);
                &coeffs[..]
            } else {
                col
            };
            for (r, o) in out.iter_mut().enumerate() {
                *o = row_taps.apply(r, src);
            }
        });

    let mut data = vec![0.0; oh * ow];
    for c in 0..ow {
        for r in 0..oh {
            data[r * ow + c] = vert_t[c * oh + r].clamp(0.0, 1.0);
        }
    }
    Luma::new(oh, ow, data)
}

/// Canonical LR degradation: centre-crop to a multiple of `scale`, then Keys
/// downsampling by `1/scale`.
pub fn downsample_lr(img: &Luma, scale: usize) -> Result<Luma> {
    if scale < 2 {
        return Err(Error::InvalidArgument(format!(
            "downsampling scale must be >= 2, got {scale}"
        )));
    }
    let (h, w) = img.dims();
    if h < scale * 8 || w < scale * 8 {
        return Err(Error::ImageTooSmall(format!(
            "{h}x{w} image needs both sides >= {} for scale {scale}",
            scale * 8
        )));
    }
    let cropped = img.center_window(h - h % scale, w - w % scale)?;
    resample(&cropped, 1.0 / scale as f64, ResampleKernel::BICUBIC)
}
