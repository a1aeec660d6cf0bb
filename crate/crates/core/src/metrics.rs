//! MSE, PSNR and SSIM on luminance planes.
//!
//! Inputs are `[0, 1]` planes; every metric works on the 0-255 scale.

use crate::error::{Error, Result};
use crate::image::{crop_border, Luma};

const PEAK: f64 = 255.0;
/// SSIM window side (uniform weights, stride 1).
pub const SSIM_WINDOW: usize = 8;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// PSNR in dB; `f64::INFINITY` marks identical inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub psnr_db: f64,
    pub ssim: f64,
    pub mse: f64,
}

impl QualityScore {
    pub fn measure(a: &Luma, b: &Luma, shave: usize) -> Result<Self> {
        let (a, b) = shaved(a, b, shave)?;
        let mse = mse8(&a, &b)?;
        Ok(Self {
            psnr_db: psnr_from_mse(mse),
            ssim: ssim(&a, &b, 0)?,
            mse,
        })
    }
}

fn same_dims(a: &Luma, b: &Luma) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn shaved(a: &Luma, b: &Luma, shave: usize) -> Result<(Luma, Luma)> {
    same_dims(a, b)?;
    Ok((crop_border(a, shave)?, crop_border(b, shave)?))
}

/// Mean squared difference on the 0-255 scale.
pub fn mse8(a: &Luma, b: &Luma) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = (x - y) * PEAK;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// `10 log10(255^2 / MSE)` after removing `shave` pixels from each side.
pub fn psnr(a: &Luma, b: &Luma, shave: usize) -> Result<f64> {
    let (a, b) = shaved(a, b, shave)?;
    Ok(psnr_from_mse(mse8(&a, &b)?))
}

/// Mean single-scale SSIM over all 8x8 windows at stride 1.
///
/// Window statistics come from summed-area tables of `x, y, x^2, y^2, xy`;
/// variances are population variances.
pub fn ssim(a: &Luma, b: &Luma, shave: usize) -> Result<f64> {
    let (a, b) = shaved(a, b, shave)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::ImageTooSmall(format!(
            "{h}x{w} after shave; SSIM needs {SSIM_WINDOW}x{SSIM_WINDOW}"
        )));
    }
    let x: Vec<f64> = a.data().iter().map(|v| v * PEAK).collect();
    let y: Vec<f64> = b.data().iter().map(|v| v * PEAK).collect();
    let table = |f: &dyn Fn(usize) -> f64| {
        let mut t = vec![0.0; (h + 1) * (w + 1)];
        for r in 0..h {
            let mut row = 0.0;
            for c in 0..w {
                row += f(r * w + c);
                t[(r + 1) * (w + 1) + c + 1] = t[r * (w + 1) + c + 1] + row;
            }
        }
        t
    };
    let sx = table(&|i| x[i]);
    let sy = table(&|i| y[i]);
    let sxx = table(&|i| x[i] * x[i]);
    let syy = table(&|i| y[i] * y[i]);
    let sxy = table(&|i| x[i] * y[i]);
    let box_sum = |t: &[f64], r: usize, c: usize| {
        let (r1, c1) = (r + SSIM_WINDOW, c + SSIM_WINDOW);
        t[r1 * (w + 1) + c1] - t[r * (w + 1) + c1] - t[r1 * (w + 1) + c] + t[r * (w + 1) + c]
    };
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let mut total = 0.0;
    let windows = (h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1);
    for r in 0..=h - SSIM_WINDOW {
        for c in 0..=w - SSIM_WINDOW {
            let mx = box_sum(&sx, r, c) / n;
            let my = box_sum(&sy, r, c) / n;
            let vx = (box_sum(&sxx, r, c) / n - mx * mx).max(0.0);
            let vy = (box_sum(&syy, r, c) / n - my * my).max(0.0);
            let cov = box_sum(&sxy, r, c) / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / windows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_anchors() {
        let zero = Luma::filled(4, 4, 0.0);
        let one = Luma::filled(4, 4, 1.0);
        assert_eq!(psnr(&zero, &zero, 0).unwrap(), f64::INFINITY);
        assert_eq!(mse8(&zero, &one).unwrap(), 65025.0);
        assert_eq!(psnr(&zero, &one, 0).unwrap(), 0.0);
        assert_eq!(psnr_from_mse(650.25), 20.0);
        let off = Luma::filled(4, 4, 0.1);
        assert!((psnr(&zero, &off, 0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn mse_two_pixels() {
        let a = Luma::new(1, 2, vec![0.0, 1.0]).unwrap();
        let b = Luma::new(1, 2, vec![1.0, 1.0]).unwrap();
        assert_eq!(mse8(&a, &b).unwrap(), 32512.5);
        assert_eq!(mse8(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let a = Luma::filled(10, 10, 0.0);
        assert!(matches!(
            psnr(&a, &Luma::filled(10, 9, 0.0), 0),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(ssim(&a, &a, 2), Err(Error::ImageTooSmall(_))));
        assert!(matches!(
            ssim(&a, &Luma::filled(9, 10, 0.0), 0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ssim_identity_and_noise() {
        let a = Luma::from_fn(24, 24, |r, c| ((r * 13 + c * 7) % 17) as f64 / 17.0);
        assert!((ssim(&a, &a, 0).unwrap() - 1.0).abs() < 1e-12);
        let b = Luma::from_fn(24, 24, |r, c| {
            (a.get(r, c) + if (r + c) % 2 == 0 { 0.004 } else { -0.004 }).clamp(0.0, 1.0)
        });
        let s = ssim(&a, &b, 0).unwrap();
        assert!(s > 0.9 && s < 1.0, "{s}");
    }
}
