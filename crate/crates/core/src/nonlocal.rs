//! Non-local restoration guided by stencil signatures.
//!
//! Every pixel is replaced by a weighted average of the centre pixels of the
//! `mm` patches in its search window whose stencil signatures are closest to
//! its own. Similarity is `exp(-d^2 / sigma) / ln(sigma)`, normalised over the
//! retained set. The reference patch is always retained, first, with distance 0.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Luma;
use crate::stencil::{response_distance, StencilBank, BANK_SIZE, FOOTPRINT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlocalParams {
    /// Odd patch side, at least the stencil footprint.
    pub patch_size: usize,
    /// Odd search window side.
    pub window: usize,
    /// Retained candidates, self included.
    pub mm: usize,
    /// Similarity scale; must exceed 1.
    pub sigma: f64,
    /// Mix between the restored value (1) and the original value (0).
    pub blend: f64,
}

impl Default for NonlocalParams {
    fn default() -> Self {
        Self {
            patch_size: 7,
            window: 21,
            mm: 10,
            sigma: std::f64::consts::E,
            blend: 1.0,
        }
    }
}

impl NonlocalParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.patch_size % 2 == 0 || self.patch_size < FOOTPRINT {
            return bad(format!(
                "patch_size {} must be odd and >= {FOOTPRINT}",
                self.patch_size
            ));
        }
        if self.window % 2 == 0 || self.window < self.patch_size {
            return bad(format!(
                "window {} must be odd and >= patch_size {}",
                self.window, self.patch_size
            ));
        }
        if self.mm == 0 {
            return bad("mm must be >= 1".into());
        }
        if !(self.sigma > 1.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidSigma(self.sigma));
        }
        if !(0.0..=1.0).contains(&self.blend) {
            return bad(format!("blend {} outside [0, 1]", self.blend));
        }
        Ok(())
    }
}

/// One retained similar patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub center_value: f64,
    pub distance: f64,
    /// Centre of the patch in the searched image.
    pub position: (usize, usize),
}

/// Patch signatures for every valid centre of an image.
///
/// Valid centres are at least `patch_size / 2` pixels from every border.
pub struct SignatureField<'a> {
    img: &'a Luma,
    margin: usize,
    rows: usize,
    cols: usize,
    sigs: Vec<[f64; BANK_SIZE]>,
}

impl<'a> SignatureField<'a> {
    pub fn compute(img: &'a Luma, bank: &StencilBank, patch_size: usize) -> Result<Self> {
        let (h, w) = img.dims();
        let margin = patch_size / 2;
        if patch_size % 2 == 0 || patch_size < FOOTPRINT || h < patch_size || w < patch_size {
            return Err(Error::ImageTooSmall(format!(
                "{h}x{w} image cannot hold a {patch_size}x{patch_size} patch"
            )));
        }
        let fh = FOOTPRINT / 2;

        // per-footprint responses on every centre at least 2 px from the border
        let (frows, fcols) = (h - 2 * fh, w - 2 * fh);
        let mut foot = vec![[0.0; BANK_SIZE]; frows * fcols];
        foot.par_chunks_mut(fcols).enumerate().for_each(|(fr, out)| {
            for (fc, o) in out.iter_mut().enumerate() {
                bank.accumulate_at(img.data(), w, (fr + fh) * w + fc + fh, o);
            }
        });

        // patch signature = row-major sum of the footprints it contains
        let inner = margin - fh;
        let (rows, cols) = (h - 2 * margin, w - 2 * margin);
        let mut sigs = vec![[0.0; BANK_SIZE]; rows * cols];
        sigs.par_chunks_mut(cols).enumerate().for_each(|(r, out)| {
            for (c, sig) in out.iter_mut().enumerate() {
                // footprint-map coordinates of the patch's top-left footprint
                for fr in r..=r + 2 * inner {
                    for fc in c..=c + 2 * inner {
                        let f = &foot[fr * fcols + fc];
                        for (s, v) in sig.iter_mut().zip(f) {
                            *s += v;
                        }
                    }
                }
            }
        });
        Ok(Self {
            img,
            margin,
            rows,
            cols,
            sigs,
        })
    }

    fn sig(&self, row: usize, col: usize) -> &[f64; BANK_SIZE] {
        &self.sigs[(row - self.margin) * self.cols + (col - self.margin)]
    }

    fn is_valid(&self, row: usize, col: usize) -> bool {
        row >= self.margin
            && col >= self.margin
            && row < self.margin + self.rows
            && col < self.margin + self.cols
    }

    /// The `mm` most similar patches around `center`, self first, then by
    /// ascending distance with row-major scan order breaking ties.
    pub fn search(&self, center: (usize, usize), params: &NonlocalParams) -> Result<Vec<Candidate>> {
        let (row, col) = center;
        if !self.is_valid(row, col) {
            return Err(Error::CenterOutOfBounds { row, col });
        }
        let half = params.window / 2;
        let r0 = row.saturating_sub(half).max(self.margin);
        let r1 = (row + half).min(self.margin + self.rows - 1);
        let c0 = col.saturating_sub(half).max(self.margin);
        let c1 = (col + half).min(self.margin + self.cols - 1);
        let reference = self.sig(row, col);

        let mut pool: Vec<(f64, usize, usize)> = Vec::with_capacity((r1 - r0 + 1) * (c1 - c0 + 1));
        for r in r0..=r1 {
            for c in c0..=c1 {
                if (r, c) != center {
                    pool.push((response_distance(reference, self.sig(r, c)), r, c));
                }
            }
        }
        let keep = (params.mm - 1).min(pool.len());
        let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
            a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2)))
        };
        if keep < pool.len() && keep > 0 {
            pool.select_nth_unstable_by(keep - 1, order);
        }
        pool.truncate(keep);
        pool.sort_unstable_by(order);

        let mut out = Vec::with_capacity(keep + 1);
        out.push(Candidate {
            center_value: self.img.get(row, col),
            distance: 0.0,
            position: center,
        });
        out.extend(pool.into_iter().map(|(d, r, c)| Candidate {
            center_value: self.img.get(r, c),
            distance: d,
            position: (r, c),
        }));
        Ok(out)
    }
}

/// Similar-patch search on `img` around `center` (which must leave room for a
/// full patch; pad by reflection first).
pub fn search_similar(
    img: &Luma,
    center: (usize, usize),
    bank: &StencilBank,
    params: &NonlocalParams,
) -> Result<Vec<Candidate>> {
    params.validate()?;
    let m = params.patch_size / 2;
    if center.0 < m || center.1 < m || center.0 + m >= img.height() || center.1 + m >= img.width()
    {
        return Err(Error::CenterOutOfBounds {
            row: center.0,
            col: center.1,
        });
    }
    SignatureField::compute(img, bank, params.patch_size)?.search(center, params)
}

/// `exp(-d^2 / sigma) / ln(sigma)`.
pub fn similarity(distance: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 1.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma(sigma));
    }
    Ok((-distance * distance / sigma).exp() / sigma.ln())
}

/// `s_i / sum(s)`.
pub fn normalize_weights(sims: &[f64]) -> Result<Vec<f64>> {
    if sims.is_empty() {
        return Err(Error::EmptyList);
    }
    if let Some((index, &value)) = sims.iter().enumerate().find(|(_, &s)| !(s > 0.0)) {
        return Err(Error::NonPositiveEntry { index, value });
    }
    let total: f64 = sims.iter().sum();
    Ok(sims.iter().map(|s| s / total).collect())
}

/// Weighted average of the candidates' centre values, blended with the
/// reference value (candidate 0) and clamped to `[0, 1]`.
pub fn restore_pixel(cands: &[Candidate], params: &NonlocalParams) -> Result<f64> {
    let own = cands.first().ok_or(Error::EmptyCandidates)?.center_value;
    let mut sims = Vec::with_capacity(cands.len());
    let mut values = Vec::with_capacity(cands.len());
    for c in cands {
        let s = similarity(c.distance, params.sigma)?;
        // underflowed similarities carry no weight
        if s > 0.0 {
            sims.push(s);
            values.push(c.center_value);
        }
    }
    let weights = normalize_weights(&sims)?;
    // sum w * v written as own + sum w * (v - own); equal since the weights sum
    // to one, and exact whenever every candidate equals own
    let delta: f64 = weights.iter().zip(&values).map(|(w, v)| w * (v - own)).sum();
    Ok((own + params.blend * delta).clamp(0.0, 1.0))
}

/// Restore every pixel of `img` independently.
pub fn enhance_image(img: &Luma, bank: &StencilBank, params: &NonlocalParams) -> Result<Luma> {
    params.validate()?;
    let (h, w) = img.dims();
    if h < params.window || w < params.window {
        return Err(Error::ImageTooSmall(format!(
            "{h}x{w} image is smaller than the {0}x{0} search window",
            params.window
        )));
    }
    let m = params.patch_size / 2;
    let padded = img.pad_reflect(m);
    let field = SignatureField::compute(&padded, bank, params.patch_size)?;

    let mut out = vec![0.0; h * w];
    out.par_chunks_mut(w)
        .enumerate()
        .try_for_each(|(r, row)| -> Result<()> {
            for (c, o) in row.iter_mut().enumerate() {
                let cands = field.search((r + m, c + m), params)?;
                *o = restore_pixel(&cands, params)?;
            }
            Ok(())
        })?;
    Luma::new(h, w, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(v: f64, d: f64) -> Candidate {
        Candidate {
            center_value: v,
            distance: d,
            position: (0, 0),
        }
    }

    #[test]
    fn similarity_anchors() {
        let e = std::f64::consts::E;
        assert!((similarity(0.0, e).unwrap() - 1.0).abs() < 1e-15);
        assert!((similarity(1.0, e).unwrap() - (-1.0 / e).exp()).abs() < 1e-15);
        assert!((similarity(1.0, e).unwrap() - 0.69220).abs() < 5e-6);
        assert!(matches!(similarity(0.0, 1.0), Err(Error::InvalidSigma(_))));
        assert!(matches!(similarity(0.0, 0.5), Err(Error::InvalidSigma(_))));
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize_weights(&[1.0; 4]).unwrap(), vec![0.25; 4]);
        assert!(matches!(normalize_weights(&[]), Err(Error::EmptyList)));
        assert!(matches!(
            normalize_weights(&[1.0, 0.0]),
            Err(Error::NonPositiveEntry { index: 1, .. })
        ));
    }

    #[test]
    fn restore_fixed_points() {
        let p = NonlocalParams::default();
        let cs = [cand(0.4, 0.0), cand(0.4, 2.0), cand(0.4, 0.3)];
        assert_eq!(restore_pixel(&cs, &p).unwrap(), 0.4);
        let two = [cand(0.1, 0.5), cand(0.3, 0.5)];
        assert!((restore_pixel(&two, &p).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(restore_pixel(&[], &p), Err(Error::EmptyCandidates)));
        let half = NonlocalParams { blend: 0.0, ..p };
        assert_eq!(restore_pixel(&[cand(0.9, 0.0), cand(0.1, 0.0)], &half).unwrap(), 0.9);
    }

    #[test]
    fn params_validation() {
        let p = NonlocalParams::default();
        assert!(p.validate().is_ok());
        assert!(NonlocalParams { patch_size: 6, ..p }.validate().is_err());
        assert!(NonlocalParams { patch_size: 3, ..p }.validate().is_err());
        assert!(NonlocalParams { window: 5, ..p }.validate().is_err());
        assert!(NonlocalParams { mm: 0, ..p }.validate().is_err());
        assert!(NonlocalParams { sigma: 1.0, ..p }.validate().is_err());
        assert!(NonlocalParams { blend: 1.5, ..p }.validate().is_err());
    }

    #[test]
    fn constant_image_search_takes_scan_order() {
        let bank = StencilBank::default_bank();
        let img = Luma::filled(40, 40, 0.5);
        let p = NonlocalParams::default();
        let cs = search_similar(&img, (20, 20), &bank, &p).unwrap();
        assert_eq!(cs.len(), p.mm);
        assert_eq!(cs[0].position, (20, 20));
        assert!(cs.iter().all(|c| c.distance == 0.0));
        // window rows 10..=30, cols 10..=30; scan order skips self
        let expect: Vec<(usize, usize)> = (10..19).map(|c| (10, c)).collect();
        let got: Vec<(usize, usize)> = cs[1..].iter().map(|c| c.position).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn corner_window_is_clipped() {
        let bank = StencilBank::default_bank();
        let img = Luma::from_fn(30, 30, |r, c| ((r * 31 + c * 17) % 11) as f64 / 10.0);
        let p = NonlocalParams {
            mm: 1000,
            ..NonlocalParams::default()
        };
        let cs = search_similar(&img, (3, 3), &bank, &p).unwrap();
        // valid centres 3..=26; window 0..=13 clipped to 3..=13 -> 11x11
        assert_eq!(cs.len(), 121);
        assert_eq!(cs[0].position, (3, 3));
        assert!(cs
            .iter()
            .all(|c| (3..=13).contains(&c.position.0) && (3..=13).contains(&c.position.1)));
        assert!(matches!(
            search_similar(&img, (2, 10), &bank, &p),
            Err(Error::CenterOutOfBounds { .. })
        ));
    }

    #[test]
    fn enhance_edge_cases() {
        let bank = StencilBank::default_bank();
        let p = NonlocalParams::default();
        let flat = Luma::filled(24, 24, 0.37);
        assert_eq!(enhance_image(&flat, &bank, &p).unwrap(), flat);
        let img = Luma::from_fn(24, 24, |r, c| ((r * 7 + c * 3) % 13) as f64 / 12.0);
        let off = NonlocalParams { blend: 0.0, ..p };
        assert_eq!(enhance_image(&img, &bank, &off).unwrap(), img);
        assert!(matches!(
            enhance_image(&Luma::filled(20, 30, 0.0), &bank, &p),
            Err(Error::ImageTooSmall(_))
        ));
    }
}
