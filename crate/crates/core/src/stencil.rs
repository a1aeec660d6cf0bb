//! Discrete TV contour stencils.
//!
//! A template is a weighted set of pixel pairs inside a 5x5 footprint. Its
//! response on a patch is `sum w * |u[a] - u[b]|`, a discrete estimate of the
//! total variation along one contour orientation. The bank holds 24 templates
//! (3 orientation classes x 8), loaded from a plain-text data file; the
//! lowest-response template marks the local contour direction.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::image::Luma;

/// Side of the square footprint every template lives in.
pub const FOOTPRINT: usize = 5;
/// Number of templates in a bank.
pub const BANK_SIZE: usize = 24;
const CLASSES: u8 = 3;
const PER_CLASS: u8 = 8;
const HALF: i32 = (FOOTPRINT / 2) as i32;

/// Contents of the shipped default template file.
pub const DEFAULT_BANK_DATA: &str = include_str!("../data/stencil-bank-v1.txt");

/// `(class, index)`: class 1 horizontal, 2 vertical, 3 diagonal; index 1..=8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TemplateId {
    pub class: u8,
    pub index: u8,
}

impl TemplateId {
    pub fn new(class: u8, index: u8) -> Self {
        Self { class, index }
    }

    /// Position of this id in a bank's `(class, index)` ordering.
    pub fn slot(self) -> usize {
        (self.class as usize - 1) * PER_CLASS as usize + (self.index as usize - 1)
    }

    pub fn from_slot(slot: usize) -> Self {
        Self {
            class: (slot / PER_CLASS as usize) as u8 + 1,
            index: (slot % PER_CLASS as usize) as u8 + 1,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.class, self.index)
    }
}

/// One weighted pixel pair; offsets are `(row, col)` relative to the footprint centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilPair {
    pub a: (i32, i32),
    pub b: (i32, i32),
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilTemplate {
    pub id: TemplateId,
    pub pairs: Vec<StencilPair>,
}

impl StencilTemplate {
    /// Build and validate a free-standing template.
    pub fn new(id: TemplateId, pairs: Vec<StencilPair>) -> Result<Self> {
        let t = Self { id, pairs };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let id = self.id;
        if !(1..=CLASSES).contains(&id.class) || !(1..=PER_CLASS).contains(&id.index) {
            return Err(Error::BankValidation(format!(
                "template {id}: class must be 1..=3 and index 1..=8"
            )));
        }
        let inside = |(r, c): (i32, i32)| r.abs() <= HALF && c.abs() <= HALF;
        for p in &self.pairs {
            if !inside(p.a) || !inside(p.b) {
                return Err(Error::BankValidation(format!(
                    "template {id}: offset outside the {FOOTPRINT}x{FOOTPRINT} footprint"
                )));
            }
            if !(p.weight >= 0.0) || !p.weight.is_finite() {
                return Err(Error::BankValidation(format!(
                    "template {id}: weight {} is negative or not finite",
                    p.weight
                )));
            }
        }
        if !self.pairs.iter().any(|p| p.weight > 0.0) {
            return Err(Error::BankValidation(format!(
                "template {id}: needs at least one positive weight"
            )));
        }
        Ok(())
    }

    /// Response on a patch stored row-major with row stride `stride`, centred at `center`.
    #[inline]
    fn response_at(&self, data: &[f64], stride: usize, center: usize) -> f64 {
        let at = |(r, c): (i32, i32)| {
            data[(center as isize + r as isize * stride as isize + c as isize) as usize]
        };
        self.pairs
            .iter()
            .map(|p| p.weight * (at(p.a) - at(p.b)).abs())
            .sum()
    }
}

/// The 24-template bank, ordered by `(class, index)`.
#[derive(Debug, Clone)]
pub struct StencilBank {
    templates: Vec<StencilTemplate>,
    version: Arc<str>,
}

impl StencilBank {
    /// Parse and validate a bank data file.
    pub fn parse(data: &str) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::BankParse { line, reason };
        let mut lines = data
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))?;
        let htok: Vec<&str> = header.split_whitespace().collect();
        match htok.as_slice() {
            ["stencil-bank", version, "footprint", h, w] => {
                if *h != "5" || *w != "5" {
                    return Err(Error::BankValidation(format!(
                        "footprint {h}x{w} unsupported; only 5x5"
                    )));
                }
                let version: Arc<str> = Arc::from(*version);
                let mut slots: Vec<Option<StencilTemplate>> = vec![None; BANK_SIZE];

                while let Some((tline, tdecl)) = lines.next() {
                    let tt: Vec<&str> = tdecl.split_whitespace().collect();
                    let (class, index, npairs) = match tt.as_slice() {
                        ["template", d, k, n] => (
                            d.parse::<u8>()
                                .map_err(|e| parse_err(tline, format!("class {d:?}: {e}")))?,
                            k.parse::<u8>()
                                .map_err(|e| parse_err(tline, format!("index {k:?}: {e}")))?,
                            n.parse::<usize>()
                                .map_err(|e| parse_err(tline, format!("pair count {n:?}: {e}")))?,
                        ),
                        _ => {
                            return Err(parse_err(
                                tline,
                                format!("expected `template <d> <k> <npairs>`, got {tdecl:?}"),
                            ))
                        }
                    };
                    let mut pairs = Vec::with_capacity(npairs);
                    for _ in 0..npairs {
                        let (pline, ptxt) = lines.next().ok_or_else(|| {
                            parse_err(tline, format!("template declares {npairs} pairs, file ended"))
                        })?;
                        let pt: Vec<&str> = ptxt.split_whitespace().collect();
                        if pt.len() != 5 {
                            return Err(parse_err(
                                pline,
                                format!("expected `<ra> <ca> <rb> <cb> <weight>`, got {ptxt:?}"),
                            ));
                        }
                        let off = |s: &str| {
                            s.parse::<i32>()
                                .map_err(|e| parse_err(pline, format!("offset {s:?}: {e}")))
                        };
                        let weight = pt[4]
                            .parse::<f64>()
                            .map_err(|e| parse_err(pline, format!("weight {:?}: {e}", pt[4])))?;
                        pairs.push(StencilPair {
                            a: (off(pt[0])?, off(pt[1])?),
                            b: (off(pt[2])?, off(pt[3])?),
                            weight,
                        });
                    }
                    let t = StencilTemplate::new(TemplateId::new(class, index), pairs)?;
                    let slot = &mut slots[t.id.slot()];
                    if slot.is_some() {
                        return Err(Error::BankValidation(format!(
                            "duplicate template {}",
                            t.id
                        )));
                    }
                    *slot = Some(t);
                }

                let missing: Vec<String> = slots
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.is_none())
                    .map(|(i, _)| TemplateId::from_slot(i).to_string())
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::BankValidation(format!(
                        "missing templates {}",
                        missing.join(" ")
                    )));
                }
                Ok(Self {
                    templates: slots.into_iter().map(Option::unwrap).collect(),
                    version,
                })
            }
            _ => Err(parse_err(
                hline,
                format!("expected `stencil-bank <version> footprint 5 5`, got {header:?}"),
            )),
        }
    }

    /// The shipped bank.
    pub fn default_bank() -> Self {
        Self::parse(DEFAULT_BANK_DATA).expect("shipped stencil bank is valid")
    }

    pub fn templates(&self) -> &[StencilTemplate] {
        &self.templates
    }

    pub fn template(&self, id: TemplateId) -> &StencilTemplate {
        &self.templates[id.slot()]
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub(crate) fn version_arc(&self) -> Arc<str> {
        self.version.clone()
    }

    /// Accumulate every template's response at `center` into `out`.
    #[inline]
    pub(crate) fn accumulate_at(
        &self,
        data: &[f64],
        stride: usize,
        center: usize,
        out: &mut [f64; BANK_SIZE],
    ) {
        for (o, t) in out.iter_mut().zip(&self.templates) {
            *o += t.response_at(data, stride, center);
        }
    }
}

/// Parse a bank data file; alias of [`StencilBank::parse`].
pub fn build_default_bank(data: &str) -> Result<StencilBank> {
    StencilBank::parse(data)
}

fn check_footprint(patch: &Luma) -> Result<()> {
    if patch.dims() != (FOOTPRINT, FOOTPRINT) {
        return Err(Error::FootprintMismatch {
            got_h: patch.height(),
            got_w: patch.width(),
            want: FOOTPRINT,
        });
    }
    Ok(())
}

/// Response of one template on a 5x5 patch.
pub fn stencil_response(patch: &Luma, template: &StencilTemplate) -> Result<f64> {
    check_footprint(patch)?;
    let center = HALF as usize * FOOTPRINT + HALF as usize;
    Ok(template.response_at(patch.data(), FOOTPRINT, center))
}

/// Responses of all 24 templates plus the minimising template.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilSignature {
    responses: [f64; BANK_SIZE],
    best: TemplateId,
    version: Arc<str>,
}

impl StencilSignature {
    pub fn from_responses(responses: [f64; BANK_SIZE], bank: &StencilBank) -> Self {
        Self {
            best: argmin(&responses),
            responses,
            version: bank.version_arc(),
        }
    }

    pub fn responses(&self) -> &[f64; BANK_SIZE] {
        &self.responses
    }

    pub fn response(&self, id: TemplateId) -> f64 {
        self.responses[id.slot()]
    }

    pub fn best(&self) -> TemplateId {
        self.best
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

/// First minimum in `(class, index)` order.
pub(crate) fn argmin(responses: &[f64; BANK_SIZE]) -> TemplateId {
    let mut best = 0;
    for (i, &r) in responses.iter().enumerate().skip(1) {
        if r < responses[best] {
            best = i;
        }
    }
    TemplateId::from_slot(best)
}

/// Signature of a 5x5 patch.
pub fn signature(patch: &Luma, bank: &StencilBank) -> Result<StencilSignature> {
    check_footprint(patch)?;
    patch_signature(patch, bank)
}

/// Signature of a square odd patch of side >= 5: the template responses summed
/// over every 5x5 footprint inside the patch, in row-major footprint order.
/// For a 5x5 patch this is exactly [`signature`].
pub fn patch_signature(patch: &Luma, bank: &StencilBank) -> Result<StencilSignature> {
    let (h, w) = patch.dims();
    if h != w || h % 2 == 0 || h < FOOTPRINT {
        return Err(Error::FootprintMismatch {
            got_h: h,
            got_w: w,
            want: FOOTPRINT,
        });
    }
    let mut responses = [0.0; BANK_SIZE];
    let half = HALF as usize;
    for r in half..h - half {
        for c in half..w - half {
            bank.accumulate_at(patch.data(), w, r * w + c, &mut responses);
        }
    }
    Ok(StencilSignature::from_responses(responses, bank))
}

/// Euclidean distance between two response vectors.
pub fn signature_distance(p: &StencilSignature, q: &StencilSignature) -> Result<f64> {
    if p.version != q.version {
        return Err(Error::BankVersionMismatch(
            p.version.to_string(),
            q.version.to_string(),
        ));
    }
    Ok(response_distance(&p.responses, &q.responses))
}

#[inline]
pub(crate) fn response_distance(p: &[f64; BANK_SIZE], q: &[f64; BANK_SIZE]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
