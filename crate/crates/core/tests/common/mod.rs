//! Helpers shared by the integration tests: synthetic images and independent
//! reference implementations used as oracles.
#![allow(dead_code)]

use std::path::Path;

use tvsr::image::{save_image, Luma, RgbImage};
use tvsr::rng::SplitMix64;
use tvsr::srnet::SrNetwork;

pub fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

pub fn random_luma(rng: &mut SplitMix64, h: usize, w: usize) -> Luma {
    Luma::from_fn(h, w, |_, _| rng.next_f64())
}

enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { cx: f64, cy: f64, cos: f64, sin: f64, hw: f64, hh: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) < r * r,
            Shape::Rect { cx, cy, cos, sin, hw, hh } => {
                let (dx, dy) = (x - cx, y - cy);
                (dx * cos + dy * sin).abs() < hw && (-dx * sin + dy * cos).abs() < hh
            }
        }
    }
}

/// Antialiased scene of overlapping flat discs and rotated rectangles over a
/// linear colour gradient, rendered with 4x4 supersampling.
pub fn synth_image(seed: u64, n: usize) -> RgbImage {
    let mut rng = SplitMix64::new(seed);
    let base: Vec<f64> = (0..3).map(|_| uniform(&mut rng, 0.2, 0.8)).collect();
    let gx: Vec<f64> = (0..3).map(|_| uniform(&mut rng, -0.3, 0.3)).collect();
    let gy: Vec<f64> = (0..3).map(|_| uniform(&mut rng, -0.3, 0.3)).collect();
    let mut shapes = Vec::new();
    for _ in 0..12 {
        let colour = [rng.next_f64(), rng.next_f64(), rng.next_f64()];
        let shape = if rng.next_f64() < 0.5 {
            Shape::Disc {
                cx: rng.next_f64(),
                cy: rng.next_f64(),
                r: uniform(&mut rng, 0.05, 0.3),
            }
        } else {
            let th = uniform(&mut rng, 0.0, std::f64::consts::PI);
            Shape::Rect {
                cx: rng.next_f64(),
                cy: rng.next_f64(),
                cos: th.cos(),
                sin: th.sin(),
                hw: uniform(&mut rng, 0.05, 0.4),
                hh: uniform(&mut rng, 0.05, 0.4),
            }
        };
        shapes.push((shape, colour));
    }
    const SS: usize = 4;
    let big = (n * SS) as f64;
    let mut data = Vec::with_capacity(3 * n * n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = [0.0; 3];
            for sr in 0..SS {
                for sc in 0..SS {
                    let y = (r * SS + sr) as f64 / big;
                    let x = (c * SS + sc) as f64 / big;
                    let mut px = [0.0; 3];
                    for ch in 0..3 {
                        px[ch] = (base[ch] + x * gx[ch] + y * gy[ch]).clamp(0.0, 1.0);
                    }
                    for (s, col) in &shapes {
                        if s.contains(x, y) {
                            px = *col;
                        }
                    }
                    for ch in 0..3 {
                        acc[ch] += px[ch];
                    }
                }
            }
            for a in acc {
                data.push((a / (SS * SS) as f64 * 255.0).round() as u8);
            }
        }
    }
    RgbImage::new(n, n, data).unwrap()
}

pub fn write_dataset(dir: &Path, seeds: impl IntoIterator<Item = u64>, n: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for s in seeds {
        save_image(&synth_image(s, n), dir.join(format!("img{s:03}.png"))).unwrap();
    }
}

// ---------------------------------------------------------------------------
// Metric references: direct per-pixel and per-window loops.

pub fn naive_psnr(a: &Luma, b: &Luma, shave: usize) -> f64 {
    let (h, w) = a.dims();
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in shave..h - shave {
        for c in shave..w - shave {
            let d = 255.0 * a.get(r, c) - 255.0 * b.get(r, c);
            sum += d * d;
            n += 1;
        }
    }
    let mse = sum / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

pub fn naive_ssim(a: &Luma, b: &Luma, shave: usize) -> f64 {
    let (h, w) = a.dims();
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let win = 8;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in shave..=h - shave - win {
        for c in shave..=w - shave - win {
            let px = |img: &Luma, i: usize, j: usize| 255.0 * img.get(r + i, c + j);
            let n = (win * win) as f64;
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    mx += px(a, i, j);
                    my += px(b, i, j);
                }
            }
            mx /= n;
            my /= n;
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let (dx, dy) = (px(a, i, j) - mx, px(b, i, j) - my);
                    vx += dx * dx;
                    vy += dy * dy;
                    cov += dx * dy;
                }
            }
            vx /= n;
            vy /= n;
            cov /= n;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle.
//
// The loss is evaluated by an independent naive forward pass in double-double
// arithmetic, so the central difference is not swamped by rounding even for
// tiny gradient coordinates. Along one parameter the loss is piecewise
// quadratic, so the central difference is exact unless a ReLU or the output
// cap switches between the two evaluation points; such coordinates are
// reported as kink crossings.

#[derive(Clone, Copy, Debug)]
pub struct Dd(pub f64, pub f64);

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd(0.0, 0.0);

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.0, o.0);
        quick_two_sum(s, e + self.1 + o.1)
    }

    pub fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    pub fn mul_f(self, b: f64) -> Dd {
        let p = self.0 * b;
        let e = self.0.mul_add(b, -p);
        quick_two_sum(p, e + self.1 * b)
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        quick_two_sum(p, e + self.0 * o.1 + self.1 * o.0)
    }

    pub fn div(self, o: Dd) -> f64 {
        // one Newton correction is plenty for an f64 result
        let q = self.0 / o.0;
        let r = self.add(o.mul_f(q).neg());
        q + r.0 / o.0
    }

    fn is_neg(self) -> bool {
        self.0 < 0.0 || (self.0 == 0.0 && self.1 < 0.0)
    }

    fn gt_one(self) -> bool {
        self.0 > 1.0 || (self.0 == 1.0 && self.1 > 0.0)
    }
}

/// Naive double-double loss; `pattern` receives one code per activation.
pub fn dd_loss(net: &SrNetwork, input: &Luma, target: &Luma, pattern: &mut Vec<u8>) -> Dd {
    pattern.clear();
    let mut maps: Vec<Vec<Dd>> = vec![input.data().iter().map(|&v| Dd(v, 0.0)).collect()];
    let (mut h, mut w) = input.dims();
    for (li, layer) in net.layers.iter().enumerate() {
        let s = layer.spec;
        let k = s.kernel;
        let (oh, ow) = (h - k + 1, w - k + 1);
        let mut out = vec![vec![Dd::ZERO; oh * ow]; s.n_out];
        for (o, plane) in out.iter_mut().enumerate() {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = Dd(layer.biases[o], 0.0);
                    for (i, src) in maps.iter().enumerate() {
                        for ky in 0..k {
                            for kx in 0..k {
                                let wv = layer.weights[((o * s.n_in + i) * k + ky) * k + kx];
                                acc = acc.add(src[(y + ky) * w + x + kx].mul_f(wv));
                            }
                        }
                    }
                    let last = li == 2;
                    if !last || net.final_relu {
                        pattern.push(u8::from(acc.is_neg()) + 2 * u8::from(last && acc.gt_one()));
                        if acc.is_neg() {
                            acc = Dd::ZERO;
                        } else if last && acc.gt_one() {
                            acc = Dd(1.0, 0.0);
                        }
                    }
                    plane[y * ow + x] = acc;
                }
            }
        }
        maps = out;
        h = oh;
        w = ow;
    }
    let mut loss = Dd::ZERO;
    for (p, &t) in maps[0].iter().zip(target.data()) {
        let d = p.add(Dd(-t, 0.0));
        loss = loss.add(d.mul(d));
    }
    Dd(loss.0, loss.1).mul_f(1.0 / (h * w) as f64)
}

fn param_mut(n: &mut SrNetwork, l: usize, idx: usize) -> &mut f64 {
    let nw = n.layers[l].weights.len();
    if idx < nw {
        &mut n.layers[l].weights[idx]
    } else {
        &mut n.layers[l].biases[idx - nw]
    }
}

pub struct FdResult {
    /// Coordinates compared against the analytic gradient.
    pub checked: usize,
    /// Coordinates where an activation switched within the step.
    pub kinks: usize,
    pub worst_rel: f64,
}

/// Central differences for every parameter of `net`, compared to `analytic`
/// laid out as (weights, biases) per layer.
pub fn fd_check(
    net: &SrNetwork,
    input: &Luma,
    target: &Luma,
    analytic: &tvsr::srnet::Gradients,
    step: f64,
) -> FdResult {
    let mut res = FdResult {
        checked: 0,
        kinks: 0,
        worst_rel: 0.0,
    };
    let (mut pp, mut pm) = (Vec::new(), Vec::new());
    for l in 0..3 {
        let nw = net.layers[l].weights.len();
        let nb = net.layers[l].biases.len();
        for idx in 0..nw + nb {
            let g = if idx < nw {
                analytic.weights[l][idx]
            } else {
                analytic.biases[l][idx - nw]
            };
            let mut plus = net.clone();
            let mut minus = net.clone();
            *param_mut(&mut plus, l, idx) += step;
            *param_mut(&mut minus, l, idx) -= step;
            let (hi, lo) = (*param_mut(&mut plus, l, idx), *param_mut(&mut minus, l, idx));
            let lp = dd_loss(&plus, input, target, &mut pp);
            let lm = dd_loss(&minus, input, target, &mut pm);
            if pp != pm {
                res.kinks += 1;
                continue;
            }
            let (s, e) = two_sum(hi, -lo);
            let fd = lp.add(lm.neg()).div(Dd(s, e));
            if g.abs() > 1e-8 {
                let rel = (g - fd).abs() / g.abs().max(fd.abs());
                res.worst_rel = res.worst_rel.max(rel);
                res.checked += 1;
            }
        }
    }
    res
}
