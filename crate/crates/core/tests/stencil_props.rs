mod common;

use common::random_luma;
use proptest::prelude::*;
use tvsr::image::Luma;
use tvsr::rng::SplitMix64;
use tvsr::stencil::{
    patch_signature, signature, signature_distance, stencil_response, StencilBank, TemplateId,
    BANK_SIZE, DEFAULT_BANK_DATA, FOOTPRINT,
};

fn bank() -> StencilBank {
    StencilBank::default_bank()
}

fn grid_patch(levels: &[u8]) -> Luma {
    Luma::new(
        FOOTPRINT,
        FOOTPRINT,
        levels.iter().map(|&v| v as f64 / 256.0).collect(),
    )
    .unwrap()
}

fn levels() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..128, FOOTPRINT * FOOTPRINT)
}

proptest! {
    #[test]
    fn shift_invariance_is_exact(p in levels(), c in 0u8..128) {
        let patch = grid_patch(&p);
        let shifted = patch.map(|v| v + c as f64 / 256.0);
        for t in bank().templates() {
            prop_assert_eq!(stencil_response(&shifted, t).unwrap(), stencil_response(&patch, t).unwrap());
        }
    }

    #[test]
    fn positive_homogeneity(seed in any::<u64>(), a in 0.001f64..4.0) {
        let patch = random_luma(&mut SplitMix64::new(seed), FOOTPRINT, FOOTPRINT);
        let scaled = patch.map(|v| a * v);
        for t in bank().templates() {
            let (r, rs) = (stencil_response(&patch, t).unwrap(), stencil_response(&scaled, t).unwrap());
            prop_assert!((rs - a * r).abs() <= 1e-12);
        }
        // hence the best template survives positive affine maps
        let affine = patch.map(|v| 0.5 * v + 0.25);
        prop_assert_eq!(signature(&affine, &bank()).unwrap().best(), signature(&patch, &bank()).unwrap().best());
    }

    #[test]
    fn responses_non_negative(seed in any::<u64>()) {
        let patch = random_luma(&mut SplitMix64::new(seed), FOOTPRINT, FOOTPRINT);
        let sig = signature(&patch, &bank()).unwrap();
        prop_assert!(sig.responses().iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn distance_is_a_metric(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let b = bank();
        let sig = |s| signature(&random_luma(&mut SplitMix64::new(s), FOOTPRINT, FOOTPRINT), &b).unwrap();
        let (p, q, r) = (sig(s1), sig(s2), sig(s3));
        let d = |x, y| signature_distance(x, y).unwrap();
        prop_assert_eq!(d(&p, &p), 0.0);
        prop_assert_eq!(d(&p, &q), d(&q, &p));
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
    }

    #[test]
    fn patch_signature_sums_footprints(seed in any::<u64>(), half in 2usize..5) {
        let n = 2 * half + 1;
        let img = random_luma(&mut SplitMix64::new(seed), n, n);
        let b = bank();
        let got = patch_signature(&img, &b).unwrap();
        let mut want = [0.0; BANK_SIZE];
        for r in 0..=n - FOOTPRINT {
            for c in 0..=n - FOOTPRINT {
                let s = signature(&img.window(r, c, FOOTPRINT, FOOTPRINT).unwrap(), &b).unwrap();
                for (w, v) in want.iter_mut().zip(s.responses()) {
                    *w += v;
                }
            }
        }
        prop_assert_eq!(got.responses(), &want);
    }
}

/// Exhaustive argmin over the template pairs, written independently.
fn brute_best(patch: &Luma, bank: &StencilBank) -> TemplateId {
    let mut best = (f64::INFINITY, TemplateId::new(1, 1));
    for d in 1..=3u8 {
        for k in 1..=8u8 {
            let mut v = 0.0;
            for p in &bank.template(TemplateId::new(d, k)).pairs {
                let at = |(r, c): (i32, i32)| patch.get((r + 2) as usize, (c + 2) as usize);
                v += p.weight * (at(p.a) - at(p.b)).abs();
            }
            if v < best.0 {
                best = (v, TemplateId::new(d, k));
            }
        }
    }
    best.1
}

#[test]
fn argmin_matches_brute_force() {
    let b = bank();
    let mut rng = SplitMix64::new(17);
    for _ in 0..1000 {
        let patch = random_luma(&mut rng, FOOTPRINT, FOOTPRINT);
        assert_eq!(signature(&patch, &b).unwrap().best(), brute_best(&patch, &b));
    }
}

#[test]
fn constant_patch_ties_to_first_template() {
    let sig = signature(&Luma::filled(5, 5, 0.42), &bank()).unwrap();
    assert!(sig.responses().iter().all(|&r| r == 0.0));
    assert_eq!(sig.best(), TemplateId::new(1, 1));
}

#[test]
fn bank_file_round_trips_through_parser() {
    let b = StencilBank::parse(DEFAULT_BANK_DATA).unwrap();
    assert_eq!(b.templates().len(), BANK_SIZE);
    for (slot, t) in b.templates().iter().enumerate() {
        assert_eq!(t.id, TemplateId::from_slot(slot));
        assert!(t.pairs.iter().all(|p| p.weight >= 0.0));
        let reach = |(r, c): (i32, i32)| r.abs() <= 2 && c.abs() <= 2;
        assert!(t.pairs.iter().all(|p| reach(p.a) && reach(p.b)));
    }
}

#[test]
fn oriented_edges_pick_matching_class() {
    let b = bank();
    // a step across rows is a horizontal edge; class 1 follows it
    let horizontal = Luma::from_fn(5, 5, |r, _| if r < 2 { 0.2 } else { 0.8 });
    assert_eq!(signature(&horizontal, &b).unwrap().best().class, 1);
    let vertical = Luma::from_fn(5, 5, |_, c| if c < 2 { 0.2 } else { 0.8 });
    assert_eq!(signature(&vertical, &b).unwrap().best().class, 2);
    let diagonal = Luma::from_fn(5, 5, |r, c| if r + c < 4 { 0.2 } else { 0.8 });
    assert_eq!(signature(&diagonal, &b).unwrap().best().class, 3);
}
