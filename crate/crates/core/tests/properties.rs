mod common;

use proptest::prelude::*;

use vprompt::bridge::{read_tensor, write_tensor, Op, Request, WireTensor};
use vprompt::legrad::{aggregate, merged_relevance, AttentionGradients};
use vprompt::marker::{draw_circle, extract_contour, nodule_bbox, MarkerSpec};
use vprompt::metrics::{auprc, auroc};
use vprompt::preprocess::{denormalize, normalize, resize_bicubic, PreprocessConfig};
use vprompt::raster::RasterImage;

fn labelled(max: usize) -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
    prop::collection::vec((0u8..=1, 0u8..6), 2..=max)
        .prop_filter("both classes", |v| v.iter().any(|p| p.0 == 0) && v.iter().any(|p| p.0 == 1))
        .prop_map(|v| v.into_iter().map(|(l, s)| (l, s as f64 / 5.0)).unzip())
}

proptest! {
    #[test]
    fn auroc_equals_pair_counting((labels, scores) in labelled(64)) {
        let fast = auroc(&labels, &scores).unwrap();
        prop_assert!((fast - common::auroc_pairs(&labels, &scores)).abs() < 1e-12);
    }

    #[test]
    fn ranking_metrics_ignore_monotone_transforms((labels, scores) in labelled(40)) {
        let moved: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
        prop_assert_eq!(auroc(&labels, &scores).unwrap(), auroc(&labels, &moved).unwrap());
        prop_assert_eq!(auprc(&labels, &scores).unwrap(), auprc(&labels, &moved).unwrap());
    }

    #[test]
    fn auroc_reversal_without_ties(labels in prop::collection::vec(0u8..=1, 2..40)) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let scores: Vec<f64> = (0..labels.len()).map(|i| ((i * 7919) % 1009) as f64).collect();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let sum = auroc(&labels, &scores).unwrap() + auroc(&labels, &neg).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wire_round_trip(dims in prop::collection::vec(0u32..12, 0..=4), seed in any::<u32>()) {
        let n: usize = dims.iter().map(|&d| d as usize).product();
        let data: Vec<f32> = (0..n).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 40503))).collect();
        let t = WireTensor::new(dims, data).unwrap();
        let back = read_tensor(&write_tensor(&t)).unwrap();
        prop_assert_eq!(back.dims(), t.dims());
        prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn request_round_trip(meta in ".{0,40}", values in prop::collection::vec(-1e3f32..1e3, 0..20)) {
        let tensor = (!values.is_empty()).then(|| WireTensor::vector(values));
        let req = Request::new(Op::AttnGrads, meta, tensor);
        let back = Request::decode_body(&req.encode_body()).unwrap();
        prop_assert_eq!(back.key(), req.key());
        prop_assert_eq!(back, req);
    }

    #[test]
    fn contour_area_matches_cell_oracle(w in 1usize..16, h in 1usize..16, seed in any::<u64>()) {
        let bits: Vec<bool> = (0..w * h).map(|i| (seed.rotate_left(i as u32 % 64) ^ (i as u64 * 0x9E37)) & 3 == 0).collect();
        let mask = RasterImage::new(w, h, 1, bits.iter().map(|&b| b as u8 as f32).collect()).unwrap();
        let area: f64 = extract_contour(&mask).unwrap().iter().map(|p| p.signed_area()).sum();
        prop_assert!((area - common::marching_area(&bits, w, h)).abs() < 1e-9);
    }

    #[test]
    fn legrad_scale_and_head_order_invariant(seed in any::<u64>(), scale in 0.01f32..100.0) {
        let (h, t) = (3, 10);
        let value = |i: usize| (((seed >> (i % 48)) ^ (i as u64 * 2654435761)) % 2001) as f32 / 1000.0 - 1.0;
        let layer: Vec<f32> = (0..h * t * t).map(value).collect();
        let grads = AttentionGradients::new(h, t, vec![layer.clone(), layer.iter().map(|v| v * 0.5).collect()]).unwrap();
        let scaled = AttentionGradients::new(h, t, grads.layers().iter().map(|l| l.iter().map(|v| v * scale).collect()).collect()).unwrap();
        let mut swapped = grads.layers().to_vec();
        for l in &mut swapped {
            let (a, b) = l.split_at_mut(t * t);
            a.swap_with_slice(&mut b[..t * t]);
        }
        let swapped = AttentionGradients::new(h, t, swapped).unwrap();

        let base = aggregate(&grads);
        for (x, y) in base.values().iter().zip(aggregate(&scaled).values()) {
            prop_assert!((x - y).abs() < 1e-5);
        }
        for (x, y) in base.values().iter().zip(aggregate(&swapped).values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let merged = merged_relevance(&grads);
        let best = merged.iter().enumerate().fold(0, |b, (i, v)| if *v > merged[b] { i } else { b });
        prop_assert_eq!(base.argmax(), best);
    }

    #[test]
    fn normalize_is_invertible(values in prop::collection::vec(0.0f32..=1.0, 27)) {
        let cfg = PreprocessConfig::default();
        let img = RasterImage::new(3, 3, 3, values).unwrap();
        let back = denormalize(&normalize(&img, &cfg).unwrap(), &cfg).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_stays_in_unit_range(w in 2usize..40, h in 2usize..40, ow in 1usize..30, oh in 1usize..30, seed in any::<u64>()) {
        // hard black/white edges provoke bicubic overshoot
        let px: Vec<f32> = (0..w * h).map(|i| ((seed >> (i % 64)) & 1) as f32).collect();
        let out = resize_bicubic(&RasterImage::new(w, h, 1, px).unwrap(), ow, oh).unwrap();
        prop_assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn bbox_is_centered(cx in -100.0f64..3000.0, cy in -100.0f64..3000.0, d in 0.1f64..200.0, s in 0.1f64..10.0) {
        let b = nodule_bbox((cx, cy), d, s);
        let (bx, by) = b.center();
        prop_assert!((bx - cx).abs() < 1e-9 && (by - cy).abs() < 1e-9);
        prop_assert!(((b.x_max - b.x_min) - s * d).abs() < 1e-9);
    }

    #[test]
    fn circle_is_translation_invariant(dx in 0usize..20, dy in 0usize..20, d in 4.0f64..12.0) {
        let spec = MarkerSpec::default();
        let base = RasterImage::filled(120, 120, 1, 0.25).unwrap();
        let a = draw_circle(&base, (50.0, 50.0), d, &spec).unwrap();
        let b = draw_circle(&base, (50.0 + dx as f64, 50.0 + dy as f64), d, &spec).unwrap();
        for y in 0..100 {
            for x in 0..100 {
                prop_assert_eq!(a.get(x, y, 0), b.get(x + dx, y + dy, 0));
                prop_assert_eq!(a.get(x, y, 1), b.get(x + dx, y + dy, 1));
            }
        }
    }
}
