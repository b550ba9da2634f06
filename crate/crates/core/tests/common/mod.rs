//! Independent reference implementations used as test oracles. Each one is
//! the slow, obvious version of a library routine.
#![allow(dead_code)]

use std::path::PathBuf;

/// Fraction of positive–negative pairs ranked correctly, ties counting half.
pub fn auroc_pairs(labels: &[u8], scores: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    total += 1.0;
                } else if scores[i] == scores[j] {
                    total += 0.5;
                }
            }
        }
    }
    total / pairs
}

/// Average precision by visiting every distinct score as a threshold and
/// counting predictions from scratch at each one.
pub fn ap_thresholds(labels: &[u8], scores: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let (mut tp, mut predicted) = (0.0, 0.0);
        for (&l, &s) in labels.iter().zip(scores) {
            if s >= t {
                predicted += 1.0;
                if l == 1 {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / n_pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

/// Textbook MCC with the zero-denominator convention.
pub fn mcc_formula(tp: f64, fp: f64, tn: f64, fn_: f64) -> f64 {
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    }
}

/// Softmax without max subtraction; fine for moderate scores.
pub fn softmax_naive(scores: &[f64]) -> Vec<f64> {
    let exps: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// LeGrad merge by explicit loops over layers, heads, queries and keys,
/// followed by min–max normalization; `layers[l][h][q][k]`.
pub fn legrad_naive(layers: &[Vec<Vec<Vec<f64>>>]) -> Vec<f64> {
    let l_count = layers.len();
    let heads = layers[0].len();
    let tokens = layers[0][0].len();
    let mut merged = vec![0.0; tokens - 1];
    for layer in layers {
        for k in 1..tokens {
            let mut acc = 0.0;
            for head in layer {
                for q in 0..tokens {
                    acc += head[q][k].max(0.0);
                }
            }
            merged[k - 1] += acc / (heads * tokens) as f64 / l_count as f64;
        }
    }
    let lo = merged.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = merged.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo == 0.0 {
        return vec![0.0; merged.len()];
    }
    merged.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Crop origin found by searching every full-size window for the one whose
/// middle is closest to the requested center.
pub fn crop_origin_search(dim: usize, center: usize, side: usize) -> usize {
    (0..=dim - side)
        .min_by_key(|&o| ((o + side / 2) as i64 - center as i64).abs())
        .unwrap()
}

/// Exact area enclosed by midpoint marching-squares contours, summed per
/// 2×2 cell of the background-padded mask. A cell with one foreground
/// corner holds a 1/8 triangle, two adjacent corners half the cell, two
/// diagonal corners (kept apart) two triangles, three corners 7/8.
pub fn marching_area(mask: &[bool], w: usize, h: usize) -> f64 {
    let at = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && mask[y as usize * w + x as usize];
    let mut area = 0.0;
    for y in -1..h as i64 {
        for x in -1..w as i64 {
            let c = [at(x, y), at(x + 1, y), at(x + 1, y + 1), at(x, y + 1)];
            let n = c.iter().filter(|&&b| b).count();
            area += match n {
                0 => 0.0,
                1 => 0.125,
                2 if c[0] == c[2] => 0.25,
                2 => 0.5,
                3 => 0.875,
                _ => 1.0,
            };
        }
    }
    area
}

/// Bilinear sample on a `side × side` grid at continuous grid coordinates,
/// clamped to the grid, written out corner by corner.
pub fn bilinear(grid: &[f64], side: usize, u: f64, v: f64) -> f64 {
    let max = (side - 1) as f64;
    let (u, v) = (u.clamp(0.0, max), v.clamp(0.0, max));
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(side - 1), (y0 + 1).min(side - 1));
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let g = |x: usize, y: usize| grid[y * side + x];
    g(x0, y0) * (1.0 - fx) * (1.0 - fy) + g(x1, y0) * fx * (1.0 - fy) + g(x0, y1) * (1.0 - fx) * fy + g(x1, y1) * fx * fy
}

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}
