//! Dynamic subject masks: window-averaged saliency binarized with Otsu.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Rolling window of recent attention maps for one frame.
#[derive(Debug, Clone)]
pub struct AttentionMapStack {
    h: usize,
    w: usize,
    window: usize,
    maps: VecDeque<Vec<f64>>,
}

/// Default recent-window length.
pub const DEFAULT_WINDOW: usize = 5;

impl AttentionMapStack {
    pub fn new(h: usize, w: usize, window: usize) -> Result<Self> {
        for (name, v) in [("H", h), ("W", w), ("window", window)] {
            if v == 0 {
                return Err(Error::ZeroDimension { name });
            }
        }
        Ok(AttentionMapStack {
            h,
            w,
            window,
            maps: VecDeque::new(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Appends a map, evicting the oldest once the window is full.
    /// Entries must be nonnegative and finite.
    pub fn push(&mut self, map: Vec<f64>) -> Result<()> {
        if map.len() != self.h * self.w {
            return Err(Error::DataLength {
                expected: self.h * self.w,
                got: map.len(),
            });
        }
        for (i, &v) in map.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NonFiniteSaliency(i));
            }
        }
        if self.maps.len() == self.window {
            self.maps.pop_front();
        }
        self.maps.push_back(map);
        Ok(())
    }

    /// Elementwise mean over the window.
    pub fn aggregate(&self) -> Result<Vec<f64>> {
        if self.maps.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let mut mean = vec![0.0; self.h * self.w];
        for map in &self.maps {
            for (acc, v) in mean.iter_mut().zip(map) {
                *acc += v;
            }
        }
        let count = self.maps.len() as f64;
        for v in mean.iter_mut() {
            *v /= count;
        }
        Ok(mean)
    }
}

/// Otsu's threshold over a histogram of `bins` equal-width bins spanning
/// [min, max] of the grid.
///
/// Returns the bin edge maximizing between-class variance; ties resolve
/// to the lowest qualifying edge. A constant grid returns its value.
pub fn otsu_threshold(values: &[f64], bins: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if bins < 2 {
        return Err(Error::BadBins(bins));
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteSaliency(i));
        }
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(lo);
    }

    let mut hist = vec![0u64; bins];
    let range = hi - lo;
    for &v in values {
        // Normalize before binning so the split is invariant to scaling.
        let b = (((v - lo) / range) * bins as f64) as usize;
        hist[b.min(bins - 1)] += 1;
    }

    let total: u64 = values.len() as u64;
    let weighted_total: u64 = hist
        .iter()
        .enumerate()
        .map(|(b, &count)| b as u64 * count)
        .sum();

    let mut best_edge = 1usize;
    let mut best_var = f64::NEG_INFINITY;
    let mut count_lo: u64 = 0;
    let mut weighted_lo: u64 = 0;
    for edge in 1..bins {
        count_lo += hist[edge - 1];
        weighted_lo += (edge - 1) as u64 * hist[edge - 1];
        let count_hi = total - count_lo;
        if count_lo == 0 || count_hi == 0 {
            continue;
        }
        let mean_lo = weighted_lo as f64 / count_lo as f64;
        let mean_hi = (weighted_total - weighted_lo) as f64 / count_hi as f64;
        let diff = mean_lo - mean_hi;
        let var = (count_lo as f64 / total as f64) * (count_hi as f64 / total as f64) * diff * diff;
        if var > best_var {
            best_var = var;
            best_edge = edge;
        }
    }
    Ok(lo + best_edge as f64 * range / bins as f64)
}

/// mask(x) = 1 iff value(x) > threshold; ties classify as background.
pub fn binarize(values: &[f64], threshold: f64) -> Vec<u8> {
    values.iter().map(|&v| (v > threshold) as u8).collect()
}

/// Nearest-neighbor resample with floor index mapping; binarity preserved.
pub fn resize_mask(mask: &[u8], (h, w): (usize, usize), (th, tw): (usize, usize)) -> Result<Vec<u8>> {
    for (name, v) in [("H", h), ("W", w), ("H'", th), ("W'", tw)] {
        if v == 0 {
            return Err(Error::ZeroDimension { name });
        }
    }
    if mask.len() != h * w {
        return Err(Error::DataLength {
            expected: h * w,
            got: mask.len(),
        });
    }
    let mut out = Vec::with_capacity(th * tw);
    for i in 0..th {
        let si = i * h / th;
        for j in 0..tw {
            let sj = j * w / tw;
            out.push(mask[si * w + sj]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use proptest::prelude::*;

    /// Exhaustive reference: recompute class sums from scratch per edge.
    fn otsu_brute_force(values: &[f64], bins: usize) -> f64 {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return lo;
        }
        let range = hi - lo;
        let bin_of = |v: f64| ((((v - lo) / range) * bins as f64) as usize).min(bins - 1);
        let mut best_edge = 1usize;
        let mut best_var = f64::NEG_INFINITY;
        for edge in 1..bins {
            let mut count_lo = 0u64;
            let mut count_hi = 0u64;
            let mut sum_lo = 0u64;
            let mut sum_hi = 0u64;
            for &v in values {
                let b = bin_of(v);
                if b < edge {
                    count_lo += 1;
                    sum_lo += b as u64;
                } else {
                    count_hi += 1;
                    sum_hi += b as u64;
                }
            }
            if count_lo == 0 || count_hi == 0 {
                continue;
            }
            let total = values.len() as f64;
            let diff = sum_lo as f64 / count_lo as f64 - sum_hi as f64 / count_hi as f64;
            let var = (count_lo as f64 / total) * (count_hi as f64 / total) * diff * diff;
            if var > best_var {
                best_var = var;
                best_edge = edge;
            }
        }
        lo + best_edge as f64 * range / bins as f64
    }

    #[test]
    fn aggregate_of_singleton_is_the_map() {
        let mut stack = AttentionMapStack::new(1, 2, 5).unwrap();
        stack.push(vec![0.25, 0.75]).unwrap();
        assert_eq!(stack.aggregate().unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn aggregate_is_elementwise_mean() {
        let mut stack = AttentionMapStack::new(1, 2, 5).unwrap();
        stack.push(vec![0.0, 2.0]).unwrap();
        stack.push(vec![2.0, 0.0]).unwrap();
        assert_eq!(stack.aggregate().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn aggregate_of_identical_maps_is_idempotent() {
        let mut stack = AttentionMapStack::new(1, 2, 5).unwrap();
        for _ in 0..3 {
            stack.push(vec![0.5, 1.5]).unwrap();
        }
        assert_eq!(stack.aggregate().unwrap(), vec![0.5, 1.5]);
    }

    #[test]
    fn window_evicts_oldest() {
        let mut stack = AttentionMapStack::new(1, 1, 2).unwrap();
        stack.push(vec![10.0]).unwrap();
        stack.push(vec![2.0]).unwrap();
        stack.push(vec![4.0]).unwrap();
        assert_eq!(stack.len(), 2);
        assert_eq!(stack.aggregate().unwrap(), vec![3.0]);
    }

    #[test]
    fn empty_window_errors() {
        let stack = AttentionMapStack::new(2, 2, 5).unwrap();
        assert_eq!(stack.aggregate().unwrap_err(), Error::EmptyWindow);
    }

    #[test]
    fn otsu_splits_bimodal_grid() {
        let values = [0.1, 0.12, 0.11, 0.8, 0.82];
        let thr = otsu_threshold(&values, 256).unwrap();
        assert!(thr > 0.12 && thr < 0.8, "threshold {thr}");
        assert_eq!(binarize(&values, thr), vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn otsu_constant_grid_returns_value() {
        let values = [0.5; 9];
        let thr = otsu_threshold(&values, 256).unwrap();
        assert_eq!(thr, 0.5);
        assert!(binarize(&values, thr).iter().all(|&m| m == 0));
    }

    #[test]
    fn otsu_two_point_grid() {
        let thr = otsu_threshold(&[0.0, 1.0], 256).unwrap();
        assert!(thr > 0.0 && thr <= 1.0, "threshold {thr}");
        assert_eq!(binarize(&[0.0, 1.0], thr), vec![0, 1]);
    }

    #[test]
    fn otsu_rejects_bad_inputs() {
        assert_eq!(otsu_threshold(&[], 256).unwrap_err(), Error::EmptyWindow);
        assert_eq!(otsu_threshold(&[1.0], 1).unwrap_err(), Error::BadBins(1));
        assert!(matches!(
            otsu_threshold(&[1.0, f64::NAN], 256),
            Err(Error::NonFiniteSaliency(1))
        ));
    }

    #[test]
    fn binarize_ties_go_to_background() {
        assert_eq!(binarize(&[0.5, 0.5001], 0.5), vec![0, 1]);
    }

    #[test]
    fn resize_upsamples_in_blocks() {
        let mask = vec![1, 0, 0, 1];
        let out = resize_mask(&mask, (2, 2), (4, 4)).unwrap();
        #[rustfmt::skip]
        let expected = vec![
            1, 1, 0, 0,
            1, 1, 0, 0,
            0, 0, 1, 1,
            0, 0, 1, 1,
        ];
        assert_eq!(out, expected);
    }

    #[test]
    fn resize_identity_is_noop() {
        let mask = vec![1, 0, 1, 0, 1, 1];
        assert_eq!(resize_mask(&mask, (2, 3), (2, 3)).unwrap(), mask);
    }

    #[test]
    fn resize_downsample_takes_block_top_left() {
        #[rustfmt::skip]
        let checker = vec![
            1, 0, 1, 0,
            0, 1, 0, 1,
            1, 0, 1, 0,
            0, 1, 0, 1,
        ];
        // Brute-force index arithmetic: out[i][j] = in[i*4/2][j*4/2].
        let mut expected = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                expected.push(checker[(i * 4 / 2) * 4 + (j * 4 / 2)]);
            }
        }
        let out = resize_mask(&checker, (4, 4), (2, 2)).unwrap();
        assert_eq!(out, expected);
        assert_eq!(out, vec![1, 1, 1, 1]);
    }

    proptest! {
        #[test]
        fn otsu_matches_brute_force(seed in any::<u64>(), len in 2usize..=64) {
            let mut rng = RngHandle::new(seed, "otsu-prop");
            let values: Vec<f64> = (0..len).map(|_| rng.uniform() * 10.0).collect();
            let fast = otsu_threshold(&values, 256).unwrap();
            let slow = otsu_brute_force(&values, 256);
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn otsu_mask_is_scale_invariant(seed in any::<u64>(), scale_pick in 0usize..3) {
            let scale = [0.1, 3.0, 100.0][scale_pick];
            let mut rng = RngHandle::new(seed, "otsu-scale");
            let values: Vec<f64> = (0..48).map(|_| rng.uniform()).collect();
            let base_mask = binarize(&values, otsu_threshold(&values, 256).unwrap());
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let scaled_mask = binarize(&scaled, otsu_threshold(&scaled, 256).unwrap());
            prop_assert_eq!(base_mask, scaled_mask);
        }

        #[test]
        fn binarize_is_binary_and_monotone(seed in any::<u64>(), thr_lo in 0.0f64..1.0, bump in 0.0f64..1.0) {
            let mut rng = RngHandle::new(seed, "binarize-prop");
            let values: Vec<f64> = (0..32).map(|_| rng.uniform()).collect();
            let lo = binarize(&values, thr_lo);
            let hi = binarize(&values, thr_lo + bump);
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(*a <= 1 && *b <= 1);
                // Raising the threshold never turns a 0 into a 1.
                prop_assert!(b <= a);
            }
        }
    }
}
