//! Interval segmentation of the time axis and the weighted loss built on it.
//!
//! Pipeline: average the corpus over samples and channels, take first
//! differences, fit a polynomial, quantile the fitted values on the integer
//! grid, place interval boundaries at the rightmost quantile crossings, and
//! weight the per-interval squared error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::SequenceCorpus;
use crate::error::{Error, Result};
use crate::netcore::Tensor;

/// Mean over all samples and channels per time step (1-based steps 1..=T).
pub fn average_feature_curve(corpus: &SequenceCorpus) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("average curve of an empty corpus".into()));
    }
    let (n, t, d) = (corpus.len(), corpus.t_len(), corpus.channels());
    let mut curve = vec![0.0; t];
    for i in 0..n {
        for step in 0..t {
            curve[step] += corpus.frame(i, step).iter().sum::<f64>();
        }
    }
    let denom = (n * d) as f64;
    for v in &mut curve {
        *v /= denom;
    }
    Ok(curve)
}

/// First differences of the average curve: values for steps 2..=T.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceCurve {
    /// `values[k]` is the change at step `k + 2` (1-based).
    pub values: Vec<f64>,
    /// The source average curve, steps 1..=T.
    pub source: Vec<f64>,
}

pub fn difference_curve(average: &[f64]) -> Result<DifferenceCurve> {
    if average.len() < 2 {
        return Err(Error::InvalidArgument(
            "difference curve needs at least 2 time steps".into(),
        ));
    }
    let values = average.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(DifferenceCurve {
        values,
        source: average.to_vec(),
    })
}

/// Least-squares polynomial in a Chebyshev basis over an affine-mapped
/// domain; evaluated by basis recurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCurve {
    pub coeffs: Vec<f64>,
    /// Time-axis endpoints mapped onto [-1, 1].
    pub domain: (f64, f64),
}

impl FittedCurve {
    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = self.domain;
        let u = if hi > lo { (2.0 * t - lo - hi) / (hi - lo) } else { 0.0 };
        let mut acc = 0.0;
        let (mut prev, mut cur) = (1.0, u);
        for (k, &c) in self.coeffs.iter().enumerate() {
            let basis = match k {
                0 => 1.0,
                1 => u,
                _ => {
                    let next = 2.0 * u * cur - prev;
                    prev = cur;
                    cur = next;
                    next
                }
            };
            acc += c * basis;
        }
        acc
    }

    /// Values on the integer grid `t = 2..=t_len`.
    pub fn grid_values(&self, t_len: usize) -> Vec<f64> {
        (2..=t_len).map(|s| self.eval(s as f64)).collect()
    }
}

/// Fit `degree`-order polynomial to the difference curve over steps 2..=T.
pub fn fit_polynomial(curve: &DifferenceCurve, degree: usize) -> Result<FittedCurve> {
    let n = curve.values.len();
    if degree >= n {
        return Err(Error::InvalidArgument(format!(
            "degree {degree} needs more than {n} points"
        )));
    }
    let t_len = curve.source.len();
    let (lo, hi) = (2.0, t_len as f64);
    let cols = degree + 1;
    let mut design = DMatrix::zeros(n, cols);
    for (row, s) in (2..=t_len).enumerate() {
        let u = if hi > lo {
            (2.0 * s as f64 - lo - hi) / (hi - lo)
        } else {
            0.0
        };
        let (mut prev, mut cur) = (1.0, u);
        for col in 0..cols {
            design[(row, col)] = match col {
                0 => 1.0,
                1 => u,
                _ => {
                    let next = 2.0 * u * cur - prev;
                    prev = cur;
                    cur = next;
                    next
                }
            };
        }
    }
    let rhs = DVector::from_column_slice(&curve.values);
    let svd = design.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Numerical(format!("polynomial fit failed: {e}")))?;
    Ok(FittedCurve {
        coeffs: sol.iter().copied().collect(),
        domain: (lo, hi),
    })
}

/// Three boundaries, four decreasing weights, and the interval index sets
/// they induce over the 1-based time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSegmentation {
    pub boundaries: [usize; 3],
    pub weights: [f64; 4],
    pub intervals: [Vec<usize>; 4],
    pub quartiles: [f64; 3],
}

/// Weights used when the caller supplies none: strictly decreasing,
/// already summing to one.
pub const DEFAULT_WEIGHTS: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

impl IntervalSegmentation {
    /// Partition [1, t_len] at strictly increasing boundaries in [2, t_len]:
    /// `[1, b1-1], [b1, b2-1], [b2, b3-1], [b3, t_len]`.
    pub fn from_boundaries(
        boundaries: [usize; 3],
        weights: [f64; 4],
        quartiles: [f64; 3],
        t_len: usize,
    ) -> Result<Self> {
        let [b1, b2, b3] = boundaries;
        if !(2 <= b1 && b1 < b2 && b2 < b3 && b3 <= t_len) {
            return Err(Error::InvalidArgument(format!(
                "boundaries {boundaries:?} must be strictly increasing within [2, {t_len}]"
            )));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidArgument("interval weights must be positive".into()));
        }
        let intervals = [
            (1..b1).collect(),
            (b1..b2).collect(),
            (b2..b3).collect(),
            (b3..=t_len).collect(),
        ];
        Ok(IntervalSegmentation {
            boundaries,
            weights,
            intervals,
            quartiles,
        })
    }

    /// Explicit interval index sets (1-based). Used for direct loss
    /// evaluation; sets may overlap and need not partition the axis.
    pub fn from_intervals(intervals: [Vec<usize>; 4], weights: [f64; 4]) -> Result<Self> {
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidArgument("interval weights must be positive".into()));
        }
        if intervals.iter().any(|iv| iv.is_empty()) {
            return Err(Error::InvalidArgument("intervals must be non-empty".into()));
        }
        let mut last = 0usize;
        for iv in &intervals {
            let hi = *iv.iter().max().unwrap();
            last = last.max(hi);
            if iv.iter().any(|&p| p == 0) {
                return Err(Error::InvalidArgument("interval positions are 1-based".into()));
            }
        }
        let b1 = intervals[1].iter().copied().min().unwrap();
        let b2 = intervals[2].iter().copied().min().unwrap();
        let b3 = intervals[3].iter().copied().min().unwrap();
        Ok(IntervalSegmentation {
            boundaries: [b1, b2, b3],
            weights,
            intervals,
            quartiles: [f64::NAN; 3],
        })
    }

    /// Fallback for degenerate curves: four near-equal quarters.
    pub fn equal_quarters(t_len: usize, weights: [f64; 4]) -> Result<Self> {
        if t_len < 4 {
            return Err(Error::InvalidArgument("equal quarters need t_len >= 4".into()));
        }
        let b1 = (t_len / 4).max(2);
        let b2 = (t_len / 2).max(b1 + 1);
        let b3 = (3 * t_len / 4).max(b2 + 1);
        Self::from_boundaries([b1, b2, b3], weights, [f64::NAN; 3], t_len)
    }

    pub fn t_len(&self) -> usize {
        self.intervals
            .iter()
            .flat_map(|iv| iv.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Summed interval weight at each of `t_out` positions, where output row
    /// `r` corresponds to 1-based time position `r + 1 + offset`.
    pub fn step_weights(&self, t_out: usize, offset: usize) -> Vec<f64> {
        let mut w = vec![0.0; t_out];
        for (iv, &weight) in self.intervals.iter().zip(&self.weights) {
            for &pos in iv {
                if pos >= 1 + offset {
                    let r = pos - 1 - offset;
                    if r < t_out {
                        w[r] += weight;
                    }
                }
            }
        }
        w
    }
}

/// Linear-interpolation quantile of unsorted values.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac
    } else {
        sorted[lo]
    }
}

/// Boundaries from fitted values sampled on the grid `t = 2..=t_len`
/// (`fitted[k]` is the value at step `k + 2`). For each quartile the
/// rightmost sign-change pair is selected and its right endpoint becomes
/// the boundary; colliding boundaries shift right by one.
pub fn segment_from_fitted(
    fitted: &[f64],
    t_len: usize,
    weights: [f64; 4],
) -> Result<IntervalSegmentation> {
    if fitted.len() != t_len.saturating_sub(1) {
        return Err(Error::Shape(format!(
            "{} fitted values for grid 2..={t_len}",
            fitted.len()
        )));
    }
    if fitted.len() < 2 {
        return Err(Error::DegenerateSegmentation(
            "too few grid points for quartile crossings".into(),
        ));
    }
    let quartiles = [
        quantile(fitted, 0.25),
        quantile(fitted, 0.5),
        quantile(fitted, 0.75),
    ];
    let spread = fitted.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - fitted.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 0.0 {
        return Err(Error::DegenerateSegmentation(
            "fitted curve is constant; no quartile crossings exist (fall back to equal quarters)"
                .into(),
        ));
    }
    let mut bounds = Vec::with_capacity(3);
    for &q in &quartiles {
        let mut found = None;
        for k in 0..fitted.len() - 1 {
            let a = fitted[k] - q;
            let b = fitted[k + 1] - q;
            if a * b <= 0.0 {
                // crossing within pair (k+2, k+3); right endpoint is the boundary
                found = Some(k + 3);
            }
        }
        match found {
            Some(b) => bounds.push(b),
            None => {
                return Err(Error::DegenerateSegmentation(format!(
                    "quartile {q} is never crossed (fall back to equal quarters)"
                )))
            }
        }
    }
    bounds.sort_unstable();
    // collision repair: shift later duplicates right
    for i in 1..3 {
        if bounds[i] <= bounds[i - 1] {
            bounds[i] = bounds[i - 1] + 1;
        }
    }
    if bounds[2] > t_len || bounds[0] < 2 {
        return Err(Error::DegenerateSegmentation(format!(
            "boundary repair exhausted the grid: {bounds:?} for t_len {t_len} (fall back to equal quarters)"
        )));
    }
    IntervalSegmentation::from_boundaries([bounds[0], bounds[1], bounds[2]], weights, quartiles, t_len)
}

/// Full pipeline from a (scaled) corpus. Returns the segmentation together
/// with the curves it was derived from, for inspection and plotting.
pub struct SegmentationArtifacts {
    pub segmentation: IntervalSegmentation,
    pub average: Vec<f64>,
    pub difference: DifferenceCurve,
    pub fitted: FittedCurve,
    pub fitted_grid: Vec<f64>,
}

pub fn build_segmentation(
    corpus: &SequenceCorpus,
    degree: usize,
    weights: [f64; 4],
) -> Result<SegmentationArtifacts> {
    let average = average_feature_curve(corpus)?;
    let difference = difference_curve(&average)?;
    let fitted = fit_polynomial(&difference, degree)?;
    let fitted_grid = fitted.grid_values(corpus.t_len());
    let segmentation = segment_from_fitted(&fitted_grid, corpus.t_len(), weights)?;
    Ok(SegmentationArtifacts {
        segmentation,
        average,
        difference,
        fitted,
        fitted_grid,
    })
}

/// Interval-weighted squared error: per sample,
/// `sum_i w_i * sum_{t in I_i} (1/d) * sum_j (y - yhat)^2`, then averaged
/// over the batch. Output row `r` is 1-based position `r + 1`.
pub fn weighted_mse(
    predictions: &Tensor,
    targets: &Tensor,
    segmentation: &IntervalSegmentation,
) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs targets {:?}",
            predictions.shape(),
            targets.shape()
        )));
    }
    let (batch, t_out, d) = predictions.dims3()?;
    if segmentation.t_len() > t_out {
        return Err(Error::Shape(format!(
            "segmentation covers up to position {}, predictions have {t_out}",
            segmentation.t_len()
        )));
    }
    let mut total = 0.0;
    for b in 0..batch {
        let sample = &predictions.data()[b * t_out * d..(b + 1) * t_out * d];
        let target = &targets.data()[b * t_out * d..(b + 1) * t_out * d];
        for (interval, &weight) in segmentation.intervals.iter().zip(&segmentation.weights) {
            let mut interval_err = 0.0;
            for &pos in interval {
                let r = pos - 1;
                let mut step_err = 0.0;
                for j in 0..d {
                    let diff = sample[r * d + j] - target[r * d + j];
                    step_err += diff * diff;
                }
                interval_err += step_err / d as f64;
            }
            total += weight * interval_err;
        }
    }
    Ok(total / batch as f64)
}

/// Serialized form for `seg.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentationFile {
    pub t_len: usize,
    pub degree: usize,
    pub boundaries: [usize; 3],
    pub weights: [f64; 4],
    pub quartiles: [f64; 3],
    pub polynomial: FittedCurve,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, pad_to_length, SyntheticSpec};

    #[test]
    fn average_curve_single_sample_single_channel() {
        let seq = vec![vec![1.0], vec![2.0], vec![4.0]];
        let c = pad_to_length(&[seq], &[0], 1, 3).unwrap();
        assert_eq!(average_feature_curve(&c).unwrap(), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn average_curve_symmetric_pair_is_constant() {
        let a = vec![vec![0.2], vec![0.9], vec![0.4]];
        let b = vec![vec![0.8], vec![0.1], vec![0.6]];
        let c = pad_to_length(&[a, b], &[0, 0], 1, 3).unwrap();
        for v in average_feature_curve(&c).unwrap() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn average_curve_matches_double_loop_oracle() {
        let spec = SyntheticSpec::desk(4, 3, 20, 6);
        let c = generate_synthetic(&spec, 2).unwrap();
        let curve = average_feature_curve(&c).unwrap();
        for (step, &got) in curve.iter().enumerate() {
            let mut acc = 0.0;
            let mut count = 0usize;
            for i in 0..c.len() {
                for j in 0..c.channels() {
                    acc += c.frame(i, step)[j];
                    count += 1;
                }
            }
            assert!((got - acc / count as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn difference_curve_basics() {
        assert_eq!(
            difference_curve(&[0.0, 1.0, 0.5]).unwrap().values,
            vec![1.0, -0.5]
        );
        let constant = difference_curve(&[2.0; 5]).unwrap();
        assert!(constant.values.iter().all(|&v| v == 0.0));
        let linear = difference_curve(&[0.0, 0.3, 0.6, 0.9]).unwrap();
        for v in linear.values {
            assert!((v - 0.3).abs() < 1e-12);
        }
        assert!(difference_curve(&[1.0]).is_err());
    }

    #[test]
    fn cubic_data_fits_exactly_at_degree_three() {
        let t_len = 24;
        let poly = |t: f64| 0.3 - 0.02 * t + 0.001 * t * t - 0.00002 * t * t * t;
        let avg: Vec<f64> = (1..=t_len).map(|_| 0.0).collect();
        let mut curve = difference_curve(&avg).unwrap();
        curve.values = (2..=t_len).map(|s| poly(s as f64)).collect();
        let fit = fit_polynomial(&curve, 3).unwrap();
        for s in 2..=t_len {
            let r = (fit.eval(s as f64) - poly(s as f64)).abs();
            assert!(r < 1e-8, "residual {r} at s={s}");
        }
    }

    #[test]
    fn residual_norm_non_increasing_in_degree() {
        let spec = SyntheticSpec::desk(5, 4, 32, 8);
        let c = generate_synthetic(&spec, 7).unwrap();
        let avg = average_feature_curve(&c).unwrap();
        let curve = difference_curve(&avg).unwrap();
        let mut prev = f64::INFINITY;
        for degree in 1..=20 {
            let fit = fit_polynomial(&curve, degree).unwrap();
            let res: f64 = (2..=32)
                .map(|s| {
                    let e = fit.eval(s as f64) - curve.values[s - 2];
                    e * e
                })
                .sum::<f64>()
                .sqrt();
            assert!(res <= prev + 1e-9, "degree {degree}: {res} > {prev}");
            prev = res;
        }
    }

    #[test]
    fn constant_curve_fits_constant() {
        let avg = vec![0.0; 16];
        let mut curve = difference_curve(&avg).unwrap();
        curve.values = vec![0.37; 15];
        let fit = fit_polynomial(&curve, 5).unwrap();
        for s in 2..=16 {
            assert!((fit.eval(s as f64) - 0.37).abs() < 1e-10);
        }
    }

    #[test]
    fn degree_must_be_below_point_count() {
        let avg = vec![0.0; 5];
        let curve = difference_curve(&avg).unwrap(); // 4 points
        assert!(fit_polynomial(&curve, 4).is_err());
        assert!(fit_polynomial(&curve, 3).is_ok());
    }

    /// Exhaustive-scan oracle: for each quartile, collect every sign-change
    /// pair and take the right endpoint of the last one.
    fn oracle_boundaries(fitted: &[f64]) -> Vec<usize> {
        let qs = [
            quantile(fitted, 0.25),
            quantile(fitted, 0.5),
            quantile(fitted, 0.75),
        ];
        let mut out = Vec::new();
        for q in qs {
            let crossings: Vec<usize> = (0..fitted.len() - 1)
                .filter(|&k| (fitted[k] - q) * (fitted[k + 1] - q) <= 0.0)
                .map(|k| k + 3)
                .collect();
            out.push(*crossings.last().unwrap());
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn decreasing_curve_boundaries_match_oracle() {
        let t_len = 40;
        let fitted: Vec<f64> = (2..=t_len).map(|s| 1.0 - 0.02 * s as f64).collect();
        let seg = segment_from_fitted(&fitted, t_len, DEFAULT_WEIGHTS).unwrap();
        let oracle = oracle_boundaries(&fitted);
        assert_eq!(seg.boundaries.to_vec(), oracle);
        assert!(seg.boundaries[0] < seg.boundaries[1] && seg.boundaries[1] < seg.boundaries[2]);
        // strictly decreasing curve: value-quartiles sit at the 25/50/75%
        // positions of the time axis
        let n = fitted.len() as f64;
        let expect = [
            2.0 + 0.25 * (n - 1.0),
            2.0 + 0.5 * (n - 1.0),
            2.0 + 0.75 * (n - 1.0),
        ];
        for (b, e) in seg.boundaries.iter().zip(expect) {
            assert!((*b as f64 - e).abs() <= 1.0, "boundary {b} vs expected {e}");
        }
    }

    #[test]
    fn constant_curve_is_degenerate() {
        let fitted = vec![0.5; 19];
        match segment_from_fitted(&fitted, 20, DEFAULT_WEIGHTS) {
            Err(Error::DegenerateSegmentation(_)) => {}
            other => panic!("expected degenerate segmentation, got {other:?}"),
        }
    }

    #[test]
    fn rightmost_crossing_wins() {
        // Tent curve: rises over the first half, falls over the second, so
        // every quartile is crossed once per side and the falling-side
        // (rightmost) crossing must be chosen.
        let t_len = 51;
        let fitted: Vec<f64> = (2..=t_len)
            .map(|s| {
                let x = (s - 2) as f64 / 49.0;
                1.0 - (2.0 * x - 1.0).abs()
            })
            .collect();
        let seg = segment_from_fitted(&fitted, t_len, DEFAULT_WEIGHTS).unwrap();
        let oracle = oracle_boundaries(&fitted);
        assert_eq!(seg.boundaries.to_vec(), oracle);
        for q in [
            quantile(&fitted, 0.25),
            quantile(&fitted, 0.5),
            quantile(&fitted, 0.75),
        ] {
            let crossings: Vec<usize> = (0..fitted.len() - 1)
                .filter(|&k| (fitted[k] - q) * (fitted[k + 1] - q) <= 0.0)
                .map(|k| k + 3)
                .collect();
            assert!(crossings.len() >= 2, "want both an up- and a down-crossing");
            assert!(seg.boundaries.contains(crossings.last().unwrap()));
        }
    }

    #[test]
    fn intervals_partition_the_axis() {
        let t_len = 64;
        let fitted: Vec<f64> = (2..=t_len)
            .map(|s| (s as f64 * 0.3).sin() * (1.0 - s as f64 / 80.0))
            .collect();
        let seg = segment_from_fitted(&fitted, t_len, DEFAULT_WEIGHTS).unwrap();
        let mut seen = vec![0usize; t_len + 1];
        for iv in &seg.intervals {
            for &p in iv {
                seen[p] += 1;
            }
        }
        assert!(seen[1..].iter().all(|&c| c == 1), "not a partition: {seen:?}");
    }

    #[test]
    fn weighted_mse_zero_on_equal_inputs() {
        let seg = IntervalSegmentation::equal_quarters(8, DEFAULT_WEIGHTS).unwrap();
        let x = Tensor::new(vec![2, 8, 3], (0..48).map(|v| v as f64).collect()).unwrap();
        assert_eq!(weighted_mse(&x, &x, &seg).unwrap(), 0.0);
    }

    #[test]
    fn weighted_mse_hand_example() {
        // intervals {1,2}, {3}, {4}, {4}; weights (0.4, 0.3, 0.2, 0.1);
        // unit squared error everywhere -> 0.4*2 + 0.3 + 0.2 + 0.1 = 1.4
        let seg = IntervalSegmentation::from_intervals(
            [vec![1, 2], vec![3], vec![4], vec![4]],
            [0.4, 0.3, 0.2, 0.1],
        )
        .unwrap();
        let pred = Tensor::new(vec![1, 4, 1], vec![1.0; 4]).unwrap();
        let targ = Tensor::new(vec![1, 4, 1], vec![0.0; 4]).unwrap();
        let loss = weighted_mse(&pred, &targ, &seg).unwrap();
        let expected = 0.4 * 2.0 + 0.3 * 1.0 + 0.2 * 1.0 + 0.1 * 1.0;
        assert_eq!(loss, expected);
        assert!((loss - 1.4).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn equal_unit_weights_reduce_to_summed_mse() {
        let seg = IntervalSegmentation::from_boundaries(
            [3, 5, 7],
            [1.0, 1.0, 1.0, 1.0],
            [f64::NAN; 3],
            10,
        )
        .unwrap();
        let pred = Tensor::new(vec![3, 10, 2], (0..60).map(|v| (v as f64) * 0.1).collect()).unwrap();
        let targ = Tensor::new(vec![3, 10, 2], (0..60).map(|v| (v as f64) * 0.07).collect()).unwrap();
        let weighted = weighted_mse(&pred, &targ, &seg).unwrap();
        let plain: f64 = pred
            .data()
            .iter()
            .zip(targ.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 60.0;
        assert!((weighted - 10.0 * plain).abs() < 1e-12);
    }

    #[test]
    fn step_weights_offset_maps_positions() {
        let seg = IntervalSegmentation::from_boundaries(
            [2, 3, 4],
            [0.4, 0.3, 0.2, 0.1],
            [f64::NAN; 3],
            5,
        )
        .unwrap();
        // intervals: {1}, {2}, {3}, {4,5}
        let w = seg.step_weights(4, 1); // row r -> position r + 2
        assert_eq!(w, vec![0.3, 0.2, 0.1, 0.1]);
    }

    #[test]
    fn build_segmentation_on_synthetic_corpus() {
        let spec = SyntheticSpec::desk(10, 8, 64, 25);
        let c = generate_synthetic(&spec, 4).unwrap();
        let arts = build_segmentation(&c, 20, DEFAULT_WEIGHTS).unwrap();
        let b = arts.segmentation.boundaries;
        assert!(2 <= b[0] && b[0] < b[1] && b[1] < b[2] && b[2] <= 64);
        assert_eq!(arts.average.len(), 64);
        assert_eq!(arts.difference.values.len(), 63);
        assert_eq!(arts.fitted_grid.len(), 63);
    }
}
