//! Empirical verification backbone: Lipschitz and local-skew estimates over
//! sampled pairs, box-counting dimension via greedy epsilon-nets, and the
//! power-rule cover identity for metrics raised to an exponent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("no sampled pair satisfies the estimator's distance constraint")]
    NoValidPairs,
    #[error("scale range degenerate: fewer than 3 scales yield distinct net counts")]
    ScaleRangeDegenerate,
}

/// A finite point sample with a distance evaluator and a seeded pair sample.
pub struct MetricSample<'a, P: Send + Sync, S: Real> {
    pub points: Vec<P>,
    pub dist: &'a (dyn Fn(&P, &P) -> S + Sync),
    pub pairs: Vec<(usize, usize)>,
    pub seed: u64,
}

impl<'a, P: Send + Sync, S: Real> MetricSample<'a, P, S> {
    pub fn new(
        points: Vec<P>,
        dist: &'a (dyn Fn(&P, &P) -> S + Sync),
        n_pairs: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = points.len();
        let pairs = if n < 2 {
            Vec::new()
        } else {
            (0..n_pairs)
                .map(|_| {
                    let i = rng.gen_range(0..n);
                    let mut j = rng.gen_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    (i, j)
                })
                .collect()
        };
        MetricSample {
            points,
            dist,
            pairs,
            seed,
        }
    }

    /// All ordered pairs (used when the pair budget covers the sample).
    pub fn with_all_pairs(
        points: Vec<P>,
        dist: &'a (dyn Fn(&P, &P) -> S + Sync),
        seed: u64,
    ) -> Self {
        let n = points.len();
        let pairs = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        MetricSample {
            points,
            dist,
            pairs,
            seed,
        }
    }

    pub fn d(&self, i: usize, j: usize) -> S {
        (self.dist)(&self.points[i], &self.points[j])
    }

    /// Spot-check symmetry and zero diagonal over the sampled pairs.
    pub fn check_metric_invariants(&self) -> bool {
        self.pairs.par_iter().all(|&(i, j)| {
            let dij = self.d(i, j);
            let dji = self.d(j, i);
            let tol = S::from_f64_lossy(1e-12) * dij.max(S::one());
            (dij - dji).abs() <= tol && self.d(i, i) == S::zero()
        })
    }
}

/// Max over sampled pairs of `d(fx, fy) / d(x, y)`; a lower bound for the
/// true Lipschitz constant.
pub fn empirical_lip<P: Send + Sync, S: Real>(
    ms: &MetricSample<'_, P, S>,
    map: &(dyn Fn(&P) -> P + Sync),
) -> Result<S, EstimatorError> {
    let images: Vec<P> = ms.points.par_iter().map(|p| map(p)).collect();
    let best = ms
        .pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let d = ms.d(i, j);
            if d > S::zero() {
                Some((ms.dist)(&images[i], &images[j]) / d)
            } else {
                None
            }
        })
        .reduce_with(S::max);
    best.ok_or(EstimatorError::NoValidPairs)
}

/// Max over epsilon levels of the min ratio `d(fx, fy) / d(x, y)` over
/// pairs with `0 < d(x, y) < eps` — the local anti-Lipschitz (skew)
/// estimate.
pub fn empirical_skew<P: Send + Sync, S: Real>(
    ms: &MetricSample<'_, P, S>,
    map: &(dyn Fn(&P) -> P + Sync),
    eps_levels: &[S],
) -> Result<S, EstimatorError> {
    let images: Vec<P> = ms.points.par_iter().map(|p| map(p)).collect();
    let dists: Vec<(S, S)> = ms
        .pairs
        .par_iter()
        .map(|&(i, j)| (ms.d(i, j), (ms.dist)(&images[i], &images[j])))
        .collect();
    let mut best: Option<S> = None;
    for &eps in eps_levels {
        let level_min = dists
            .iter()
            .filter(|&&(d, _)| d > S::zero() && d < eps)
            .map(|&(d, dimg)| dimg / d)
            .fold(None, |acc: Option<S>, r| Some(acc.map_or(r, |a| a.min(r))));
        if let Some(m) = level_min {
            best = Some(best.map_or(m, |b| b.max(m)));
        }
    }
    best.ok_or(EstimatorError::NoValidPairs)
}

/// Box-counting fit: scales, greedy-net counts, least-squares slope of
/// `log N` against `log(1/eps)`, and the max fit residual.
#[derive(Debug, Clone)]
pub struct DimensionFit<S: Real> {
    pub scales: Vec<S>,
    pub counts: Vec<usize>,
    pub slope: S,
    pub residual: S,
}

/// Default scale ladder: `diam/2` down to `diam/64` at 8 geometric levels.
pub fn default_scales<S: Real>(diam: S) -> Vec<S> {
    geometric_scales(
        diam / S::from_f64_lossy(2.0),
        diam / S::from_f64_lossy(64.0),
        8,
    )
}

pub fn geometric_scales<S: Real>(hi: S, lo: S, levels: usize) -> Vec<S> {
    assert!(levels >= 2 && hi > lo && lo > S::zero());
    let ratio = (lo / hi).powf(S::one() / S::from_f64_lossy((levels - 1) as f64));
    let mut s = hi;
    (0..levels)
        .map(|k| {
            if k > 0 {
                s = s * ratio;
            }
            s
        })
        .collect()
}

/// Insertion radii of the farthest-point (Gonzalez) traversal, truncated
/// once the radius drops to `min_scale`. Deterministic: the first point is
/// the first center and ties go to the lowest index.
pub fn net_insertion_radii<P: Send + Sync, S: Real>(
    points: &[P],
    dist: &(dyn Fn(&P, &P) -> S + Sync),
    min_scale: S,
    max_centers: usize,
) -> Vec<S> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut dmin: Vec<S> = points.par_iter().map(|p| dist(&points[0], p)).collect();
    let mut radii = Vec::new();
    for _ in 1..n.min(max_centers) {
        // farthest remaining point, lowest index on ties
        let (idx, r) = dmin
            .par_iter()
            .enumerate()
            .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
            .map(|(i, &r)| (i, r))
            .unwrap();
        if r <= min_scale || r == S::zero() {
            break;
        }
        radii.push(r);
        let c = &points[idx];
        dmin.par_iter_mut().zip(points.par_iter()).for_each(|(d, p)| {
            let dc = dist(c, p);
            if dc < *d {
                *d = dc;
            }
        });
    }
    radii
}

/// `N(eps)` for a precomputed radius list: centers whose insertion radius
/// exceeds eps, plus the initial center.
pub fn net_count_at<S: Real>(radii: &[S], eps: S) -> usize {
    1 + radii.iter().filter(|&&r| r > eps).count()
}

/// Greedy-net box dimension over the given decreasing scales.
pub fn box_dimension<P: Send + Sync, S: Real>(
    ms: &MetricSample<'_, P, S>,
    scales: &[S],
) -> Result<DimensionFit<S>, EstimatorError> {
    let min_scale = scales
        .iter()
        .cloned()
        .fold(S::infinity(), S::min);
    let radii = net_insertion_radii(&ms.points, ms.dist, min_scale, ms.points.len());
    let counts: Vec<usize> = scales.iter().map(|&e| net_count_at(&radii, e)).collect();
    fit_scale_counts(scales.to_vec(), counts)
}

pub fn fit_scale_counts<S: Real>(
    scales: Vec<S>,
    counts: Vec<usize>,
) -> Result<DimensionFit<S>, EstimatorError> {
    let mut distinct = counts.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        if counts.iter().all(|&c| c == 1) {
            // sample is a single cluster at these scales: dimension 0
            return Ok(DimensionFit {
                scales,
                counts,
                slope: S::zero(),
                residual: S::zero(),
            });
        }
        return Err(EstimatorError::ScaleRangeDegenerate);
    }
    let xs: Vec<S> = scales.iter().map(|&e| -(e.ln())).collect();
    let ys: Vec<S> = counts
        .iter()
        .map(|&c| S::from_f64_lossy(c as f64).ln())
        .collect();
    let k = S::from_f64_lossy(xs.len() as f64);
    let xm = xs.iter().cloned().sum::<S>() / k;
    let ym = ys.iter().cloned().sum::<S>() / k;
    let sxx: S = xs.iter().map(|&x| (x - xm) * (x - xm)).sum();
    let sxy: S = xs.iter().zip(&ys).map(|(&x, &y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let icept = ym - slope * xm;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (y - slope * x - icept).abs())
        .fold(S::zero(), S::max);
    Ok(DimensionFit {
        scales,
        counts,
        slope,
        residual,
    })
}

#[derive(Debug, Clone)]
pub struct PowerRuleReport<S: Real> {
    /// `N_{d^gamma}(eps) == N_d(eps^{1/gamma})` at every scale
    pub counts_match: bool,
    pub gamma_counts: Vec<usize>,
    pub base_counts: Vec<usize>,
    pub slope_gamma: S,
    pub slope_base: S,
}

/// Cover identity for the metric `d^gamma`: the greedy net makes the same
/// choices under `d^gamma` at `eps` as under `d` at `eps^{1/gamma}`, so the
/// counts agree exactly; the fitted slopes scale by `1/gamma`.
pub fn power_rule_check<P: Send + Sync, S: Real>(
    ms: &MetricSample<'_, P, S>,
    gamma: S,
    scales: &[S],
) -> PowerRuleReport<S> {
    assert!(gamma > S::zero() && gamma <= S::one());
    let dist = ms.dist;
    let dist_gamma = move |a: &P, b: &P| dist(a, b).powf(gamma);
    let min_g = scales.iter().cloned().fold(S::infinity(), S::min);
    let radii_g = net_insertion_radii(&ms.points, &dist_gamma, min_g, ms.points.len());
    let base_scales: Vec<S> = scales
        .iter()
        .map(|&e| e.powf(S::one() / gamma))
        .collect();
    let min_b = base_scales.iter().cloned().fold(S::infinity(), S::min);
    let radii_b = net_insertion_radii(&ms.points, ms.dist, min_b, ms.points.len());
    let gamma_counts: Vec<usize> = scales.iter().map(|&e| net_count_at(&radii_g, e)).collect();
    let base_counts: Vec<usize> = base_scales
        .iter()
        .map(|&e| net_count_at(&radii_b, e))
        .collect();
    let counts_match = gamma_counts == base_counts;
    let slope_of = |scales: &[S], counts: &[usize]| {
        fit_scale_counts(scales.to_vec(), counts.to_vec())
            .map(|f| f.slope)
            .unwrap_or_else(|_| S::zero())
    };
    PowerRuleReport {
        counts_match,
        slope_gamma: slope_of(scales, &gamma_counts),
        slope_base: slope_of(&base_scales, &base_counts),
        gamma_counts,
        base_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(x: &f64, y: &f64) -> f64 {
        let t = (x - y).abs();
        t.min(1.0 - t)
    }

    fn uniform_points(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen::<f64>()).collect()
    }

    #[test]
    fn isometry_has_lip_and_skew_one() {
        let pts = uniform_points(300, 1);
        let d = |x: &f64, y: &f64| arc(x, y);
        let ms = MetricSample::new(pts, &d, 5000, 2);
        assert!(ms.check_metric_invariants());
        let rot = |x: &f64| (x + 1.0 / 7.0).rem_euclid(1.0);
        let lip = empirical_lip(&ms, &rot).unwrap();
        let skew = empirical_skew(&ms, &rot, &[0.1, 0.3]).unwrap();
        assert!((lip - 1.0).abs() < 1e-12);
        assert!((skew - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_map_is_exactly_two_on_short_pairs() {
        // all points within an arc of length 1/8, so every pair has
        // d < 1/4 and the arc distance doubles exactly
        let pts: Vec<f64> = uniform_points(200, 3).iter().map(|x| x / 8.0).collect();
        let d = |x: &f64, y: &f64| arc(x, y);
        let ms = MetricSample::new(pts, &d, 4000, 4);
        let double = |x: &f64| (2.0 * x).rem_euclid(1.0);
        assert_eq!(empirical_lip(&ms, &double).unwrap(), 2.0);
    }

    #[test]
    fn doubling_map_skew_at_eighth() {
        let pts = uniform_points(400, 5);
        let d = |x: &f64, y: &f64| arc(x, y);
        let ms = MetricSample::new(pts, &d, 20_000, 6);
        let double = |x: &f64| (2.0 * x).rem_euclid(1.0);
        assert_eq!(empirical_skew(&ms, &double, &[1.0 / 8.0]).unwrap(), 2.0);
    }

    #[test]
    fn constant_map_has_zero_skew() {
        let pts = uniform_points(100, 7);
        let d = |x: &f64, y: &f64| arc(x, y);
        let ms = MetricSample::new(pts, &d, 2000, 8);
        let c = |_: &f64| 0.25;
        assert_eq!(empirical_skew(&ms, &c, &[0.2]).unwrap(), 0.0);
        assert_eq!(empirical_lip(&ms, &c).unwrap(), 0.0);
    }

    #[test]
    fn no_valid_pairs() {
        let pts = vec![0.5f64; 10];
        let d = |x: &f64, y: &f64| (x - y).abs();
        let ms = MetricSample::new(pts, &d, 100, 9);
        let ident = |x: &f64| *x;
        assert!(matches!(
            empirical_lip(&ms, &ident),
            Err(EstimatorError::NoValidPairs)
        ));
        assert!(matches!(
            empirical_skew(&ms, &ident, &[0.1]),
            Err(EstimatorError::NoValidPairs)
        ));
    }

    #[test]
    fn interval_box_dimension_near_one() {
        let pts = uniform_points(10_000, 11);
        let d = |x: &f64, y: &f64| (x - y).abs();
        let ms = MetricSample::new(pts, &d, 0, 12);
        let fit = box_dimension(&ms, &geometric_scales(1.0 / 8.0, 1.0 / 512.0, 7)).unwrap();
        assert!(fit.slope >= 0.9 && fit.slope <= 1.1, "slope = {}", fit.slope);
        // counts non-decreasing as scales decrease
        for w in fit.counts.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn grid_square_box_dimension_near_two() {
        let pts: Vec<[f64; 2]> = (0..100)
            .flat_map(|i| (0..100).map(move |j| [i as f64 / 100.0, j as f64 / 100.0]))
            .collect();
        let d = |x: &[f64; 2], y: &[f64; 2]| {
            (x[0] - y[0]).abs().max((x[1] - y[1]).abs())
        };
        let ms = MetricSample::new(pts, &d, 0, 13);
        let fit = box_dimension(&ms, &geometric_scales(0.99 / 8.0, 0.99 / 64.0, 6)).unwrap();
        assert!(fit.slope >= 1.8 && fit.slope <= 2.2, "slope = {}", fit.slope);
    }

    #[test]
    fn single_cluster_has_dimension_zero() {
        let pts = vec![0.3f64; 500];
        let d = |x: &f64, y: &f64| (x - y).abs();
        let ms = MetricSample::new(pts, &d, 0, 14);
        let fit = box_dimension(&ms, &geometric_scales(0.5, 0.01, 6)).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert!(fit.counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn degenerate_scale_range() {
        let pts = uniform_points(500, 15);
        let d = |x: &f64, y: &f64| (x - y).abs();
        let ms = MetricSample::new(pts, &d, 0, 16);
        // scales below the sample's resolution: every count saturates at n
        let scales = geometric_scales(1e-9, 1e-12, 5);
        assert!(matches!(
            box_dimension(&ms, &scales),
            Err(EstimatorError::ScaleRangeDegenerate)
        ));
    }

    #[test]
    fn power_rule_identity_and_slope_ratio() {
        let pts = uniform_points(5000, 17);
        let d = |x: &f64, y: &f64| (x - y).abs();
        let ms = MetricSample::new(pts, &d, 0, 18);
        // gamma = 1: counts equal at matched scales
        let r1 = power_rule_check(&ms, 1.0, &default_scales(1.0));
        assert!(r1.counts_match);
        // gamma = 0.5 on d-scales mapped into d^gamma units
        let scales: Vec<f64> = default_scales(1.0f64).iter().map(|e| e.sqrt()).collect();
        let r = power_rule_check(&ms, 0.5, &scales);
        assert!(r.counts_match);
        let ratio = r.slope_gamma / r.slope_base;
        assert!(ratio >= 1.8 && ratio <= 2.2, "ratio = {ratio}");
    }

    #[test]
    fn power_metric_triangle_inequality() {
        let pts = uniform_points(60, 19);
        let g = 0.6f64;
        for x in &pts {
            for y in &pts {
                for z in &pts {
                    let dxz = (x - z).abs().powf(g);
                    let dxy = (x - y).abs().powf(g);
                    let dyz = (y - z).abs().powf(g);
                    assert!(dxz <= dxy + dyz + 1e-12);
                }
            }
        }
    }

    #[test]
    fn isometry_invariance_of_estimates() {
        let pts = uniform_points(800, 20);
        let d = |x: &f64, y: &f64| arc(x, y);
        let ms = MetricSample::new(pts.clone(), &d, 5000, 21);
        let radii = net_insertion_radii(&ms.points, ms.dist, 1e-6, ms.points.len());
        // relabel through the isometry x -> x + 1/3 mod 1
        let moved: Vec<f64> = pts.iter().map(|x| (x + 1.0 / 3.0).rem_euclid(1.0)).collect();
        let ms2 = MetricSample::new(moved, &d, 5000, 21);
        let radii2 = net_insertion_radii(&ms2.points, ms2.dist, 1e-6, ms2.points.len());
        let eps = [0.2, 0.1, 0.05, 0.02, 0.01];
        for &e in &eps {
            assert_eq!(net_count_at(&radii, e), net_count_at(&radii2, e));
        }
        let double = |x: &f64| (2.0 * x).rem_euclid(1.0);
        // conjugated doubling map on the relabeled sample
        let double2 = |x: &f64| {
            (2.0 * (x - 1.0 / 3.0) + 1.0 / 3.0).rem_euclid(1.0)
        };
        let l1 = empirical_lip(&ms, &double).unwrap();
        let l2 = empirical_lip(&ms2, &double2).unwrap();
        assert!((l1 - l2).abs() < 1e-9);
    }

    #[test]
    fn lip_monotone_in_pair_set() {
        let pts = uniform_points(300, 22);
        let d = |x: &f64, y: &f64| arc(x, y);
        let double = |x: &f64| (2.0 * x).rem_euclid(1.0);
        let small = MetricSample::new(pts.clone(), &d, 500, 23);
        let mut big = MetricSample::new(pts, &d, 500, 23);
        let extra = MetricSample::new(big.points.clone(), &d, 500, 24).pairs;
        big.pairs.extend(extra);
        let l_small = empirical_lip(&small, &double).unwrap();
        let l_big = empirical_lip(&big, &double).unwrap();
        assert!(l_big >= l_small);
    }

    #[test]
    fn skew_at_most_lip_on_common_pairs() {
        let pts = uniform_points(500, 25);
        let d = |x: &f64, y: &f64| arc(x, y);
        let ms = MetricSample::new(pts, &d, 10_000, 26);
        let double = |x: &f64| (2.0 * x).rem_euclid(1.0);
        let lip = empirical_lip(&ms, &double).unwrap();
        let skew = empirical_skew(&ms, &double, &[0.05, 0.1, 0.25]).unwrap();
        assert!(skew <= lip);
    }
}
