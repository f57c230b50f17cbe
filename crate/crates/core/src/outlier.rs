//! Attack-target selection: centroid-farthest points plus Local Outlier
//! Factor outliers in embedding space.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_TOP_FRACTION: f64 = 0.01;
pub const DEFAULT_LOF_K: usize = 20;
pub const DEFAULT_LOF_THRESHOLD: f64 = 1.5;

/// Lower bound applied to every reachability distance so that exact
/// duplicates keep a finite local reachability density.
pub const REACH_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierParams {
    pub top_fraction: f64,
    pub k: usize,
    pub lof_threshold: f64,
    /// How the two criteria are combined. Always `"union"`.
    pub combination: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierScore {
    pub centroid_distance: f64,
    pub lof: f64,
    pub farthest: bool,
    pub lof_outlier: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    /// Sorted target ids.
    pub targets: Vec<String>,
    pub scores: BTreeMap<String, OutlierScore>,
    pub params: OutlierParams,
}

/// `ceil(fraction * n)`, tolerant of representation error in `fraction`.
pub(crate) fn ceil_fraction(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    let rounded = raw.round();
    let c = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (c as usize).min(n)
}

fn centroid_distances(m: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let c = m.centroid()?;
    m.rows().map(|row| m.metric().distance(row, &c)).collect()
}

fn rank_farthest(m: &EmbeddingMatrix, dists: &[f64], top_fraction: f64) -> Result<Vec<String>> {
    if m.len() < 2 {
        return Err(Error::domain(format!(
            "centroid_farthest needs at least 2 points, got {}",
            m.len()
        )));
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "top_fraction must lie in (0, 1], got {top_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| {
        dists[b]
            .total_cmp(&dists[a])
            .then_with(|| m.ids()[a].cmp(&m.ids()[b]))
    });
    let count = ceil_fraction(top_fraction, m.len());
    Ok(order[..count].iter().map(|&i| m.ids()[i].clone()).collect())
}

/// The `ceil(top_fraction * N)` ids farthest from the centroid, farthest
/// first, ties broken by id.
pub fn centroid_farthest(m: &EmbeddingMatrix, top_fraction: f64) -> Result<Vec<String>> {
    if m.len() < 2 {
        return rank_farthest(m, &[], top_fraction);
    }
    let d = centroid_distances(m)?;
    rank_farthest(m, &d, top_fraction)
}

struct Neighborhood {
    k_distance: f64,
    /// `(index, distance)` for every point within `k_distance`, self excluded.
    members: Vec<(usize, f64)>,
}

fn neighborhoods(m: &EmbeddingMatrix, k: usize) -> Result<Vec<Neighborhood>> {
    let norms = m.norms();
    (0..m.len())
        .into_par_iter()
        .map(|a| {
            let mut dists = Vec::with_capacity(m.len() - 1);
            for b in (0..m.len()).filter(|&b| b != a) {
                dists.push((b, m.distance_cached(&norms, a, b)?));
            }
            let mut sorted: Vec<f64> = dists.iter().map(|&(_, d)| d).collect();
            let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
            let k_distance = *kth;
            dists.retain(|&(_, d)| d <= k_distance);
            Ok(Neighborhood {
                k_distance,
                members: dists,
            })
        })
        .collect()
}

/// Local Outlier Factor of every row, keyed by id.
///
/// Neighbourhoods include every point tied at the k-distance, so they may hold
/// more than `k` members.
pub fn lof_scores(m: &EmbeddingMatrix, k: usize) -> Result<BTreeMap<String, f64>> {
    let values = lof_values(m, k)?;
    Ok(m.ids().iter().cloned().zip(values).collect())
}

pub(crate) fn lof_values(m: &EmbeddingMatrix, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k >= m.len() {
        return Err(Error::domain(format!(
            "LOF requires 1 <= k < N, got k={k}, N={}",
            m.len()
        )));
    }
    let hoods = neighborhoods(m, k)?;
    let lrd: Vec<f64> = hoods
        .par_iter()
        .map(|h| {
            let total: f64 = h
                .members
                .iter()
                .map(|&(b, d)| hoods[b].k_distance.max(d).max(REACH_FLOOR))
                .sum();
            h.members.len() as f64 / total
        })
        .collect();
    Ok(hoods
        .par_iter()
        .enumerate()
        .map(|(a, h)| {
            let mean: f64 =
                h.members.iter().map(|&(b, _)| lrd[b]).sum::<f64>() / h.members.len() as f64;
            mean / lrd[a]
        })
        .collect())
}

/// Union of centroid-farthest points and points with LOF above `lof_threshold`.
pub fn detect_outliers(
    m: &EmbeddingMatrix,
    top_fraction: f64,
    k: usize,
    lof_threshold: f64,
) -> Result<OutlierReport> {
    if m.len() < 2 {
        return Err(Error::domain(format!(
            "outlier detection needs at least 2 points, got {}",
            m.len()
        )));
    }
    let dists = centroid_distances(m)?;
    let farthest: BTreeSet<String> = rank_farthest(m, &dists, top_fraction)?
        .into_iter()
        .collect();
    let lof = lof_values(m, k)?;

    let mut targets = BTreeSet::new();
    let mut scores = BTreeMap::new();
    for (i, id) in m.ids().iter().enumerate() {
        let far = farthest.contains(id);
        let lof_outlier = lof[i] > lof_threshold;
        if far || lof_outlier {
            targets.insert(id.clone());
        }
        scores.insert(
            id.clone(),
            OutlierScore {
                centroid_distance: dists[i],
                lof: lof[i],
                farthest: far,
                lof_outlier,
            },
        );
    }
    Ok(OutlierReport {
        targets: targets.into_iter().collect(),
        scores,
        params: OutlierParams {
            top_fraction,
            k,
            lof_threshold,
            combination: "union".into(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Metric;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: Vec<Vec<f64>>, metric: Metric) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("p{i:03}")).collect();
        EmbeddingMatrix::new(ids, rows, metric).unwrap()
    }

    /// Direct transcription of the k-distance / reachability / lrd / LOF
    /// definitions over a full distance matrix.
    fn lof_oracle(points: &[Vec<f64>], k: usize) -> Vec<f64> {
        let n = points.len();
        let d = |a: usize, b: usize| -> f64 {
            points[a]
                .iter()
                .zip(&points[b])
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let kdist: Vec<f64> = (0..n)
            .map(|a| {
                let mut ds: Vec<f64> = (0..n).filter(|&b| b != a).map(|b| d(a, b)).collect();
                ds.sort_by(f64::total_cmp);
                ds[k - 1]
            })
            .collect();
        let hood = |a: usize| -> Vec<usize> {
            (0..n).filter(|&b| b != a && d(a, b) <= kdist[a]).collect()
        };
        let lrd: Vec<f64> = (0..n)
            .map(|a| {
                let nb = hood(a);
                let mean_reach = nb
                    .iter()
                    .map(|&b| kdist[b].max(d(a, b)).max(REACH_FLOOR))
                    .sum::<f64>()
                    / nb.len() as f64;
                1.0 / mean_reach
            })
            .collect();
        (0..n)
            .map(|a| {
                let nb = hood(a);
                nb.iter().map(|&b| lrd[b] / lrd[a]).sum::<f64>() / nb.len() as f64
            })
            .collect()
    }

    #[test]
    fn farthest_count_is_ceiling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let m = mat(rows, Metric::Euclidean);
        assert_eq!(centroid_farthest(&m, 0.01).unwrap().len(), 2);
        assert_eq!(ceil_fraction(0.01, 201), 3);
        assert_eq!(ceil_fraction(0.1, 10), 1);
    }

    #[test]
    fn farthest_picks_dominant_point() {
        let mut rows = vec![vec![0.0, 0.0]; 9];
        rows.push(vec![100.0, 100.0]);
        let m = mat(rows, Metric::Euclidean);
        assert_eq!(centroid_farthest(&m, 0.1).unwrap(), ["p009"]);
    }

    #[test]
    fn farthest_ties_by_id() {
        let ids = vec![
            "c".to_string(),
            "a".to_string(),
            "b".to_string(),
            "d".to_string(),
        ];
        let m = EmbeddingMatrix::new(ids, vec![vec![1.0, 2.0]; 4], Metric::Euclidean).unwrap();
        assert_eq!(centroid_farthest(&m, 0.5).unwrap(), ["a", "b"]);
    }

    #[test]
    fn farthest_requires_two_points() {
        let m = mat(vec![vec![1.0]], Metric::Euclidean);
        assert!(matches!(centroid_farthest(&m, 0.5), Err(Error::Domain(_))));
        let m = mat(vec![vec![1.0], vec![2.0]], Metric::Euclidean);
        assert!(centroid_farthest(&m, 0.0).is_err());
        assert!(centroid_farthest(&m, 1.5).is_err());
    }

    #[test]
    fn lof_unit_square_is_one() {
        let m = mat(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
            ],
            Metric::Euclidean,
        );
        for v in lof_scores(&m, 2).unwrap().values() {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn lof_line_with_far_point() {
        let pts = vec![vec![0.0], vec![0.1], vec![0.2], vec![10.0]];
        let expected = lof_oracle(&pts, 2);
        let got = lof_values(&mat(pts, Metric::Euclidean), 2).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-9);
        }
        assert!(got[3] > 1.5);
        assert!(got[..3].iter().all(|&v| v < got[3]));
    }

    #[test]
    fn lof_duplicates_finite() {
        let mut pts = vec![vec![1.0, 1.0]; 5];
        pts.extend([vec![2.0, 2.0], vec![3.0, 1.0], vec![1.5, 1.5]]);
        let got = lof_values(&mat(pts.clone(), Metric::Euclidean), 3).unwrap();
        assert!(got.iter().all(|v| v.is_finite() && *v > 0.0), "{got:?}");
        let expected = lof_oracle(&pts, 3);
        for (g, e) in got.iter().zip(&expected) {
            assert!(((g - e) / e).abs() < 1e-9, "{g} vs {e}");
        }
    }

    #[test]
    fn lof_k_bounds() {
        let m = mat(vec![vec![0.0], vec![1.0], vec![2.0]], Metric::Euclidean);
        assert!(matches!(lof_scores(&m, 3), Err(Error::Domain(_))));
        assert!(lof_scores(&m, 0).is_err());
    }

    #[test]
    fn lof_matches_oracle_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let expected = lof_oracle(&pts, 10);
        let got = lof_values(&mat(pts, Metric::Euclidean), 10).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-9);
        }
    }

    #[test]
    fn singleton_flagged_by_both_criteria() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows: Vec<Vec<f64>> = (0..99)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        rows.push(vec![40.0, 40.0]);
        let r = detect_outliers(&mat(rows, Metric::Euclidean), 0.01, 20, 1.5).unwrap();
        let s = &r.scores["p099"];
        assert!(s.farthest && s.lof_outlier);
        assert!(r.targets.contains(&"p099".to_string()));
        assert_eq!(r.scores.len(), 100);
    }

    fn ring(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                vec![t.cos(), t.sin()]
            })
            .collect()
    }

    #[test]
    fn ring_has_no_lof_outliers() {
        let pts = ring(100);
        for v in lof_oracle(&pts, 20) {
            assert!((v - 1.0).abs() < 1e-6);
        }
        let r = detect_outliers(&mat(pts, Metric::Euclidean), 0.01, 20, 1.5).unwrap();
        assert!(r.scores.values().all(|s| !s.lof_outlier));
        assert_eq!(r.targets.len(), 1);
    }

    #[test]
    fn full_fraction_targets_everything() {
        let r = detect_outliers(&mat(ring(30), Metric::Euclidean), 1.0, 5, 1.5).unwrap();
        assert_eq!(r.targets.len(), 30);
        assert_eq!(r.params.combination, "union");
    }

    #[test]
    fn grid_lof_sanity_band() {
        let mut pts = Vec::new();
        for x in 0..15 {
            for y in 0..15 {
                pts.push(vec![x as f64, y as f64]);
            }
        }
        for v in lof_values(&mat(pts, Metric::Euclidean), 4).unwrap() {
            assert!((0.8..=1.3).contains(&v), "{v}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn permutation_invariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            let ids: Vec<String> = (0..n).map(|i| format!("p{i:02}")).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let a = detect_outliers(&EmbeddingMatrix::new(ids.clone(), rows.clone(), Metric::Euclidean).unwrap(), 0.1, 5, 1.3).unwrap();
            let b = detect_outliers(&EmbeddingMatrix::new(
                perm.iter().map(|&i| ids[i].clone()).collect(),
                perm.iter().map(|&i| rows[i].clone()).collect(),
                Metric::Euclidean).unwrap(), 0.1, 5, 1.3).unwrap();
            prop_assert_eq!(&a.targets, &b.targets);
            for (id, s) in &a.scores {
                prop_assert!((s.lof - b.scores[id].lof).abs() < 1e-9);
                prop_assert!((s.centroid_distance - b.scores[id].centroid_distance).abs() < 1e-9);
            }
        }
    }
}
