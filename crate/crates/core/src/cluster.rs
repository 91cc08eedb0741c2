use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Per-subject cluster labels in `[0, k)`, renumbered so label order follows
/// each cluster's smallest member index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    pub labels: Vec<usize>,
    pub k: usize,
}

/// Number of clusters to cut per node: one more than the significant
/// dimension count.
pub fn choose_k(d: usize) -> usize {
    d + 1
}

/// One agglomeration step: the pair of active slots merged and the Ward
/// distance at which they merged. Slot indices equal the smallest member of
/// the cluster occupying them.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Ward agglomeration over squared Euclidean distances.
///
/// At each step the minimum-distance active pair merges (ties resolve to the
/// lexicographically smallest slot pair) and distances to the merged cluster
/// follow the Lance-Williams update
/// `d(ij,k) = ((n_i+n_k) d(i,k) + (n_j+n_k) d(j,k) - n_k d(i,j)) / (n_i+n_j+n_k)`.
/// The merged cluster occupies the lower slot, so a slot index is always the
/// smallest member of its cluster.
pub fn ward_cluster(coords: ArrayView2<'_, f64>, k: usize) -> Result<ClusterLabels> {
    let (labels, _) = ward_cluster_traced(coords, k)?;
    Ok(labels)
}

/// As [`ward_cluster`], additionally returning the merge sequence for
/// inspection against an independent agglomeration oracle.
pub fn ward_cluster_traced(
    coords: ArrayView2<'_, f64>,
    k: usize,
) -> Result<(ClusterLabels, Vec<Merge>)> {
    let n = coords.nrows();
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "cluster count {k} outside [1, {n}]"
        )));
    }
    if coords.ncols() == 0 {
        return Err(Error::Argument("coordinates have zero columns".into()));
    }

    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d = 0.0;
            for c in 0..coords.ncols() {
                let diff = coords[(i, c)] - coords[(j, c)];
                d += diff * diff;
            }
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    let mut active: Vec<bool> = vec![true; n];
    let mut size: Vec<usize> = vec![1; n];
    let mut member_of: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - k);

    for _ in 0..(n - k) {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in (a + 1)..n {
                if !active[b] {
                    continue;
                }
                let d = dist[a][b];
                if best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((a, b, d));
                }
            }
        }
        let (a, b, d_ab) = best.expect("at least two active clusters");
        merges.push(Merge {
            a,
            b,
            distance: d_ab,
        });
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for x in 0..n {
            if !active[x] || x == a || x == b {
                continue;
            }
            let nx = size[x] as f64;
            let updated = ((na + nx) * dist[a][x] + (nb + nx) * dist[b][x] - nx * d_ab)
                / (na + nb + nx);
            dist[a][x] = updated;
            dist[x][a] = updated;
        }
        size[a] += size[b];
        active[b] = false;
        for m in member_of.iter_mut() {
            if *m == b {
                *m = a;
            }
        }
    }

    let mut slots: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    slots.sort_unstable();
    let mut slot_label = vec![usize::MAX; n];
    for (label, &slot) in slots.iter().enumerate() {
        slot_label[slot] = label;
    }
    let labels = member_of.iter().map(|&m| slot_label[m]).collect();
    Ok((ClusterLabels { labels, k }, merges))
}

/// Assigns each projected subject the label of its Euclidean-nearest base
/// subject; distance ties resolve to the lowest base index.
pub fn assign_nearest(
    projected: ArrayView2<'_, f64>,
    base_coords: ArrayView2<'_, f64>,
    base_labels: &ClusterLabels,
) -> Result<Vec<usize>> {
    if base_coords.nrows() == 0 {
        return Err(Error::Argument("empty base sample".into()));
    }
    if projected.ncols() != base_coords.ncols() {
        return Err(Error::Argument(format!(
            "projected has {} columns, base has {}",
            projected.ncols(),
            base_coords.ncols()
        )));
    }
    if base_labels.labels.len() != base_coords.nrows() {
        return Err(Error::Argument(
            "base labels do not match base coordinates".into(),
        ));
    }
    let d = projected.ncols();
    Ok((0..projected.nrows())
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for b in 0..base_coords.nrows() {
                let mut dd = 0.0;
                for c in 0..d {
                    let diff = projected[(p, c)] - base_coords[(b, c)];
                    dd += diff * diff;
                }
                if dd < best_d {
                    best_d = dd;
                    best = b;
                }
            }
            base_labels.labels[best]
        })
        .collect())
}

/// Adjusted Rand index between two labelings of the same subjects; 1 for
/// identical partitions, near 0 for independent ones.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same subjects");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().map(|&v| c2(v)).sum();
    let sum_a: f64 = rows.iter().map(|&v| c2(v)).sum();
    let sum_b: f64 = cols.iter().map(|&v| c2(v)).sum();
    let total = c2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Independent agglomeration oracle: recompute every pairwise Ward
    /// distance from scratch via cluster centroids at each step instead of
    /// carrying the Lance-Williams update. For squared Euclidean input the
    /// maintained distance equals 2 |A||B|/(|A|+|B|) * ||c_A - c_B||^2.
    fn centroid_oracle(coords: &Array2<f64>, k: usize) -> Vec<Merge> {
        let n = coords.nrows();
        let dims = coords.ncols();
        let mut clusters: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
        let mut merges = Vec::new();
        for _ in 0..(n - k) {
            let mut best: Option<(usize, usize, f64)> = None;
            for a in 0..n {
                let Some(ma) = &clusters[a] else { continue };
                for b in (a + 1)..n {
                    let Some(mb) = &clusters[b] else { continue };
                    let mut cd = 0.0;
                    for c in 0..dims {
                        let ca: f64 =
                            ma.iter().map(|&i| coords[(i, c)]).sum::<f64>() / ma.len() as f64;
                        let cb: f64 =
                            mb.iter().map(|&i| coords[(i, c)]).sum::<f64>() / mb.len() as f64;
                        cd += (ca - cb) * (ca - cb);
                    }
                    let na = ma.len() as f64;
                    let nb = mb.len() as f64;
                    let ward = 2.0 * na * nb / (na + nb) * cd;
                    if best.map_or(true, |(_, _, bd)| ward < bd) {
                        best = Some((a, b, ward));
                    }
                }
            }
            let (a, b, d) = best.unwrap();
            merges.push(Merge { a, b, distance: d });
            let mb = clusters[b].take().unwrap();
            clusters[a].as_mut().unwrap().extend(mb);
        }
        merges
    }

    #[test]
    fn separated_pairs_split_cleanly() {
        let coords = array![[0.0], [0.1], [10.0], [10.1]];
        let out = ward_cluster(coords.view(), 2).unwrap();
        assert_eq!(out.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn k_one_is_a_single_cluster() {
        let coords = array![[0.0], [5.0], [9.0]];
        let out = ward_cluster(coords.view(), 1).unwrap();
        assert_eq!(out.labels, vec![0, 0, 0]);
    }

    #[test]
    fn k_equal_n_is_all_singletons() {
        let coords = array![[0.0], [5.0], [9.0]];
        let out = ward_cluster(coords.view(), 3).unwrap();
        assert_eq!(out.labels, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_k() {
        let coords = array![[0.0], [1.0]];
        assert!(ward_cluster(coords.view(), 0).is_err());
        assert!(ward_cluster(coords.view(), 3).is_err());
    }

    #[test]
    fn merge_sequence_matches_centroid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for round in 0..20 {
            let n = 8;
            let mut coords = Array2::zeros((n, 2));
            for i in 0..n {
                coords[(i, 0)] = rng.gen_range(-5.0..5.0);
                coords[(i, 1)] = rng.gen_range(-5.0..5.0);
            }
            let (_, merges) = ward_cluster_traced(coords.view(), 1).unwrap();
            let oracle = centroid_oracle(&coords, 1);
            for (step, (m, o)) in merges.iter().zip(&oracle).enumerate() {
                assert_eq!((m.a, m.b), (o.a, o.b), "round {round} step {step}");
                assert!(
                    (m.distance - o.distance).abs() <= 1e-9 * o.distance.max(1.0),
                    "round {round} step {step}: {} vs {}",
                    m.distance,
                    o.distance
                );
            }
        }
    }

    #[test]
    fn two_point_masses_recovered_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut coords = Array2::zeros((14, 2));
        for i in 0..7 {
            coords[(i, 0)] = rng.gen_range(-0.5..0.5);
            coords[(i, 1)] = rng.gen_range(-0.5..0.5);
        }
        for i in 7..14 {
            coords[(i, 0)] = 20.0 + rng.gen_range(-0.5..0.5);
            coords[(i, 1)] = rng.gen_range(-0.5..0.5);
        }
        let out = ward_cluster(coords.view(), 2).unwrap();
        assert_eq!(&out.labels[..7], &[0; 7]);
        assert_eq!(&out.labels[7..], &[1; 7]);
    }

    proptest! {
        #[test]
        fn permutation_equivariant(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 10;
            let mut coords = Array2::zeros((n, 2));
            for i in 0..n {
                coords[(i, 0)] = rng.gen_range(-3.0..3.0);
                coords[(i, 1)] = rng.gen_range(-3.0..3.0);
            }
            let base = ward_cluster(coords.view(), 3).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut permuted = Array2::zeros((n, 2));
            for (new_i, &old_i) in perm.iter().enumerate() {
                permuted.row_mut(new_i).assign(&coords.row(old_i));
            }
            let shuffled = ward_cluster(permuted.view(), 3).unwrap();
            // compare partitions as co-membership relations
            for i in 0..n {
                for j in (i + 1)..n {
                    let together_base = base.labels[i] == base.labels[j];
                    let (pi, pj) = (
                        perm.iter().position(|&x| x == i).unwrap(),
                        perm.iter().position(|&x| x == j).unwrap(),
                    );
                    let together_shuffled = shuffled.labels[pi] == shuffled.labels[pj];
                    prop_assert_eq!(together_base, together_shuffled);
                }
            }
        }
    }

    #[test]
    fn choose_k_is_d_plus_one() {
        assert_eq!(choose_k(1), 2);
        assert_eq!(choose_k(3), 4);
        assert_eq!(choose_k(0), 1);
    }

    #[test]
    fn nearest_identical_point_inherits_label() {
        let base = array![[0.0, 0.0], [4.0, 4.0]];
        let labels = ClusterLabels {
            labels: vec![0, 1],
            k: 2,
        };
        let projected = array![[4.0, 4.0]];
        let out = assign_nearest(projected.view(), base.view(), &labels).unwrap();
        assert_eq!(out, vec![1]);
    }

    #[test]
    fn nearest_tie_takes_lowest_base_index() {
        // equidistant to base subjects 3 and 7 in different clusters
        let mut base = Array2::zeros((8, 1));
        for i in 0..8 {
            base[(i, 0)] = i as f64 * 10.0;
        }
        base[(3, 0)] = -1.0;
        base[(7, 0)] = 1.0;
        let labels = ClusterLabels {
            labels: vec![0, 1, 2, 3, 4, 5, 6, 7],
            k: 8,
        };
        let projected = array![[0.0]];
        let out = assign_nearest(projected.view(), base.view(), &labels).unwrap();
        assert_eq!(out, vec![3]);
    }

    #[test]
    fn nearest_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut base = Array2::zeros((10, 3));
        for i in 0..10 {
            for c in 0..3 {
                base[(i, c)] = rng.gen_range(-2.0..2.0);
            }
        }
        let labels = ClusterLabels {
            labels: (0..10).map(|i| i % 4).collect(),
            k: 4,
        };
        let mut projected = Array2::zeros((30, 3));
        for i in 0..30 {
            for c in 0..3 {
                projected[(i, c)] = rng.gen_range(-2.0..2.0);
            }
        }
        let out = assign_nearest(projected.view(), base.view(), &labels).unwrap();
        for p in 0..30 {
            let mut best = (f64::INFINITY, 0usize);
            for b in 0..10 {
                let d: f64 = (0..3)
                    .map(|c| (projected[(p, c)] - base[(b, c)]).powi(2))
                    .sum();
                if d < best.0 {
                    best = (d, b);
                }
            }
            assert_eq!(out[p], labels.labels[best.1]);
        }
    }

    #[test]
    fn nearest_never_invents_labels() {
        let base = array![[0.0], [1.0], [2.0]];
        let labels = ClusterLabels {
            labels: vec![0, 0, 1],
            k: 2,
        };
        let projected = array![[-5.0], [0.6], [9.0]];
        let out = assign_nearest(projected.view(), base.view(), &labels).unwrap();
        assert!(out.iter().all(|&l| l < 2));
    }

    #[test]
    fn nearest_rejects_empty_base() {
        let base = Array2::<f64>::zeros((0, 1));
        let labels = ClusterLabels {
            labels: vec![],
            k: 0,
        };
        let projected = array![[0.0]];
        assert!(assign_nearest(projected.view(), base.view(), &labels).is_err());
    }

    #[test]
    fn ari_identical_partitions() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
    }

    #[test]
    fn ari_known_value() {
        // contingency worked by hand: ARI = (2 - 1.2) / (4.5 - 1.2) = 8/33
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        let got = adjusted_rand_index(&a, &b);
        assert!((got - 8.0 / 33.0).abs() < 1e-12, "got {got}");
    }
}
