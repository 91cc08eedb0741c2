use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::genotype::{column_means, GenotypeMatrix, MISSING};

/// Eigenvalues at or below this fraction of the largest are dropped together
/// with their eigenvectors, so they never reach a Nystrom inversion.
pub const EIGENVALUE_FLOOR_REL: f64 = 1e-10;

/// Below this subject count the asymptotic eigenvalue test is meaningless and
/// D = 0 is returned without testing.
pub const MIN_TW_N: usize = 10;

/// Cap on the number of significant dimensions.
pub const MAX_D: usize = 20;

/// Maximum tolerated asymmetry for an eigendecomposition input.
pub const SYMMETRY_TOL: f64 = 1e-8;

const KERNEL_BLOCK: usize = 128;

/// Column standardization statistics taken from a node's base sample.
///
/// `snp_scale[j] = sqrt(p(1-p))` with `p = snp_mean[j]/2`; SNPs with
/// `p` in {0, 1} (including all-missing columns) are excluded from
/// `kept_snps` and take no part in the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub snp_mean: Vec<f64>,
    pub snp_scale: Vec<f64>,
    pub kept_snps: Vec<usize>,
}

/// Per-eigenvalue record of the significance ladder.
#[derive(Debug, Clone, Serialize)]
pub struct TwTest {
    pub eigenvalue: f64,
    pub statistic: f64,
    pub significant: bool,
}

/// Evidence behind a significant-dimension count. `degenerate` flags a
/// spectrum too flat to test at all.
#[derive(Debug, Clone, Serialize)]
pub struct TwReport {
    pub tests: Vec<TwTest>,
    pub alpha: f64,
    pub critical_value: f64,
    pub degenerate: bool,
}

/// Eigenmap of a base sample: retained eigenvector coordinates (rows are
/// subjects in `base_index` order), descending positive eigenvalues, and the
/// significant-dimension count `d_significant` marking the leading prefix of
/// columns that carries structure.
#[derive(Debug, Clone)]
pub struct Eigenmap {
    pub base_index: Vec<usize>,
    pub coords: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub d_significant: usize,
    pub norm_stats: NormalizationStats,
    pub tw: TwReport,
}

impl Eigenmap {
    /// Number of retained eigen-dimensions (columns of `coords`).
    pub fn retained_dims(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Means and scales over the non-missing entries of the selected rows.
pub fn compute_norm_stats(g: &GenotypeMatrix, rows: &[usize]) -> Result<NormalizationStats> {
    if rows.is_empty() {
        return Err(Error::Argument("empty row selection".into()));
    }
    let snp_mean = column_means(&g.values, rows);
    let mut snp_scale = vec![0.0; g.m()];
    let mut kept_snps = Vec::new();
    for (j, &mean) in snp_mean.iter().enumerate() {
        let p = mean / 2.0;
        if p > 0.0 && p < 1.0 {
            snp_scale[j] = (p * (1.0 - p)).sqrt();
            kept_snps.push(j);
        }
    }
    if kept_snps.is_empty() {
        return Err(Error::DegeneratePanel(
            "no polymorphic SNPs in the selected rows".into(),
        ));
    }
    Ok(NormalizationStats {
        snp_mean,
        snp_scale,
        kept_snps,
    })
}

/// Standardized genotype block for the selected rows, restricted to
/// `stats.kept_snps`. Missing entries impute to the column mean and hence to
/// zero after centering.
pub fn normalize(g: &GenotypeMatrix, rows: &[usize], stats: &NormalizationStats) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), stats.kept_snps.len()));
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in stats.kept_snps.iter().enumerate() {
            let v = g.values[(i, j)];
            out[(r, c)] = if v == MISSING {
                0.0
            } else {
                (v as f64 - stats.snp_mean[j]) / stats.snp_scale[j]
            };
        }
    }
    out
}

/// Similarity kernel `(1/m) xa xb^T`, evaluated in row blocks. Entries within
/// a block are filled in a fixed column-major order and each dot product runs
/// in ascending SNP order, so results are bitwise identical at any thread
/// count.
pub fn kernel_block(xa: ArrayView2<'_, f64>, xb: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if xa.ncols() != xb.ncols() {
        return Err(Error::Argument(format!(
            "kernel operands have {} and {} columns",
            xa.ncols(),
            xb.ncols()
        )));
    }
    let m = xa.ncols();
    if m == 0 {
        return Err(Error::DegeneratePanel("zero kept SNPs".into()));
    }
    let inv_m = 1.0 / m as f64;
    let nb = xb.nrows();
    let mut k = Array2::zeros((xa.nrows(), nb));
    k.axis_chunks_iter_mut(Axis(0), KERNEL_BLOCK)
        .into_par_iter()
        .enumerate()
        .for_each(|(chunk_idx, mut block)| {
            let row0 = chunk_idx * KERNEL_BLOCK;
            for jb in (0..nb).step_by(KERNEL_BLOCK) {
                let jend = (jb + KERNEL_BLOCK).min(nb);
                for j in jb..jend {
                    let bj = xb.row(j);
                    for i in 0..block.nrows() {
                        let ai = xa.row(row0 + i);
                        let mut acc = 0.0;
                        for t in 0..m {
                            acc += ai[t] * bj[t];
                        }
                        block[(i, j)] = acc * inv_m;
                    }
                }
            }
        });
    Ok(k)
}

/// Spectral decomposition of a symmetric matrix: descending eigenvalues and
/// matching orthonormal eigenvector columns. Eigenvalues at or below
/// `EIGENVALUE_FLOOR_REL` times the largest are discarded with their vectors.
/// Each kept eigenvector is oriented so its entry of largest magnitude
/// (lowest index on ties) is non-negative.
pub fn eigendecompose(k: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = k.nrows();
    if n != k.ncols() {
        return Err(Error::Argument(format!(
            "matrix is {}x{}, not square",
            n,
            k.ncols()
        )));
    }
    let mut max_asym: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL {
        return Err(Error::Argument(format!(
            "matrix is not symmetric (max |K - K^T| = {max_asym:.3e})"
        )));
    }

    let dm = DMatrix::from_fn(n, n, |i, j| k[(i, j)]);
    let eig = dm.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let lambda_max = order.first().map(|&i| eig.eigenvalues[i]).unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Ok((Vec::new(), Array2::zeros((n, 0))));
    }
    let floor = EIGENVALUE_FLOOR_REL * lambda_max;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > floor)
        .collect();

    let mut values = Vec::with_capacity(kept.len());
    let mut vectors = Array2::zeros((n, kept.len()));
    for (c, &idx) in kept.iter().enumerate() {
        values.push(eig.eigenvalues[idx]);
        let col = eig.eigenvectors.column(idx);
        let mut peak = 0usize;
        for r in 1..n {
            if col[r].abs() > col[peak].abs() {
                peak = r;
            }
        }
        let flip = if col[peak] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[(r, c)] = flip * col[r];
        }
    }
    Ok((values, vectors))
}

/// Tracy-Widom quantiles, as (upper-tail probability, critical value) knots.
/// Interpolation between knots is linear in log10(alpha); the three pinned
/// levels 0.05 / 0.01 / 0.001 are table entries and therefore exact.
const TW_KNOTS: [(f64, f64); 7] = [
    (0.5, -1.2686),
    (0.10, 0.4501),
    (0.05, 0.9793),
    (0.025, 1.4538),
    (0.01, 2.0234),
    (0.005, 2.4224),
    (0.001, 3.2724),
];

/// Critical value of the largest-eigenvalue null distribution at the given
/// upper-tail level. Valid for `alpha` in (0, 0.5]; levels sharper than
/// 0.001 extrapolate the last table segment.
pub fn tw_critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Argument(format!(
            "significance level {alpha} outside (0, 0.5]"
        )));
    }
    for &(a, q) in &TW_KNOTS {
        if alpha == a {
            return Ok(q);
        }
    }
    let la = alpha.log10();
    let interp = |(ah, qh): (f64, f64), (al, ql): (f64, f64)| {
        let t = (la - ah.log10()) / (al.log10() - ah.log10());
        qh + t * (ql - qh)
    };
    for w in TW_KNOTS.windows(2) {
        if alpha > w[1].0 {
            return Ok(interp(w[0], w[1]));
        }
    }
    // sharper than the last knot: extend its segment
    Ok(interp(TW_KNOTS[5], TW_KNOTS[6]))
}

/// Iterative significance ladder over a descending positive spectrum.
///
/// At each step the leading eigenvalue among the L remaining is normalized
/// with moment-matched Wishart parameters and compared against the
/// Tracy-Widom critical value; on significance it is removed and the test
/// repeats. Testing stops at the first non-significant value, when fewer
/// than two eigenvalues remain, when the spectrum is too flat to
/// moment-match, or at `MAX_D`.
pub fn significant_dimensions(
    eigenvalues: &[f64],
    n_subjects: usize,
    alpha: f64,
) -> Result<(usize, TwReport)> {
    let critical_value = tw_critical_value(alpha)?;
    let mut report = TwReport {
        tests: Vec::new(),
        alpha,
        critical_value,
        degenerate: false,
    };
    if eigenvalues.is_empty() || n_subjects < MIN_TW_N {
        return Ok((0, report));
    }
    let mut lams = eigenvalues.to_vec();
    let mut d = 0usize;
    while d < MAX_D && lams.len() >= 2 {
        let l = lams.len() as f64;
        let s1: f64 = lams.iter().sum();
        let s2: f64 = lams.iter().map(|v| v * v).sum();
        if (l - 1.0) * s2 - s1 * s1 <= 0.0 {
            if report.tests.is_empty() {
                report.degenerate = true;
            }
            break;
        }
        let n_eff = ((l + 1.0) * s1 * s1) / (l * s2 - s1 * s1);
        let lstat = l * lams[0] / s1;
        let sqrt_n = (n_eff - 1.0).sqrt();
        let sqrt_l = l.sqrt();
        let mu = (sqrt_n + sqrt_l).powi(2) / n_eff;
        let sigma = ((sqrt_n + sqrt_l) / n_eff) * (1.0 / sqrt_n + 1.0 / sqrt_l).cbrt();
        let statistic = (lstat - mu) / sigma;
        let significant = statistic > critical_value;
        report.tests.push(TwTest {
            eigenvalue: lams[0],
            statistic,
            significant,
        });
        if !significant {
            break;
        }
        d += 1;
        lams.remove(0);
    }
    Ok((d, report))
}

/// Composes normalization, kernel, eigendecomposition and dimension
/// selection over the given rows. All retained eigenvector columns are
/// stored; `d_significant` marks the significant prefix.
pub fn build_eigenmap(g: &GenotypeMatrix, rows: &[usize], alpha: f64) -> Result<Eigenmap> {
    if rows.len() < 2 {
        return Err(Error::Argument(format!(
            "eigenmap needs at least 2 subjects, got {}",
            rows.len()
        )));
    }
    let norm_stats = compute_norm_stats(g, rows)?;
    let x = normalize(g, rows, &norm_stats);
    let k = kernel_block(x.view(), x.view())?;
    let (eigenvalues, coords) = eigendecompose(k.view())?;
    let (d_significant, tw) = significant_dimensions(&eigenvalues, rows.len(), alpha)?;
    Ok(Eigenmap {
        base_index: rows.to_vec(),
        coords,
        eigenvalues,
        d_significant,
        norm_stats,
        tw,
    })
}

/// Nystrom extension: positions of out-of-base subjects on an existing map,
/// `C U Lambda^{-1}` with `C` the cross-kernel against the base block. Rows
/// of the result follow `rows` order; columns match the map's retained
/// dimensions. Feeding a base row through this projection reproduces its
/// stored coordinates, which callers may use as an exactness check.
pub fn nystrom_project(
    map: &Eigenmap,
    g: &GenotypeMatrix,
    rows: &[usize],
) -> Result<Array2<f64>> {
    let x_new = normalize(g, rows, &map.norm_stats);
    let x_base = normalize(g, &map.base_index, &map.norm_stats);
    let c = kernel_block(x_new.view(), x_base.view())?;
    let mut coords = c.dot(&map.coords);
    for (k, &lambda) in map.eigenvalues.iter().enumerate() {
        coords.column_mut(k).mapv_inplace(|v| v / lambda);
    }
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn panel_from(values: Array2<u8>) -> GenotypeMatrix {
        let n = values.nrows();
        let m = values.ncols();
        GenotypeMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..m).map(|j| format!("snp{j}")).collect(),
            values,
        )
        .unwrap()
    }

    fn random_panel(rng: &mut ChaCha8Rng, n: usize, m: usize) -> GenotypeMatrix {
        let mut values = Array2::zeros((n, m));
        for j in 0..m {
            let p = rng.gen_range(0.1..0.5);
            for i in 0..n {
                let mut g = 0u8;
                if rng.gen::<f64>() < p {
                    g += 1;
                }
                if rng.gen::<f64>() < p {
                    g += 1;
                }
                values[(i, j)] = g;
            }
        }
        panel_from(values)
    }

    #[test]
    fn norm_stats_forced_arithmetic() {
        let g = panel_from(array![[0], [1], [2], [1]]);
        let stats = compute_norm_stats(&g, &[0, 1, 2, 3]).unwrap();
        assert_eq!(stats.snp_mean, vec![1.0]);
        assert_eq!(stats.snp_scale, vec![0.5]);
        assert_eq!(stats.kept_snps, vec![0]);
    }

    #[test]
    fn norm_stats_excludes_monomorphic() {
        let g = panel_from(array![[0, 1], [0, 1], [0, 0], [0, 2]]);
        let stats = compute_norm_stats(&g, &[0, 1, 2, 3]).unwrap();
        assert_eq!(stats.kept_snps, vec![1]);
    }

    #[test]
    fn norm_stats_all_excluded_is_degenerate() {
        let g = panel_from(array![[0, 2], [0, 2]]);
        assert!(matches!(
            compute_norm_stats(&g, &[0, 1]),
            Err(Error::DegeneratePanel(_))
        ));
    }

    #[test]
    fn norm_stats_match_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_panel(&mut rng, 20, 50);
        let rows: Vec<usize> = (0..20).collect();
        let stats = compute_norm_stats(&g, &rows).unwrap();
        for j in 0..50 {
            // independent oracle: recompute from raw entries
            let mut sum = 0.0;
            let mut cnt = 0.0;
            for &i in &rows {
                sum += g.values[(i, j)] as f64;
                cnt += 1.0;
            }
            let mean = sum / cnt;
            assert_abs_diff_eq!(stats.snp_mean[j], mean, epsilon = 1e-12);
            let p = mean / 2.0;
            if p > 0.0 && p < 1.0 {
                assert_abs_diff_eq!(
                    stats.snp_scale[j],
                    (p * (1.0 - p)).sqrt(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn normalize_forced_arithmetic() {
        let g = panel_from(array![[0], [1], [2], [1]]);
        let stats = compute_norm_stats(&g, &[0, 1, 2, 3]).unwrap();
        let x = normalize(&g, &[0, 1, 2, 3], &stats);
        assert_eq!(x.column(0).to_vec(), vec![-2.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn normalize_all_missing_row_is_zero() {
        let g = panel_from(array![[0, 1], [2, 1], [1, 0], [MISSING, MISSING]]);
        let stats = compute_norm_stats(&g, &[0, 1, 2]).unwrap();
        let x = normalize(&g, &[3], &stats);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalized_base_block_has_zero_column_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_panel(&mut rng, 30, 40);
        let rows: Vec<usize> = (0..30).collect();
        let stats = compute_norm_stats(&g, &rows).unwrap();
        let x = normalize(&g, &rows, &stats);
        for c in 0..x.ncols() {
            let mean = x.column(c).sum() / x.nrows() as f64;
            assert!(mean.abs() < 1e-10, "column {c} mean {mean}");
        }
    }

    #[test]
    fn kernel_single_snp_forced() {
        let x = array![[-1.0], [1.0]];
        let k = kernel_block(x.view(), x.view()).unwrap();
        assert_eq!(k, array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn kernel_self_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_panel(&mut rng, 17, 33);
        let rows: Vec<usize> = (0..17).collect();
        let stats = compute_norm_stats(&g, &rows).unwrap();
        let x = normalize(&g, &rows, &stats);
        let k = kernel_block(x.view(), x.view()).unwrap();
        for i in 0..17 {
            for j in 0..17 {
                assert!((k[(i, j)] - k[(j, i)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn kernel_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_panel(&mut rng, 5, 20);
        let rows: Vec<usize> = (0..5).collect();
        let stats = compute_norm_stats(&g, &rows).unwrap();
        let x = normalize(&g, &rows, &stats);
        let k = kernel_block(x.view(), x.view()).unwrap();
        let m = x.ncols();
        for i in 0..5 {
            for j in 0..5 {
                let mut acc = 0.0;
                for t in 0..m {
                    acc += x[(i, t)] * x[(j, t)];
                }
                assert_abs_diff_eq!(k[(i, j)], acc / m as f64, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn eigendecompose_identity() {
        let k = Array2::eye(3);
        let (vals, vecs) = eigendecompose(k.view()).unwrap();
        assert_eq!(vals.len(), 3);
        for v in vals {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
        assert_eq!(vecs.ncols(), 3);
    }

    #[test]
    fn eigendecompose_textbook_2x2() {
        let k = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = eigendecompose(k.view()).unwrap();
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-12);
        let r = 1.0 / 2.0f64.sqrt();
        assert_abs_diff_eq!(vecs[(0, 0)], r, epsilon = 1e-10);
        assert_abs_diff_eq!(vecs[(1, 0)], r, epsilon = 1e-10);
        // sign convention: tie on magnitude resolves to the lowest index
        assert_abs_diff_eq!(vecs[(0, 1)], r, epsilon = 1e-10);
        assert_abs_diff_eq!(vecs[(1, 1)], -r, epsilon = 1e-10);
    }

    #[test]
    fn eigendecompose_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 12;
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-1.0..1.0);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        // shift to positive-definite so nothing falls below the floor
        for i in 0..n {
            k[(i, i)] += 4.0;
        }
        let (vals, vecs) = eigendecompose(k.view()).unwrap();
        assert_eq!(vals.len(), n);
        let mut recon = Array2::zeros((n, n));
        for c in 0..n {
            for i in 0..n {
                for j in 0..n {
                    recon[(i, j)] += vals[c] * vecs[(i, c)] * vecs[(j, c)];
                }
            }
        }
        let max_err = k
            .iter()
            .zip(recon.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err <= 1e-8, "reconstruction error {max_err}");
    }

    #[test]
    fn eigendecompose_rejects_asymmetric() {
        let k = array![[1.0, 0.5], [0.2, 1.0]];
        assert!(matches!(
            eigendecompose(k.view()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn eigenvalue_residual_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let g = random_panel(&mut rng, 25, 60);
        let rows: Vec<usize> = (0..25).collect();
        let stats = compute_norm_stats(&g, &rows).unwrap();
        let x = normalize(&g, &rows, &stats);
        let k = kernel_block(x.view(), x.view()).unwrap();
        let (vals, vecs) = eigendecompose(k.view()).unwrap();
        let k_norm = k.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        for c in 0..vals.len() {
            for i in 0..k.nrows() {
                let mut kv = 0.0;
                for j in 0..k.ncols() {
                    kv += k[(i, j)] * vecs[(j, c)];
                }
                assert!(
                    (kv - vals[c] * vecs[(i, c)]).abs() <= 1e-6 * k_norm,
                    "residual too large for pair {c}"
                );
            }
        }
    }

    #[test]
    fn tw_critical_values_pinned() {
        assert_eq!(tw_critical_value(0.05).unwrap(), 0.9793);
        assert_eq!(tw_critical_value(0.01).unwrap(), 2.0234);
        assert_eq!(tw_critical_value(0.001).unwrap(), 3.2724);
        assert!(tw_critical_value(0.0).is_err());
        assert!(tw_critical_value(0.6).is_err());
    }

    #[test]
    fn tw_critical_value_monotone() {
        let alphas = [0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.001, 0.0005];
        let mut prev = f64::NEG_INFINITY;
        for &a in alphas.iter() {
            let c = tw_critical_value(a).unwrap();
            assert!(c > prev, "critical value not increasing at alpha {a}");
            prev = c;
        }
    }

    #[test]
    fn flat_spectrum_gives_zero_dims() {
        let (d, report) = significant_dimensions(&[2.0, 2.0, 2.0, 2.0], 100, 0.01).unwrap();
        assert_eq!(d, 0);
        assert!(report.degenerate);
        assert!(report.tests.is_empty());
    }

    #[test]
    fn small_n_skips_testing() {
        let (d, report) = significant_dimensions(&[50.0, 1.0, 0.5], 5, 0.01).unwrap();
        assert_eq!(d, 0);
        assert!(report.tests.is_empty());
    }

    #[test]
    fn strong_spike_detected() {
        // bulk near 1 plus one large spike
        let mut lams = vec![40.0];
        for i in 0..80 {
            lams.push(1.5 - i as f64 * 0.01);
        }
        let (d, report) = significant_dimensions(&lams, 81, 0.01).unwrap();
        assert_eq!(d, 1);
        assert_eq!(report.tests.len(), 2);
        assert!(report.tests[0].significant);
        assert!(!report.tests[1].significant);
    }

    #[test]
    fn significance_flags_form_a_prefix() {
        let mut lams = vec![60.0, 30.0];
        for i in 0..90 {
            lams.push(1.4 - i as f64 * 0.008);
        }
        let (d, report) = significant_dimensions(&lams, 92, 0.01).unwrap();
        assert_eq!(d, 2);
        for (i, t) in report.tests.iter().enumerate() {
            assert_eq!(t.significant, i < d);
        }
    }

    proptest! {
        #[test]
        fn monotone_in_alpha(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut lams: Vec<f64> = (0..40).map(|_| rng.gen_range(0.5..3.0)).collect();
            if seed % 3 == 0 {
                lams[0] = rng.gen_range(5.0..60.0);
            }
            lams.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let (d1, _) = significant_dimensions(&lams, 41, 0.001).unwrap();
            let (d2, _) = significant_dimensions(&lams, 41, 0.01).unwrap();
            let (d3, _) = significant_dimensions(&lams, 41, 0.05).unwrap();
            prop_assert!(d2 >= d1);
            prop_assert!(d3 >= d2);
        }

        #[test]
        fn flat_guard_property(lam in 0.1f64..10.0, l in 2usize..30) {
            let lams = vec![lam; l];
            let (d, report) = significant_dimensions(&lams, 100, 0.01).unwrap();
            prop_assert_eq!(d, 0);
            prop_assert!(report.degenerate);
        }
    }

    #[test]
    fn duplicated_rows_give_no_structure() {
        let g = panel_from(array![[0, 1, 2, 1, 0], [0, 1, 2, 1, 0]]);
        let map = build_eigenmap(&g, &[0, 1], 0.01).unwrap();
        assert_eq!(map.d_significant, 0);
    }

    #[test]
    fn kernel_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = random_panel(&mut rng, 24, 80);
        let rows: Vec<usize> = (0..24).collect();
        let map = build_eigenmap(&g, &rows, 0.01).unwrap();
        // retained spectrum is positive by construction; check the full
        // kernel's smallest eigenvalue directly
        let stats = compute_norm_stats(&g, &rows).unwrap();
        let x = normalize(&g, &rows, &stats);
        let k = kernel_block(x.view(), x.view()).unwrap();
        let dm = DMatrix::from_fn(24, 24, |i, j| k[(i, j)]);
        let min = dm
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-8, "kernel min eigenvalue {min}");
        assert!(map.retained_dims() <= 24);
    }

    #[test]
    fn eigenvector_columns_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let g = random_panel(&mut rng, 20, 60);
        let rows: Vec<usize> = (0..20).collect();
        let map = build_eigenmap(&g, &rows, 0.01).unwrap();
        let u = &map.coords;
        for a in 0..u.ncols() {
            for b in 0..u.ncols() {
                let dot: f64 = u.column(a).dot(&u.column(b));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn nystrom_reproduces_base_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = random_panel(&mut rng, 30, 100);
        let base: Vec<usize> = (0..20).collect();
        let map = build_eigenmap(&g, &base, 0.01).unwrap();
        let proj = nystrom_project(&map, &g, &base).unwrap();
        let max_err = proj
            .iter()
            .zip(map.coords.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err <= 1e-8, "base projection error {max_err}");
    }

    #[test]
    fn nystrom_duplicate_genotype_lands_on_its_twin() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let mut g = random_panel(&mut rng, 21, 100);
        // subject 20 duplicates base subject 4
        let twin = g.values.row(4).to_owned();
        g.values.row_mut(20).assign(&twin);
        let base: Vec<usize> = (0..20).collect();
        let map = build_eigenmap(&g, &base, 0.01).unwrap();
        let proj = nystrom_project(&map, &g, &[20]).unwrap();
        for c in 0..map.retained_dims() {
            assert!((proj[(0, c)] - map.coords[(4, c)]).abs() <= 1e-8);
        }
    }

    #[test]
    fn bitwise_deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = random_panel(&mut rng, 26, 90);
        let rows: Vec<usize> = (0..26).collect();
        let a = build_eigenmap(&g, &rows, 0.01).unwrap();
        let b = build_eigenmap(&g, &rows, 0.01).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.coords, b.coords);
    }
}
