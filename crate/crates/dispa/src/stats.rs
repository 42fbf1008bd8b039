//! Hypothesis-testing primitives: one-sided Wilcoxon rank-sum,
//! Benjamini-Hochberg FDR adjustment, Moran's I spatial autocorrelation
//! with a permutation test, and Tanimoto similarity over feature sets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::metrics::average_ranks;

/// Total sample size at or below which the exact null distribution of the
/// rank sum is enumerated instead of approximated.
pub const WILCOXON_EXACT_LIMIT: usize = 12;

/// One-sided Wilcoxon rank-sum test of `a` stochastically smaller than `b`.
/// Returns (U statistic for `a`, p value). Average ranks break ties; small
/// samples use exact enumeration over rank assignments, larger ones a
/// normal approximation with tie-corrected variance and continuity
/// correction.
pub fn wilcoxon_one_sided(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats(format!(
            "wilcoxon needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (n1, n2) = (a.len(), b.len());
    let mut pooled: Vec<f64> = a.to_vec();
    pooled.extend_from_slice(b);
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::Stats("non-finite value in wilcoxon sample".into()));
    }
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let p = if n1 + n2 <= WILCOXON_EXACT_LIMIT {
        // enumeration over average ranks conditions on the observed ties
        exact_p(&ranks, n1)
    } else {
        approx_p(&ranks, n1, n2, u)
    };
    Ok((u, p))
}

/// The normal-approximation p value regardless of sample size, so the
/// exact and approximate paths can be compared on the same data.
pub fn wilcoxon_normal_approx(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let (n1, n2) = (a.len(), b.len());
    if n1 < 2 || n2 < 2 {
        return Err(Error::Stats("wilcoxon needs at least 2 values per sample".into()));
    }
    let mut pooled: Vec<f64> = a.to_vec();
    pooled.extend_from_slice(b);
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok((u, approx_p(&ranks, n1, n2, u)))
}

/// P(rank sum of group 1 <= observed) over all C(n, n1) assignments of the
/// pooled ranks. Low rank sum supports "a smaller than b".
fn exact_p(ranks: &[f64], n1: usize) -> f64 {
    let observed: f64 = ranks[..n1].iter().sum();
    let n = ranks.len();
    let mut le = 0u64;
    let mut total = 0u64;
    let mut chosen = Vec::with_capacity(n1);
    enumerate(ranks, n, n1, 0, 0.0, &mut chosen, observed, &mut le, &mut total);
    le as f64 / total as f64
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    ranks: &[f64],
    n: usize,
    n1: usize,
    start: usize,
    sum: f64,
    chosen: &mut Vec<usize>,
    observed: f64,
    le: &mut u64,
    total: &mut u64,
) {
    if chosen.len() == n1 {
        *total += 1;
        if sum <= observed + 1e-9 {
            *le += 1;
        }
        return;
    }
    for i in start..n {
        if n - i < n1 - chosen.len() {
            break;
        }
        chosen.push(i);
        enumerate(ranks, n, n1, i + 1, sum + ranks[i], chosen, observed, le, total);
        chosen.pop();
    }
}

/// Normal approximation of P(U <= observed) under the null, with the tie
/// correction to the variance and a +0.5 continuity correction.
fn approx_p(ranks: &[f64], n1: usize, n2: usize, u: f64) -> f64 {
    let n = (n1 + n2) as f64;
    let mean = n1 as f64 * n2 as f64 / 2.0;

    // tie correction: sum of t^3 - t over tie groups of the pooled ranks
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = (n1 as f64 * n2 as f64 / 12.0) * (n + 1.0 - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        // all values tied: no evidence either way
        return 0.5;
    }
    let z = (u - mean + 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.cdf(z)
}

/// Benjamini-Hochberg step-up adjustment; output is in input order,
/// elementwise >= input and <= 1.
pub fn bh_fdr(p: &[f64]) -> Result<Vec<f64>> {
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Stats("p values must lie in [0, 1]".into()));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for k in (0..m).rev() {
        let i = order[k];
        let candidate = (p[i] * m as f64 / (k + 1) as f64).min(1.0);
        running = running.min(candidate);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

/// A value field over spots with symmetric nonnegative neighbor weights.
#[derive(Debug, Clone)]
pub struct SpatialField {
    pub spot_ids: Vec<String>,
    pub values: Vec<f64>,
    /// Row-major n x n weights; zero diagonal.
    pub weights: Vec<Vec<f64>>,
}

impl SpatialField {
    pub fn validate(&self) -> Result<()> {
        let n = self.values.len();
        if self.spot_ids.len() != n || self.weights.len() != n {
            return Err(Error::Stats("spatial field shape mismatch".into()));
        }
        let mut any = false;
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Stats("adjacency matrix not square".into()));
            }
            if row[i] != 0.0 {
                return Err(Error::Stats("adjacency diagonal must be zero".into()));
            }
            for &w in row {
                if w < 0.0 {
                    return Err(Error::Stats("adjacency weights must be >= 0".into()));
                }
                any = any || w > 0.0;
            }
        }
        if !any {
            return Err(Error::Stats("adjacency has no nonzero weight".into()));
        }
        Ok(())
    }
}

/// k-nearest-neighbor adjacency from coordinates, symmetrized and
/// row-standardized.
pub fn knn_adjacency(coords: &[(f64, f64)], k: usize) -> Result<Vec<Vec<f64>>> {
    let n = coords.len();
    if n < 2 || k == 0 || k >= n {
        return Err(Error::Stats(format!(
            "knn adjacency needs 0 < k < n, got k={k}, n={n}"
        )));
    }
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = coords[i].0 - coords[j].0;
                let dy = coords[i].1 - coords[j].1;
                (dx * dx + dy * dy, j)
            })
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &(_, j) in d.iter().take(k) {
            w[i][j] = 1.0;
        }
    }
    // symmetrize, then row-standardize
    for i in 0..n {
        for j in (i + 1)..n {
            let m = f64::max(w[i][j], w[j][i]);
            w[i][j] = m;
            w[j][i] = m;
        }
    }
    for row in &mut w {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
    }
    Ok(w)
}

fn morans_i_value(values: &[f64], weights: &[Vec<f64>]) -> Result<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 {
        return Err(Error::Stats(
            "moran's i undefined for a constant field".into(),
        ));
    }
    let mut num = 0.0;
    let mut wsum = 0.0;
    for (i, row) in weights.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            num += w * dev[i] * dev[j];
            wsum += w;
        }
    }
    Ok((n / wsum) * (num / denom))
}

/// Moran's I plus a permutation p value: the fraction of value shuffles
/// with I at least as large as observed (one-sided, clustering direction).
pub fn morans_i(field: &SpatialField, n_perm: usize, seed: u64) -> Result<(f64, f64)> {
    field.validate()?;
    let observed = morans_i_value(&field.values, &field.weights)?;
    if n_perm == 0 {
        return Ok((observed, f64::NAN));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = field.values.clone();
    let mut ge = 0usize;
    for _ in 0..n_perm {
        shuffled.shuffle(&mut rng);
        let i = morans_i_value(&shuffled, &field.weights)?;
        if i >= observed - 1e-12 {
            ge += 1;
        }
    }
    // +1 smoothing keeps p nonzero
    let p = (ge + 1) as f64 / (n_perm + 1) as f64;
    Ok((observed, p))
}

/// |a n b| / |a u b|; both sets empty is undefined.
pub fn tanimoto(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::Stats("tanimoto of two empty sets".into()));
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    Ok(inter / union)
}
