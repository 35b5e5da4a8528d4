//! ℓ∞ covers of restricted row and column vectors.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::{FuzzyPredicate, Mode, PartitionOfUnity};
use crate::rng;

/// Which family of vectors is covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Rows `φ(a; ·)` restricted to a set of columns.
    RowsOverColumns,
    /// Columns `φ(·; b)` restricted to a set of rows.
    ColumnsOverRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverResult {
    /// Indices into the input vectors.
    pub centers: Vec<usize>,
    pub radius: f64,
    pub direction: Option<Direction>,
    pub covered: Vec<bool>,
    /// Nearest center (position in `centers`) for each input.
    pub assignment: Vec<usize>,
    pub max_distance: f64,
}

impl CoverResult {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

pub fn linf(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Greedy farthest-point ℓ∞ cover with centers drawn from the inputs.
///
/// The first center is vector 0; each later center is the vector farthest
/// from the current centers, lowest index first on ties.
///
/// ```
/// use fuzzreg::covering::linf_cover;
///
/// let cover = linf_cover(&[vec![0.0], vec![0.5], vec![1.0]], 0.3).unwrap();
/// assert_eq!(cover.centers, vec![0, 2, 1]);
/// assert!(cover.max_distance <= 0.3);
/// ```
pub fn linf_cover(vectors: &[Vec<f64>], eps: f64) -> Result<CoverResult> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("radius must be positive, got {eps}")));
    }
    if let Some(v) = vectors.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::param("vectors", format!("entry {v} outside [0,1]")));
    }
    Ok(greedy_cover(vectors, eps))
}

pub(crate) fn greedy_cover(vectors: &[Vec<f64>], eps: f64) -> CoverResult {
    let n = vectors.len();
    let mut result = CoverResult {
        centers: Vec::new(),
        radius: eps,
        direction: None,
        covered: vec![false; n],
        assignment: vec![0; n],
        max_distance: 0.0,
    };
    if n == 0 {
        return result;
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut next = 0;
    loop {
        let c = result.centers.len();
        result.centers.push(next);
        for i in 0..n {
            let d = linf(&vectors[i], &vectors[next]);
            if d < dist[i] {
                dist[i] = d;
                result.assignment[i] = c;
            }
        }
        let (far, &worst) = dist
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if worst <= eps {
            result.max_distance = worst;
            break;
        }
        next = far;
    }
    for (c, d) in result.covered.iter_mut().zip(&dist) {
        *c = *d <= eps;
    }
    result
}

/// Minimum number of ℓ∞ balls of radius `eps` (centers anywhere in the
/// cube) covering `vectors`.
///
/// A set fits in one ball iff its pairwise distances are all `≤ 2·eps`, so
/// this is a minimum clique partition, solved by branch and bound.
pub fn min_free_cover(vectors: &[Vec<f64>], eps: f64) -> usize {
    let n = vectors.len();
    if n == 0 {
        return 0;
    }
    let fits: Vec<Vec<bool>> =
        (0..n).map(|i| (0..n).map(|j| linf(&vectors[i], &vectors[j]) <= 2.0 * eps).collect()).collect();
    let mut best = greedy_cover(vectors, eps).len();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    clique_partition(0, &fits, &mut groups, &mut best);
    best
}

fn clique_partition(v: usize, fits: &[Vec<bool>], groups: &mut Vec<Vec<usize>>, best: &mut usize) {
    if groups.len() >= *best {
        return;
    }
    if v == fits.len() {
        *best = groups.len();
        return;
    }
    for g in 0..groups.len() {
        if groups[g].iter().all(|&u| fits[u][v]) {
            groups[g].push(v);
            clique_partition(v + 1, fits, groups, best);
            groups[g].pop();
        }
    }
    groups.push(vec![v]);
    clique_partition(v + 1, fits, groups, best);
    groups.pop();
}

/// How [`covering_number`] searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CoverMode {
    /// Every n-subset of the opposing axis; minimal free-center covers.
    Exact,
    /// Sampled n-subsets; greedy covers (an upper-bound estimate).
    Greedy { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringNumber {
    pub value: usize,
    pub mode: CoverMode,
    /// n after clamping to the opposing axis size.
    pub n_effective: usize,
    pub subsets_examined: usize,
    /// Whether every n-subset was visited.
    pub all_subsets: bool,
    /// Whether every cover size is a true minimum.
    pub minimal_covers: bool,
}

/// Largest subset enumeration exact mode accepts.
pub const EXACT_SUBSET_LIMIT: u128 = 1_000_000;

/// Largest distinct-vector count solved to optimality.
pub const EXACT_VECTOR_LIMIT: usize = 20;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    acc
}

fn restricted(phi: &FuzzyPredicate, direction: Direction, subset: &[usize]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = match direction {
        Direction::RowsOverColumns => (0..phi.rows()).map(|a| subset.iter().map(|&b| phi.at(a, b)).collect()).collect(),
        Direction::ColumnsOverRows => (0..phi.cols()).map(|b| subset.iter().map(|&a| phi.at(a, b)).collect()).collect(),
    };
    // Order-preserving dedup leaves the greedy cover unchanged.
    let mut seen = std::collections::HashSet::new();
    out.retain(|v| seen.insert(v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>()));
    out
}

fn for_each_subset(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < m - k + i {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Maximum over n-subsets of the opposing axis of the ℓ∞ `eps`-cover size
/// of the restricted vectors.
///
/// `n` larger than the opposing axis is clamped: tuples with repeated
/// entries restrict to the same distances as their underlying set.
pub fn covering_number(
    phi: &FuzzyPredicate,
    eps: f64,
    n: usize,
    direction: Direction,
    mode: CoverMode,
) -> Result<CoveringNumber> {
    phi.require_binary()?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    let m = match direction {
        Direction::RowsOverColumns => phi.cols(),
        Direction::ColumnsOverRows => phi.rows(),
    };
    let k = n.min(m);
    match mode {
        CoverMode::Exact => {
            let count = binomial(m, k);
            if count > EXACT_SUBSET_LIMIT {
                return Err(Error::TooLarge(format!(
                    "exact covering number would enumerate {count} subsets (limit {EXACT_SUBSET_LIMIT})"
                )));
            }
            let mut value = 0;
            let mut minimal = true;
            let mut examined = 0;
            for_each_subset(m, k, |s| {
                examined += 1;
                let vecs = restricted(phi, direction, s);
                let size = if vecs.len() <= EXACT_VECTOR_LIMIT {
                    min_free_cover(&vecs, eps)
                } else {
                    minimal = false;
                    greedy_cover(&vecs, eps).len()
                };
                value = value.max(size);
            });
            Ok(CoveringNumber {
                value,
                mode,
                n_effective: k,
                subsets_examined: examined,
                all_subsets: true,
                minimal_covers: minimal,
            })
        }
        CoverMode::Greedy { samples, seed } => {
            let samples = if k == m { 1 } else { samples.max(1) };
            let value = (0..samples)
                .into_par_iter()
                .map(|t| {
                    let subset: Vec<usize> = if k == m {
                        (0..m).collect()
                    } else {
                        sample(&mut rng::stream(seed, t as u64), m, k).into_vec()
                    };
                    greedy_cover(&restricted(phi, direction, &subset), eps).len()
                })
                .max()
                .unwrap_or(1);
            Ok(CoveringNumber {
                value,
                mode,
                n_effective: k,
                subsets_examined: samples,
                all_subsets: k == m,
                minimal_covers: false,
            })
        }
    }
}

/// Cover-induced partition of the x-axis together with its centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverPartition {
    pub partition: PartitionOfUnity,
    /// Row indices; piece `i` belongs to `centers[i]`.
    pub centers: Vec<usize>,
    pub radius: f64,
    pub columns: Vec<usize>,
}

/// `max_{b∈B} |φ(x; b) − φ(a; b)|`.
pub fn row_distance(phi: &FuzzyPredicate, x: usize, a: usize, columns: &[usize]) -> f64 {
    columns.iter().map(|&b| (phi.at(x, b) - phi.at(a, b)).abs()).fold(0.0, f64::max)
}

/// A partition of unity on rows whose pieces are `(φ, eps)`-homogeneous
/// against every column of `columns`.
///
/// Definable pieces are normalized tents `max(0, eps/2 − d(x, aᵢ))` around
/// centers of a `0.49·eps` cover; constructible pieces are the balls of
/// radius `eps/2` around centers, each minus the earlier balls.
pub fn cover_partition(phi: &FuzzyPredicate, columns: &[usize], eps: f64, mode: Mode) -> Result<CoverPartition> {
    phi.require_binary()?;
    if columns.is_empty() {
        return Err(Error::param("B", "column set is empty"));
    }
    if let Some(&b) = columns.iter().find(|&&b| b >= phi.cols()) {
        return Err(Error::IndexOutOfRange { axis: phi.axis(1).name.clone(), index: b, size: phi.cols() });
    }
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    let rows: Vec<Vec<f64>> = (0..phi.rows()).map(|a| columns.iter().map(|&b| phi.at(a, b)).collect()).collect();
    let radius = match mode {
        Mode::Definable => 0.49 * eps,
        Mode::Constructible => 0.5 * eps,
    };
    let cover = greedy_cover(&rows, radius);
    let n = phi.rows();
    let pieces = match mode {
        Mode::Definable => {
            let mut pieces: Vec<Vec<f64>> = cover
                .centers
                .iter()
                .map(|&c| (0..n).map(|x| (eps / 2.0 - linf(&rows[x], &rows[c])).max(0.0)).collect())
                .collect();
            for x in 0..n {
                let total: f64 = pieces.iter().map(|p| p[x]).sum();
                for p in pieces.iter_mut() {
                    p[x] /= total;
                }
            }
            pieces
        }
        Mode::Constructible => {
            let mut taken = vec![false; n];
            cover
                .centers
                .iter()
                .map(|&c| {
                    (0..n)
                        .map(|x| {
                            if !taken[x] && linf(&rows[x], &rows[c]) <= radius {
                                taken[x] = true;
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        }
    };
    let partition = PartitionOfUnity::new(phi.axis(0).name.clone(), pieces, mode)?;
    Ok(CoverPartition { partition, centers: cover.centers, radius, columns: columns.to_vec() })
}

/// Largest `max_{b∈B}|φ(a;b) − φ(a';b)|` over pairs within one piece support.
pub fn worst_piece_spread(phi: &FuzzyPredicate, partition: &PartitionOfUnity, columns: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..partition.len() {
        let s = partition.support(k);
        for (i, &a) in s.iter().enumerate() {
            for &a2 in &s[i + 1..] {
                worst = worst.max(row_distance(phi, a, a2, columns));
            }
        }
    }
    worst
}
