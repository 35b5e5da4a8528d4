//! Sum-of-products approximations, homogeneous grids, and NIP regularity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::covering::cover_partition;
use crate::error::{Error, Result};
use crate::fuzzy::{
    check_measures, contract, for_each_index, Axis, DiscreteMeasure, FuzzyPredicate, GridPartition, Mode,
    PartitionOfUnity,
};
use crate::sampling::{eps_approximation_search, sufficient_sample_size, ApproximationSearch};
use crate::TOL;

/// `Σⱼ ∏ᵢ θᵢⱼ(xᵢ)` with every factor entry in `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumOfProducts {
    axes: Vec<Axis>,
    /// `terms[j][i]` is the factor of term `j` on axis `i`.
    terms: Vec<Vec<Vec<f64>>>,
}

impl SumOfProducts {
    pub fn new(axes: Vec<Axis>, terms: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        for (j, t) in terms.iter().enumerate() {
            if t.len() != axes.len() {
                return Err(Error::param("terms", format!("term {j} has {} factors for {} axes", t.len(), axes.len())));
            }
            for (f, axis) in t.iter().zip(&axes) {
                if f.len() != axis.size {
                    return Err(Error::AxisMismatch {
                        axis: axis.name.clone(),
                        reason: format!("term {j} factor has {} entries", f.len()),
                    });
                }
                if let Some(v) = f.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::param("terms", format!("term {j} has factor entry {v} outside [0,1]")));
                }
            }
        }
        Ok(SumOfProducts { axes, terms })
    }

    /// The predicate itself as a single term.
    pub fn from_unary(phi: &FuzzyPredicate) -> Result<Self> {
        if phi.arity() != 1 {
            return Err(Error::param("phi", "expected a unary predicate"));
        }
        SumOfProducts::new(phi.axes().to_vec(), vec![vec![phi.values().to_vec()]])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn terms(&self) -> &[Vec<Vec<f64>>] {
        &self.terms
    }

    /// Term count `m`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn eval(&self, point: &[usize]) -> f64 {
        self.terms.iter().map(|t| t.iter().zip(point).map(|(f, &a)| f[a]).product::<f64>()).sum()
    }

    /// Dense row-major values, unclipped.
    pub fn dense(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.shape().iter().product());
        for_each_index(&self.shape(), |p| out.push(self.eval(p)));
        out
    }

    /// Largest value; above 1 means the sum leaves the unit interval.
    pub fn max_value(&self) -> f64 {
        self.dense().into_iter().fold(0.0, f64::max)
    }
}

/// `∫ |φ − θ| dμ₁⊗…⊗μₙ`.
pub fn l1_distance(phi: &FuzzyPredicate, theta: &SumOfProducts, mus: &[DiscreteMeasure]) -> f64 {
    let diff: Vec<f64> = phi.values().iter().zip(theta.dense()).map(|(a, b)| (a - b).abs()).collect();
    let w: Vec<&[f64]> = mus.iter().map(|m| m.weights()).collect();
    contract(&diff, &phi.shape(), &w)
}

/// A grid on whose cells a sum of products varies by at most `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousGrid {
    pub grid: GridPartition,
    /// Level count `N`.
    pub levels: usize,
    /// `m((1 + 2/N)ⁿ − 1)`.
    pub variation_bound: f64,
    pub eps: f64,
}

/// Smallest `N ≥ 1` with `m((1 + 2/N)ⁿ − 1) ≤ eps/2`.
pub fn grid_levels(m: usize, n: usize, eps: f64) -> usize {
    let lhs = |big_n: usize| m as f64 * ((1.0 + 2.0 / big_n as f64).powi(n as i32) - 1.0);
    let mut hi = 1;
    while lhs(hi) > eps / 2.0 {
        hi *= 2;
    }
    let mut lo = hi / 2;
    // lhs(lo) > eps/2 >= lhs(hi) unless hi == 1
    if hi == 1 {
        return 1;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if lhs(mid) <= eps / 2.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `max(0, 1 − |N·t − k|)`.
pub fn tent(levels: usize, k: usize, t: f64) -> f64 {
    (1.0 - (levels as f64 * t - k as f64).abs()).max(0.0)
}

fn bucket(levels: usize, t: f64) -> usize {
    ((t * levels as f64).floor() as usize).min(levels)
}

/// Upper limit on per-axis tent combinations in definable mode.
pub const DEFINABLE_COMBINATION_LIMIT: usize = 1 << 20;

fn axis_partition(theta: &SumOfProducts, axis: usize, levels: usize, mode: Mode) -> Result<PartitionOfUnity> {
    let size = theta.axes[axis].size;
    let factors: Vec<&[f64]> = theta.terms.iter().map(|t| t[axis].as_slice()).collect();
    let name = theta.axes[axis].name.clone();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    match mode {
        Mode::Constructible => {
            let mut sets: Vec<Vec<usize>> = Vec::new();
            for a in 0..size {
                let key: Vec<usize> = factors.iter().map(|f| bucket(levels, f[a])).collect();
                let k = *index.entry(key).or_insert_with(|| {
                    sets.push(Vec::new());
                    sets.len() - 1
                });
                sets[k].push(a);
            }
            PartitionOfUnity::from_sets(name, size, &sets)
        }
        Mode::Definable => {
            if factors.len() >= usize::BITS as usize || (size << factors.len()) > DEFINABLE_COMBINATION_LIMIT {
                return Err(Error::TooLarge(format!(
                    "{} terms on an axis of {size} elements exceed the tent combination limit",
                    factors.len()
                )));
            }
            let mut pieces: Vec<Vec<f64>> = Vec::new();
            for a in 0..size {
                // Each factor value meets at most two tents.
                let options: Vec<Vec<(usize, f64)>> = factors
                    .iter()
                    .map(|f| {
                        let k = bucket(levels, f[a]);
                        [k.saturating_sub(1), k, k + 1]
                            .into_iter()
                            .filter(|&j| j <= levels)
                            .map(|j| (j, tent(levels, j, f[a])))
                            .filter(|(_, w)| *w > 0.0)
                            .fold(Vec::new(), |mut acc, x| {
                                if !acc.iter().any(|(j, _)| *j == x.0) {
                                    acc.push(x);
                                }
                                acc
                            })
                    })
                    .collect();
                let shape: Vec<usize> = options.iter().map(|o| o.len()).collect();
                for_each_index(&shape, |choice| {
                    let key: Vec<usize> = choice.iter().zip(&options).map(|(&c, o)| o[c].0).collect();
                    let w: f64 = choice.iter().zip(&options).map(|(&c, o)| o[c].1).product();
                    let k = *index.entry(key).or_insert_with(|| {
                        pieces.push(vec![0.0; size]);
                        pieces.len() - 1
                    });
                    pieces[k][a] = w;
                });
            }
            if pieces.is_empty() {
                pieces.push(vec![1.0; size]);
            }
            PartitionOfUnity::new(name, pieces, Mode::Definable)
        }
    }
}

/// Grid partition whose cells are `(θ, eps)`-homogeneous.
///
/// Each axis is cut by the levels of every factor on that axis: tents
/// `max(0, 1 − |N·t − k|)` in definable mode, buckets `[k/N, (k+1)/N)` in
/// constructible mode. Only level combinations that occur are kept.
pub fn homogeneous_grid(theta: &SumOfProducts, eps: f64, mode: Mode) -> Result<HomogeneousGrid> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    let (m, n) = (theta.len().max(1), theta.arity());
    let levels = grid_levels(m, n, eps);
    let factors = (0..n).map(|i| axis_partition(theta, i, levels, mode)).collect::<Result<Vec<_>>>()?;
    let variation_bound = m as f64 * ((1.0 + 2.0 / levels as f64).powi(n as i32) - 1.0);
    Ok(HomogeneousGrid { grid: GridPartition::new(factors)?, levels, variation_bound, eps })
}

/// `[min, max]` of a dense tensor over the product of supports.
fn range_on(values: &[f64], shape: &[usize], supports: &[Vec<usize>]) -> Option<(f64, f64)> {
    if supports.iter().any(|s| s.is_empty()) {
        return None;
    }
    let strides: Vec<usize> = (0..shape.len()).map(|i| shape[i + 1..].iter().product()).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let lens: Vec<usize> = supports.iter().map(|s| s.len()).collect();
    for_each_index(&lens, |k| {
        let flat: usize = k.iter().enumerate().map(|(i, &j)| supports[i][j] * strides[i]).sum();
        lo = lo.min(values[flat]);
        hi = hi.max(values[flat]);
    });
    Some((lo, hi))
}

/// Largest oscillation of `θ` over any cell support of `grid`.
pub fn max_cell_oscillation(theta: &SumOfProducts, grid: &GridPartition) -> f64 {
    let dense = theta.dense();
    let shape = theta.shape();
    grid.cells()
        .iter()
        .filter_map(|c| range_on(&dense, &shape, &grid.cell_supports(c)))
        .map(|(lo, hi)| hi - lo)
        .fold(0.0, f64::max)
}

/// `∫ f·π dω` for a cell `π`.
fn cell_integral(f: &[f64], shape: &[usize], grid: &GridPartition, cell: &[usize], mus: &[DiscreteMeasure]) -> f64 {
    let w: Vec<Vec<f64>> = grid
        .factors()
        .iter()
        .zip(cell)
        .zip(mus)
        .map(|((p, &k), mu)| p.piece(k).iter().zip(mu.weights()).map(|(a, b)| a * b).collect())
        .collect();
    let refs: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
    contract(f, shape, &refs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredApproximation {
    pub theta: SumOfProducts,
    pub eps: f64,
    /// Exhaustive `∫|φ − θ| dω`.
    pub l1_error: f64,
    /// Sizes of the approximation tuples used at each binary step.
    pub sample_sizes: Vec<usize>,
}

/// Attempts per binary step when sampling an approximation tuple.
pub const APPROXIMATION_ATTEMPTS: usize = 200;

/// Sum-of-products `θ` with `∫|φ − θ| dμ₁⊗…⊗μₙ ≤ eps`.
///
/// The binary step samples an `eps/2`-approximation `A` for
/// `|φ(x;y) − φ(x;y′)|`, partitions the columns over `A` at `eps/2`, and
/// sums `φ(x; b_d)·ψ(y; d)` with one representative `b_d` per piece. Higher
/// arity splits off the last axis at `eps/2` and recurses on each slice.
pub fn structured_approximation(
    phi: &FuzzyPredicate,
    mus: &[DiscreteMeasure],
    eps: f64,
    seed: u64,
) -> Result<StructuredApproximation> {
    check_measures(phi, mus)?;
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    let mut sample_sizes = Vec::new();
    let theta = approximate(phi, mus, eps, seed, &mut sample_sizes)?;
    let l1_error = l1_distance(phi, &theta, mus);
    if l1_error > eps + TOL {
        return Err(Error::Postcondition(format!("L1 error {l1_error} exceeds {eps}")));
    }
    Ok(StructuredApproximation { theta, eps, l1_error, sample_sizes })
}

fn approximate(
    phi: &FuzzyPredicate,
    mus: &[DiscreteMeasure],
    eps: f64,
    seed: u64,
    sizes: &mut Vec<usize>,
) -> Result<SumOfProducts> {
    let n = phi.arity();
    if n == 1 {
        return SumOfProducts::from_unary(phi);
    }
    let step_eps = if n == 2 { eps } else { eps / 2.0 };
    let binary = phi.split_last()?;
    let rows = DiscreteMeasure::new(binary.axis(0).name.clone(), DiscreteMeasure::product_weights(&mus[..n - 1]))?;
    let (reps, psi) = binary_step(&binary, &rows, step_eps, seed, sizes)?;
    let mut terms = Vec::new();
    for (d, &b) in reps.iter().enumerate() {
        let slice = phi.slice_last(b)?;
        let sub = approximate(&slice, &mus[..n - 1], eps / 2.0, seed.wrapping_add(d as u64 + 1), sizes)?;
        for t in sub.terms {
            let mut t = t;
            t.push(psi.piece(d).to_vec());
            terms.push(t);
        }
    }
    SumOfProducts::new(phi.axes().to_vec(), terms)
}

/// Column representatives and the column partition of the binary step.
fn binary_step(
    phi: &FuzzyPredicate,
    mu: &DiscreteMeasure,
    eps: f64,
    seed: u64,
    sizes: &mut Vec<usize>,
) -> Result<(Vec<usize>, PartitionOfUnity)> {
    let cols = phi.cols();
    let psi = if cols == 1 {
        PartitionOfUnity::trivial(phi.axis(1).name.clone(), 1)
    } else {
        let pairs: Vec<(usize, usize)> = (0..cols).flat_map(|b| (b + 1..cols).map(move |c| (b, c))).collect();
        let chi = FuzzyPredicate::from_fn(
            vec![phi.axis(0).clone(), Axis::new("pairs", pairs.len())],
            |i| (phi.at(i[0], pairs[i[1]].0) - phi.at(i[0], pairs[i[1]].1)).abs(),
        )?;
        let size = sufficient_sample_size(eps / 2.0);
        let found = eps_approximation_search(&chi, mu, eps / 2.0, size, APPROXIMATION_ATTEMPTS, seed)?;
        let tuple = match found {
            ApproximationSearch::Found { witness, .. } => witness.tuple,
            ApproximationSearch::NotFound { attempts, best, .. } => {
                return Err(Error::ApproximationNotFound { attempts, best_error: best.error })
            }
        };
        sizes.push(size);
        let mut support = tuple;
        support.sort_unstable();
        support.dedup();
        cover_partition(&phi.transpose()?, &support, eps / 2.0, Mode::Constructible)?.partition
    };
    let reps = (0..psi.len())
        .map(|d| {
            let p = psi.piece(d);
            (0..p.len()).fold(0, |best, b| if p[b] > p[best] { b } else { best })
        })
        .collect();
    Ok((reps, psi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NipCell {
    pub cell: Vec<usize>,
    pub mass: f64,
    /// `∫|φ − θ|π dω / ∫π dω`.
    pub error: f64,
    pub exceptional: bool,
    /// Midpoint of `θ` over the cell support.
    pub r: f64,
    /// `∫π|φ − r| dω`.
    pub deviation: f64,
    /// `eps · ∫π dω`.
    pub allowance: f64,
    /// `∫π·(|φ − r| ∸ eps/2) dω − δ·∫π dω`; nonpositive when the proof-form bound holds.
    pub proof_slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NipCertificate {
    pub eps: f64,
    pub delta: f64,
    pub mode: Mode,
    pub approximation: StructuredApproximation,
    pub grid: HomogeneousGrid,
    /// Positive-mass cells only.
    pub cells: Vec<NipCell>,
    pub cell_count: usize,
    pub exceptional_mass: f64,
    /// `|Σ e(π)·mass(π) − ∫|φ − θ| dω|`.
    pub markov_gap: f64,
    pub worst_deviation_ratio: f64,
    pub pass: bool,
}

/// `(eps, delta)`-NIP regularity partition built on an approximation at `delta²`.
pub fn nip_regularity(
    phi: &FuzzyPredicate,
    mus: &[DiscreteMeasure],
    eps: f64,
    delta: f64,
    mode: Mode,
    seed: u64,
) -> Result<NipCertificate> {
    if !(delta > 0.0) {
        return Err(Error::param("delta", format!("must be positive, got {delta}")));
    }
    let approximation = structured_approximation(phi, mus, delta * delta, seed)?;
    let grid = homogeneous_grid(&approximation.theta, eps, mode)?;
    let shape = phi.shape();
    let theta = approximation.theta.dense();
    let diff: Vec<f64> = phi.values().iter().zip(&theta).map(|(a, b)| (a - b).abs()).collect();
    let mut cells = Vec::new();
    let mut exceptional_mass = 0.0;
    let mut error_sum = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for cell in grid.grid.cells() {
        let mass = grid.grid.cell_mass(&cell, mus);
        if mass <= crate::SUPPORT_EPS {
            continue;
        }
        let weighted_error = cell_integral(&diff, &shape, &grid.grid, &cell, mus);
        error_sum += weighted_error;
        let error = weighted_error / mass;
        let exceptional = error > delta;
        let (lo, hi) = range_on(&theta, &shape, &grid.grid.cell_supports(&cell)).unwrap_or((0.0, 0.0));
        let r = (lo + hi) / 2.0;
        let dev: Vec<f64> = phi.values().iter().map(|v| (v - r).abs()).collect();
        let deviation = cell_integral(&dev, &shape, &grid.grid, &cell, mus);
        let truncated: Vec<f64> = dev.iter().map(|d| (d - eps / 2.0).max(0.0)).collect();
        let proof_slack = cell_integral(&truncated, &shape, &grid.grid, &cell, mus) - delta * mass;
        let allowance = eps * mass;
        if exceptional {
            exceptional_mass += mass;
        } else {
            worst_ratio = worst_ratio.max(deviation / mass);
        }
        let pass = exceptional || deviation <= allowance + TOL;
        cells.push(NipCell { cell, mass, error, exceptional, r, deviation, allowance, proof_slack, pass });
    }
    let markov_gap = (error_sum - approximation.l1_error).abs();
    let pass = exceptional_mass <= delta + TOL && markov_gap <= TOL && cells.iter().all(|c| c.pass);
    Ok(NipCertificate {
        eps,
        delta,
        mode,
        cell_count: grid.grid.cell_count(),
        approximation,
        grid,
        cells,
        exceptional_mass,
        markov_gap,
        worst_deviation_ratio: worst_ratio,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    /// `r_π⁻` per cell in grid order; 0 for cells with empty support.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `E_ω[χ⁺ − χ⁻]`.
    pub gap: f64,
    /// Whether `χ⁻ ≤ φ ≤ χ⁺` held at every point.
    pub pointwise: bool,
}

impl Sandwich {
    /// `χ±(x) = Σ_π r_π± π(x)` at one point.
    pub fn bounds_at(&self, grid: &GridPartition, point: &[usize]) -> (f64, f64) {
        grid.cells().iter().enumerate().fold((0.0, 0.0), |(lo, hi), (k, c)| {
            let w = grid.weight(c, point);
            (lo + w * self.lower[k], hi + w * self.upper[k])
        })
    }
}

/// Lower and upper step combinations `Σ_π r_π± π` around `φ`.
pub fn sandwich_build(phi: &FuzzyPredicate, grid: &GridPartition, mus: &[DiscreteMeasure]) -> Result<Sandwich> {
    check_measures(phi, mus)?;
    if grid.arity() != phi.arity() || grid.factors().iter().zip(phi.axes()).any(|(f, a)| f.size() != a.size) {
        return Err(Error::param("grid", "grid does not cover the axes of phi"));
    }
    let shape = phi.shape();
    let cells = grid.cells();
    let (mut lower, mut upper) = (Vec::with_capacity(cells.len()), Vec::with_capacity(cells.len()));
    let mut gap = 0.0;
    for c in &cells {
        let (lo, hi) = range_on(phi.values(), &shape, &grid.cell_supports(c)).unwrap_or((0.0, 0.0));
        gap += (hi - lo) * grid.cell_mass(c, mus);
        lower.push(lo);
        upper.push(hi);
    }
    let mut sandwich = Sandwich { lower, upper, gap, pointwise: true };
    let mut ok = true;
    for_each_index(&shape, |p| {
        let (lo, hi) = sandwich.bounds_at(grid, p);
        let v = phi.get(p);
        ok &= lo <= v + TOL && v <= hi + TOL;
    });
    sandwich.pointwise = ok;
    Ok(sandwich)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::generators;

    fn uniform2(n: usize) -> Vec<DiscreteMeasure> {
        vec![DiscreteMeasure::uniform("x", n), DiscreteMeasure::uniform("y", n)]
    }

    fn brute_l1(phi: &FuzzyPredicate, theta: &SumOfProducts, mus: &[DiscreteMeasure]) -> f64 {
        let mut s = 0.0;
        for a in 0..phi.rows() {
            for b in 0..phi.cols() {
                s += mus[0].weight(a) * mus[1].weight(b) * (phi.at(a, b) - theta.eval(&[a, b])).abs();
            }
        }
        s
    }

    fn identity_factor_theta() -> SumOfProducts {
        let v = vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        SumOfProducts::new(vec![Axis::new("x", 4), Axis::new("y", 4)], vec![vec![v.clone(), v]]).unwrap()
    }

    #[test]
    fn levels_are_minimal() {
        for (m, n, eps) in [(1, 2, 0.5), (3, 2, 0.3), (8, 2, 0.3), (2, 3, 0.1), (1, 2, 2.0)] {
            let big_n = grid_levels(m, n, eps);
            let lhs = |k: usize| m as f64 * ((1.0 + 2.0 / k as f64).powi(n as i32) - 1.0);
            assert!(lhs(big_n) <= eps / 2.0);
            assert!(big_n == 1 || lhs(big_n - 1) > eps / 2.0);
        }
        assert_eq!(grid_levels(1, 2, 0.5), 17);
    }

    #[test]
    fn tents_partition_unity() {
        for levels in [1, 3, 17] {
            for i in 0..=100 {
                let t = i as f64 / 100.0;
                let s: f64 = (0..=levels).map(|k| tent(levels, k, t)).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_factors_give_one_cell() {
        let theta = SumOfProducts::new(vec![Axis::new("x", 3), Axis::new("y", 2)], vec![vec![vec![0.5; 3], vec![0.4; 2]]])
            .unwrap();
        for mode in [Mode::Definable, Mode::Constructible] {
            let g = homogeneous_grid(&theta, 0.2, mode).unwrap();
            assert_eq!(max_cell_oscillation(&theta, &g.grid), 0.0);
            if mode == Mode::Constructible {
                assert_eq!(g.grid.cell_count(), 1);
            }
        }
    }

    #[test]
    fn identity_factors_are_homogeneous() {
        let theta = identity_factor_theta();
        for mode in [Mode::Definable, Mode::Constructible] {
            let g = homogeneous_grid(&theta, 0.5, mode).unwrap();
            assert_eq!(g.levels, 17);
            g.grid.check_sums().unwrap();
            assert!(max_cell_oscillation(&theta, &g.grid) <= 0.5);
            for f in g.grid.factors() {
                assert!(f.len() <= (g.levels + 1).pow(theta.len() as u32));
            }
        }
        let wide = homogeneous_grid(&theta, 2.0, Mode::Constructible).unwrap();
        assert_eq!(wide.levels, 5);
        assert!(max_cell_oscillation(&theta, &wide.grid) <= 1.0);
    }

    #[test]
    fn rank_one_and_constant_are_reproduced() {
        let u = [0.2, 0.9, 0.5];
        let v = [1.0, 0.3, 0.6, 0.0];
        let phi = FuzzyPredicate::from_fn(vec![Axis::new("x", 3), Axis::new("y", 4)], |i| u[i[0]] * v[i[1]]).unwrap();
        let mus = vec![DiscreteMeasure::uniform("x", 3), DiscreteMeasure::uniform("y", 4)];
        let s = structured_approximation(&phi, &mus, 0.3, 1).unwrap();
        assert!(s.l1_error <= 1e-12);
        let c = generators::constant(4, 4, 0.35).unwrap();
        let s = structured_approximation(&c, &uniform2(4), 0.3, 1).unwrap();
        assert_eq!(s.theta.len(), 1);
        assert!(s.l1_error < 1e-12);
    }

    #[test]
    fn half_graph_approximation_is_verified() {
        let hg = generators::half_graph(8);
        let mus = uniform2(8);
        let s = structured_approximation(&hg, &mus, 0.3, 5).unwrap();
        assert!(s.l1_error <= 0.3);
        assert!((brute_l1(&hg, &s.theta, &mus) - s.l1_error).abs() < 1e-12);
        assert!(s.theta.max_value() <= 1.0 + 1e-12);
    }

    #[test]
    fn random_approximations_meet_their_budget() {
        for seed in 0..4 {
            let phi = generators::random(6, 6, seed);
            let mus = uniform2(6);
            let s = structured_approximation(&phi, &mus, 0.2, seed).unwrap();
            assert!(brute_l1(&phi, &s.theta, &mus) <= 0.2);
        }
    }

    #[test]
    fn ternary_approximation() {
        let phi = FuzzyPredicate::from_fn(vec![Axis::new("a", 3), Axis::new("b", 3), Axis::new("c", 3)], |i| {
            if i[0] + i[1] < 2 * i[2] {
                1.0
            } else {
                0.25
            }
        })
        .unwrap();
        let mus = vec![DiscreteMeasure::uniform("a", 3), DiscreteMeasure::uniform("b", 3), DiscreteMeasure::uniform("c", 3)];
        let s = structured_approximation(&phi, &mus, 0.2, 3).unwrap();
        let mut brute = 0.0;
        for_each_index(&[3, 3, 3], |p| brute += (phi.get(p) - s.theta.eval(p)).abs() / 27.0);
        assert!(brute <= 0.2);
        assert!((brute - s.l1_error).abs() < 1e-12);
    }

    #[test]
    fn nip_examples() {
        let c = generators::constant(5, 5, 0.6).unwrap();
        let cert = nip_regularity(&c, &uniform2(5), 0.2, 0.1, Mode::Constructible, 1).unwrap();
        assert!(cert.pass);
        assert_eq!(cert.exceptional_mass, 0.0);
        assert!(cert.cells.iter().all(|c| c.deviation < 1e-12));

        let u = [0.2, 0.9, 0.5, 0.1];
        let phi = FuzzyPredicate::from_fn(vec![Axis::new("x", 4), Axis::new("y", 4)], |i| u[i[0]] * u[i[1]]).unwrap();
        let cert = nip_regularity(&phi, &uniform2(4), 0.2, 0.1, Mode::Definable, 1).unwrap();
        assert_eq!(cert.exceptional_mass, 0.0);
        assert!(cert.pass);

        for mode in [Mode::Constructible, Mode::Definable] {
            let hg = generators::half_graph(8);
            let cert = nip_regularity(&hg, &uniform2(8), 0.3, 0.3, mode, 2).unwrap();
            assert!(cert.pass, "{mode}");
            assert!(cert.markov_gap <= 1e-9);
            let total: f64 = cert.cells.iter().map(|c| c.mass).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sandwich_examples() {
        let c = generators::constant(4, 4, 0.3).unwrap();
        let trivial = GridPartition::new(vec![PartitionOfUnity::trivial("x", 4), PartitionOfUnity::trivial("y", 4)]).unwrap();
        assert_eq!(sandwich_build(&c, &trivial, &uniform2(4)).unwrap().gap, 0.0);
        let r = generators::random(4, 4, 9);
        let s = sandwich_build(&r, &trivial, &uniform2(4)).unwrap();
        assert!((s.gap - (r.max_value() - r.min_value())).abs() < 1e-12);
        assert!(s.pointwise);
    }

    #[test]
    fn sandwich_gap_shrinks_under_refinement() {
        let hg = generators::half_graph(8);
        let mus = uniform2(8);
        let coarse = GridPartition::new(vec![
            PartitionOfUnity::from_sets("x", 8, &[(0..4).collect(), (4..8).collect()]).unwrap(),
            PartitionOfUnity::from_sets("y", 8, &[(0..4).collect(), (4..8).collect()]).unwrap(),
        ])
        .unwrap();
        let fine = GridPartition::new(vec![
            PartitionOfUnity::from_sets("x", 8, &[vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]).unwrap(),
            PartitionOfUnity::from_sets("y", 8, &[vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]).unwrap(),
        ])
        .unwrap();
        let finest = GridPartition::new(vec![PartitionOfUnity::singletons("x", 8), PartitionOfUnity::singletons("y", 8)])
            .unwrap();
        let gaps: Vec<f64> =
            [coarse, fine, finest].iter().map(|g| sandwich_build(&hg, g, &mus).unwrap().gap).collect();
        assert!(gaps[0] >= gaps[1] && gaps[1] >= gaps[2]);
        assert_eq!(gaps[2], 0.0);
    }

    #[test]
    fn cover_grid_sandwich_on_half_graph() {
        let hg = generators::half_graph(8);
        let mus = uniform2(8);
        let all: Vec<usize> = (0..8).collect();
        let px = cover_partition(&hg, &all, 0.5, Mode::Constructible).unwrap().partition;
        let py = cover_partition(&hg.transpose().unwrap(), &all, 0.5, Mode::Constructible).unwrap().partition;
        let s = sandwich_build(&hg, &GridPartition::new(vec![px, py]).unwrap(), &mus).unwrap();
        assert!(s.pointwise);
        assert!(s.gap <= 0.5);
    }
}
