//! Homogeneous rectangles, the iterative distal regularity partition, and
//! the cutting and equipartition constructions built on top of it.
//!
//! Every returned object is re-verified exhaustively before it leaves this
//! module: rectangles against their mass and oscillation bounds, partitions
//! by a full cell audit, cuttings by [`cutting_verify`].

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cert::{Certificate, Check};
use crate::covering::row_distance;
use crate::error::{Error, Result};
use crate::fuzzy::{
    check_measures, expectation, for_each_index, indicator, localize, Axis, DiscreteMeasure, FuzzyPredicate,
    GridPartition, Mode, PartitionOfUnity,
};
use crate::sampling::{eps_net_search, NetStrategy};
use crate::{SUPPORT_EPS, TOL};

/// Candidate budget of [`seh_bruteforce`] unless told otherwise.
pub const DEFAULT_SEH_BUDGET: usize = 1_000_000;

/// Axes whose support has at most this many elements get every subset as a candidate.
pub const SUBSET_AXIS_LIMIT: usize = 12;

/// Fibers scanned per axis when generating level-set candidates.
pub const LEVEL_SET_FIBER_LIMIT: usize = 4096;

/// Absolute tolerance of the bucket identity `Σⱼ φⱼ = 1/s`.
pub const BUCKET_IDENTITY_TOL: f64 = 1e-12;

fn value_range(phi: &FuzzyPredicate, sides: &[Vec<usize>]) -> (f64, f64) {
    let shape: Vec<usize> = sides.iter().map(|s| s.len()).collect();
    let mut idx = vec![0; sides.len()];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for_each_index(&shape, |k| {
        for (i, &j) in k.iter().enumerate() {
            idx[i] = sides[i][j];
        }
        let v = phi.get(&idx);
        lo = lo.min(v);
        hi = hi.max(v);
    });
    (lo, hi)
}

fn spread(phi: &FuzzyPredicate, sides: &[Vec<usize>]) -> f64 {
    let (lo, hi) = value_range(phi, sides);
    if hi < lo {
        0.0
    } else {
        hi - lo
    }
}

fn product_mass(mus: &[DiscreteMeasure], sides: &[Vec<usize>]) -> f64 {
    mus.iter().zip(sides).map(|(mu, s)| mu.mass(s)).product()
}

fn check_unit(name: &'static str, v: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { (0.0..=1.0).contains(&v) } else { v > 0.0 && v <= 1.0 };
    if !ok {
        let range = if allow_zero { "[0, 1]" } else { "(0, 1]" };
        return Err(Error::param(name, format!("must lie in {range}, got {v}")));
    }
    Ok(())
}

fn check_nonnegative(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0) {
        return Err(Error::param(name, format!("must be non-negative, got {v}")));
    }
    Ok(())
}

/// Per-axis sets `B₁,…,Bₙ` with `μᵢ(Bᵢ) ≥ δ` and `osc(φ, ∏Bᵢ) ≤ ε`.
///
/// Sides are sorted and duplicate-free; both bounds hold up to [`TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SehRectangle {
    sides: Vec<Vec<usize>>,
    masses: Vec<f64>,
    oscillation: f64,
    eps: f64,
    delta: f64,
}

impl SehRectangle {
    pub fn new(
        phi: &FuzzyPredicate,
        mus: &[DiscreteMeasure],
        mut sides: Vec<Vec<usize>>,
        eps: f64,
        delta: f64,
    ) -> Result<Self> {
        check_measures(phi, mus)?;
        if sides.len() != phi.arity() {
            return Err(Error::MeasureCount { expected: phi.arity(), got: sides.len() });
        }
        for (i, (s, axis)) in sides.iter_mut().zip(phi.axes()).enumerate() {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(Error::EmptySupport { axis: i });
            }
            if let Some(&bad) = s.iter().find(|&&a| a >= axis.size) {
                return Err(Error::IndexOutOfRange { axis: axis.name.clone(), index: bad, size: axis.size });
            }
        }
        let masses: Vec<f64> = mus.iter().zip(&sides).map(|(mu, s)| mu.mass(s)).collect();
        if let Some((i, m)) = masses.iter().enumerate().find(|(_, m)| **m < delta - TOL) {
            return Err(Error::InvalidRectangle(format!("side {i} has mass {m} below {delta}")));
        }
        let oscillation = spread(phi, &sides);
        if oscillation > eps + TOL {
            return Err(Error::InvalidRectangle(format!("oscillation {oscillation} exceeds {eps}")));
        }
        Ok(SehRectangle { sides, masses, oscillation, eps, delta })
    }

    pub fn sides(&self) -> &[Vec<usize>] {
        &self.sides
    }

    pub fn into_sides(self) -> Vec<Vec<usize>> {
        self.sides
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn oscillation(&self) -> f64 {
        self.oscillation
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn product_mass(&self) -> f64 {
        self.masses.iter().product()
    }

    pub fn min_mass(&self) -> f64 {
        self.masses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rebuilds the rectangle from its sides and compares.
    pub fn verify(&self, phi: &FuzzyPredicate, mus: &[DiscreteMeasure]) -> bool {
        SehRectangle::new(phi, mus, self.sides.clone(), self.eps, self.delta).is_ok_and(|r| r == *self)
    }
}

/// Result of [`seh_bruteforce`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum SehSearch {
    Found {
        rectangle: SehRectangle,
        examined: usize,
    },
    /// `exact` is set when every axis but the last was searched over all
    /// subsets of its support, so `budget_exhausted == false` proves absence.
    NotFound {
        examined: usize,
        budget_exhausted: bool,
        exact: bool,
    },
}

impl SehSearch {
    pub fn rectangle(&self) -> Option<&SehRectangle> {
        match self {
            SehSearch::Found { rectangle, .. } => Some(rectangle),
            SehSearch::NotFound { .. } => None,
        }
    }

    pub fn into_rectangle(self) -> Option<SehRectangle> {
        match self {
            SehSearch::Found { rectangle, .. } => Some(rectangle),
            SehSearch::NotFound { .. } => None,
        }
    }

    pub fn examined(&self) -> usize {
        match self {
            SehSearch::Found { examined, .. } | SehSearch::NotFound { examined, .. } => *examined,
        }
    }
}

fn all_subsets(support: &[usize]) -> Vec<Vec<usize>> {
    let k = support.len();
    (1u32..(1u32 << k))
        .map(|mask| (0..k).filter(|&i| mask >> i & 1 == 1).map(|i| support[i]).collect())
        .collect()
}

/// Sets `{a : φ(…a…) ∈ [v, v+ε]}` over fibers through axis `axis`, plus the full support.
fn level_set_candidates(phi: &FuzzyPredicate, supports: &[Vec<usize>], axis: usize, eps: f64) -> Vec<Vec<usize>> {
    let mut out = BTreeSet::new();
    out.insert(supports[axis].clone());
    let others: Vec<usize> = (0..supports.len()).filter(|&i| i != axis).collect();
    let shape: Vec<usize> = others.iter().map(|&i| supports[i].len()).collect();
    let mut idx = vec![0; supports.len()];
    let mut fibers = 0usize;
    for_each_index(&shape, |k| {
        if fibers >= LEVEL_SET_FIBER_LIMIT {
            return;
        }
        fibers += 1;
        for (j, &i) in others.iter().enumerate() {
            idx[i] = supports[i][k[j]];
        }
        let fiber: Vec<(usize, f64)> = supports[axis]
            .iter()
            .map(|&a| {
                idx[axis] = a;
                (a, phi.get(&idx))
            })
            .collect();
        let mut levels: Vec<f64> = fiber.iter().map(|p| p.1).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        for v in levels {
            out.insert(fiber.iter().filter(|p| p.1 >= v && p.1 <= v + eps + TOL).map(|p| p.0).collect());
        }
    });
    out.into_iter().collect()
}

/// Searches for an `(ε, δ)` rectangle of largest product mass.
///
/// Axes `0..n−1` range over candidate sets (all subsets of the support when
/// it has at most [`SUBSET_AXIS_LIMIT`] elements, level sets of fibers
/// otherwise), visited in decreasing mass order. For each choice the last
/// side is the largest set whose values fit a window `[lo, lo+ε]`, for every
/// attainable `lo`. One `(choice, lo)` pair costs one unit of `budget`.
/// Ties keep the first rectangle found.
///
/// ```
/// use fuzzreg::distal::{seh_bruteforce, DEFAULT_SEH_BUDGET};
/// use fuzzreg::{generators, DiscreteMeasure};
///
/// let phi = generators::identity(4);
/// let mus = [DiscreteMeasure::uniform("x", 4), DiscreteMeasure::uniform("y", 4)];
/// let found = seh_bruteforce(&phi, &mus, 0.0, 0.5, DEFAULT_SEH_BUDGET).unwrap();
/// assert_eq!(found.rectangle().unwrap().sides(), &[vec![0, 1], vec![2, 3]]);
/// ```
pub fn seh_bruteforce(
    phi: &FuzzyPredicate,
    mus: &[DiscreteMeasure],
    eps: f64,
    delta: f64,
    budget: usize,
) -> Result<SehSearch> {
    check_measures(phi, mus)?;
    check_nonnegative("eps", eps)?;
    check_unit("delta", delta, false)?;
    let n = phi.arity();
    let last = n - 1;
    let supports: Vec<Vec<usize>> = mus.iter().map(|m| m.support()).collect();
    let mut exact = true;
    let mut lists: Vec<Vec<(Vec<usize>, f64)>> = Vec::with_capacity(last);
    for i in 0..last {
        let raw = if supports[i].len() <= SUBSET_AXIS_LIMIT {
            all_subsets(&supports[i])
        } else {
            exact = false;
            level_set_candidates(phi, &supports, i, eps)
        };
        let mut cands: Vec<(Vec<usize>, f64)> = raw
            .into_iter()
            .map(|s| {
                let m = mus[i].mass(&s);
                (s, m)
            })
            .filter(|(_, m)| *m >= delta - TOL)
            .collect();
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        lists.push(cands);
    }
    if lists.iter().any(|l| l.is_empty()) {
        return Ok(SehSearch::NotFound { examined: 0, budget_exhausted: false, exact });
    }

    let tail = &supports[last];
    let mut examined = 0usize;
    let mut exhausted = false;
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    let counts: Vec<usize> = lists.iter().map(|l| l.len()).collect();
    let mut point = vec![0; n];
    let mut ranges = vec![(0.0f64, 0.0f64); tail.len()];
    'outer: for choice in OdometerIter::new(counts) {
        let prefix: f64 = choice.iter().enumerate().map(|(i, &k)| lists[i][k].1).product();
        if best.as_ref().is_some_and(|(m, _)| prefix <= *m) {
            continue;
        }
        let sets: Vec<&[usize]> = choice.iter().enumerate().map(|(i, &k)| lists[i][k].0.as_slice()).collect();
        let shape: Vec<usize> = sets.iter().map(|s| s.len()).collect();
        for (r, &b) in ranges.iter_mut().zip(tail) {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            point[last] = b;
            for_each_index(&shape, |k| {
                for (i, &j) in k.iter().enumerate() {
                    point[i] = sets[i][j];
                }
                let v = phi.get(&point);
                lo = lo.min(v);
                hi = hi.max(v);
            });
            *r = (lo, hi);
        }
        let mut windows: Vec<f64> = ranges.iter().map(|r| r.0).collect();
        windows.sort_by(f64::total_cmp);
        windows.dedup();
        for lo in windows {
            if examined >= budget {
                exhausted = true;
                break 'outer;
            }
            examined += 1;
            let side: Vec<usize> =
                tail.iter().zip(&ranges).filter(|(_, r)| r.0 >= lo && r.1 <= lo + eps + TOL).map(|(&b, _)| b).collect();
            let m = mus[last].mass(&side);
            if m < delta - TOL {
                continue;
            }
            let total = prefix * m;
            if best.as_ref().is_none_or(|(bm, _)| total > *bm) {
                let mut sides: Vec<Vec<usize>> = sets.iter().map(|s| s.to_vec()).collect();
                sides.push(side);
                best = Some((total, sides));
            }
        }
    }
    match best {
        Some((_, sides)) => {
            let rectangle = SehRectangle::new(phi, mus, sides, eps, delta)
                .map_err(|e| Error::Postcondition(format!("search produced an invalid rectangle: {e}")))?;
            Ok(SehSearch::Found { rectangle, examined })
        }
        None => Ok(SehSearch::NotFound { examined, budget_exhausted: exhausted, exact }),
    }
}

/// Row-major tuples over `0..counts[i]`; one empty tuple when `counts` is empty.
struct OdometerIter {
    counts: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl OdometerIter {
    fn new(counts: Vec<usize>) -> Self {
        let next = if counts.contains(&0) { None } else { Some(vec![0; counts.len()]) };
        OdometerIter { counts, next }
    }
}

impl Iterator for OdometerIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        let mut i = succ.len();
        let mut carried = true;
        while carried && i > 0 {
            i -= 1;
            succ[i] += 1;
            if succ[i] < self.counts[i] {
                carried = false;
            } else {
                succ[i] = 0;
            }
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(cur)
    }
}

/// A procedure that proposes homogeneous rectangles for localized measures.
///
/// A proposal must have per-axis `mus`-mass at least `delta` and
/// oscillation at most `eps`; callers re-verify it.
pub trait SehOracle: Sync {
    fn find(&self, phi: &FuzzyPredicate, mus: &[DiscreteMeasure], eps: f64, delta: f64) -> Option<Vec<Vec<usize>>>;
}

impl<F> SehOracle for F
where
    F: Fn(&FuzzyPredicate, &[DiscreteMeasure], f64, f64) -> Option<Vec<Vec<usize>>> + Sync,
{
    fn find(&self, phi: &FuzzyPredicate, mus: &[DiscreteMeasure], eps: f64, delta: f64) -> Option<Vec<Vec<usize>>> {
        self(phi, mus, eps, delta)
    }
}

/// [`seh_bruteforce`] as an oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BruteForceOracle {
    pub budget: usize,
}

impl Default for BruteForceOracle {
    fn default() -> Self {
        BruteForceOracle { budget: DEFAULT_SEH_BUDGET }
    }
}

impl SehOracle for BruteForceOracle {
    fn find(&self, phi: &FuzzyPredicate, mus: &[DiscreteMeasure], eps: f64, delta: f64) -> Option<Vec<Vec<usize>>> {
        seh_bruteforce(phi, mus, eps, delta, self.budget).ok()?.into_rectangle().map(SehRectangle::into_sides)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    /// Known homogeneous: an oracle rectangle or a cell audited homogeneous.
    Certified,
    /// Positive mass, not yet certified.
    Open,
    /// Zero product mass; never queried.
    Frozen,
}

/// One rectangular cell `A₁ × … × Aₙ` of a distal partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectCell {
    pub sides: Vec<Vec<usize>>,
    pub mass: f64,
    pub oscillation: f64,
    pub homogeneous: bool,
    pub status: CellStatus,
}

/// Mass bookkeeping for one round of [`distal_partition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistalRound {
    pub round: usize,
    pub queried: usize,
    pub answered: usize,
    pub uncovered_before: f64,
    pub uncovered_after: f64,
    pub covered_after: f64,
    pub cells_after: usize,
}

impl DistalRound {
    pub fn all_answered(&self) -> bool {
        self.answered == self.queried
    }
}

/// A rectangular partition whose non-homogeneous cells have product mass at most `γ`.
///
/// `round_budget` is `M = ⌈ln γ / ln(1 − (δ/2)ⁿ)⌉`; the variant with `δⁿ`
/// and both exponents `C = −ln(n+1)/ln(1 − q)` are reported alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistalPartitionCertificate {
    pub axes: Vec<Axis>,
    pub eps: f64,
    pub delta: f64,
    pub gamma: f64,
    /// `(δ/2)ⁿ`, the certified fraction of every answered cell.
    pub coverage: f64,
    pub round_budget: usize,
    pub round_budget_full_delta: usize,
    pub exponent: f64,
    pub exponent_full_delta: f64,
    pub rounds: Vec<DistalRound>,
    pub cells: Vec<RectCell>,
    pub cell_count: usize,
    /// `M · ln(n+1)`, the log of the cell bound.
    pub cell_bound_ln: f64,
    pub non_homogeneous_mass: f64,
    pub oracle_failures: usize,
    pub recurrence_holds: bool,
    pub pass: bool,
}

impl DistalPartitionCertificate {
    pub fn arity(&self) -> usize {
        self.axes.len()
    }

    /// The coarsest grid refining every cell: per axis, elements grouped by
    /// which cell sides contain them.
    pub fn grid(&self) -> Result<GridPartition> {
        let factors = (0..self.arity())
            .map(|i| {
                let axis = &self.axes[i];
                let mut groups: Vec<(Vec<bool>, Vec<usize>)> = Vec::new();
                let mut lookup: HashMap<Vec<bool>, usize> = HashMap::new();
                for a in 0..axis.size {
                    let sig: Vec<bool> = self.cells.iter().map(|c| c.sides[i].binary_search(&a).is_ok()).collect();
                    match lookup.get(&sig) {
                        Some(&g) => groups[g].1.push(a),
                        None => {
                            lookup.insert(sig.clone(), groups.len());
                            groups.push((sig, vec![a]));
                        }
                    }
                }
                let sets: Vec<Vec<usize>> = groups.into_iter().map(|g| g.1).collect();
                PartitionOfUnity::from_sets(axis.name.clone(), axis.size, &sets)
            })
            .collect::<Result<Vec<_>>>()?;
        GridPartition::new(factors)
    }

    pub fn checks(&self) -> Vec<Check> {
        let n = self.arity();
        vec![
            Check::holds("oracle answered every query", "SEH rectangle for each positive-mass cell", self.oracle_failures == 0),
            Check::at_most("non-homogeneous mass", "Σ_{non-homogeneous} ∏μᵢ(Aᵢ) ≤ γ", self.non_homogeneous_mass, self.gamma),
            Check::at_most("rounds used", "M = ⌈ln γ / ln(1 − (δ/2)ⁿ)⌉", self.rounds.len() as f64, self.round_budget as f64),
            Check::at_most(
                "log cell count",
                format!("cells ≤ {}^M", n + 1),
                (self.cell_count as f64).ln(),
                self.cell_bound_ln,
            ),
            Check::holds(
                "coverage recurrence",
                "uncovered mass shrinks by 1 − (δ/2)ⁿ on fully answered rounds",
                self.recurrence_holds,
            ),
        ]
    }
}

fn round_budget(gamma: f64, fraction: f64) -> usize {
    if gamma >= 1.0 {
        return 0;
    }
    if fraction >= 1.0 {
        return 1;
    }
    (gamma.ln() / (1.0 - fraction).ln()).ceil().max(0.0) as usize
}

fn exponent(n: usize, fraction: f64) -> f64 {
    if fraction >= 1.0 {
        0.0
    } else {
        -((n + 1) as f64).ln() / (1.0 - fraction).ln()
    }
}

fn classify(phi: &FuzzyPredicate, mus: &[DiscreteMeasure], sides: Vec<Vec<usize>>, eps: f64) -> RectCell {
    let mass = product_mass(mus, &sides);
    let oscillation = spread(phi, &sides);
    let homogeneous = oscillation <= eps + TOL;
    let status = if homogeneous {
        CellStatus::Certified
    } else if mass <= SUPPORT_EPS {
        CellStatus::Frozen
    } else {
        CellStatus::Open
    };
    RectCell { sides, mass, oscillation, homogeneous, status }
}

/// Splits `A` along `B ⊆ A` into `∏(Aᵢ∩Bᵢ)` followed by the staircase
/// `∏_{i<j}(Aᵢ∩Bᵢ) × (Aⱼ∖Bⱼ) × ∏_{i>j}Aᵢ` for `j = 0..n`, empty pieces dropped.
pub fn staircase(a: &[Vec<usize>], b: &[Vec<usize>]) -> Vec<Vec<Vec<usize>>> {
    let n = a.len();
    let inter: Vec<Vec<usize>> = a.iter().zip(b).map(|(ai, bi)| ai.iter().copied().filter(|x| bi.contains(x)).collect()).collect();
    let diff: Vec<Vec<usize>> = a.iter().zip(b).map(|(ai, bi)| ai.iter().copied().filter(|x| !bi.contains(x)).collect()).collect();
    let mut pieces = vec![inter.clone()];
    for j in 0..n {
        let piece: Vec<Vec<usize>> = (0..n)
            .map(|i| match i.cmp(&j) {
                std::cmp::Ordering::Less => inter[i].clone(),
                std::cmp::Ordering::Equal => diff[i].clone(),
                std::cmp::Ordering::Greater => a[i].clone(),
            })
            .collect();
        pieces.push(piece);
    }
    pieces.retain(|p| p.iter().all(|s| !s.is_empty()));
    pieces
}

/// Refines the full product into rectangles until the non-homogeneous mass is at most `gamma`.
///
/// Each round queries `oracle` at `(eps, delta/2)` on every open cell of
/// positive mass, in descending mass order, with the measures localized to
/// the cell; answered cells are replaced by their [`staircase`] pieces.
/// Cells already homogeneous are certified without a query. Iteration stops
/// once the uncovered mass is at most `gamma`, after `round_budget` rounds,
/// or when no open cell remains. Oracle failures are counted, not raised.
pub fn distal_partition(
    phi: &FuzzyPredicate,
    mus: &[DiscreteMeasure],
    eps: f64,
    delta: f64,
    gamma: f64,
    oracle: &impl SehOracle,
) -> Result<DistalPartitionCertificate> {
    check_measures(phi, mus)?;
    check_nonnegative("eps", eps)?;
    check_unit("delta", delta, false)?;
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", format!("must be positive, got {gamma}")));
    }
    let n = phi.arity();
    let coverage = (delta / 2.0).powi(n as i32);
    let budget = round_budget(gamma, coverage);
    let full: Vec<Vec<usize>> = phi.shape().iter().map(|&k| (0..k).collect()).collect();
    let mut cells = vec![classify(phi, mus, full, eps)];
    let mut rounds: Vec<DistalRound> = Vec::new();
    let mut failures = 0usize;
    let uncovered = |cells: &[RectCell]| -> f64 {
        cells.iter().filter(|c| c.status != CellStatus::Certified).map(|c| c.mass).sum()
    };

    for round in 1..=budget {
        let before = uncovered(&cells);
        if before <= gamma {
            break;
        }
        let mut queue: Vec<usize> = (0..cells.len()).filter(|&k| cells[k].status == CellStatus::Open).collect();
        if queue.is_empty() {
            break;
        }
        queue.sort_by(|&p, &q| cells[q].mass.total_cmp(&cells[p].mass).then(p.cmp(&q)));
        let answers: Vec<Option<Vec<Vec<usize>>>> = queue
            .par_iter()
            .map(|&k| {
                let a = &cells[k].sides;
                let local: Vec<DiscreteMeasure> = mus
                    .iter()
                    .zip(a)
                    .map(|(mu, s)| localize(mu, &indicator(mu.len(), s)))
                    .collect::<Result<_>>()
                    .ok()?;
                let proposal = oracle.find(phi, &local, eps, delta / 2.0)?;
                if proposal.len() != n {
                    return None;
                }
                let inside: Vec<Vec<usize>> = a
                    .iter()
                    .zip(proposal)
                    .map(|(ai, bi)| ai.iter().copied().filter(|x| bi.contains(x)).collect())
                    .collect();
                SehRectangle::new(phi, &local, inside, eps, delta / 2.0).ok().map(SehRectangle::into_sides)
            })
            .collect();
        let mut splits: HashMap<usize, Vec<Vec<usize>>> = HashMap::new();
        for (&k, ans) in queue.iter().zip(answers) {
            match ans {
                Some(b) => {
                    splits.insert(k, b);
                }
                None => {
                    failures += 1;
                    log::warn!("round {round}: no rectangle for cell of mass {}", cells[k].mass);
                }
            }
        }
        let answered = splits.len();
        let mut next = Vec::with_capacity(cells.len() + answered * n);
        for (k, cell) in cells.into_iter().enumerate() {
            match splits.remove(&k) {
                Some(b) => {
                    let mut pieces = staircase(&cell.sides, &b).into_iter();
                    if let Some(first) = pieces.next() {
                        let mut certified = classify(phi, mus, first, eps);
                        certified.status = CellStatus::Certified;
                        next.push(certified);
                    }
                    next.extend(pieces.map(|p| classify(phi, mus, p, eps)));
                }
                None => next.push(cell),
            }
        }
        cells = next;
        let after = uncovered(&cells);
        rounds.push(DistalRound {
            round,
            queried: queue.len(),
            answered,
            uncovered_before: before,
            uncovered_after: after,
            covered_after: 1.0 - after,
            cells_after: cells.len(),
        });
        if answered == 0 {
            break;
        }
    }

    let non_homogeneous_mass = audit_cells(phi, mus, &cells, eps)?;
    let mut recurrence_holds = true;
    let mut covered = 1.0 - rounds.first().map_or(0.0, |r| r.uncovered_before);
    for r in &rounds {
        if r.covered_after < covered - TOL {
            recurrence_holds = false;
        }
        if r.all_answered() && r.uncovered_after > (1.0 - coverage) * r.uncovered_before + TOL {
            recurrence_holds = false;
        }
        covered = r.covered_after;
    }
    let cell_count = cells.len();
    let cell_bound_ln = budget as f64 * ((n + 1) as f64).ln();
    let mut cert = DistalPartitionCertificate {
        axes: phi.axes().to_vec(),
        eps,
        delta,
        gamma,
        coverage,
        round_budget: budget,
        round_budget_full_delta: round_budget(gamma, delta.powi(n as i32)),
        exponent: exponent(n, coverage),
        exponent_full_delta: exponent(n, delta.powi(n as i32)),
        rounds,
        cells,
        cell_count,
        cell_bound_ln,
        non_homogeneous_mass,
        oracle_failures: failures,
        recurrence_holds,
        pass: false,
    };
    cert.pass = cert.checks().iter().all(|c| c.pass);
    Ok(cert)
}

/// Exhaustive audit: every point lies in exactly one cell, recorded masses
/// and oscillations are exact, and the non-homogeneous mass is returned.
pub fn audit_cells(phi: &FuzzyPredicate, mus: &[DiscreteMeasure], cells: &[RectCell], eps: f64) -> Result<f64> {
    check_measures(phi, mus)?;
    let mut hits = vec![0u32; phi.len()];
    let mut idx = vec![0; phi.arity()];
    let mut bad = 0.0;
    for (k, c) in cells.iter().enumerate() {
        if c.sides.len() != phi.arity() {
            return Err(Error::MeasureCount { expected: phi.arity(), got: c.sides.len() });
        }
        for (s, axis) in c.sides.iter().zip(phi.axes()) {
            if let Some(&a) = s.iter().find(|&&a| a >= axis.size) {
                return Err(Error::IndexOutOfRange { axis: axis.name.clone(), index: a, size: axis.size });
            }
        }
        let shape: Vec<usize> = c.sides.iter().map(|s| s.len()).collect();
        for_each_index(&shape, |j| {
            for (i, &t) in j.iter().enumerate() {
                idx[i] = c.sides[i][t];
            }
            hits[phi.flat_index(&idx)] += 1;
        });
        let mass = product_mass(mus, &c.sides);
        let osc = spread(phi, &c.sides);
        if (mass - c.mass).abs() > TOL || (osc - c.oscillation).abs() > TOL {
            return Err(Error::Postcondition(format!("cell {k} records mass {} / oscillation {}", c.mass, c.oscillation)));
        }
        let homogeneous = osc <= eps + TOL;
        if homogeneous != c.homogeneous {
            return Err(Error::Postcondition(format!("cell {k} records the wrong homogeneity verdict")));
        }
        if c.status == CellStatus::Certified && !homogeneous {
            return Err(Error::Postcondition(format!("cell {k} is certified but has oscillation {osc}")));
        }
        if !homogeneous {
            bad += mass;
        }
    }
    if let Some(p) = hits.iter().position(|&h| h != 1) {
        return Err(Error::Postcondition(format!(
            "point {:?} lies in {} cells",
            phi.unflatten(p),
            hits[p]
        )));
    }
    Ok(bad)
}

/// Homogeneity verdict of every grid cell, row-major.
pub fn grid_homogeneity(phi: &FuzzyPredicate, grid: &GridPartition, eps: f64) -> Vec<bool> {
    grid.cells()
        .iter()
        .map(|c| {
            let sides = grid.cell_supports(c);
            sides.iter().any(|s| s.is_empty()) || spread(phi, &sides) <= eps + TOL
        })
        .collect()
}

/// A homogeneous cell on which `φ ≥ β`, with every factor mass at least `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySeh {
    pub rectangle: SehRectangle,
    pub cell: usize,
    /// `(α − β − γ − ε)/K`.
    pub bound: f64,
    pub min_value: f64,
    pub cell_count: usize,
    pub expectation: f64,
}

/// Picks, among the partition's cells, a homogeneous one with `φ ≥ beta`
/// everywhere and factor masses at least `(alpha − beta − γ − ε)/K`, where
/// `γ` and `ε` are the partition's and `K` its cell count. Of the qualifying
/// cells the one of largest product mass (lowest index on ties) is returned.
pub fn density_seh(
    phi: &FuzzyPredicate,
    partition: &DistalPartitionCertificate,
    omega: &[DiscreteMeasure],
    alpha: f64,
    beta: f64,
) -> Result<DensitySeh> {
    check_measures(phi, omega)?;
    if partition.axes != phi.axes() {
        return Err(Error::param("partition", "partition axes differ from the predicate's"));
    }
    let (eps, gamma) = (partition.eps, partition.gamma);
    if !(alpha > beta + gamma + eps) {
        return Err(Error::param("alpha", format!("need alpha > beta + gamma + eps = {}", beta + gamma + eps)));
    }
    let e = expectation(phi, omega)?;
    if e < alpha - TOL {
        return Err(Error::param("alpha", format!("E[φ] = {e} is below alpha = {alpha}")));
    }
    let k = partition.cells.len();
    let bound = (alpha - beta - gamma - eps) / k as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for (idx, c) in partition.cells.iter().enumerate() {
        let (lo, hi) = value_range(phi, &c.sides);
        if hi - lo > eps + TOL || lo < beta - TOL {
            continue;
        }
        let masses: Vec<f64> = omega.iter().zip(&c.sides).map(|(m, s)| m.mass(s)).collect();
        if masses.iter().any(|&m| m < bound - TOL) {
            continue;
        }
        let total: f64 = masses.iter().product();
        if best.is_none_or(|(bm, _, _)| total > bm) {
            best = Some((total, idx, lo));
        }
    }
    let (_, cell, min_value) = best.ok_or_else(|| {
        Error::NoQualifyingCell(format!("no homogeneous cell with φ ≥ {beta} and factor masses ≥ {bound} among {k}"))
    })?;
    let rectangle = SehRectangle::new(phi, omega, partition.cells[cell].sides.clone(), eps, bound)?;
    Ok(DensitySeh { rectangle, cell, bound, min_value, cell_count: k, expectation: e })
}

/// `(1/s) ∸ |r − j/s|`.
pub fn bucket_function(s: usize, j: usize, r: f64) -> f64 {
    let s = s as f64;
    (1.0 / s - (r - j as f64 / s).abs()).max(0.0)
}

/// `|Σ_{j=0}^{s} bucket_function(s, j, r) − 1/s|`.
pub fn bucket_identity_error(s: usize, r: f64) -> f64 {
    let sum: f64 = (0..=s).map(|j| bucket_function(s, j, r)).sum();
    (sum - 1.0 / s as f64).abs()
}

/// A procedure returning a rectangle on which a predicate is positive,
/// given that its expectation is at least `alpha`.
pub trait DensityOracle: Sync {
    fn extract(&self, phi: &FuzzyPredicate, mus: &[DiscreteMeasure], alpha: f64) -> Result<SehRectangle>;
}

impl<F> DensityOracle for F
where
    F: Fn(&FuzzyPredicate, &[DiscreteMeasure], f64) -> Result<SehRectangle> + Sync,
{
    fn extract(&self, phi: &FuzzyPredicate, mus: &[DiscreteMeasure], alpha: f64) -> Result<SehRectangle> {
        self(phi, mus, alpha)
    }
}

/// [`distal_partition`] with the brute-force oracle followed by [`density_seh`].
///
/// Runs at `β = ε = γ = α/4` and `δ = 2/m` with `m` the largest support
/// size, so the heaviest atom of any cell is always a valid answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PartitionDensityOracle {
    pub oracle: BruteForceOracle,
}

impl DensityOracle for PartitionDensityOracle {
    fn extract(&self, phi: &FuzzyPredicate, mus: &[DiscreteMeasure], alpha: f64) -> Result<SehRectangle> {
        let quarter = alpha / 4.0;
        let widest = mus.iter().map(|m| m.support().len()).max().unwrap_or(1).max(1);
        let delta = (2.0 / widest as f64).min(1.0);
        let cert = distal_partition(phi, mus, quarter, delta, quarter, &self.oracle)?;
        if !cert.pass {
            return Err(Error::OracleFailure(format!(
                "partition left non-homogeneous mass {} with {} failed queries",
                cert.non_homogeneous_mass, cert.oracle_failures
            )));
        }
        Ok(density_seh(phi, &cert, mus, alpha, quarter)?.rectangle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedSeh {
    /// A rectangle for `φ` itself at oscillation `2/s`.
    pub rectangle: SehRectangle,
    pub bucket: usize,
    pub bucket_expectation: f64,
    /// `1/(s(s+1))`.
    pub threshold: f64,
    pub identity_error: f64,
}

/// Reduces homogeneity to positivity: the bucket `φⱼ = (1/s) ∸ |φ − j/s|` of
/// largest expectation has `E[φⱼ] ≥ 1/(s(s+1))`, and any rectangle where
/// `φⱼ > 0` has `φ` within `1/s` of `j/s`.
pub fn bucketed_seh(
    phi: &FuzzyPredicate,
    mus: &[DiscreteMeasure],
    s: usize,
    oracle: &impl DensityOracle,
) -> Result<BucketedSeh> {
    check_measures(phi, mus)?;
    if s == 0 {
        return Err(Error::param("s", "must be at least 1"));
    }
    let identity_error = phi.values().iter().map(|&r| bucket_identity_error(s, r)).fold(0.0, f64::max);
    if identity_error > BUCKET_IDENTITY_TOL {
        return Err(Error::Postcondition(format!("bucket identity off by {identity_error}")));
    }
    let threshold = 1.0 / (s * (s + 1)) as f64;
    let mut best = (0, f64::NEG_INFINITY, None);
    for j in 0..=s {
        let phi_j = phi.map(|r| bucket_function(s, j, r));
        let e = expectation(&phi_j, mus)?;
        if e > best.1 {
            best = (j, e, Some(phi_j));
        }
    }
    let (bucket, bucket_expectation, phi_j) = (best.0, best.1, best.2.expect("s + 1 >= 2 buckets"));
    if bucket_expectation < threshold - TOL {
        return Err(Error::Postcondition(format!("largest bucket expectation {bucket_expectation} is below {threshold}")));
    }
    let found = oracle.extract(&phi_j, mus, threshold)?;
    let (lo, _) = value_range(&phi_j, found.sides());
    if !(lo > 0.0) {
        return Err(Error::OracleFailure(format!("bucket {bucket} vanishes on the returned rectangle")));
    }
    let rectangle = SehRectangle::new(phi, mus, found.sides().to_vec(), 2.0 / s as f64, found.delta())?;
    Ok(BucketedSeh { rectangle, bucket, bucket_expectation, threshold, identity_error })
}

/// A family `ψ(·; d)`, `d ∈ D`, over the rows of a binary predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutting {
    pub weight: f64,
    /// `psi[d][x]`.
    pub psi: Vec<Vec<f64>>,
    /// Row `a_d` with `θ(a_d; d) = 0`; empty for hand-built families.
    pub centers: Vec<usize>,
    /// The columns `B` the parameters are built from.
    pub net: Vec<usize>,
    /// `ν{b : osc(φ(·;b), supp ψ(·;d)) > ε}` per `d`, filled by [`cutting_build`].
    pub bad_mass: Vec<f64>,
}

impl Cutting {
    pub fn from_family(psi: Vec<Vec<f64>>, weight: f64) -> Result<Self> {
        let width = psi.first().map(|p| p.len()).ok_or_else(|| Error::param("psi", "family is empty"))?;
        for (d, p) in psi.iter().enumerate() {
            if p.len() != width {
                return Err(Error::ShapeMismatch { expected: width, got: p.len() });
            }
            if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::param("psi", format!("piece {d} takes value {v} outside [0,1]")));
            }
        }
        Ok(Cutting { weight, psi, centers: Vec::new(), net: Vec::new(), bad_mass: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn support(&self, d: usize) -> Vec<usize> {
        (0..self.psi[d].len()).filter(|&x| self.psi[d][x] > 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuttingAudit {
    pub bad_mass: Vec<f64>,
    pub bad_columns: Vec<Vec<usize>>,
    pub min_weight: f64,
    pub min_weight_at: usize,
}

fn audit_cutting(cutting: &Cutting, phi: &FuzzyPredicate, nu: &DiscreteMeasure, eps: f64) -> Result<CuttingAudit> {
    phi.require_binary()?;
    if cutting.is_empty() {
        return Err(Error::param("cutting", "family is empty"));
    }
    if nu.len() != phi.cols() {
        return Err(Error::AxisMismatch {
            axis: phi.axis(1).name.clone(),
            reason: format!("axis has {} elements but the measure has {} atoms", phi.cols(), nu.len()),
        });
    }
    if let Some(p) = cutting.psi.iter().find(|p| p.len() != phi.rows()) {
        return Err(Error::ShapeMismatch { expected: phi.rows(), got: p.len() });
    }
    let mut bad_mass = Vec::with_capacity(cutting.len());
    let mut bad_columns = Vec::with_capacity(cutting.len());
    for d in 0..cutting.len() {
        let supp = cutting.support(d);
        let cols: Vec<usize> = (0..phi.cols())
            .filter(|&b| {
                let (lo, hi) = supp.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(phi.at(x, b)), hi.max(phi.at(x, b)))
                });
                hi - lo > eps + TOL
            })
            .collect();
        bad_mass.push(nu.mass(&cols));
        bad_columns.push(cols);
    }
    let (min_weight_at, min_weight) = (0..phi.rows())
        .map(|x| (x, cutting.psi.iter().map(|p| p[x]).sum::<f64>()))
        .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    Ok(CuttingAudit { bad_mass, bad_columns, min_weight, min_weight_at })
}

/// Exhaustive check of both cutting conditions: `inf_x Σ_d ψ(x;d) ≥ weight`
/// and every bad mass at most `delta`.
pub fn cutting_verify(
    cutting: &Cutting,
    phi: &FuzzyPredicate,
    nu: &DiscreteMeasure,
    eps: f64,
    delta: f64,
) -> Result<Certificate> {
    let audit = audit_cutting(cutting, phi, nu, eps)?;
    let worst = audit.bad_mass.iter().copied().fold(0.0, f64::max);
    let mut cert = Certificate::new("cutting-verify");
    cert.param("eps", eps).param("delta", delta).param("weight", cutting.weight).param("size", cutting.len());
    cert.check(Check::at_least("weight", "inf_x Σ_d ψ(x;d) ≥ γ", audit.min_weight, cutting.weight));
    cert.check(Check::at_most("bad mass", "ν{b : osc(φ(·;b), supp ψ(·;d)) > ε} ≤ δ", worst, delta));
    if !cutting.bad_mass.is_empty() {
        let same = cutting.bad_mass.len() == audit.bad_mass.len()
            && cutting.bad_mass.iter().zip(&audit.bad_mass).all(|(a, b)| (a - b).abs() <= TOL);
        cert.check(Check::holds("recorded bad masses", "recorded per-d masses match the audit", same));
    }
    let mut order: Vec<usize> = (0..audit.bad_mass.len()).collect();
    order.sort_by(|&p, &q| audit.bad_mass[q].total_cmp(&audit.bad_mass[p]).then(p.cmp(&q)));
    let offenders: Vec<_> = order
        .iter()
        .take(3)
        .filter(|&&d| audit.bad_mass[d] > 0.0)
        .map(|&d| json!({ "d": d, "bad_mass": audit.bad_mass[d], "columns": audit.bad_columns[d] }))
        .collect();
    cert.set_payload(&json!({
        "bad_mass": audit.bad_mass,
        "min_weight": audit.min_weight,
        "min_weight_at": audit.min_weight_at,
        "worst_offenders": offenders,
    }))?;
    cert.seal();
    Ok(cert)
}

/// Rows grouped by their exact values on `net`; returns the first row of
/// each group and `θ[d][x] = max_{b∈net} |φ(x;b) − φ(a_d;b)|`.
fn pattern_classes(phi: &FuzzyPredicate, net: &[usize]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut centers = Vec::new();
    for x in 0..phi.rows() {
        let key: Vec<u64> = net.iter().map(|&b| phi.at(x, b).to_bits()).collect();
        seen.entry(key).or_insert_with(|| {
            centers.push(x);
            centers.len() - 1
        });
    }
    let theta = centers.iter().map(|&a| (0..phi.rows()).map(|x| row_distance(phi, x, a, net)).collect()).collect();
    (centers, theta)
}

/// `χ[b][d] = sup_x(φ(x;b) − θ(x;d)) ∸ inf_x(φ(x;b) + θ(x;d))`.
fn chi_matrix(phi: &FuzzyPredicate, theta: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..phi.cols())
        .map(|b| {
            theta
                .iter()
                .map(|t| {
                    let sup = (0..phi.rows()).map(|x| phi.at(x, b) - t[x]).fold(f64::NEG_INFINITY, f64::max);
                    let inf = (0..phi.rows()).map(|x| phi.at(x, b) + t[x]).fold(f64::INFINITY, f64::min);
                    (sup - inf).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect()
}

/// `δ⁻¹ ln δ⁻¹`, the size scale a cutting is compared against.
pub fn cutting_size_reference(delta: f64) -> f64 {
    (1.0 / delta) * (1.0 / delta).ln()
}

/// Builds an `(eps, delta)`-cutting of weight `eps/4` for the rows of `phi`.
///
/// Parameters are the distinct row patterns on a column set `B`, each with a
/// representative row `a_d`; `θ(x;d)` is the sup-distance to `a_d` on `B`,
/// which vanishes at `a_d` and bounds `|φ(x;b) − φ(a_d;b)|` for `b ∈ B`.
/// `B` grows by greedy nets (thresholds `0 < ε/2` in the net search, see
/// [`eps_net_search`]) for the system `χ(·;d)` until no `d` has
/// `ν{χ(·;d) ≥ ε/2} ≥ δ`. Then `ψ(x;d) = (ε/4) ∸ θ(x;d)`.
pub fn cutting_build(phi: &FuzzyPredicate, nu: &DiscreteMeasure, eps: f64, delta: f64, seed: u64) -> Result<Cutting> {
    phi.require_binary()?;
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    if !(delta > 0.0) {
        return Err(Error::param("delta", format!("must be positive, got {delta}")));
    }
    if nu.len() != phi.cols() {
        return Err(Error::AxisMismatch {
            axis: phi.axis(1).name.clone(),
            reason: format!("axis has {} elements but the measure has {} atoms", phi.cols(), nu.len()),
        });
    }
    let threshold = (eps / 2.0).min(1.0);
    let mut net: Vec<usize> = Vec::new();
    let (centers, theta) = loop {
        let (centers, theta) = pattern_classes(phi, &net);
        let chi = FuzzyPredicate::from_rows("b", "d", &chi_matrix(phi, &theta))?;
        let found = eps_net_search(&chi, nu, delta, TOL, threshold, NetStrategy::Greedy, seed)?;
        if found.heavy_columns.is_empty() {
            break (centers, theta);
        }
        let before = net.len();
        net.extend(found.elements);
        net.sort_unstable();
        net.dedup();
        if net.len() == before {
            return Err(Error::Postcondition("net search added no new column".into()));
        }
        log::debug!("cutting net grew to {} columns ({} heavy parameters)", net.len(), found.heavy_columns.len());
    };
    let weight = eps / 4.0;
    let psi = theta.iter().map(|t| t.iter().map(|&v| (weight - v).max(0.0)).collect()).collect();
    let mut cutting = Cutting { weight, psi, centers, net, bad_mass: Vec::new() };
    cutting.bad_mass = audit_cutting(&cutting, phi, nu, eps)?.bad_mass;
    let cert = cutting_verify(&cutting, phi, nu, eps, delta)?;
    if !cert.pass {
        return Err(Error::Postcondition(format!("cutting fails verification:\n{}", cert.summary())));
    }
    Ok(cutting)
}

/// A union of cells whose relative mass is within `eps` of the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteCut {
    pub chosen: Vec<usize>,
    pub subset: Vec<usize>,
    /// `μ(subset)/μ(A)`.
    pub mass: f64,
    pub target: f64,
    pub error: f64,
}

/// Greedy minimal union of `cells` with `μ(∪)/μ(A) ≥ r`.
///
/// Cells are added largest first (lowest index on ties) until the target is
/// reached, then dropped in reverse order whenever the rest still reaches it.
/// The result is minimal, so it overshoots `r` by less than one cell.
///
/// ```
/// use fuzzreg::distal::finite_cut;
/// use fuzzreg::DiscreteMeasure;
///
/// let mu = DiscreteMeasure::uniform("x", 10);
/// let a: Vec<usize> = (0..10).collect();
/// let cells: Vec<Vec<usize>> = (0..10).map(|i| vec![i]).collect();
/// let cut = finite_cut(&a, &mu, &cells, 0.1, 0.34).unwrap();
/// assert_eq!(cut.chosen, vec![0, 1, 2, 3]);
/// assert!(cut.error <= 0.1);
/// ```
pub fn finite_cut(set: &[usize], mu: &DiscreteMeasure, cells: &[Vec<usize>], eps: f64, r: f64) -> Result<FiniteCut> {
    check_unit("r", r, true)?;
    let size = mu.len();
    let mut in_set = vec![false; size];
    for &a in set {
        if a >= size {
            return Err(Error::IndexOutOfRange { axis: mu.axis().to_string(), index: a, size });
        }
        in_set[a] = true;
    }
    let total: f64 = (0..size).filter(|&a| in_set[a]).map(|a| mu.weight(a)).sum();
    if !(total > SUPPORT_EPS) {
        return Err(Error::DegenerateLocalization { mass: total });
    }
    let mut covered = vec![false; size];
    let mut masses = Vec::with_capacity(cells.len());
    for (k, c) in cells.iter().enumerate() {
        if let Some(&a) = c.iter().find(|&&a| a >= size || !in_set[a]) {
            return Err(Error::param("cells", format!("cell {k} contains {a}, which is outside A")));
        }
        c.iter().for_each(|&a| covered[a] = true);
        let mut members = c.clone();
        members.sort_unstable();
        members.dedup();
        let m = mu.mass(&members) / total;
        if m > eps + TOL {
            return Err(Error::param("cells", format!("cell {k} has relative mass {m} above eps = {eps}")));
        }
        masses.push(m);
    }
    if let Some(a) = (0..size).find(|&a| in_set[a] && !covered[a]) {
        return Err(Error::UncoveredElement { element: a });
    }
    let union_mass = |chosen: &[usize]| -> f64 {
        let mut hit = vec![false; size];
        for &k in chosen {
            cells[k].iter().for_each(|&a| hit[a] = true);
        }
        (0..size).filter(|&a| hit[a]).map(|a| mu.weight(a)).sum::<f64>() / total
    };
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&p, &q| masses[q].total_cmp(&masses[p]).then(p.cmp(&q)));
    let mut chosen: Vec<usize> = Vec::new();
    let mut mass = 0.0;
    for &k in &order {
        if mass >= r - TOL {
            break;
        }
        chosen.push(k);
        mass = union_mass(&chosen);
    }
    for pos in (0..chosen.len()).rev() {
        let mut trial = chosen.clone();
        trial.remove(pos);
        let m = union_mass(&trial);
        if m >= r - TOL {
            chosen = trial;
            mass = m;
        }
    }
    let error = (mass - r).abs();
    if error > eps + TOL {
        return Err(Error::Postcondition(format!("cut mass {mass} misses target {r} by more than {eps}")));
    }
    chosen.sort_unstable();
    let mut subset: Vec<usize> = chosen.iter().flat_map(|&k| cells[k].iter().copied()).collect();
    subset.sort_unstable();
    subset.dedup();
    Ok(FiniteCut { chosen, subset, mass, target: r, error })
}

/// Refined grid whose per-axis piece masses differ pairwise by at most `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equipartition {
    pub grid: GridPartition,
    pub gamma: f64,
    /// `parents[i][k]`: original piece of axis `i` containing refined piece `k`.
    pub parents: Vec<Vec<usize>>,
    pub piece_masses: Vec<Vec<f64>>,
    pub max_gap: Vec<f64>,
    /// Row-major over `grid.cells()`.
    pub cell_masses: Vec<f64>,
    pub unchanged: bool,
}

impl Equipartition {
    /// Original cell containing a refined cell.
    pub fn parent_cell(&self, cell: &[usize]) -> Vec<usize> {
        cell.iter().zip(&self.parents).map(|(&k, p)| p[k]).collect()
    }
}

fn gap(masses: &[f64]) -> f64 {
    let hi = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = masses.iter().copied().fold(f64::INFINITY, f64::min);
    if masses.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Splits `set` into `q` parts of mass close to `μ(set)/q` by cumulative
/// singleton cuts; zero-weight leftovers join the last part.
fn split_piece(set: &[usize], mu: &DiscreteMeasure, q: usize) -> Result<Vec<Vec<usize>>> {
    if q <= 1 {
        return Ok(vec![set.to_vec()]);
    }
    let m = mu.mass(set);
    let mut remaining = set.to_vec();
    let mut parts: Vec<Vec<usize>> = Vec::with_capacity(q);
    let mut cum = 0.0;
    for k in 1..q {
        let rest = mu.mass(&remaining);
        if rest <= SUPPORT_EPS {
            break;
        }
        let r = ((k as f64 * m / q as f64 - cum) / rest).clamp(0.0, 1.0);
        let cells: Vec<Vec<usize>> = remaining.iter().map(|&a| vec![a]).collect();
        let heaviest = remaining.iter().map(|&a| mu.weight(a)).fold(0.0, f64::max) / rest;
        let cut = finite_cut(&remaining, mu, &cells, heaviest, r)?;
        if cut.subset.is_empty() {
            continue;
        }
        cum += mu.mass(&cut.subset);
        remaining.retain(|a| cut.subset.binary_search(a).is_err());
        parts.push(cut.subset);
    }
    if !remaining.is_empty() {
        match parts.last_mut() {
            Some(last) if mu.mass(&remaining) <= SUPPORT_EPS => {
                last.extend(remaining);
                last.sort_unstable();
            }
            _ => parts.push(remaining),
        }
    }
    Ok(parts)
}

fn refine_axis(sets: &[Vec<usize>], mu: &DiscreteMeasure, gamma: f64) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    let masses: Vec<f64> = sets.iter().map(|s| mu.mass(s)).collect();
    let atoms: Vec<usize> = sets.iter().map(|s| s.iter().filter(|&&a| mu.weight(a) > SUPPORT_EPS).count()).collect();
    let mut candidates: Vec<f64> = masses
        .iter()
        .zip(&atoms)
        .filter(|(m, _)| **m > SUPPORT_EPS)
        .flat_map(|(&m, &k)| (1..=k).map(move |q| m / q as f64))
        .collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    for level in candidates {
        let mut parts = Vec::new();
        let mut parents = Vec::new();
        for (j, s) in sets.iter().enumerate() {
            let q = if masses[j] <= SUPPORT_EPS {
                1
            } else {
                ((masses[j] / level + 1e-9).floor() as usize).clamp(1, atoms[j].max(1))
            };
            for p in split_piece(s, mu, q)? {
                parts.push(p);
                parents.push(j);
            }
        }
        let pm: Vec<f64> = parts.iter().map(|p| mu.mass(p)).collect();
        if gap(&pm) <= gamma + TOL {
            return Ok((parts, parents));
        }
    }
    let mut parts = Vec::new();
    let mut parents = Vec::new();
    for (j, s) in sets.iter().enumerate() {
        for p in split_piece(s, mu, atoms[j].max(1))? {
            parts.push(p);
            parents.push(j);
        }
    }
    Ok((parts, parents))
}

/// Refines each axis of a constructible grid so that its piece masses lie
/// within `gamma` of each other. Every refined piece lies inside one
/// original piece, so every refined cell inherits its parent's verdict.
///
/// Pieces are cut with [`finite_cut`] over singleton cells; trial levels
/// `L = μ(P)/q` are tried from coarse to fine and the first within `gamma`
/// is kept. Atoms heavier than `gamma/2` are rejected.
pub fn equipartition_refine(partition: &GridPartition, mus: &[DiscreteMeasure], gamma: f64) -> Result<Equipartition> {
    if partition.mode() != Mode::Constructible {
        return Err(Error::param("partition", "equipartitions refine constructible partitions only"));
    }
    if mus.len() != partition.arity() {
        return Err(Error::MeasureCount { expected: partition.arity(), got: mus.len() });
    }
    for (f, mu) in partition.factors().iter().zip(mus) {
        if f.size() != mu.len() {
            return Err(Error::AxisMismatch {
                axis: f.axis().to_string(),
                reason: format!("partition covers {} elements but the measure has {} atoms", f.size(), mu.len()),
            });
        }
    }
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", format!("must be positive, got {gamma}")));
    }
    let mut factors = Vec::with_capacity(partition.arity());
    let mut parents = Vec::with_capacity(partition.arity());
    let mut unchanged = true;
    for (f, mu) in partition.factors().iter().zip(mus) {
        let sets = f.sets();
        let masses: Vec<f64> = sets.iter().map(|s| mu.mass(s)).collect();
        if gamma >= 1.0 || gap(&masses) <= gamma + TOL {
            factors.push(f.clone());
            parents.push((0..sets.len()).collect());
            continue;
        }
        if let Some(a) = (0..mu.len()).find(|&a| mu.weight(a) > gamma / 2.0 + TOL) {
            return Err(Error::HeavyAtom { axis: f.axis().to_string(), atom: a, mass: mu.weight(a), limit: gamma / 2.0 });
        }
        let (parts, par) = refine_axis(&sets, mu, gamma)?;
        unchanged = false;
        factors.push(PartitionOfUnity::from_sets(f.axis(), f.size(), &parts)?);
        parents.push(par);
    }
    let grid = GridPartition::new(factors)?;
    let piece_masses: Vec<Vec<f64>> =
        grid.factors().iter().zip(mus).map(|(f, mu)| (0..f.len()).map(|k| f.mass(k, mu)).collect()).collect();
    let max_gap: Vec<f64> = piece_masses.iter().map(|m| gap(m)).collect();
    if gamma < 1.0 {
        if let Some(g) = max_gap.iter().find(|&&g| g > gamma + TOL) {
            return Err(Error::Postcondition(format!("refined pieces differ by {g} > {gamma}")));
        }
    }
    let cell_masses = grid.cells().iter().map(|c| grid.cell_mass(c, mus)).collect();
    Ok(Equipartition { grid, gamma, parents, piece_masses, max_gap, cell_masses, unchanged })
}
