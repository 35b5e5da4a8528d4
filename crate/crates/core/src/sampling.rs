//! Approximations, nets, concentration checks, and step-function families.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::{covering_number, CoverMode, CoveringNumber, Direction};
use crate::error::{Error, Result};
use crate::fuzzy::{DiscreteMeasure, FuzzyPredicate};
use crate::{rng, TOL};

/// Subsets sampled by the greedy covering numbers inside the bounds below.
pub const DEFAULT_COVER_SAMPLES: usize = 128;

fn check_row_measure(phi: &FuzzyPredicate, mu: &DiscreteMeasure) -> Result<()> {
    phi.require_binary()?;
    if mu.len() != phi.rows() {
        return Err(Error::AxisMismatch {
            axis: phi.axis(0).name.clone(),
            reason: format!("axis has {} elements but the measure has {} atoms", phi.rows(), mu.len()),
        });
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    Ok(())
}

fn column_averages(phi: &FuzzyPredicate, tuple: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; phi.cols()];
    for &a in tuple {
        for (s, v) in acc.iter_mut().zip(phi.row(a)) {
            *s += v;
        }
    }
    let n = tuple.len() as f64;
    acc.iter_mut().for_each(|s| *s /= n);
    acc
}

/// `E_μ[φ(·; b)]` for every column `b`.
pub fn column_expectations(phi: &FuzzyPredicate, mu: &DiscreteMeasure) -> Vec<f64> {
    (0..phi.cols()).map(|b| (0..phi.rows()).map(|a| mu.weight(a) * phi.at(a, b)).sum()).collect()
}

/// `max_b |Av(ā; φ(·;b)) − Av(ā′; φ(·;b))|`.
pub fn f_n_statistic(phi: &FuzzyPredicate, abar: &[usize], abar2: &[usize]) -> Result<f64> {
    phi.require_binary()?;
    if abar.len() != abar2.len() || abar.is_empty() {
        return Err(Error::param("abar", format!("tuples must be nonempty and equal length, got {} and {}", abar.len(), abar2.len())));
    }
    if let Some(&a) = abar.iter().chain(abar2).find(|&&a| a >= phi.rows()) {
        return Err(Error::IndexOutOfRange { axis: phi.axis(0).name.clone(), index: a, size: phi.rows() });
    }
    Ok(f_n_unchecked(phi, abar, abar2))
}

fn f_n_unchecked(phi: &FuzzyPredicate, abar: &[usize], abar2: &[usize]) -> f64 {
    let u = column_averages(phi, abar);
    let v = column_averages(phi, abar2);
    u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Radius of the two-sided 99% Hoeffding interval for a frequency over `trials`.
pub fn confidence_slack(trials: usize) -> f64 {
    2.0 * (100f64.ln() / (2.0 * trials as f64)).sqrt()
}

/// Monte Carlo estimate of `μ^{2n}(f_n > ε)` against `4·N_{ε/4}(n)·exp(−nε²/32)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub n: usize,
    pub eps: f64,
    pub trials: usize,
    pub exceedances: usize,
    pub empirical: f64,
    pub covering: CoveringNumber,
    pub exp_term: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

pub fn hoeffding_tail_check(
    phi: &FuzzyPredicate,
    mu: &DiscreteMeasure,
    n: usize,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<TailCheck> {
    check_row_measure(phi, mu)?;
    check_eps(eps)?;
    if n == 0 || trials == 0 {
        return Err(Error::param("n", "n and trials must be at least 1"));
    }
    let sampler = mu.sampler();
    let exceedances = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut r = rng::stream(seed, t as u64);
            let a = sampler.draw_n(&mut r, n);
            let b = sampler.draw_n(&mut r, n);
            f_n_unchecked(phi, &a, &b) > eps
        })
        .count();
    let covering = covering_number(
        phi,
        eps / 4.0,
        n,
        Direction::ColumnsOverRows,
        CoverMode::Greedy { samples: DEFAULT_COVER_SAMPLES, seed },
    )?;
    let exp_term = (-(n as f64) * eps * eps / 32.0).exp();
    let bound = 4.0 * covering.value as f64 * exp_term;
    let empirical = exceedances as f64 / trials as f64;
    let slack = confidence_slack(trials);
    Ok(TailCheck {
        n,
        eps,
        trials,
        exceedances,
        empirical,
        covering,
        exp_term,
        bound,
        slack,
        pass: empirical <= bound + slack,
    })
}

/// `max_b |Av(ā; φ(·;b)) − E_μ φ(·;b)|` and the column attaining it.
pub fn worst_column_error(phi: &FuzzyPredicate, expected: &[f64], tuple: &[usize]) -> (f64, usize) {
    column_averages(phi, tuple)
        .iter()
        .zip(expected)
        .map(|(a, e)| (a - e).abs())
        .enumerate()
        .fold((0.0, 0), |best, (b, d)| if d > best.0 { (d, b) } else { best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationWitness {
    /// Rows, repetition allowed.
    pub tuple: Vec<usize>,
    pub eps: f64,
    pub error: f64,
    pub worst_column: usize,
    pub attempts: usize,
}

impl ApproximationWitness {
    pub fn is_valid(&self) -> bool {
        self.error <= self.eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum ApproximationSearch {
    Found {
        witness: ApproximationWitness,
        /// `n < ⌈9/(2ε²)⌉`: below the size that guarantees existence.
        undersized: bool,
    },
    NotFound {
        attempts: usize,
        best: ApproximationWitness,
        undersized: bool,
    },
}

impl ApproximationSearch {
    pub fn witness(&self) -> Option<&ApproximationWitness> {
        match self {
            ApproximationSearch::Found { witness, .. } => Some(witness),
            ApproximationSearch::NotFound { .. } => None,
        }
    }
}

/// `⌈9/(2ε²)⌉`.
pub fn sufficient_sample_size(eps: f64) -> usize {
    (9.0 / (2.0 * eps * eps)).ceil() as usize
}

/// Samples `ā ~ μⁿ` until one is an `eps`-approximation for every column.
///
/// ```
/// use fuzzreg::{generators, DiscreteMeasure};
/// use fuzzreg::sampling::eps_approximation_search;
///
/// let phi = generators::half_graph(8);
/// let mu = DiscreteMeasure::uniform("x", 8);
/// let found = eps_approximation_search(&phi, &mu, 0.25, 72, 100, 1).unwrap();
/// assert!(found.witness().unwrap().error <= 0.25);
/// ```
pub fn eps_approximation_search(
    phi: &FuzzyPredicate,
    mu: &DiscreteMeasure,
    eps: f64,
    n: usize,
    max_attempts: usize,
    seed: u64,
) -> Result<ApproximationSearch> {
    check_row_measure(phi, mu)?;
    check_eps(eps)?;
    if n == 0 || max_attempts == 0 {
        return Err(Error::param("n", "n and max_attempts must be at least 1"));
    }
    let undersized = n < sufficient_sample_size(eps);
    if undersized {
        log::warn!("n = {n} is below {} for eps = {eps}; a witness is not guaranteed", sufficient_sample_size(eps));
    }
    let expected = column_expectations(phi, mu);
    let sampler = mu.sampler();
    let mut best: Option<ApproximationWitness> = None;
    for t in 0..max_attempts {
        let tuple = sampler.draw_n(&mut rng::stream(seed, t as u64), n);
        let (error, worst_column) = worst_column_error(phi, &expected, &tuple);
        let w = ApproximationWitness { tuple, eps, error, worst_column, attempts: t + 1 };
        if w.is_valid() {
            return Ok(ApproximationSearch::Found { witness: w, undersized });
        }
        if best.as_ref().is_none_or(|b| w.error < b.error) {
            best = Some(w);
        }
    }
    Ok(ApproximationSearch::NotFound { attempts: max_attempts, best: best.expect("at least one attempt"), undersized })
}

/// Monte Carlo estimate of `μⁿ(ā is an ε-approximation)` against
/// `1 − 8·N_{ε/12}(n)·exp(−nε²/96)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessProbability {
    pub n: usize,
    pub eps: f64,
    pub samples: usize,
    pub successes: usize,
    pub estimate: f64,
    pub covering: CoveringNumber,
    pub exp_term: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

pub fn theta_witness_set(
    phi: &FuzzyPredicate,
    mu: &DiscreteMeasure,
    n: usize,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<WitnessProbability> {
    check_row_measure(phi, mu)?;
    check_eps(eps)?;
    if n == 0 || samples == 0 {
        return Err(Error::param("n", "n and samples must be at least 1"));
    }
    let expected = column_expectations(phi, mu);
    let sampler = mu.sampler();
    let successes = (0..samples)
        .into_par_iter()
        .filter(|&t| {
            let tuple = sampler.draw_n(&mut rng::stream(seed, t as u64), n);
            worst_column_error(phi, &expected, &tuple).0 <= eps
        })
        .count();
    let covering = covering_number(
        phi,
        eps / 12.0,
        n,
        Direction::ColumnsOverRows,
        CoverMode::Greedy { samples: DEFAULT_COVER_SAMPLES, seed },
    )?;
    let exp_term = (-(n as f64) * eps * eps / 96.0).exp();
    let bound = 1.0 - 8.0 * covering.value as f64 * exp_term;
    let estimate = successes as f64 / samples as f64;
    let slack = confidence_slack(samples);
    Ok(WitnessProbability {
        n,
        eps,
        samples,
        successes,
        estimate,
        covering,
        exp_term,
        bound,
        slack,
        pass: estimate >= bound - slack,
    })
}

/// How [`eps_net_search`] picks elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NetStrategy {
    /// `size` i.i.d. draws from μ, redrawn up to `attempts` times.
    Random { size: usize, attempts: usize },
    /// Greedy hitting set over the heavy columns.
    Greedy,
}

/// A set `A` such that every column with `μ{φ(·;b) ≥ s} ≥ ε` has some
/// `a ∈ A` with `φ(a;b) > r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyNet {
    pub elements: Vec<usize>,
    pub r: f64,
    pub s: f64,
    pub eps: f64,
    pub heavy_columns: Vec<usize>,
    pub violations: Vec<usize>,
}

impl FuzzyNet {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Columns `b` with `μ{a : φ(a;b) ≥ s} ≥ eps` (up to the sum tolerance).
pub fn heavy_columns(phi: &FuzzyPredicate, mu: &DiscreteMeasure, eps: f64, s: f64) -> Vec<usize> {
    (0..phi.cols())
        .filter(|&b| {
            let m: f64 = (0..phi.rows()).filter(|&a| phi.at(a, b) >= s).map(|a| mu.weight(a)).sum();
            m >= eps - TOL
        })
        .collect()
}

/// Heavy columns not hit above `r` by `elements`.
pub fn net_violations(phi: &FuzzyPredicate, heavy: &[usize], elements: &[usize], r: f64) -> Vec<usize> {
    heavy.iter().copied().filter(|&b| !elements.iter().any(|&a| phi.at(a, b) > r)).collect()
}

pub fn eps_net_search(
    phi: &FuzzyPredicate,
    mu: &DiscreteMeasure,
    eps: f64,
    r: f64,
    s: f64,
    strategy: NetStrategy,
    seed: u64,
) -> Result<FuzzyNet> {
    check_row_measure(phi, mu)?;
    check_eps(eps)?;
    if !(0.0 <= r && r < s && s <= 1.0) {
        return Err(Error::param("r", format!("need 0 <= r < s <= 1, got r = {r}, s = {s}")));
    }
    let heavy = heavy_columns(phi, mu, eps, s);
    let elements = match strategy {
        NetStrategy::Greedy => greedy_hitting_set(phi, &heavy, r)?,
        NetStrategy::Random { size, attempts } => {
            let sampler = mu.sampler();
            let mut found = None;
            for t in 0..attempts.max(1) {
                let mut a = sampler.draw_n(&mut rng::stream(seed, t as u64), size);
                a.sort_unstable();
                a.dedup();
                if net_violations(phi, &heavy, &a, r).is_empty() {
                    found = Some(a);
                    break;
                }
            }
            found.ok_or(Error::NetNotFound { attempts: attempts.max(1) })?
        }
    };
    let violations = net_violations(phi, &heavy, &elements, r);
    if !violations.is_empty() {
        return Err(Error::Postcondition(format!("net misses heavy columns {violations:?}")));
    }
    Ok(FuzzyNet { elements, r, s, eps, heavy_columns: heavy, violations })
}

fn greedy_hitting_set(phi: &FuzzyPredicate, heavy: &[usize], r: f64) -> Result<Vec<usize>> {
    if let Some(&b) = heavy.iter().find(|&&b| (0..phi.rows()).all(|a| phi.at(a, b) <= r)) {
        return Err(Error::NetInfeasible { column: b });
    }
    let mut uncovered: Vec<usize> = heavy.to_vec();
    let mut chosen = Vec::new();
    while !uncovered.is_empty() {
        let (best, hits) = (0..phi.rows())
            .map(|a| (a, uncovered.iter().filter(|&&b| phi.at(a, b) > r).count()))
            .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        debug_assert!(hits > 0);
        chosen.push(best);
        uncovered.retain(|&b| phi.at(best, b) <= r);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Step functions on `[0,1]` sharing one set of breakpoints.
///
/// Member `m` takes `values[m][k]` on `[t_k, t_{k+1})`, and the last piece
/// includes `1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFamily", into = "RawFamily")]
pub struct StepFunctionFamily {
    breakpoints: Vec<f64>,
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawFamily {
    breakpoints: Vec<f64>,
    #[serde(default)]
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<RawFamily> for StepFunctionFamily {
    type Error = Error;
    fn try_from(raw: RawFamily) -> Result<Self> {
        StepFunctionFamily::new(raw.breakpoints, raw.labels, raw.values)
    }
}

impl From<StepFunctionFamily> for RawFamily {
    fn from(f: StepFunctionFamily) -> Self {
        RawFamily { breakpoints: f.breakpoints, labels: f.labels, values: f.values }
    }
}

impl StepFunctionFamily {
    /// Empty `labels` are replaced by `b0, b1, …`.
    pub fn new(breakpoints: Vec<f64>, labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let bad = |reason: String| Error::param("breakpoints", reason);
        if breakpoints.len() < 2 || breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(bad("breakpoints must start at 0 and end at 1".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(bad("breakpoints must be strictly increasing".into()));
        }
        let pieces = breakpoints.len() - 1;
        for (m, v) in values.iter().enumerate() {
            if v.len() != pieces {
                return Err(Error::param("values", format!("member {m} has {} values for {pieces} pieces", v.len())));
            }
            if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::param("values", format!("member {m} takes value {x} outside [0,1]")));
            }
        }
        let labels = if labels.is_empty() {
            (0..values.len()).map(|m| format!("b{m}")).collect()
        } else if labels.len() == values.len() {
            labels
        } else {
            return Err(Error::param("labels", format!("{} labels for {} members", labels.len(), values.len())));
        };
        Ok(StepFunctionFamily { breakpoints, labels, values })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pieces(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Index of the piece containing `k/m`.
    pub fn piece_at_grid(&self, k: usize, m: usize) -> usize {
        let (kf, mf) = (k as f64, m as f64);
        self.breakpoints[1..self.pieces()].iter().take_while(|&&t| kf >= t * mf).count()
    }

    pub fn eval(&self, member: usize, t: f64) -> f64 {
        let p = self.breakpoints[1..self.pieces()].iter().take_while(|&&b| t >= b).count();
        self.values[member][p]
    }

    /// `∫₀¹ f`.
    pub fn integral(&self, member: usize) -> f64 {
        self.breakpoints.windows(2).zip(&self.values[member]).map(|(w, v)| (w[1] - w[0]) * v).sum()
    }

    /// A single member of this family.
    pub fn member(&self, member: usize) -> StepFunctionFamily {
        StepFunctionFamily {
            breakpoints: self.breakpoints.clone(),
            labels: vec![self.labels[member].clone()],
            values: vec![self.values[member].clone()],
        }
    }

    /// `alternations` jumps at `k/(alternations+1)`, starting at 0.
    pub fn square_wave(alternations: usize) -> StepFunctionFamily {
        let pieces = alternations + 1;
        let breakpoints = (0..=pieces).map(|k| k as f64 / pieces as f64).collect();
        let values = vec![(0..pieces).map(|k| (k % 2) as f64).collect()];
        StepFunctionFamily::new(breakpoints, Vec::new(), values).expect("valid square wave")
    }
}

/// Largest `N` with `t₁ < t₁′ < … < t_N < t_N′` in `[0,1]` and
/// `|f(tᵢ) − f(tᵢ′)| > eps/2` for each `i`.
///
/// Each piece has positive length, so `tᵢ′` and `t_{i+1}` may share a
/// piece. Closing each pair at the earliest possible piece is optimal.
pub fn oscillation_pair_count(values: &[f64], eps: f64) -> usize {
    let half = eps / 2.0;
    let mut count = 0;
    let mut start = 0;
    while start < values.len() {
        let (mut lo, mut hi) = (values[start], values[start]);
        let mut closed = None;
        for (b, &v) in values.iter().enumerate().skip(start + 1) {
            if (v - lo).abs() > half || (v - hi).abs() > half {
                closed = Some(b);
                break;
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        match closed {
            Some(b) => {
                count += 1;
                start = b;
            }
            None => break,
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub eps: f64,
    /// Largest pair count over members.
    pub pair_count: usize,
    /// `⌊2N/ε⌋ + 1`.
    pub grid_size: usize,
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub worst_member: usize,
    pub pass: bool,
}

/// Checks that `{k/M : k < M}` approximates every member's integral within `eps`.
pub fn grid_approximation_check(family: &StepFunctionFamily, eps: f64) -> Result<GridCheck> {
    check_eps(eps)?;
    let pair_count = family.values.iter().map(|v| oscillation_pair_count(v, eps)).max().unwrap_or(0);
    let grid_size = (2.0 * pair_count as f64 / eps).floor() as usize + 1;
    let grid = grid_average_weights(family, grid_size);
    let errors: Vec<f64> = (0..family.len())
        .map(|m| {
            let avg: f64 = grid.iter().zip(&family.values[m]).map(|(c, v)| *c as f64 * v).sum::<f64>() / grid_size as f64;
            (avg - family.integral(m)).abs()
        })
        .collect();
    let (worst_member, max_error) =
        errors.iter().copied().enumerate().fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    Ok(GridCheck { eps, pair_count, grid_size, pass: max_error <= eps, errors, max_error, worst_member })
}

/// Number of grid points `k/m` falling in each piece.
fn grid_average_weights(family: &StepFunctionFamily, m: usize) -> Vec<usize> {
    let mut counts = vec![0; family.pieces()];
    for k in 0..m {
        counts[family.piece_at_grid(k, m)] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageMeasure {
    pub per_member: Vec<f64>,
    /// `Σ wₘ ∫ fₘ` when weights are supplied.
    pub aggregate: Option<f64>,
}

/// Exact integrals `∫₀¹ fₘ(t) dt`.
pub fn average_measure_expectation(family: &StepFunctionFamily, weights: Option<&[f64]>) -> Result<AverageMeasure> {
    let per_member: Vec<f64> = (0..family.len()).map(|m| family.integral(m)).collect();
    let aggregate = match weights {
        None => None,
        Some(w) if w.len() == per_member.len() => Some(w.iter().zip(&per_member).map(|(a, b)| a * b).sum()),
        Some(w) => return Err(Error::param("weights", format!("{} weights for {} members", w.len(), per_member.len()))),
    };
    Ok(AverageMeasure { per_member, aggregate })
}
