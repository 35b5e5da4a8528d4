//! The ten acceptance criteria, each against an oracle written here.
//!
//! Runs without the libtest harness so every criterion prints exactly one
//! `[PASS]`/`[FAIL]` line; the process fails if any criterion fails or
//! exceeds its time budget.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fuzzreg::covering::{covering_number, CoverMode, Direction};
use fuzzreg::distal::{
    bucket_identity_error, cutting_build, cutting_size_reference, cutting_verify, density_seh, distal_partition,
    equipartition_refine, seh_bruteforce, BruteForceOracle, DistalPartitionCertificate, DEFAULT_SEH_BUDGET,
};
use fuzzreg::regularity::nip_regularity;
use fuzzreg::sampling::{grid_approximation_check, hoeffding_tail_check, theta_witness_set, StepFunctionFamily};
use fuzzreg::{generators, DiscreteMeasure, FuzzyPredicate, Mode, TOL};

type Outcome = Result<String, String>;

/// Id, title, time budget in seconds, check.
type Criterion = (&'static str, &'static str, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn uniform(phi: &FuzzyPredicate) -> Vec<DiscreteMeasure> {
    phi.axes().iter().map(|a| DiscreteMeasure::uniform(a.name.clone(), a.size)).collect()
}

fn sixteen() -> Vec<(String, FuzzyPredicate)> {
    let mut v = vec![("half-graph".to_string(), generators::half_graph(16))];
    v.extend((1..=3).map(|s| (format!("random#{s}"), generators::random(16, 16, s))));
    v
}

/// Exact covering number of the 16 columns restricted to all rows.
fn exact_columns_cover(phi: &FuzzyPredicate, eps: f64, n: usize) -> Result<usize, String> {
    let cn = covering_number(phi, eps, n, Direction::ColumnsOverRows, CoverMode::Exact).map_err(|e| e.to_string())?;
    ensure!(cn.all_subsets && cn.minimal_covers, "exact covering number unavailable");
    Ok(cn.value)
}

fn c1_hoeffding_tail() -> Outcome {
    let (eps, trials) = (0.5, 5000);
    let mut worst_margin = f64::INFINITY;
    for (name, phi) in sixteen() {
        let mu = DiscreteMeasure::uniform("x", 16);
        for n in [16, 64, 256] {
            let t = hoeffding_tail_check(&phi, &mu, n, eps, trials, 7).map_err(|e| e.to_string())?;
            let exact = exact_columns_cover(&phi, eps / 4.0, n)?;
            ensure!(t.covering.value >= exact, "{name} n={n}: greedy cover {} below exact {exact}", t.covering.value);
            let bound = 4.0 * exact as f64 * (-(n as f64) * eps * eps / 32.0).exp();
            ensure!(
                t.empirical <= bound + t.slack,
                "{name} n={n}: tail {} exceeds {bound} + {}",
                t.empirical,
                t.slack
            );
            ensure!(t.exceedances as f64 / trials as f64 == t.empirical, "{name} n={n}: frequency mismatch");
            worst_margin = worst_margin.min(bound + t.slack - t.empirical);
        }
    }
    Ok(format!("12 cases, smallest margin {worst_margin:.4}"))
}

fn c2_witness_probability() -> Outcome {
    let (eps, n) = (0.5, 256);
    let mut lines = Vec::new();
    for (name, phi) in sixteen() {
        let mu = DiscreteMeasure::uniform("x", 16);
        let w = theta_witness_set(&phi, &mu, n, eps, 5000, 11).map_err(|e| e.to_string())?;
        let exact = exact_columns_cover(&phi, eps / 12.0, n)?;
        let bound = 1.0 - 8.0 * exact as f64 * (-(n as f64) * eps * eps / 96.0).exp();
        ensure!(w.estimate >= bound - w.slack, "{name}: estimate {} below {bound} − {}", w.estimate, w.slack);
        lines.push(format!("{name} {:.3}≥{:.3}", w.estimate, bound));
    }
    Ok(lines.join(", "))
}

const DYADIC: i128 = 1024;

struct Family {
    /// Breakpoints as multiples of `1/DYADIC`.
    cuts: Vec<i128>,
    /// Values as multiples of `1/8`.
    values: Vec<Vec<i128>>,
}

fn random_family(rng: &mut ChaCha8Rng) -> Family {
    let jumps = rng.random_range(0..=20usize);
    let mut inner: Vec<i128> = Vec::new();
    while inner.len() < jumps {
        let c = rng.random_range(1..DYADIC);
        if !inner.contains(&c) {
            inner.push(c);
        }
    }
    inner.sort_unstable();
    let mut cuts = vec![0];
    cuts.extend(inner);
    cuts.push(DYADIC);
    let members = rng.random_range(1..=50usize);
    let values = (0..members).map(|_| (0..cuts.len() - 1).map(|_| rng.random_range(0..=8)).collect()).collect();
    Family { cuts, values }
}

/// Longest chain `t₁ < t₁′ ≤ t₂ < t₂′ …` of piece pairs whose values differ by more than `eps/2`.
fn pair_count_oracle(values: &[i128], eps_tenths: i128) -> usize {
    let p = values.len();
    let mut dp = vec![0usize; p];
    for b in 0..p {
        for a in 0..b {
            // |vₐ − v_b|/8 > eps/2  ⟺  20·|vₐ − v_b| > 8·eps_tenths
            if 20 * (values[a] - values[b]).abs() > 8 * eps_tenths {
                let before = dp[..=a].iter().copied().max().unwrap_or(0);
                dp[b] = dp[b].max(before + 1);
            }
        }
    }
    dp.into_iter().max().unwrap_or(0)
}

fn c3_grid_approximation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut runs = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let fam = random_family(&mut rng);
        let family = StepFunctionFamily::new(
            fam.cuts.iter().map(|&c| c as f64 / DYADIC as f64).collect(),
            Vec::new(),
            fam.values.iter().map(|v| v.iter().map(|&c| c as f64 / 8.0).collect()).collect(),
        )
        .map_err(|e| e.to_string())?;
        for eps_tenths in [5i128, 2, 1] {
            let eps = eps_tenths as f64 / 10.0;
            let g = grid_approximation_check(&family, eps).map_err(|e| e.to_string())?;
            let n = fam.values.iter().map(|v| pair_count_oracle(v, eps_tenths)).max().unwrap_or(0);
            let m = (20 * n as i128) / eps_tenths + 1;
            ensure!(g.pair_count == n, "pair count {} vs oracle {n}", g.pair_count);
            ensure!(g.grid_size as i128 == m, "grid size {} vs oracle {m}", g.grid_size);
            // counts[i] = #{k < m : cuts[i]/DYADIC ≤ k/m < cuts[i+1]/DYADIC}
            let counts: Vec<i128> = fam
                .cuts
                .windows(2)
                .map(|w| (0..m).filter(|&k| w[0] * m <= k * DYADIC && k * DYADIC < w[1] * m).count() as i128)
                .collect();
            for v in &fam.values {
                let grid_sum: i128 = counts.iter().zip(v).map(|(c, x)| c * x).sum();
                let integral: i128 = fam.cuts.windows(2).zip(v).map(|(w, x)| (w[1] - w[0]) * x).sum();
                // |grid_sum/(8m) − integral/(8·DYADIC)| ≤ eps_tenths/10
                let diff = (grid_sum * DYADIC - integral * m).abs();
                ensure!(10 * diff <= eps_tenths * 8 * m * DYADIC, "grid error exceeds {eps} (exact)");
                worst = worst.max(diff as f64 / (8 * m * DYADIC) as f64 / eps);
            }
            ensure!(g.pass && g.max_error <= eps, "library reports error {} > {eps}", g.max_error);
            runs += 1;
        }
    }
    Ok(format!("{runs}/300 runs within ε, worst error/ε = {worst:.3}"))
}

fn c4_nip_regularity() -> Outcome {
    let mut lines = Vec::new();
    for (name, phi) in [("half-graph", generators::half_graph(8)), ("threshold", generators::threshold(8))] {
        let mus = uniform(&phi);
        for (eps, delta) in [(0.3, 0.3), (0.2, 0.2)] {
            let cert = nip_regularity(&phi, &mus, eps, delta, Mode::Constructible, 5).map_err(|e| e.to_string())?;
            let grid = &cert.grid.grid;
            let sets: Vec<Vec<Vec<usize>>> = (0..2).map(|i| grid.factor(i).sets()).collect();
            for s in &sets {
                let mut seen: Vec<usize> = s.iter().flatten().copied().collect();
                seen.sort_unstable();
                ensure!(seen == (0..8).collect::<Vec<_>>(), "{name}: pieces do not partition an axis");
            }
            let w = 1.0 / 64.0;
            let mut exceptional = 0.0;
            for a_piece in &sets[0] {
                for b_piece in &sets[1] {
                    let points: Vec<(usize, usize)> =
                        a_piece.iter().flat_map(|&a| b_piece.iter().map(move |&b| (a, b))).collect();
                    if points.is_empty() {
                        continue;
                    }
                    let mass = points.len() as f64 * w;
                    let theta = |a: usize, b: usize| cert.approximation.theta.eval(&[a, b]);
                    let err: f64 = points.iter().map(|&(a, b)| (phi.at(a, b) - theta(a, b)).abs() * w).sum::<f64>() / mass;
                    if err > delta {
                        exceptional += mass;
                        continue;
                    }
                    let lo = points.iter().map(|&(a, b)| theta(a, b)).fold(f64::INFINITY, f64::min);
                    let hi = points.iter().map(|&(a, b)| theta(a, b)).fold(f64::NEG_INFINITY, f64::max);
                    let r = (lo + hi) / 2.0;
                    let dev: f64 = points.iter().map(|&(a, b)| (phi.at(a, b) - r).abs() * w).sum();
                    ensure!(dev <= eps * mass + TOL, "{name} ({eps},{delta}): good cell deviates {dev} > {}", eps * mass);
                }
            }
            ensure!(exceptional <= delta + TOL, "{name} ({eps},{delta}): exceptional mass {exceptional}");
            ensure!((exceptional - cert.exceptional_mass).abs() <= TOL, "{name}: recorded exceptional mass differs");
            ensure!(cert.pass, "{name} ({eps},{delta}): certificate fails");
            lines.push(format!("{name}({eps}) exc={exceptional:.3} cells={}", cert.cell_count));
        }
    }
    Ok(lines.join(", "))
}

fn distal_instances() -> Vec<(String, FuzzyPredicate, f64)> {
    let mut v = Vec::new();
    for (name, phi) in [("half-graph", generators::half_graph(8)), ("identity", generators::identity(8))] {
        for gamma in [0.25, 0.0625] {
            v.push((name.to_string(), phi.clone(), gamma));
        }
    }
    v
}

fn run_distal(phi: &FuzzyPredicate, gamma: f64) -> Result<DistalPartitionCertificate, String> {
    let oracle = BruteForceOracle { budget: DEFAULT_SEH_BUDGET };
    distal_partition(phi, &uniform(phi), 0.0, 0.5, gamma, &oracle).map_err(|e| e.to_string())
}

fn cell_points(sides: &[Vec<usize>]) -> Vec<(usize, usize)> {
    sides[0].iter().flat_map(|&a| sides[1].iter().map(move |&b| (a, b))).collect()
}

fn c5_distal_iteration() -> Outcome {
    let mut lines = Vec::new();
    for (name, phi, gamma) in distal_instances() {
        let d = run_distal(&phi, gamma)?;
        let budget = (gamma.ln() / (1.0 - 0.25f64.powi(2)).ln()).ceil() as usize;
        let mut hits = vec![0usize; 64];
        let mut bad = 0.0;
        for c in &d.cells {
            let pts = cell_points(&c.sides);
            for &(a, b) in &pts {
                hits[a * 8 + b] += 1;
            }
            let lo = pts.iter().map(|&(a, b)| phi.at(a, b)).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|&(a, b)| phi.at(a, b)).fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 0.0 {
                bad += pts.len() as f64 / 64.0;
            }
        }
        ensure!(hits.iter().all(|&h| h == 1), "{name} γ={gamma}: cells do not cover each point once");
        ensure!(bad <= gamma + TOL, "{name} γ={gamma}: non-homogeneous mass {bad}");
        ensure!((bad - d.non_homogeneous_mass).abs() <= TOL, "{name} γ={gamma}: recorded mass differs");
        ensure!(d.round_budget == budget, "{name}: round budget {} vs {budget}", d.round_budget);
        ensure!(d.rounds.len() <= budget, "{name} γ={gamma}: {} rounds > {budget}", d.rounds.len());
        ensure!(
            (d.cells.len() as f64).ln() <= budget as f64 * 3f64.ln() + TOL,
            "{name} γ={gamma}: {} cells exceed 3^{budget}",
            d.cells.len()
        );
        ensure!(d.pass, "{name} γ={gamma}: certificate fails");
        lines.push(format!("{name} γ={gamma}: mass={bad:.4} rounds={}/{budget} cells={}", d.rounds.len(), d.cells.len()));
    }
    Ok(lines.join("; "))
}

fn c6_density_seh() -> Outcome {
    let mut lines = Vec::new();
    for (name, phi, gamma) in distal_instances() {
        let d = run_distal(&phi, gamma)?;
        let alpha = phi.values().iter().sum::<f64>() / 64.0;
        let beta = alpha / 4.0;
        if alpha - beta - gamma - d.eps <= 0.0 {
            lines.push(format!("{name} γ={gamma}: α−β−γ−ε ≤ 0, not applicable"));
            continue;
        }
        let found = density_seh(&phi, &d, &uniform(&phi), alpha, beta).map_err(|e| e.to_string())?;
        let k = d.cells.len() as f64;
        let bound = (alpha - beta - gamma - d.eps) / k;
        let sides = found.rectangle.sides();
        for s in sides {
            ensure!(s.len() as f64 / 8.0 >= bound - TOL, "{name} γ={gamma}: side mass {} < {bound}", s.len() as f64 / 8.0);
        }
        let min = cell_points(sides).iter().map(|&(a, b)| phi.at(a, b)).fold(f64::INFINITY, f64::min);
        ensure!(min >= beta, "{name} γ={gamma}: rectangle dips to {min} < β = {beta}");
        lines.push(format!("{name} γ={gamma}: sides {}×{} ≥ {bound:.4}·8", sides[0].len(), sides[1].len()));
    }
    Ok(lines.join("; "))
}

fn c7_bucketing_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for s in 1..=10usize {
        for _ in 0..10_000 {
            let r: f64 = rng.random();
            let h = 1.0 / s as f64;
            let direct: f64 = (0..=s).map(|j| (h - (r - j as f64 * h).abs()).max(0.0)).sum();
            let err = (direct - h).abs();
            ensure!(err <= 1e-12, "s={s} r={r}: oracle sum off by {err}");
            let lib = bucket_identity_error(s, r);
            ensure!(lib <= 1e-12, "s={s} r={r}: library identity error {lib}");
            worst = worst.max(err.max(lib));
        }
    }
    Ok(format!("10⁵ evaluations, worst error {worst:.1e}"))
}

fn c8_cutting() -> Outcome {
    let (eps, delta) = (0.5, 0.25);
    let mut lines = Vec::new();
    for (name, phi) in sixteen() {
        let nu = DiscreteMeasure::uniform("y", 16);
        let c = cutting_build(&phi, &nu, eps, delta, 3).map_err(|e| e.to_string())?;
        ensure!(c.weight == eps / 4.0, "{name}: weight {} ≠ ε/4", c.weight);
        let min_weight = (0..16).map(|x| c.psi.iter().map(|p| p[x]).sum::<f64>()).fold(f64::INFINITY, f64::min);
        ensure!(min_weight >= eps / 4.0 - TOL, "{name}: Σ_d ψ dips to {min_weight}");
        for (d, p) in c.psi.iter().enumerate() {
            let supp: Vec<usize> = (0..16).filter(|&x| p[x] > 0.0).collect();
            let bad = (0..16)
                .filter(|&b| {
                    let vals = supp.iter().map(|&x| phi.at(x, b));
                    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
                    hi - lo > eps
                })
                .count();
            ensure!(bad as f64 / 16.0 <= delta + TOL, "{name}: parameter {d} has bad mass {}", bad as f64 / 16.0);
        }
        let cert = cutting_verify(&c, &phi, &nu, eps, delta).map_err(|e| e.to_string())?;
        ensure!(cert.pass, "{name}: cutting_verify fails");

        let mut sizes = Vec::new();
        for dl in [0.5, 0.25, 0.125] {
            sizes.push(cutting_build(&phi, &nu, eps, dl, 3).map_err(|e| e.to_string())?.len());
        }
        ensure!(sizes.windows(2).all(|w| w[0] <= w[1]), "{name}: |D| not monotone over δ: {sizes:?}");
        let refs: Vec<String> = [0.5, 0.25, 0.125].iter().map(|&dl| format!("{:.2}", cutting_size_reference(dl))).collect();
        lines.push(format!("{name} |D|={sizes:?} vs δ⁻¹lnδ⁻¹=[{}]", refs.join(", ")));
    }
    Ok(lines.join("; "))
}

fn c9_oracle_equivalence() -> Outcome {
    let (eps, delta) = (0.5, 1.0 / 3.0);
    let subsets: Vec<Vec<usize>> =
        (1u32..8).map(|m| (0..3).filter(|&i| m & (1 << i) != 0).collect()).collect();
    let mut found = 0;
    for code in 0..3usize.pow(9) {
        let mut c = code;
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let v = (c % 3) as f64 / 2.0;
                        c /= 3;
                        v
                    })
                    .collect()
            })
            .collect();
        let phi = FuzzyPredicate::from_rows("x", "y", &rows).map_err(|e| e.to_string())?;
        let mus = uniform(&phi);
        let rows = &rows;
        let mut best: Option<usize> = None;
        for a in &subsets {
            for b in &subsets {
                let vals: Vec<f64> = a.iter().flat_map(|&i| b.iter().map(move |&j| rows[i][j])).collect();
                let osc = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    - vals.iter().copied().fold(f64::INFINITY, f64::min);
                if osc <= eps {
                    best = best.max(Some(a.len() * b.len()));
                }
            }
        }
        let got = seh_bruteforce(&phi, &mus, eps, delta, DEFAULT_SEH_BUDGET).map_err(|e| e.to_string())?;
        match (best, got.rectangle()) {
            (None, None) => {}
            (Some(area), Some(r)) => {
                ensure!(r.verify(&phi, &mus), "predicate {code}: returned rectangle invalid");
                let lib_area = r.sides()[0].len() * r.sides()[1].len();
                ensure!(lib_area == area, "predicate {code}: area {lib_area} vs exhaustive {area}");
                found += 1;
            }
            (b, r) => return Err(format!("predicate {code}: exhaustive {b:?} vs library {:?}", r.map(|r| r.sides()))),
        }
    }
    Ok(format!("19683 predicates agree ({found} with a rectangle)"))
}

fn c10_equipartition() -> Outcome {
    let gamma = 2.0 / 8.0;
    let mut lines = Vec::new();
    for (name, phi, g) in distal_instances() {
        let d = run_distal(&phi, g)?;
        let grid = d.grid().map_err(|e| e.to_string())?;
        let eq = equipartition_refine(&grid, &uniform(&phi), gamma).map_err(|e| e.to_string())?;
        let homogeneous = |sets: &[Vec<usize>]| {
            let pts = cell_points(sets);
            let lo = pts.iter().map(|&(a, b)| phi.at(a, b)).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|&(a, b)| phi.at(a, b)).fold(f64::NEG_INFINITY, f64::max);
            pts.is_empty() || hi - lo <= d.eps
        };
        let mut worst_gap: f64 = 0.0;
        for i in 0..2 {
            let masses: Vec<f64> = eq.grid.factor(i).sets().iter().map(|s| s.len() as f64 / 8.0).collect();
            let gap = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - masses.iter().copied().fold(f64::INFINITY, f64::min);
            ensure!(gap <= gamma + TOL, "{name} γ={g}: axis {i} gap {gap}");
            worst_gap = worst_gap.max(gap);
        }
        for cell in eq.grid.cells() {
            let parent = eq.parent_cell(&cell);
            let child_sets = eq.grid.cell_supports(&cell);
            let parent_sets = grid.cell_supports(&parent);
            for i in 0..2 {
                ensure!(
                    child_sets[i].iter().all(|x| parent_sets[i].contains(x)),
                    "{name} γ={g}: refined piece escapes its parent"
                );
            }
            ensure!(
                !homogeneous(&parent_sets) || homogeneous(&child_sets),
                "{name} γ={g}: homogeneity lost in cell {cell:?}"
            );
        }
        lines.push(format!("{name} γ={g}: gap={worst_gap:.3} pieces={:?}", eq.grid.piece_counts()));
    }
    Ok(lines.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("C1", "Hoeffding tail", 30, c1_hoeffding_tail),
        ("C2", "witness probability", 30, c2_witness_probability),
        ("C3", "grid approximation", 5, c3_grid_approximation),
        ("C4", "NIP regularity", 10, c4_nip_regularity),
        ("C5", "distal iteration", 10, c5_distal_iteration),
        ("C6", "density rectangle", 5, c6_density_seh),
        ("C7", "bucketing identity", 1, c7_bucketing_identity),
        ("C8", "cutting", 30, c8_cutting),
        ("C9", "oracle equivalence", 60, c9_oracle_equivalence),
        ("C10", "equipartition", 5, c10_equipartition),
    ];
    let mut failures = 0;
    for (id, title, limit, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(limit) => {
                Err(format!("{detail}; took {:.2}s, budget {limit}s", elapsed.as_secs_f64()))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {id} {title}: {detail} ({:.2}s < {limit}s)", elapsed.as_secs_f64()),
            Err(why) => {
                failures += 1;
                println!("[FAIL] {id} {title}: {why} ({:.2}s)", elapsed.as_secs_f64());
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
