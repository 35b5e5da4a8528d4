//! Named pipelines that turn an instance and parameters into a certificate.
//!
//! A certificate embeds its instance and parameters, so [`verify`] can rerun
//! the pipeline from the certificate alone and compare digests. All
//! pipelines are deterministic given their seed.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cert::{Certificate, Check, Sweep};
use crate::covering::{
    covering_number, cover_partition, linf_cover, worst_piece_spread, CoverMode, Direction,
};
use crate::distal::{
    bucketed_seh, cutting_build, cutting_size_reference, cutting_verify, density_seh, distal_partition,
    equipartition_refine, grid_homogeneity, seh_bruteforce, BruteForceOracle, Cutting, PartitionDensityOracle,
    BUCKET_IDENTITY_TOL, DEFAULT_SEH_BUDGET,
};
use crate::error::{Error, Result};
use crate::fuzzy::{bind_measures, DiscreteMeasure, FuzzyPredicate, Mode};
use crate::regularity::{nip_regularity, structured_approximation};
use crate::sampling::{
    eps_approximation_search, eps_net_search, grid_approximation_check, hoeffding_tail_check,
    sufficient_sample_size, ApproximationSearch, NetStrategy, StepFunctionFamily, DEFAULT_COVER_SAMPLES,
};

macro_rules! pipelines {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Pipeline { $($variant),+ }

        impl Pipeline {
            pub const ALL: &'static [Pipeline] = &[$(Pipeline::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $(Pipeline::$variant => $name),+ }
            }
        }

        impl FromStr for Pipeline {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Pipeline::$variant),)+
                    other => Err(Error::Parse(format!("unknown pipeline `{other}`"))),
                }
            }
        }
    };
}

pipelines! {
    Cover => "cover",
    CoverPartition => "cover-partition",
    Approx => "approx",
    TailCheck => "tail-check",
    Net => "net",
    GridApprox => "grid-approx",
    Structured => "structured",
    NipReg => "nip-reg",
    Seh => "seh",
    DistalReg => "distal-reg",
    DensitySeh => "density-seh",
    BucketedSeh => "bucketed-seh",
    Cutting => "cutting",
    CuttingVerify => "cutting-verify",
    Equipartition => "equipartition",
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inputs of a pipeline run; measures are bound to the predicate's axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub phi: Option<FuzzyPredicate>,
    pub mus: Vec<DiscreteMeasure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<StepFunctionFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutting: Option<Cutting>,
}

impl Instance {
    /// Binds `mus` to the axes of `phi` by position; no measures means uniform ones.
    pub fn new(phi: FuzzyPredicate, mus: Vec<DiscreteMeasure>) -> Result<Self> {
        let mus = if mus.is_empty() {
            phi.axes().iter().map(|a| DiscreteMeasure::uniform(a.name.clone(), a.size)).collect()
        } else {
            bind_measures(&phi, &mus)?
        };
        Ok(Instance { phi: Some(phi), mus, family: None, cutting: None })
    }

    pub fn from_family(family: StepFunctionFamily) -> Self {
        Instance { phi: None, mus: Vec::new(), family: Some(family), cutting: None }
    }

    pub fn with_cutting(mut self, cutting: Cutting) -> Self {
        self.cutting = Some(cutting);
        self
    }

    pub fn phi(&self) -> Result<&FuzzyPredicate> {
        self.phi.as_ref().ok_or_else(|| Error::param("phi", "this pipeline needs a predicate"))
    }

    fn row_measure(&self) -> Result<&DiscreteMeasure> {
        self.phi()?.require_binary()?;
        Ok(&self.mus[0])
    }

    fn column_measure(&self) -> Result<&DiscreteMeasure> {
        self.phi()?.require_binary()?;
        Ok(&self.mus[1])
    }
}

/// Every knob any pipeline reads; unused ones stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub s: Option<usize>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub attempts: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Net thresholds `r < s`.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub budget: Option<usize>,
    pub direction: Option<Direction>,
    pub exact: bool,
    pub equi_gamma: Option<f64>,
    pub sweep: Vec<f64>,
}

fn need<T: Copy>(name: &'static str, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| Error::param(name, "required by this pipeline"))
}

impl Params {
    fn eps(&self) -> Result<f64> {
        need("eps", self.eps)
    }
    fn delta(&self) -> Result<f64> {
        need("delta", self.delta)
    }
    fn gamma(&self) -> Result<f64> {
        need("gamma", self.gamma)
    }
    fn seed(&self) -> Result<u64> {
        need("seed", self.seed)
    }
    fn budget(&self) -> usize {
        self.budget.unwrap_or(DEFAULT_SEH_BUDGET)
    }
}

pub fn run(pipeline: Pipeline, instance: &Instance, params: &Params) -> Result<Certificate> {
    let start = Instant::now();
    let mut cert = Certificate::new(pipeline.name());
    cert.seed = params.seed;
    if let Value::Object(map) = serde_json::to_value(params)? {
        for (k, v) in map {
            let empty = v.is_null() || v.as_array().is_some_and(|a| a.is_empty()) || v == Value::Bool(false);
            if !empty {
                cert.params.insert(k, v);
            }
        }
    }
    let result = dispatch(pipeline, instance, params, &mut cert)?;
    cert.set_payload(&json!({ "instance": instance, "params": params, "result": result }))?;
    cert.seal();
    cert.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    log::info!("{pipeline}: {} checks, pass = {}", cert.checks.len(), cert.pass);
    Ok(cert)
}

fn dispatch(pipeline: Pipeline, inst: &Instance, p: &Params, cert: &mut Certificate) -> Result<Value> {
    let value = match pipeline {
        Pipeline::Cover => {
            let phi = inst.phi()?;
            phi.require_binary()?;
            let eps = p.eps()?;
            let direction = p.direction.unwrap_or(Direction::RowsOverColumns);
            let vectors: Vec<Vec<f64>> = match direction {
                Direction::RowsOverColumns => (0..phi.rows()).map(|a| phi.row(a).to_vec()).collect(),
                Direction::ColumnsOverRows => (0..phi.cols()).map(|b| phi.column(b)).collect(),
            };
            let cover = linf_cover(&vectors, eps)?;
            cert.check(Check::at_most("cover radius", "max_v min_c ‖v − c‖∞ ≤ ε", cover.max_distance, eps));
            let number = match p.n {
                Some(n) => {
                    let mode = if p.exact {
                        CoverMode::Exact
                    } else {
                        CoverMode::Greedy { samples: DEFAULT_COVER_SAMPLES, seed: p.seed()? }
                    };
                    let cn = covering_number(phi, eps, n, direction, mode)?;
                    if p.exact {
                        cert.check(Check::at_most(
                            "covering number",
                            "N_ε(n) ≤ size of a cover on all coordinates",
                            cn.value as f64,
                            cover.len() as f64,
                        ));
                    }
                    Some(cn)
                }
                None => None,
            };
            json!({ "cover": cover, "covering_number": number })
        }
        Pipeline::CoverPartition => {
            let phi = inst.phi()?;
            phi.require_binary()?;
            let eps = p.eps()?;
            let columns: Vec<usize> = (0..phi.cols()).collect();
            let cp = cover_partition(phi, &columns, eps, p.mode.unwrap_or(Mode::Constructible))?;
            let spread = worst_piece_spread(phi, &cp.partition, &columns);
            cert.check(Check::at_most("piece spread", "|φ(a;b) − φ(a′;b)| ≤ ε within a piece", spread, eps));
            json!({ "partition": cp, "spread": spread })
        }
        Pipeline::Approx => {
            let phi = inst.phi()?;
            let mu = inst.row_measure()?;
            let eps = p.eps()?;
            let n = p.n.unwrap_or_else(|| sufficient_sample_size(eps));
            let found = eps_approximation_search(phi, mu, eps, n, p.attempts.unwrap_or(200), p.seed()?)?;
            match &found {
                ApproximationSearch::Found { witness, .. } => {
                    cert.check(Check::at_most("approximation error", "sup_b |Av(ā; φ(·;b)) − E_μ φ(·;b)| ≤ ε", witness.error, eps));
                }
                ApproximationSearch::NotFound { best, .. } => {
                    cert.check(Check::at_most("approximation error", "sup_b |Av(ā; φ(·;b)) − E_μ φ(·;b)| ≤ ε", best.error, eps));
                }
            }
            serde_json::to_value(found)?
        }
        Pipeline::TailCheck => {
            let phi = inst.phi()?;
            let mu = inst.row_measure()?;
            let eps = p.eps()?;
            let ns: Vec<usize> = if p.sweep.is_empty() { vec![need("n", p.n)?] } else { sweep_sizes(&p.sweep)? };
            let mut rows = Vec::new();
            let mut out = Vec::new();
            for &n in &ns {
                let t = hoeffding_tail_check(phi, mu, n, eps, p.trials.unwrap_or(1000), p.seed()?)?;
                cert.check(Check::at_most(
                    format!("tail n={n}"),
                    "μ²ⁿ(f_n > ε) ≤ 4·N_{ε/4}(n)·exp(−nε²/32) + slack",
                    t.empirical,
                    t.bound + t.slack,
                ));
                rows.push(vec![n as f64, t.empirical, t.bound, t.slack]);
                out.push(t);
            }
            if !p.sweep.is_empty() {
                cert.sweep = Some(Sweep {
                    parameter: "n".into(),
                    columns: vec!["empirical".into(), "bound".into(), "slack".into()],
                    rows,
                });
            }
            serde_json::to_value(out)?
        }
        Pipeline::Net => {
            let phi = inst.phi()?;
            let mu = inst.row_measure()?;
            let (lower, upper) = (p.lower.unwrap_or(0.0), p.upper.unwrap_or(1.0));
            let strategy = match p.n {
                Some(size) => NetStrategy::Random { size, attempts: p.attempts.unwrap_or(100) },
                None => NetStrategy::Greedy,
            };
            let seed = if matches!(strategy, NetStrategy::Random { .. }) { p.seed()? } else { p.seed.unwrap_or(0) };
            let epss = if p.sweep.is_empty() { vec![p.eps()?] } else { p.sweep.clone() };
            let mut rows = Vec::new();
            let mut out = Vec::new();
            for &eps in &epss {
                let net = eps_net_search(phi, mu, eps, lower, upper, strategy, seed)?;
                cert.check(Check::at_most(
                    format!("net misses eps={eps}"),
                    "every column with μ{φ ≥ s} ≥ ε is hit above r",
                    net.violations.len() as f64,
                    0.0,
                ));
                rows.push(vec![eps, net.elements.len() as f64, (1.0 / eps) * (1.0 / eps).ln()]);
                out.push(net);
            }
            if !p.sweep.is_empty() {
                cert.sweep = Some(Sweep {
                    parameter: "eps".into(),
                    columns: vec!["net_size".into(), "eps^-1 ln eps^-1".into()],
                    rows,
                });
            }
            serde_json::to_value(out)?
        }
        Pipeline::GridApprox => {
            let family = inst.family.as_ref().ok_or_else(|| Error::param("family", "grid-approx needs a family"))?;
            let eps = p.eps()?;
            let g = grid_approximation_check(family, eps)?;
            cert.check(Check::at_most("grid error", "|(1/M)Σ_k f(k/M) − ∫f| ≤ ε with M = ⌊2N/ε⌋+1", g.max_error, eps));
            serde_json::to_value(g)?
        }
        Pipeline::Structured => {
            let phi = inst.phi()?;
            let eps = p.eps()?;
            let s = structured_approximation(phi, &inst.mus, eps, p.seed()?)?;
            cert.check(Check::at_most("L1 error", "∫|φ − Σⱼ∏ᵢθᵢⱼ| dω ≤ ε", s.l1_error, eps));
            serde_json::to_value(s)?
        }
        Pipeline::NipReg => {
            let phi = inst.phi()?;
            let (eps, delta) = (p.eps()?, p.delta()?);
            let r = nip_regularity(phi, &inst.mus, eps, delta, p.mode.unwrap_or(Mode::Constructible), p.seed()?)?;
            cert.check(Check::at_most("exceptional mass", "Σ_{exceptional} ∏μᵢ(πᵢ) ≤ δ", r.exceptional_mass, delta));
            cert.check(Check::holds("regular cells", "every non-exceptional cell is (ε, δ)-regular", r.pass));
            serde_json::to_value(r)?
        }
        Pipeline::Seh => {
            let phi = inst.phi()?;
            let (eps, delta) = (p.eps()?, p.delta()?);
            let found = seh_bruteforce(phi, &inst.mus, eps, delta, p.budget())?;
            cert.check(Check::holds("rectangle found", "∃ Bᵢ with μᵢ(Bᵢ) ≥ δ and osc(φ, ∏Bᵢ) ≤ ε", found.rectangle().is_some()));
            if let Some(r) = found.rectangle() {
                cert.check(Check::at_least("side mass", "μᵢ(Bᵢ) ≥ δ", r.min_mass(), delta));
                cert.check(Check::at_most("oscillation", "osc(φ, ∏Bᵢ) ≤ ε", r.oscillation(), eps));
            }
            serde_json::to_value(found)?
        }
        Pipeline::DistalReg => {
            let phi = inst.phi()?;
            let oracle = BruteForceOracle { budget: p.budget() };
            let d = distal_partition(phi, &inst.mus, p.eps()?, p.delta()?, p.gamma()?, &oracle)?;
            for c in d.checks() {
                cert.check(c);
            }
            note_round_constants(cert, d.round_budget, d.round_budget_full_delta);
            serde_json::to_value(d)?
        }
        Pipeline::DensitySeh => {
            let phi = inst.phi()?;
            let oracle = BruteForceOracle { budget: p.budget() };
            let d = distal_partition(phi, &inst.mus, p.eps()?, p.delta()?, p.gamma()?, &oracle)?;
            cert.check(Check::holds("partition", "distal partition certificate passes", d.pass));
            let beta = p.beta.unwrap_or(0.0);
            let found = density_seh(phi, &d, &inst.mus, need("alpha", p.alpha)?, beta)?;
            cert.check(Check::at_least("side mass", "μᵢ(Bᵢ) ≥ (α − β − γ − ε)/K", found.rectangle.min_mass(), found.bound));
            cert.check(Check::at_least("minimum value", "φ ≥ β on ∏Bᵢ", found.min_value, beta));
            json!({ "partition": d, "rectangle": found })
        }
        Pipeline::BucketedSeh => {
            let phi = inst.phi()?;
            let s = need("s", p.s)?;
            let b = bucketed_seh(phi, &inst.mus, s, &PartitionDensityOracle { oracle: BruteForceOracle { budget: p.budget() } })?;
            cert.check(Check::at_most("bucket identity", "|Σⱼ((1/s) ∸ |r − j/s|) − 1/s| ≤ 1e−12", b.identity_error, BUCKET_IDENTITY_TOL));
            cert.check(Check::at_least("bucket expectation", "E[φⱼ] ≥ 1/(s(s+1))", b.bucket_expectation, b.threshold));
            cert.check(Check::at_most("oscillation", "osc(φ, ∏Bᵢ) ≤ 2/s", b.rectangle.oscillation(), 2.0 / s as f64));
            serde_json::to_value(b)?
        }
        Pipeline::Cutting => {
            let phi = inst.phi()?;
            let nu = inst.column_measure()?;
            let eps = p.eps()?;
            let seed = p.seed()?;
            let deltas = if p.sweep.is_empty() { vec![p.delta()?] } else { p.sweep.clone() };
            let mut rows = Vec::new();
            let mut out = Vec::new();
            for &delta in &deltas {
                let c = cutting_build(phi, nu, eps, delta, seed)?;
                let v = cutting_verify(&c, phi, nu, eps, delta)?;
                for mut check in v.checks {
                    check.name = format!("{} delta={delta}", check.name);
                    cert.check(check);
                }
                cert.check(Check::at_least("weight delta", "γ = ε/4", c.weight, eps / 4.0));
                rows.push(vec![delta, c.len() as f64, cutting_size_reference(delta)]);
                out.push(c);
            }
            if !p.sweep.is_empty() {
                let mut sorted = rows.clone();
                sorted.sort_by(|a, b| b[0].total_cmp(&a[0]));
                let monotone = sorted.windows(2).all(|w| w[1][1] >= w[0][1]);
                cert.check(Check::holds("size growth", "|D| non-decreasing as δ shrinks", monotone));
                cert.sweep = Some(Sweep {
                    parameter: "delta".into(),
                    columns: vec!["size".into(), "delta^-1 ln delta^-1".into()],
                    rows,
                });
            }
            serde_json::to_value(out)?
        }
        Pipeline::CuttingVerify => {
            let phi = inst.phi()?;
            let nu = inst.column_measure()?;
            let c = inst.cutting.as_ref().ok_or_else(|| Error::param("cutting", "cutting-verify needs a cutting"))?;
            let v = cutting_verify(c, phi, nu, p.eps()?, p.delta()?)?;
            for check in v.checks {
                cert.check(check);
            }
            v.payload
        }
        Pipeline::Equipartition => {
            let phi = inst.phi()?;
            let eps = p.eps()?;
            let d = distal_partition(phi, &inst.mus, eps, p.delta()?, p.gamma()?, &BruteForceOracle { budget: p.budget() })?;
            cert.check(Check::holds("partition", "distal partition certificate passes", d.pass));
            let grid = d.grid()?;
            let widest = phi.shape().into_iter().max().unwrap_or(1);
            let gamma = p.equi_gamma.unwrap_or(2.0 / widest as f64);
            let eq = equipartition_refine(&grid, &inst.mus, gamma)?;
            for (i, g) in eq.max_gap.iter().enumerate() {
                cert.check(Check::at_most(format!("piece gap axis {i}"), "|μ(A) − μ(B)| ≤ γ", *g, gamma));
            }
            let before = grid_homogeneity(phi, &grid, eps);
            let after = grid_homogeneity(phi, &eq.grid, eps);
            let old = grid.cells();
            let kept = eq.grid.cells().iter().zip(&after).all(|(c, &ok)| {
                let parent = eq.parent_cell(c);
                old.iter().position(|o| *o == parent).is_some_and(|k| !before[k] || ok)
            });
            cert.check(Check::holds("verdicts inherited", "refined cells of homogeneous cells are homogeneous", kept));
            json!({ "partition": d, "equipartition": eq })
        }
    };
    Ok(value)
}

fn note_round_constants(cert: &mut Certificate, half: usize, full: usize) {
    cert.note(format!(
        "round budget uses the coverage recurrence (δ/2)ⁿ: M = {half}; the same formula with δⁿ gives {full}"
    ));
}

fn sweep_sizes(values: &[f64]) -> Result<Vec<usize>> {
    values
        .iter()
        .map(|&v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::param("sweep", format!("`{v}` is not a positive integer")))
            }
        })
        .collect()
}

/// Outcome of rerunning a certificate's pipeline.
#[derive(Debug, Clone)]
pub struct Verification {
    pub pass: bool,
    pub problems: Vec<String>,
    pub rerun: Certificate,
}

/// Reruns the pipeline recorded in `cert` and compares the results.
///
/// Passes iff the stored certificate is internally consistent, the rerun
/// reproduces it exactly (same digest), and its verdict is pass.
pub fn verify(cert: &Certificate) -> Result<Verification> {
    let mut problems = cert.inconsistencies();
    let pipeline: Pipeline = cert.kind.parse()?;
    let payload = cert.payload.as_object().ok_or_else(|| Error::Parse("certificate payload is not an object".into()))?;
    let field = |k: &str| payload.get(k).cloned().ok_or_else(|| Error::Parse(format!("certificate payload lacks `{k}`")));
    let instance: Instance = serde_json::from_value(field("instance")?)?;
    let params: Params = serde_json::from_value(field("params")?)?;
    let rerun = run(pipeline, &instance, &params)?;
    if rerun.digest != cert.compute_digest() {
        for (old, new) in cert.checks.iter().zip(&rerun.checks) {
            if old != new {
                problems.push(format!("check `{}`: recorded {} but rerun gives {}", old.name, old.measured, new.measured));
            }
        }
        if cert.checks.len() != rerun.checks.len() {
            problems.push(format!("{} checks recorded, rerun has {}", cert.checks.len(), rerun.checks.len()));
        }
        if cert.payload.get("result") != rerun.payload.get("result") {
            problems.push("recorded result differs from the rerun".into());
        }
        if problems.is_empty() {
            problems.push("rerun digest differs".into());
        }
    }
    let pass = problems.is_empty() && cert.pass;
    Ok(Verification { pass, problems, rerun })
}
