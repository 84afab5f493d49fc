use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::config::{Algorithm, ExperimentConfig};
use super::generators::{adversarial_leaf, adversarial_page, generate_requests, seeded_rng, GeneratorSpec};
use crate::embedding::{compose_full_pipeline, FiniteMetric, PipelineConfig};
use crate::error::{invalid, Error, Result};
use crate::hst::{run_kserver_adaptive, DepthReport, DynamicsReport, HstTree, KServerConfig, VerifyLevel};
use crate::paging::{default_initial_cache, run_paging_adaptive, PagingChecks, PagingInstance};

/// One measured invariant and the largest value it may take.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn new(name: &'static str, value: f64, limit: f64) -> Self {
        Self { name, value, limit }
    }

    pub fn slack(&self) -> f64 {
        self.value - self.limit
    }

    pub fn passed(&self) -> bool {
        self.value <= self.limit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRow {
    pub seed: u64,
    pub requests: usize,
    pub alg_cost: f64,
    pub opt_cost: f64,
    pub ratio: f64,
    /// Empty at verification level `none`, apart from `opt ≤ alg`.
    pub checks: Vec<Check>,
    pub wall: Duration,
}

impl SeedRow {
    /// Largest `value − limit` over the checks; `≤ 0` when all hold.
    pub fn max_slack(&self) -> f64 {
        self.checks.iter().map(Check::slack).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn worst_check(&self) -> Option<&Check> {
        self.checks.iter().max_by(|a, b| a.slack().total_cmp(&b.slack()))
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub algorithm: Algorithm,
    pub k: usize,
    pub verify: VerifyLevel,
    pub generator: String,
    /// In seed-list order.
    pub rows: Vec<SeedRow>,
}

impl ExperimentSummary {
    pub fn mean_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).sum::<f64>() / self.rows.len() as f64
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(SeedRow::passed)
    }

    /// Deterministic per-seed table (no timings).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,k,requests,alg_cost,opt_cost,ratio,max_slack,worst_check,passed\n");
        for r in &self.rows {
            let worst = r.worst_check().map_or("", |c| c.name);
            let _ = writeln!(
                s,
                "{},{},{},{:.12e},{:.12e},{:.12e},{:.6e},{},{}",
                r.seed,
                self.k,
                r.requests,
                r.alg_cost,
                r.opt_cost,
                r.ratio,
                r.max_slack(),
                worst,
                r.passed()
            );
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("seed,wall_seconds\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6}", r.seed, r.wall.as_secs_f64());
        }
        s
    }

    /// A short text report: configuration, aggregates and any failed checks.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "algorithm   {}", self.algorithm.name());
        let _ = writeln!(s, "k           {}", self.k);
        let _ = writeln!(s, "requests    {}", self.generator);
        let _ = writeln!(s, "verify      {}", self.verify);
        let _ = writeln!(s, "seeds       {}", self.rows.len());
        let _ = writeln!(s, "mean ratio  {:.6}", self.mean_ratio());
        let _ = writeln!(s, "max ratio   {:.6}", self.max_ratio());
        let _ = writeln!(s, "status      {}", if self.passed() { "all checks passed" } else { "CHECKS FAILED" });
        for r in &self.rows {
            for c in r.checks.iter().filter(|c| !c.passed()) {
                let _ = writeln!(s, "  seed {}: {} = {:.3e} > {:.3e}", r.seed, c.name, c.value, c.limit);
            }
        }
        s
    }

    /// Writes `<name>.csv`, `<name>_timing.csv` and `<name>.txt` into `dir`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let files = [
            (dir.join(format!("{name}.csv")), self.to_csv()),
            (dir.join(format!("{name}_timing.csv")), self.timing_csv()),
            (dir.join(format!("{name}.txt")), self.summary_text()),
        ];
        for (p, body) in &files {
            std::fs::write(p, body)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Allowed slack in `opt ≤ alg`, relative to `max(1, opt)`.
const OPT_TOL: f64 = 1e-9;

fn ratio_check(alg: f64, opt: f64) -> Check {
    Check::new("opt_above_alg", opt - alg, OPT_TOL * opt.max(1.0))
}

/// Checks of a verified paging run against their limits.
pub fn paging_checks(c: &PagingChecks) -> Vec<Check> {
    vec![
        Check::new("paging_descent", c.descent_excess, 1e-3),
        Check::new("paging_mass", c.mass_error, 1e-10),
        Check::new("paging_movement", c.movement_excess, 1e-3),
        Check::new("paging_box", c.box_excess, 1e-9),
        Check::new("paging_monotonicity", c.monotonicity_excess, 1e-12),
    ]
}

/// Checks of the HST dynamics verifiers.
pub fn dynamics_checks(d: &DynamicsReport) -> Vec<Check> {
    let mut v = vec![
        Check::new("hst_level_mass", d.level_mass_drift, 1e-6),
        Check::new("hst_sortedness", d.sortedness_slack, 1e-7),
        Check::new("hst_sign", d.sign_excess, 1e-6),
        Check::new("hst_leaf_monotonicity", d.leaf_monotonicity_excess, 1e-6),
        Check::new("hst_upper", d.upper_excess, 1e-6),
        Check::new("hst_floor", d.floor_deficit, 1e-6),
        Check::new("hst_feasibility", d.feasibility, 1e-6),
    ];
    if let Some(e) = d.descent_excess {
        v.push(Check::new("hst_descent", e, 1e-3));
    }
    v
}

/// Checks of the potential verifiers run at `full`.
pub fn depth_checks(d: &DepthReport) -> Vec<Check> {
    let mut v = vec![
        Check::new("depth_lemma", d.lemma_excess, 1e-3),
        Check::new("depth_corollary", d.corollary_excess, 1e-3),
        Check::new("psi_chain_rule", d.psi_chain_error, 1e-6),
        Check::new("psi_finite_difference", d.psi_fd_error, 1e-4),
    ];
    if let Some(e) = d.uniform_excess {
        v.push(Check::new("depth_uniform", e, 1e-3));
    }
    if let Some(rate) = d.log2k_pass_rate() {
        // Expressed as a shortfall so that the limit is an upper bound.
        v.push(Check::new("log2k_shortfall", 0.99 - rate, 0.0));
    }
    v
}

/// Page weights from `uniform`, `zipf`, `zipf:<s>` (weight `(i+1)^s`) or a
/// file with one weight per line.
pub fn paging_weights(spec: &str, n: usize) -> Result<Vec<f64>> {
    let zipf = |s: f64| (1..=n).map(|i| (i as f64).powf(s)).collect();
    match spec.split_once(':') {
        _ if spec == "uniform" => Ok(vec![1.0; n]),
        _ if spec == "zipf" => Ok(zipf(1.0)),
        Some(("zipf", a)) => Ok(zipf(a.parse().map_err(|_| Error::Parse(format!("bad zipf exponent `{a}`")))?)),
        _ => {
            let text = std::fs::read_to_string(spec)?;
            let w = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .map(|l| l.parse::<f64>().map_err(|_| Error::Parse(format!("bad weight `{l}`"))))
                .collect::<Result<Vec<f64>>>()?;
            if w.len() != n {
                return invalid(format!("weights file lists {} pages, expected {n}", w.len()));
            }
            Ok(w)
        }
    }
}

/// The tree of a k-server experiment.
pub fn kserver_tree(cfg: &ExperimentConfig) -> Result<HstTree> {
    let s = &cfg.kserver;
    match &s.tree {
        Some(p) => HstTree::parse(&std::fs::read_to_string(p)?)?.normalized(),
        None => HstTree::complete(s.branching, s.height, s.tau, s.top_weight),
    }
}

/// Seed offset separating the metric stream from the request stream.
const METRIC_STREAM: u64 = 0x5eed_0f_3e7c;

fn run_seed(cfg: &ExperimentConfig, gen: &GeneratorSpec, verify: VerifyLevel, seed: u64) -> Result<SeedRow> {
    let start = Instant::now();
    let count = cfg.requests.count;
    let (alg, opt, ratio, n_req, mut checks) = match cfg.algorithm {
        Algorithm::Paging => {
            let p = &cfg.paging;
            let inst = PagingInstance::new(paging_weights(&p.weights, p.n)?, p.k, p.delta)?;
            let check = verify != VerifyLevel::None;
            let run = if gen.is_adaptive() {
                let cache = default_initial_cache(p.n, p.k, &[]);
                run_paging_adaptive(&inst, &cache, count, |_, x| adversarial_page(x), check)?
            } else {
                let seq = generate_requests(gen, p.n, p.k, count, seed)?;
                let cache = default_initial_cache(p.n, p.k, &seq.ids);
                run_paging_adaptive(&inst, &cache, seq.len(), |t, _| seq.ids[t], check)?
            };
            let checks = run.checks.as_ref().map(paging_checks).unwrap_or_default();
            (run.alg_cost, run.opt_cost, run.ratio, run.requests.len(), checks)
        }
        Algorithm::Kserver => {
            let s = &cfg.kserver;
            let tree = kserver_tree(cfg)?;
            let leaves = tree.leaves().len();
            let kc = KServerConfig { variant: cfg.variant()?, delta: s.delta, eps: s.eps, verify, ..KServerConfig::default() };
            let run = if gen.is_adaptive() {
                run_kserver_adaptive(
                    &tree,
                    s.k,
                    count,
                    |_, a| {
                        let mass: Vec<f64> = a.tree().leaves().iter().map(|&v| a.placement()[v]).collect();
                        adversarial_leaf(&mass)
                    },
                    &kc,
                )?
            } else {
                let seq = generate_requests(gen, leaves, s.k, count, seed)?;
                run_kserver_adaptive(&tree, s.k, seq.len(), |t, _| seq.ids[t], &kc)?
            };
            let mut checks = run.dynamics.as_ref().map(dynamics_checks).unwrap_or_default();
            checks.extend(run.depth.as_ref().map(depth_checks).unwrap_or_default());
            (run.alg_cost, run.opt_cost, run.ratio, run.requests.len(), checks)
        }
        Algorithm::Pipeline => {
            let s = &cfg.pipeline;
            let metric = FiniteMetric::random_euclidean(s.points, s.dim, &mut seeded_rng(seed ^ METRIC_STREAM))?;
            let seq = generate_requests(gen, s.points, s.k, count, seed)?;
            let pc = PipelineConfig { tau: s.tau, seed, variant: cfg.variant()?, leaf_cap: s.leaf_cap };
            let rho0: Vec<usize> = (0..s.k).collect();
            let rep = compose_full_pipeline(&metric, s.k, &seq.ids, &rho0, &pc)?;
            let checks = if verify == VerifyLevel::None {
                Vec::new()
            } else {
                vec![
                    Check::new("pipeline_invalid_services", rep.invalid_services as f64, 0.0),
                    Check::new("pipeline_incomplete", if rep.completed { 0.0 } else { 1.0 }, 0.0),
                ]
            };
            (rep.alg_cost, rep.opt_cost, rep.ratio, rep.served, checks)
        }
    };
    checks.push(ratio_check(alg, opt));
    Ok(SeedRow { seed, requests: n_req, alg_cost: alg, opt_cost: opt, ratio, checks, wall: start.elapsed() })
}

/// Runs every seed of `cfg`, in parallel over seeds when more than one
/// worker is configured. Rows come back in seed-list order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let gen = cfg.generator()?;
    let verify = cfg.verify_level()?;
    let work = || cfg.seeds.par_iter().map(|&s| run_seed(cfg, &gen, verify, s)).collect::<Result<Vec<_>>>();
    let rows = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(ExperimentSummary { algorithm: cfg.algorithm, k: cfg.k(), verify, generator: gen.to_string(), rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub k: usize,
    pub runs: usize,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioTable {
    pub rows: Vec<RatioRow>,
    /// Least-squares `c` in `ratio ≈ c·(ln k)²` through the origin, over
    /// every run; `None` when all `k = 1`.
    pub coefficient: Option<f64>,
    /// Every individual `(k, ratio)`.
    pub points: Vec<(usize, f64)>,
}

impl RatioTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,runs,mean_ratio,max_ratio,passed\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.12e},{:.12e},{}", r.k, r.runs, r.mean_ratio, r.max_ratio, r.passed);
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::from("    k  runs  mean ratio   max ratio\n");
        for r in &self.rows {
            let _ = writeln!(s, "{:>5} {:>5} {:>11.4} {:>11.4}", r.k, r.runs, r.mean_ratio, r.max_ratio);
        }
        match self.coefficient {
            Some(c) => {
                let _ = writeln!(s, "fit: ratio ≈ {c:.4}·(ln k)²");
            }
            None => s.push_str("fit: undefined (all k = 1)\n"),
        }
        s
    }
}

/// `c = Σ r L / Σ L²` with `L = (ln k)²`.
pub fn fit_log_squared(points: &[(usize, f64)]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for &(k, r) in points {
        let l = (k as f64).ln().powi(2);
        num += r * l;
        den += l * l;
    }
    (den > 0.0).then(|| num / den)
}

/// Runs `base` once per `k` and fits the ratios against `(ln k)²`.
pub fn competitive_ratio_table(base: &ExperimentConfig, ks: &[usize]) -> Result<RatioTable> {
    if ks.is_empty() {
        return invalid("the ratio table needs at least one k");
    }
    let mut rows = Vec::with_capacity(ks.len());
    let mut points = Vec::new();
    for &k in ks {
        let mut cfg = base.clone();
        cfg.set_k(k);
        let sum = run_experiment(&cfg)?;
        points.extend(sum.rows.iter().map(|r| (k, r.ratio)));
        rows.push(RatioRow {
            k,
            runs: sum.rows.len(),
            mean_ratio: sum.mean_ratio(),
            max_ratio: sum.max_ratio(),
            passed: sum.passed(),
        });
    }
    Ok(RatioTable { coefficient: fit_log_squared(&points), rows, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algorithm: Algorithm) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(algorithm, vec![1, 2]);
        c.requests.count = 20;
        c.paging.n = 6;
        c.paging.k = 2;
        c.kserver.k = 2;
        c.kserver.height = 2;
        c.pipeline.points = 6;
        c.pipeline.k = 2;
        c.verify = "fast".into();
        c
    }

    #[test]
    fn paging_experiment_rows_are_checked() {
        let s = run_experiment(&small(Algorithm::Paging)).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(s.passed(), "{}", s.summary_text());
        assert!(s.rows.iter().all(|r| r.opt_cost <= r.alg_cost + 1e-9));
    }

    #[test]
    fn kserver_experiment_is_reproducible() {
        let mut c = small(Algorithm::Kserver);
        c.workers = Some(2);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert!(a.passed(), "{}", a.summary_text());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows[0].seed, 1);
    }

    #[test]
    fn adversarial_paging_always_faults() {
        let mut c = small(Algorithm::Paging);
        c.requests.generator = "adversarial".into();
        let s = run_experiment(&c).unwrap();
        assert!(s.rows.iter().all(|r| r.alg_cost > 0.0 && r.opt_cost > 0.0));
    }

    #[test]
    fn adversarial_page_is_never_cached() {
        let inst = PagingInstance::new(vec![1.0, 2.0, 1.0, 3.0, 1.0, 1.0], 2, None).unwrap();
        let cache = default_initial_cache(6, 2, &[]);
        run_paging_adaptive(
            &inst,
            &cache,
            40,
            |_, x| {
                let r = adversarial_page(x);
                assert!(x[r] > inst.delta(), "{x:?}");
                r
            },
            false,
        )
        .unwrap();
    }

    #[test]
    fn pipeline_experiment_runs() {
        let s = run_experiment(&small(Algorithm::Pipeline)).unwrap();
        assert!(s.passed(), "{}", s.summary_text());
    }

    #[test]
    fn log_squared_fit() {
        let pts: Vec<(usize, f64)> = [2usize, 4, 8].iter().map(|&k| (k, 3.0 * (k as f64).ln().powi(2))).collect();
        assert!((fit_log_squared(&pts).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(fit_log_squared(&[(1, 2.0)]), None);
    }

    #[test]
    fn outputs_are_written() {
        let dir = std::env::temp_dir().join(format!("kslab-out-{}", std::process::id()));
        let s = run_experiment(&small(Algorithm::Paging)).unwrap();
        let files = s.write(&dir, "t").unwrap();
        assert_eq!(files.len(), 3);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().count(), 3);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
