//! `kslab`: command-line front end for the simulation lab.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use kserver_lab::embedding::{
    compose_full_pipeline, mirrored_opt_cost, separation_probability_mc, EmbedderState, FiniteMetric, PipelineConfig,
};
use kserver_lab::geometry::{moreau_decompose, GeneratedCone, LocalMetric};
use kserver_lab::harness::{
    adversarial_leaf, adversarial_page, competitive_ratio_table, depth_checks, dynamics_checks, generate_requests,
    paging_checks, paging_weights, read_trace, run_experiment, seeded_rng, Algorithm, Check, ExperimentConfig,
    GeneratorSpec,
};
use kserver_lab::hst::{run_kserver_adaptive, HstTree, KServerConfig, PotentialVariant, VerifyLevel};
use kserver_lab::offline_opt::{belady_misses, opt_kserver_bruteforce, opt_kserver_flow, opt_weighted_paging, DistanceMatrix};
use kserver_lab::paging::{default_initial_cache, run_paging_adaptive, PagingInstance};
use rand::Rng;

#[derive(Parser)]
#[command(name = "kslab", version, about = "Mirror-descent k-server and weighted paging lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fractional weighted paging on one request sequence.
    Paging(PagingArgs),
    /// Fractional k-server on an HST.
    Kserver(KServerArgs),
    /// The dynamic embedding of a finite metric.
    Embed(EmbedArgs),
    /// Exact offline optima.
    #[command(subcommand)]
    Opt(OptCommand),
    /// Runs the built-in invariant suite; exits nonzero on any failure.
    Verify {
        /// Seeds per randomized check.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
    /// Runs an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Competitive ratio against k for the experiment in a config.
    RatioTable {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated values of k.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,6,8")]
        ks: Vec<usize>,
    },
}

#[derive(clap::Args)]
struct PagingArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// `uniform`, `zipf`, `zipf:<s>` or a file with one weight per line.
    #[arg(long, default_value = "uniform")]
    weights: String,
    #[arg(long)]
    delta: Option<f64>,
    /// A request file or a generator (`uniform`, `zipf:<s>`, `adversarial`,
    /// `cycle`, `random:<seed>:<count>`).
    #[arg(long, default_value = "uniform")]
    requests: String,
    /// Number of generated requests.
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run the pointwise checks and fail when one exceeds its limit.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct KServerArgs {
    /// Tree file; without it a complete tree is built.
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    branching: usize,
    #[arg(long, default_value_t = 4)]
    height: usize,
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
    #[arg(long, default_value_t = 8.0)]
    top_weight: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Variant::Weighted)]
    variant: Variant,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// A request file of leaf indices or a generator, as for `paging`.
    #[arg(long, default_value = "uniform")]
    requests: String,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Level::None)]
    verify_level: Level,
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EmbedArgs {
    /// Metric file; without it `--points` random points in the unit square.
    #[arg(long)]
    metric: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    points: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    tau: u32,
    #[arg(long, default_value = "uniform")]
    requests: String,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::FullPipeline)]
    mode: Mode,
    /// Monte Carlo trials per pair for `stretch-mc`.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OptCommand {
    /// Offline k-server on a metric file.
    Kserver {
        #[arg(long)]
        metric: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        requests: PathBuf,
        /// Initial server points; defaults to `0..k`.
        #[arg(long, value_delimiter = ',')]
        initial: Option<Vec<usize>>,
    },
    /// Offline weighted paging.
    Paging {
        #[arg(long, default_value = "uniform")]
        weights: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        requests: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Combinatorial,
    Cardinality,
    Weighted,
}

impl From<Variant> for PotentialVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Combinatorial => Self::Combinatorial,
            Variant::Cardinality => Self::Cardinality,
            Variant::Weighted => Self::Weighted,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    None,
    Fast,
    Full,
}

impl From<Level> for VerifyLevel {
    fn from(v: Level) -> Self {
        match v {
            Level::None => Self::None,
            Level::Fast => Self::Fast,
            Level::Full => Self::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    StretchMc,
    MirrorOpt,
    FullPipeline,
}

/// Where the requests of a run come from.
enum Source {
    Fixed(Vec<usize>),
    Adversarial(usize),
}

fn request_source(arg: &str, n: usize, k: usize, count: usize, seed: u64) -> Result<Source> {
    if let Some(rest) = arg.strip_prefix("random:") {
        let (s, c) = rest.split_once(':').context("expected random:<seed>:<count>")?;
        let seq = generate_requests(&GeneratorSpec::Uniform, n, k, c.parse()?, s.parse()?)?;
        return Ok(Source::Fixed(seq.ids));
    }
    let spec = match arg.parse::<GeneratorSpec>() {
        Ok(spec) => spec,
        Err(_) if Path::new(arg).exists() => {
            let seq = read_trace(Path::new(arg))?;
            seq.check_range(n)?;
            return Ok(Source::Fixed(seq.ids));
        }
        Err(e) => bail!("`{arg}` is neither a request file nor a generator: {e}"),
    };
    if spec.is_adaptive() {
        return Ok(Source::Adversarial(count));
    }
    Ok(Source::Fixed(generate_requests(&spec, n, k, count, seed)?.ids))
}

fn report_checks(checks: &[Check]) -> bool {
    let mut ok = true;
    for c in checks {
        let mark = if c.passed() { "ok  " } else { "FAIL" };
        println!("  {mark} {:<24} {:>12.3e}  (limit {:.1e})", c.name, c.value, c.limit);
        ok &= c.passed();
    }
    ok
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_paging(a: &PagingArgs) -> Result<bool> {
    let inst = PagingInstance::new(paging_weights(&a.weights, a.n)?, a.k, a.delta)?;
    let run = match request_source(&a.requests, a.n, a.k, a.count, a.seed)? {
        Source::Fixed(reqs) => {
            let cache = default_initial_cache(a.n, a.k, &reqs);
            run_paging_adaptive(&inst, &cache, reqs.len(), |t, _| reqs[t], a.verify)?
        }
        Source::Adversarial(count) => {
            let cache = default_initial_cache(a.n, a.k, &[]);
            run_paging_adaptive(&inst, &cache, count, |_, x| adversarial_page(x), a.verify)?
        }
    };
    println!("requests          {}", run.requests.len());
    println!("delta             {}", inst.delta());
    println!("fractional cost   {:.6}", run.fractional_into_cost);
    println!("rounded cost      {:.6}", run.alg_cost);
    println!("offline optimum   {:.6}", run.opt_cost);
    println!("ratio             {:.4}", run.ratio);
    let ok = match &run.checks {
        Some(c) => report_checks(&paging_checks(c)),
        None => true,
    };
    let mut csv = String::from("t,page,duration,phases,into_cost,fetch_cost\n");
    for (t, r) in run.records.iter().enumerate() {
        let _ = writeln!(csv, "{t},{},{:.12e},{},{:.12e},{:.12e}", r.page, r.duration, r.phases, r.into_cost, r.fetch_cost);
    }
    write_out(&a.csv_out, &csv)?;
    Ok(ok)
}

fn cmd_kserver(a: &KServerArgs) -> Result<bool> {
    let tree = match &a.tree {
        Some(p) => HstTree::parse(&fs::read_to_string(p)?)?.normalized()?,
        None => HstTree::complete(a.branching, a.height, a.tau, a.top_weight)?,
    };
    let leaves = tree.leaves().len();
    let verify: VerifyLevel = a.verify_level.into();
    let cfg = KServerConfig { variant: a.variant.into(), delta: a.delta, eps: a.eps, verify, ..KServerConfig::default() };
    let run = match request_source(&a.requests, leaves, a.k, a.count, a.seed)? {
        Source::Fixed(reqs) => run_kserver_adaptive(&tree, a.k, reqs.len(), |t, _| reqs[t], &cfg)?,
        Source::Adversarial(count) => run_kserver_adaptive(
            &tree,
            a.k,
            count,
            |_, alg| {
                let mass: Vec<f64> = alg.tree().leaves().iter().map(|&v| alg.placement()[v]).collect();
                adversarial_leaf(&mass)
            },
            &cfg,
        )?,
    };
    println!("leaves            {leaves}");
    println!("requests          {}", run.requests.len());
    println!("fractional cost   {:.6}", run.fractional_cost);
    println!("rounded variation {:.6}", run.rounded_variation);
    println!("algorithm cost    {:.6}", run.alg_cost);
    println!("offline optimum   {:.6}", run.opt_cost);
    println!("ratio             {:.4}", run.ratio);
    let mut checks = run.dynamics.as_ref().map(dynamics_checks).unwrap_or_default();
    checks.extend(run.depth.as_ref().map(depth_checks).unwrap_or_default());
    let ok = report_checks(&checks);
    let mut csv = String::from("t,leaf,duration,steps,fractional_cost,rounded_variation,transport_cost\n");
    for (t, l) in run.logs.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{t},{},{:.12e},{},{:.12e},{:.12e},{:.12e}",
            l.leaf, l.duration, l.steps, l.fractional_cost, l.rounded_variation, l.transport_cost
        );
    }
    write_out(&a.csv_out, &csv)?;
    Ok(ok)
}

fn cmd_embed(a: &EmbedArgs) -> Result<bool> {
    let metric = match &a.metric {
        Some(p) => FiniteMetric::parse(&fs::read_to_string(p)?)?,
        None => FiniteMetric::random_euclidean(a.points, 2, &mut seeded_rng(a.seed ^ 0x6d65_7472_6963))?,
    };
    let n = metric.len();
    let reqs = match request_source(&a.requests, n, a.k, a.count, a.seed)? {
        Source::Fixed(r) => r,
        Source::Adversarial(_) => bail!("the embedding does not support adaptive requests"),
    };
    let rho0: Vec<usize> = (0..a.k.min(n)).collect();
    let ok;
    let csv = match a.mode {
        Mode::StretchMc => {
            let Some(&y) = reqs.last() else { bail!("stretch-mc needs at least one request") };
            let depth = EmbedderState::new(&metric, a.k, a.tau, a.seed)?.depth();
            let mut csv = String::from("x,y,level,distance,estimate,stderr,bound,within\n");
            let mut outside = 0;
            for x in (0..n).filter(|&x| x != y) {
                for j in 1..=depth.min(3) {
                    let e = separation_probability_mc(&metric, a.k, a.tau, &reqs, j, (x, y), a.trials, a.seed)?;
                    outside += usize::from(!e.within_bound());
                    let _ = writeln!(
                        csv,
                        "{x},{y},{j},{:.12e},{:.6e},{:.6e},{:.6e},{}",
                        metric.get(x, y),
                        e.estimate,
                        e.stderr,
                        e.bound,
                        e.within_bound()
                    );
                }
            }
            println!("pairs outside bound + 3 se: {outside}");
            ok = outside == 0;
            csv
        }
        Mode::MirrorOpt => {
            let r = mirrored_opt_cost(&metric, a.k, a.tau, &reqs, &rho0, a.seed)?;
            println!("depth M           {}", r.depth);
            println!("offline optimum   {:.6}", r.opt_cost);
            println!("reset cost        {:.6}", r.reset_cost);
            println!("insertion cost    {:.6}", r.insertion_cost);
            println!("move cost         {:.6}", r.move_cost);
            println!("normalized ratio  {:.4}", r.normalized_ratio(a.k));
            println!("reset excess      {:.4}", r.reset_excess);
            ok = r.reset_excess <= 0.0;
            format!(
                "depth,opt_cost,reset_cost,insertion_cost,move_cost,reset_excess\n{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.depth, r.opt_cost, r.reset_cost, r.insertion_cost, r.move_cost, r.reset_excess
            )
        }
        Mode::FullPipeline => {
            let pc = PipelineConfig { tau: a.tau, seed: a.seed, ..PipelineConfig::default() };
            let r = compose_full_pipeline(&metric, a.k, &reqs, &rho0, &pc)?;
            println!("served            {} of {}", r.served, reqs.len());
            println!("chain leaves      {}", r.leaves);
            println!("algorithm cost    {:.6}", r.alg_cost);
            println!("offline optimum   {:.6}", r.opt_cost);
            println!("ratio             {:.4}", r.ratio);
            println!("invalid services  {}", r.invalid_services);
            ok = r.invalid_services == 0 && r.completed;
            format!(
                "served,completed,leaves,alg_cost,opt_cost,ratio,invalid_services\n{},{},{},{:.12e},{:.12e},{:.12e},{}\n",
                r.served, r.completed, r.leaves, r.alg_cost, r.opt_cost, r.ratio, r.invalid_services
            )
        }
    };
    write_out(&a.csv_out, &csv)?;
    Ok(ok)
}

fn cmd_opt(c: &OptCommand) -> Result<bool> {
    match c {
        OptCommand::Kserver { metric, k, requests, initial } => {
            let m = FiniteMetric::parse(&fs::read_to_string(metric)?)?;
            let rows: Vec<Vec<f64>> = m.rows().iter().map(|r| r.iter().map(|v| v * m.scale()).collect()).collect();
            let d = DistanceMatrix::from_rows(&rows)?;
            let seq = read_trace(requests)?;
            seq.check_range(d.len())?;
            let rho0 = initial.clone().unwrap_or_else(|| (0..*k).collect());
            let sol = opt_kserver_flow(&d, *k, &seq.ids, &rho0)?;
            println!("cost {:.9}", sol.cost);
            for mv in &sol.moves {
                println!("t={} server {} {} -> {}", mv.t, mv.server, mv.from, mv.to);
            }
        }
        OptCommand::Paging { weights, n, k, requests } => {
            let w = paging_weights(weights, *n)?;
            let seq = read_trace(requests)?;
            seq.check_range(*n)?;
            let cache = default_initial_cache(*n, *k, &seq.ids);
            println!("cost {:.9}", opt_weighted_paging(&w, *k, &seq.ids, &cache)?);
            if w.iter().all(|&x| x == w[0]) {
                println!("belady misses {}", belady_misses(*n, *k, &seq.ids, &cache)?);
            }
        }
    }
    Ok(true)
}

fn verify_line(name: &str, ok: bool, detail: &str) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn cmd_verify(seeds: u64) -> Result<bool> {
    let mut all = true;
    let mut rng = seeded_rng(7);

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let gens: Vec<Vec<f64>> = (0..rng.gen_range(1..=n + 2)).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let m = LocalMetric::new((0..n).map(|_| rng.gen_range(0.1..10.0)).collect())?;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let cone = GeneratedCone::new(gens.clone())?;
        let (u, v) = moreau_decompose(&cone, &x, &m)?;
        worst = worst.max(m.inner(&u, &v).abs());
        for g in &gens {
            worst = worst.max(m.inner(&v, g));
        }
    }
    all &= verify_line("moreau", worst <= 1e-8, &format!("200 cases, worst residual {worst:.1e}"));

    let mut gaps = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=5);
        let pts: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
        let d = DistanceMatrix::from_fn(n, |i, j| (pts[i] - pts[j]).abs() + if i == j { 0.0 } else { 0.5 })?;
        let k = rng.gen_range(1..n);
        let reqs: Vec<usize> = (0..4).map(|_| rng.gen_range(0..n)).collect();
        let rho0: Vec<usize> = (0..k).collect();
        let flow = opt_kserver_flow(&d, k, &reqs, &rho0)?.cost;
        let brute = opt_kserver_bruteforce(&d, k, &reqs, &rho0)?;
        gaps += usize::from((flow - brute).abs() > 1e-6 * brute.max(1.0));
    }
    all &= verify_line("offline-opt", gaps == 0, &format!("100 instances, {gaps} flow/brute-force mismatches"));

    let seed_list: Vec<u64> = (0..seeds).collect();
    let mut experiments = Vec::new();
    for (alg, gen) in [
        (Algorithm::Paging, "uniform"),
        (Algorithm::Paging, "adversarial"),
        (Algorithm::Kserver, "uniform"),
        (Algorithm::Kserver, "adversarial"),
        (Algorithm::Pipeline, "uniform"),
    ] {
        let mut cfg = ExperimentConfig::new(alg, seed_list.clone());
        cfg.verify = "full".into();
        cfg.requests.generator = gen.into();
        cfg.requests.count = match alg {
            Algorithm::Paging => 200,
            _ => 60,
        };
        cfg.kserver.height = 3;
        experiments.push((format!("{}/{gen}", alg.name()), cfg));
    }
    for (name, cfg) in experiments {
        let s = run_experiment(&cfg)?;
        let worst = s.rows.iter().filter_map(|r| r.worst_check()).max_by(|a, b| a.slack().total_cmp(&b.slack()));
        let detail = match worst {
            Some(c) => format!("{} seeds, max ratio {:.3}, tightest check {} at {:.1e}", s.rows.len(), s.max_ratio(), c.name, c.slack()),
            None => format!("{} seeds, max ratio {:.3}", s.rows.len(), s.max_ratio()),
        };
        all &= verify_line(&name, s.passed(), &detail);
    }
    Ok(all)
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    cfg.apply_env()?;
    Ok(cfg)
}

fn cmd_run(path: &Path) -> Result<bool> {
    let cfg = load_config(path)?;
    let summary = run_experiment(&cfg)?;
    print!("{}", summary.summary_text());
    for p in summary.write(&cfg.output.dir, &cfg.output.name)? {
        println!("wrote {}", p.display());
    }
    Ok(summary.passed())
}

fn cmd_ratio_table(path: &Path, ks: &[usize]) -> Result<bool> {
    let cfg = load_config(path)?;
    let table = competitive_ratio_table(&cfg, ks)?;
    print!("{}", table.summary_text());
    fs::create_dir_all(&cfg.output.dir)?;
    let out = cfg.output.dir.join(format!("{}_ratio.csv", cfg.output.name));
    fs::write(&out, table.to_csv())?;
    println!("wrote {}", out.display());
    Ok(table.rows.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Paging(a) => cmd_paging(a),
        Command::Kserver(a) => cmd_kserver(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Opt(c) => cmd_opt(c),
        Command::Verify { seeds } => cmd_verify(*seeds),
        Command::Run { config } => cmd_run(config),
        Command::RatioTable { config, ks } => cmd_ratio_table(config, ks),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
