mod config;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use config::Config;
use oulab::error::Error as LabError;
use oulab::lyapunov::{check_h_a_mu, check_h_sigma, check_hs_embedding, eval_resolvent_v, eval_v};
use oulab::mc::RunningStats;
use oulab::mehler::{check_m2, mu_hat, sample_mu};
use oulab::pathsim::{dichotomy_experiment, nest_exit_probe, regularity_stats, simulate_path};
use oulab::potential::{
    hitting_balayage, is_excessive, mc_balayage, nest_check, polar_null_set, reduced_fixed_point,
    resolvent, FiniteChain,
};
use oulab::rng::SeedSpec;
use oulab::spectral::CoefVector;
use rand::Rng;
use serde_json::json;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "oulab",
    about = "Numerical laboratory for Levy-driven Ornstein-Uhlenbeck dynamics",
    version
)]
struct Cli {
    /// Experiment configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dot-path override, e.g. --set noise.alpha=0.8 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Omit the timestamp header line (for byte-stable outputs).
    #[arg(long, global = true)]
    no_timestamp: bool,

    /// Parallelism budget for path ensembles.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (default: $OULAB_OUT or the current directory).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured eigenvalue spectrum as CSV.
    Spectrum,
    /// Compare the empirical one-step characteristic function against the
    /// closed form at the configured frequencies.
    CfTest,
    /// Check the semigroup composition law residual on random cases.
    M2Test,
    /// Simulate one path on the configured time grid and write it as CSV.
    Simulate,
    /// Run the truncation dichotomy experiment over gamma2 values.
    Dichotomy,
    /// Estimate Lyapunov level exceedance probabilities along paths.
    NestProbe,
    /// Evaluate v and the Monte Carlo resolvent potential at the start state.
    LyapunovEval,
    /// Check the spectral feasibility inequalities for (a,p).
    CheckHsigma,
    /// Check the drift/noise/moment hypothesis bundle.
    CheckHamu,
    /// Check the Hilbert-Schmidt embedding sums for the configured noise.
    CheckHs,
    /// Finite-state potential-theory laboratory.
    #[command(subcommand)]
    Potlab(PotlabCmd),
}

#[derive(Subcommand)]
enum PotlabCmd {
    /// Invert (alpha I - Q) for a rate matrix given as CSV.
    Resolvent {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Test a vector for alpha-excessivity.
    Excessive {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Comma-separated vector, e.g. --v 1,0.5,0
        #[arg(long)]
        v: String,
    },
    /// Compute the balayage of u on a state set by the chosen method.
    Balayage {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Target set, e.g. --states 0,3-5
        #[arg(long)]
        states: String,
        /// Comma-separated u (default: all ones).
        #[arg(long)]
        u: Option<String>,
        #[arg(long, value_enum, default_value_t = BalayageMethod::Hitting)]
        method: BalayageMethod,
        #[arg(long, default_value_t = 10_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// States from which the given set is unreachable.
    Polar {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        states: String,
    },
    /// Nest diagnostics for an increasing family of state sets.
    Nest {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Semicolon-separated sets, e.g. --subsets 0-10;0-20;0-40
        #[arg(long)]
        subsets: String,
        #[arg(long, default_value_t = 200)]
        n_paths: usize,
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BalayageMethod {
    FixedPoint,
    Hitting,
    Mc,
}

fn main() {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global();
    }
    std::process::exit(match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let (kind, code) = classify(&e);
            let record = json!({ "error": format!("{e:#}"), "kind": kind });
            eprintln!("{record}");
            code
        }
    });
}

/// Exit 1 for validation/configuration problems, 2 for numerical failures.
fn classify(e: &anyhow::Error) -> (&'static str, i32) {
    for cause in e.chain() {
        if let Some(lab) = cause.downcast_ref::<LabError>() {
            return match lab {
                LabError::Numerical { .. } => ("numerical", 2),
                _ => ("validation", 1),
            };
        }
    }
    ("validation", 1)
}

struct Emitter {
    dir: PathBuf,
    hash: String,
    seed: u64,
    timestamp: Option<u64>,
}

impl Emitter {
    fn new(cli: &Cli, cfg: &Config) -> anyhow::Result<Self> {
        let dir = cli
            .output
            .clone()
            .or_else(|| std::env::var_os("OULAB_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let timestamp = if cli.no_timestamp {
            None
        } else {
            Some(
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            )
        };
        Ok(Emitter {
            dir,
            hash: cfg.hash(),
            seed: cfg.run.seed,
            timestamp,
        })
    }

    fn csv(&self, name: &str, columns: &str, rows: &[String]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut f =
            std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(f, "# config-sha256: {}", self.hash)?;
        writeln!(f, "# seed: {}", self.seed)?;
        if let Some(ts) = self.timestamp {
            writeln!(f, "# generated-unix: {ts}")?;
        }
        writeln!(f, "{columns}")?;
        for row in rows {
            writeln!(f, "{row}")?;
        }
        println!("wrote {}", path.display());
        Ok(path)
    }

    fn json(&self, name: &str, report: serde_json::Value) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut doc = json!({
            "config_sha256": self.hash,
            "seed": self.seed,
            "report": report,
        });
        if let Some(ts) = self.timestamp {
            doc["generated_unix"] = json!(ts);
        }
        std::fs::write(&path, format!("{:#}\n", doc))
            .with_context(|| format!("creating {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = Config::load(cli.config.as_deref(), &cli.set)?;
    let emit = Emitter::new(cli, &cfg)?;
    match &cli.command {
        Command::Spectrum => cmd_spectrum(&cfg, &emit),
        Command::CfTest => cmd_cf_test(&cfg, &emit),
        Command::M2Test => cmd_m2_test(&cfg, &emit),
        Command::Simulate => cmd_simulate(&cfg, &emit),
        Command::Dichotomy => cmd_dichotomy(&cfg, &emit),
        Command::NestProbe => cmd_nest_probe(&cfg, &emit),
        Command::LyapunovEval => cmd_lyapunov_eval(&cfg, &emit),
        Command::CheckHsigma => cmd_check_hsigma(&cfg, &emit),
        Command::CheckHamu => cmd_check_hamu(&cfg, &emit),
        Command::CheckHs => cmd_check_hs(&cfg, &emit),
        Command::Potlab(sub) => cmd_potlab(sub, &emit),
    }
}

fn x0(cfg: &Config, n: usize) -> anyhow::Result<CoefVector> {
    match &cfg.run.x0 {
        Some(v) => {
            if v.len() != n {
                Err(anyhow!(LabError::validation(format!(
                    "run.x0 has {} entries, model.n = {n}",
                    v.len()
                ))))
            } else {
                Ok(CoefVector(v.clone()))
            }
        }
        None => Ok(CoefVector::zeros(n)),
    }
}

fn grid(cfg: &Config) -> Vec<f64> {
    (0..=cfg.run.steps)
        .map(|k| cfg.run.t * k as f64 / cfg.run.steps as f64)
        .collect()
}

fn cmd_spectrum(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let model = cfg.model()?;
    let rows: Vec<String> = model
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{},{}", i + 1, l))
        .collect();
    emit.csv("spectrum.csv", "k,lambda_k", &rows)?;
    Ok(())
}

fn cmd_cf_test(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let model = cfg.model()?;
    let noise = cfg.noise()?;
    let t = cfg.run.t;
    let n = model.truncation();
    let seed = SeedSpec::new(cfg.run.seed);
    let xis: Vec<CoefVector> = cfg
        .run
        .frequencies
        .iter()
        .enumerate()
        .map(|(j, &f)| CoefVector::unit(n, (j % n) + 1, f))
        .collect();
    let mut stats = vec![RunningStats::new(); xis.len()];
    for i in 0..cfg.run.n_samples as u64 {
        let z = sample_mu(&model, &noise, t, cfg.run.refinement, &seed, i, 0)?;
        for (s, xi) in stats.iter_mut().zip(&xis) {
            s.push(xi.dot(&z).cos());
        }
    }
    let mut rows = Vec::new();
    let mut all_pass = true;
    for ((j, s), xi) in stats.iter().enumerate().zip(&xis) {
        let exact = mu_hat(&model, &noise, t, xi)?;
        let e = s.estimate();
        let pass = (e.value - exact).abs() <= 3.0 * e.std_error;
        all_pass &= pass;
        rows.push(format!(
            "{},{},{},{},{},{}",
            (j % n) + 1,
            cfg.run.frequencies[j],
            e.value,
            e.std_error,
            exact,
            pass
        ));
        println!(
            "mode {} freq {}: empirical {:.6} +- {:.6}, exact {:.6} [{}]",
            (j % n) + 1,
            cfg.run.frequencies[j],
            e.value,
            e.std_error,
            exact,
            if pass { "ok" } else { "FAIL" }
        );
    }
    emit.csv(
        "cf_test.csv",
        "mode,frequency,empirical,std_error,exact,pass",
        &rows,
    )?;
    if !all_pass {
        return Err(anyhow!(LabError::Numerical {
            context: "empirical CF outside 3 standard errors",
            achieved: f64::NAN,
            target: 0.0,
        }));
    }
    Ok(())
}

fn cmd_m2_test(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let model = cfg.model()?;
    let noise = cfg.noise()?;
    let n = model.truncation();
    let tol = if cfg.noise.family == "elliptical" {
        cfg.run.m2_tolerance_elliptical
    } else {
        cfg.run.m2_tolerance_diagonal
    };
    let seed = SeedSpec::new(cfg.run.seed).with_experiment(2);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for case in 0..cfg.run.n_cases as u64 {
        let mut rng = seed.stream(case, 0, 0);
        let t = rng.gen_range(0.05..2.0);
        let s = rng.gen_range(0.05..2.0);
        let xi = CoefVector((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let r = check_m2(&model, &noise, t, s, &xi)?;
        worst = worst.max(r);
        rows.push(format!("{case},{t},{s},{r}"));
    }
    emit.csv("m2_test.csv", "case,t,s,residual", &rows)?;
    println!("worst residual {worst:e} (tolerance {tol:e})");
    if worst > tol {
        return Err(anyhow!(LabError::Numerical {
            context: "composition-law residual above tolerance",
            achieved: worst,
            target: tol,
        }));
    }
    Ok(())
}

fn cmd_simulate(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let model = cfg.model()?;
    let noise = cfg.noise()?;
    let x = x0(cfg, model.truncation())?;
    let times = grid(cfg);
    let seed = SeedSpec::new(cfg.run.seed);
    let path = simulate_path(&model, &noise, &x, &times, cfg.run.refinement, &seed, 0)?;
    let mut rows = Vec::new();
    for (t, coefs) in path.times.iter().zip(&path.coefs) {
        for (k, c) in coefs.0.iter().enumerate() {
            rows.push(format!("{},{},{}", t, k + 1, c));
        }
    }
    emit.csv("path.csv", "t,k,coef", &rows)?;
    let stats = regularity_stats(&path, 1)?;
    println!(
        "max_jump {} oscillation {}",
        stats.max_jump, stats.oscillation
    );
    Ok(())
}

fn cmd_dichotomy(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let noise = cfg.noise()?;
    let rows = dichotomy_experiment(
        noise.alpha,
        &cfg.run.gamma2_list,
        &cfg.run.n_list,
        cfg.run.t,
        cfg.run.steps,
        cfg.run.n_paths,
        &SeedSpec::new(cfg.run.seed),
    )?;
    let mut out = Vec::new();
    for row in &rows {
        for &(n, m) in &row.medians {
            out.push(format!(
                "{},{},{},{},{:?}",
                row.gamma2, n, m, row.slope, row.regime
            ));
        }
        println!(
            "gamma2 {}: slope {:.4} regime {:?}",
            row.gamma2, row.slope, row.regime
        );
    }
    emit.csv(
        "dichotomy.csv",
        "gamma2,n,median_max_jump,slope,regime",
        &out,
    )?;
    Ok(())
}

fn cmd_nest_probe(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let model = cfg.model()?;
    let noise = cfg.noise()?;
    let params = cfg.lyapunov_params(&model, &noise)?;
    let x = x0(cfg, model.truncation())?;
    let rows = nest_exit_probe(
        &model,
        &noise,
        &params,
        &x,
        &cfg.run.levels,
        cfg.run.t,
        cfg.run.steps,
        cfg.run.n_paths,
        cfg.run.v_budget,
        cfg.run.refinement,
        &SeedSpec::new(cfg.run.seed),
    )?;
    let out: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{}", r.level, r.exceedance, r.std_error))
        .collect();
    emit.csv("nest_probe.csv", "level,exceedance,stderr", &out)?;
    for r in &rows {
        println!(
            "level {}: exceedance {:.4} +- {:.4}",
            r.level, r.exceedance, r.std_error
        );
    }
    Ok(())
}

fn cmd_lyapunov_eval(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let model = cfg.model()?;
    let noise = cfg.noise()?;
    let params = cfg.lyapunov_params(&model, &noise)?;
    let x = match &cfg.run.x0 {
        Some(_) => x0(cfg, model.truncation())?,
        None => CoefVector::unit(model.truncation(), 1, 1.0),
    };
    let v = eval_v(&x, &model, &params)?;
    let pot = eval_resolvent_v(
        &x,
        &model,
        &noise,
        &params,
        cfg.run.v_budget,
        cfg.run.refinement,
        &SeedSpec::new(cfg.run.seed),
    )?;
    println!(
        "v(x) = {v}, V(x) ~ {} +- {} (diverging: {})",
        pot.estimate.value, pot.estimate.std_error, pot.diverging
    );
    emit.json("lyapunov_eval.json", json!({ "v": v, "potential": pot }))?;
    Ok(())
}

fn cmd_check_hsigma(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let gamma1 = cfg.noise.gamma1.ok_or_else(|| {
        anyhow!(LabError::validation(
            "check-hsigma needs the power-law exponent noise.gamma1"
        ))
    })?;
    let report = check_h_sigma(cfg.model.d, cfg.noise.alpha, gamma1, cfg.noise.gamma2, None)?;
    println!(
        "feasible: {} witness: {:?}",
        report.feasible, report.witness
    );
    emit.json("check_hsigma.json", serde_json::to_value(&report)?)?;
    Ok(())
}

fn cmd_check_hamu(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let model = cfg.model()?;
    let noise = cfg.noise()?;
    let params = cfg.lyapunov_params(&model, &noise)?;
    let report = check_h_a_mu(&model, &noise, &params, cfg.lyapunov.beta)?;
    println!(
        "feasible: {} witness: {:?}",
        report.feasible, report.witness
    );
    for (k, v) in &report.condition_flags {
        println!("  {k}: {v}");
    }
    emit.json("check_hamu.json", serde_json::to_value(&report)?)?;
    Ok(())
}

fn cmd_check_hs(cfg: &Config, emit: &Emitter) -> anyhow::Result<()> {
    let model = cfg.model()?;
    let noise = cfg.noise()?;
    let report = check_hs_embedding(&model, &noise, cfg.run.t)?;
    println!(
        "gaussian part finite: {}, stable part finite: {}",
        report.n1_finite, report.n2_finite
    );
    emit.json("check_hs.json", serde_json::to_value(&report)?)?;
    Ok(())
}

/// Parse "0,3-5,9" into sorted state indices.
fn parse_states(spec: &str) -> anyhow::Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
            if b < a {
                return Err(anyhow!(LabError::validation(format!(
                    "empty state range {part:?}"
                ))));
            }
            out.extend(a..=b);
        } else {
            out.push(part.trim().parse()?);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn parse_vector(spec: &str) -> anyhow::Result<Vec<f64>> {
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("{e}: {s:?}")))
        .collect()
}

fn load_chain(path: &Path) -> anyhow::Result<FiniteChain> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(FiniteChain::read_csv(std::io::BufReader::new(f))?)
}

fn cmd_potlab(sub: &PotlabCmd, emit: &Emitter) -> anyhow::Result<()> {
    match sub {
        PotlabCmd::Resolvent { chain, alpha } => {
            let c = load_chain(chain)?;
            let u = resolvent(&c, *alpha)?;
            let rows: Vec<Vec<f64>> = (0..c.n_states())
                .map(|i| (0..c.n_states()).map(|j| u[(i, j)]).collect())
                .collect();
            emit.json(
                "potlab_resolvent.json",
                json!({ "alpha": alpha, "resolvent": rows }),
            )?;
        }
        PotlabCmd::Excessive { chain, alpha, v } => {
            let c = load_chain(chain)?;
            let vv = parse_vector(v)?;
            let report = is_excessive(&c, *alpha, &vv)?;
            println!(
                "excessive: {} witness: {:?}",
                report.excessive, report.witness
            );
            emit.json("potlab_excessive.json", serde_json::to_value(report)?)?;
        }
        PotlabCmd::Balayage {
            chain,
            alpha,
            states,
            u,
            method,
            n_paths,
            seed,
        } => {
            let c = load_chain(chain)?;
            let a = parse_states(states)?;
            let uu = match u {
                Some(s) => parse_vector(s)?,
                None => vec![1.0; c.n_states()],
            };
            let result = match method {
                BalayageMethod::FixedPoint => reduced_fixed_point(&c, *alpha, &a, &uu)?,
                BalayageMethod::Hitting => hitting_balayage(&c, *alpha, &a, &uu)?,
                BalayageMethod::Mc => {
                    mc_balayage(&c, *alpha, &a, &uu, *n_paths, None, &SeedSpec::new(*seed))?
                }
            };
            println!("values: {:?}", result.values);
            emit.json("potlab_balayage.json", serde_json::to_value(&result)?)?;
        }
        PotlabCmd::Polar { chain, states } => {
            let c = load_chain(chain)?;
            let a = parse_states(states)?;
            let null = polar_null_set(&c, &a)?;
            println!("null set: {null:?}");
            emit.json("potlab_polar.json", json!({ "null_set": null }))?;
        }
        PotlabCmd::Nest {
            chain,
            alpha,
            subsets,
            n_paths,
            horizon,
            seed,
        } => {
            let c = load_chain(chain)?;
            let sets: anyhow::Result<Vec<Vec<usize>>> =
                subsets.split(';').map(parse_states).collect();
            let report = nest_check(
                &c,
                *alpha,
                &sets?,
                *n_paths,
                *horizon,
                &SeedSpec::new(*seed),
            )?;
            for r in &report.rows {
                println!(
                    "level {}: balayage_max {:e} exit_median {}",
                    r.level, r.balayage_max, r.exit_median
                );
            }
            println!("is_nest: {}", report.is_nest);
            emit.json("potlab_nest.json", serde_json::to_value(&report)?)?;
        }
    }
    Ok(())
}
