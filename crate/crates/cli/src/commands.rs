use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use volterra_ldp::config::parse_config;
use volterra_ldp::dynamics::{DiscreteModel, SimulationOptions};
use volterra_ldp::model::{validate_spec, Grid, ModelSpec, PathValues};
use volterra_ldp::rate::{GradientMode, RateResult, SolverOptions};

use crate::args::{
    Cli, Command, ConfigArg, Gradient, GridArgs, LdpArgs, PathRateArgs, RateArgs, ReplayArgs, SimulateArgs,
    SolverArgs, StrikeArgs, TaylorArgs,
};
use crate::manifest::{GridInfo, RunManifest};
use crate::CliError;

/// Bookkeeping for one run: where outputs go and what went into them.
struct Run {
    dir: PathBuf,
    outputs: Vec<String>,
    config: Option<String>,
    grid: Option<GridInfo>,
    seeds: Vec<u64>,
}

impl Run {
    fn write(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn load_spec(&mut self, arg: &ConfigArg) -> Result<ModelSpec, CliError> {
        let text = std::fs::read_to_string(&arg.config)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", arg.config.display())))?;
        let spec = parse_config(&text)?;
        self.config = Some(text);
        Ok(spec)
    }

    /// Loads and validates the model and builds its discretization.
    fn model(&mut self, args: &GridArgs) -> Result<DiscreteModel, CliError> {
        let spec = self.load_spec(&args.config)?;
        let report = validate_spec(&spec);
        if !report.passed() {
            let names: Vec<&str> = report.failures().map(|c| c.name).collect();
            return Err(CliError::Config(format!("model fails validation: {}", names.join(", "))));
        }
        let grid = Grid::new(args.n, spec.horizon)?;
        self.grid = Some(GridInfo {
            n_steps: args.n,
            horizon: spec.horizon,
        });
        let model = DiscreteModel::new(spec, grid)?;
        if args.dump_weights {
            self.write("weights.csv", &model.weights().to_csv())?;
        }
        Ok(model)
    }

    fn solver(&mut self, args: &SolverArgs) -> SolverOptions {
        self.seeds.push(args.seed);
        SolverOptions {
            extra_starts: args.starts,
            seed: args.seed,
            gradient: match args.gradient {
                Gradient::Adjoint => GradientMode::Adjoint,
                Gradient::CentralDifference => GradientMode::CentralDifference,
            },
            ..SolverOptions::default()
        }
    }
}

pub fn run(cli: &Cli, argv: Vec<String>) -> Result<(), CliError> {
    if let Command::Replay(args) = &cli.command {
        return replay(args, &cli.out);
    }
    let start = Instant::now();
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let mut run = Run {
        dir: cli.out.clone(),
        outputs: Vec::new(),
        config: None,
        grid: None,
        seeds: Vec::new(),
    };
    let (name, outcome) = match &cli.command {
        Command::Validate(a) => ("validate", validate(&mut run, a)),
        Command::Rate(a) => ("rate", rate(&mut run, a)),
        Command::PathRate(a) => ("path-rate", path_rate(&mut run, a)),
        Command::Simulate(a) => ("simulate", simulate(&mut run, a)),
        Command::LdpCheck(a) => ("ldp-check", ldp_check(&mut run, a)),
        Command::Strike(a) => ("strike", strike(&mut run, a)),
        Command::Taylor(a) => ("taylor", taylor(&mut run, a)),
        Command::Replay(_) => unreachable!("handled above"),
    };
    let status = match &outcome {
        Ok(()) => "ok",
        Err(e) if e.exit_code() == 3 => "numerical-failure",
        // nothing worth reproducing
        Err(_) => return outcome,
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: name.into(),
        argv,
        config: run.config,
        grid: run.grid,
        seeds: run.seeds,
        threads: cli.threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: run.outputs,
        status: status.into(),
    };
    manifest.write(&cli.out)?;
    outcome
}

fn replay(args: &ReplayArgs, out: &Path) -> Result<(), CliError> {
    let m = RunManifest::read(&args.manifest)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let snapshot = match &m.config {
        Some(text) => {
            let p = out.join("config.snapshot");
            std::fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Some(p)
        }
        None => None,
    };
    let mut argv = m.replay_argv(snapshot.as_deref());
    argv.push("--out".into());
    argv.push(out.display().to_string());
    let cli = <Cli as clap::Parser>::try_parse_from(std::iter::once("vldp".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Config(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Config("manifest records a replay".into()));
    }
    run(&cli, argv)
}

fn validate(run: &mut Run, args: &ConfigArg) -> Result<(), CliError> {
    let spec = run.load_spec(args)?;
    let report = validate_spec(&spec);
    let mut csv = String::from("check,status,detail\n");
    for c in &report.checks {
        writeln!(csv, "{},{},\"{}\"", c.name, c.status, c.detail.replace('"', "\"\"")).expect("string write");
    }
    let flag = report.special_case.map_or("none", |s| s.flag());
    writeln!(csv, "special_case,{},\"\"", flag).expect("string write");
    run.write("validation.csv", &csv)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(CliError::Config(format!("model fails validation: {}", names.join(", "))))
    }
}

fn not_converged(what: &str, r: &RateResult) -> Result<(), CliError> {
    if r.converged {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "{what}: optimizer stopped before convergence (gradient norm {:e})",
            r.gradient_norm
        )))
    }
}

fn rate(run: &mut Run, args: &RateArgs) -> Result<(), CliError> {
    let model = run.model(&args.grid)?;
    let opts = run.solver(&args.solver);
    let r = model.minimize_scalar_rate(args.x, &opts)?;
    let csv = format!(
        "x,rate,converged,gradient_norm,n_starts,touches_zero\n{:e},{:e},{},{:e},{},{}\n",
        args.x, r.value, r.converged, r.gradient_norm, r.n_starts, r.touches_zero
    );
    run.write("rate.csv", &csv)?;
    run.write("minimizer.csv", &r.minimizer_csv())?;
    println!("I_T({}) = {:.10}", args.x, r.value);
    println!(
        "converged {}  gradient norm {:.3e}  starts {}",
        r.converged, r.gradient_norm, r.n_starts
    );
    not_converged("rate", &r)
}

fn read_target(path: &Path, grid: Grid) -> Result<PathValues, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read target {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (k == 0 && line.starts_with('t')) {
            continue;
        }
        let g = line
            .split(',')
            .nth(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| CliError::Config(format!("{}:{}: expected `t,g`", path.display(), k + 1)))?;
        values.push(g);
    }
    Ok(PathValues::new(grid, values)?)
}

fn path_rate(run: &mut Run, args: &PathRateArgs) -> Result<(), CliError> {
    let model = run.model(&args.grid)?;
    let opts = run.solver(&args.solver);
    let grid = *model.grid();
    let g = match (args.slope, &args.target) {
        (Some(s), _) => PathValues::from_fn(grid, |t| s * t),
        (None, Some(p)) => read_target(p, grid)?,
        (None, None) => return Err(CliError::Config("give --slope or --target".into())),
    };
    let r = model.minimize_path_rate(&g, &opts)?;
    let csv = format!(
        "rate,converged,gradient_norm,n_starts\n{:e},{},{:e},{}\n",
        r.value, r.converged, r.gradient_norm, r.n_starts
    );
    run.write("path_rate.csv", &csv)?;
    run.write("minimizer.csv", &r.minimizer_csv())?;
    println!("Q(g) = {:.10}", r.value);
    println!(
        "converged {}  gradient norm {:.3e}  starts {}",
        r.converged, r.gradient_norm, r.n_starts
    );
    not_converged("path rate", &r)
}

fn simulate(run: &mut Run, args: &SimulateArgs) -> Result<(), CliError> {
    let model = run.model(&args.grid)?;
    run.seeds.push(args.seed);
    let batch = model.simulate_batch(
        args.eps,
        args.paths,
        args.seed,
        SimulationOptions {
            full_paths: args.full_paths,
        },
    )?;
    run.write("paths.csv", &batch.to_csv())?;
    let x = &batch.terminal_logprice;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    println!(
        "{} paths at eps {}: mean x_T {mean:.6}, sd {:.6}",
        batch.n_paths,
        args.eps,
        var.sqrt()
    );
    Ok(())
}

fn ldp_check(run: &mut Run, args: &LdpArgs) -> Result<(), CliError> {
    let model = run.model(&args.grid)?;
    let opts = run.solver(&args.solver);
    let r = model.minimize_scalar_rate(args.c, &opts)?;
    let study = model.ldp_convergence_study(args.c, &args.eps, args.paths, args.solver.seed, Some(-r.value))?;
    run.write("ldp.csv", &study.to_csv())?;

    let mut csv = String::from("key,value\n");
    let mut kv = |k: &str, v: String| writeln!(csv, "{k},{v}").expect("string write");
    kv("threshold", format!("{:e}", args.c));
    kv("rate", format!("{:e}", r.value));
    kv("rate_converged", r.converged.to_string());
    kv("valid_rows", study.rows.iter().filter(|row| row.valid).count().to_string());
    if let Some(s) = &study.summary {
        kv("intercept", format!("{:e}", s.intercept));
        kv("linear_intercept", format!("{:e}", s.linear.intercept()));
        kv("corrected_intercept", format!("{:e}", s.corrected.intercept()));
        if let Some(q) = &s.corrected_quadratic {
            kv("corrected_quadratic_intercept", format!("{:e}", q.intercept()));
        }
        if let Some(e) = s.relative_error {
            kv("relative_error", format!("{e:e}"));
        }
        kv("increasing_as_eps_decreases", s.increasing_as_eps_decreases.to_string());
        if let Some(g) = s.gap_shrinking {
            kv("gap_shrinking", g.to_string());
        }
    }
    run.write("ldp_summary.csv", &csv)?;

    println!("I_T({}) = {:.6}", args.c, r.value);
    println!("{:>10} {:>9} {:>8} {:>12} {:>12}", "eps", "paths", "hits", "p_hat", "eps log p");
    for row in &study.rows {
        let e = &row.estimate;
        println!(
            "{:>10} {:>9} {:>8} {:>12.4e} {:>12.6}{}",
            e.epsilon,
            e.n_paths,
            e.hits,
            e.p_hat,
            e.eps_log_p,
            if row.valid { "" } else { "  (too few hits)" }
        );
    }
    println!("{}", study.summary_line());
    not_converged("rate at threshold", &r)?;
    if study.summary.is_none() {
        return Err(CliError::Numerical("fewer than two ladder rows with enough tail hits".into()));
    }
    Ok(())
}

fn strike(run: &mut Run, args: &StrikeArgs) -> Result<(), CliError> {
    let model = run.model(&args.grid)?;
    let opts = run.solver(&args.solver);
    let report = model.scaling_check(&args.cs, &opts)?;
    run.write("scaling.csv", &report.to_csv())?;
    println!("gamma {:.6}  I_T(1) {:.6}", report.gamma, report.i1);
    println!("{:>8} {:>12} {:>12} {:>10}", "c", "rate", "predicted", "deviation");
    for r in &report.rows {
        println!("{:>8} {:>12.6} {:>12.6} {:>10.4}", r.c, r.rate, r.predicted, r.deviation);
    }
    if report.rows.iter().all(|r| r.converged) {
        Ok(())
    } else {
        Err(CliError::Numerical("a rate in the scaling check did not converge".into()))
    }
}

fn taylor(run: &mut Run, args: &TaylorArgs) -> Result<(), CliError> {
    let model = run.model(&args.grid)?;
    let opts = run.solver(&args.solver);
    let mut xs: Vec<f64> = args.xs.iter().flat_map(|&x| [-x.abs(), x.abs()]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let report = model.taylor_check(&xs, &opts)?;
    run.write("taylor.csv", &report.to_csv())?;

    let mut csv = String::from("key,value\n");
    let mut kv = |k: &str, v: String| writeln!(csv, "{k},{v}").expect("string write");
    kv("q", format!("{:e}", report.q));
    kv("q_reference", format!("{:e}", report.q_reference));
    kv("q_relative_error", format!("{:e}", report.q_relative_error));
    kv("r", format!("{:e}", report.r));
    kv("x_min", format!("{:e}", report.x_min));
    kv("slope_max_abs_deviation", format!("{:e}", report.slope_max_abs_deviation));
    kv("slope_relative_deviation", format!("{:e}", report.slope_relative_deviation));
    kv("energy_ratio", format!("{:e}", report.energy_ratio));
    kv("converged", report.converged.to_string());
    run.write("taylor_summary.csv", &csv)?;

    println!(
        "q {:.6} (reference {:.6}, relative error {:.2e})  r {:.4}",
        report.q, report.q_reference, report.q_relative_error, report.r
    );
    println!(
        "minimizer slope at x = {}: relative deviation {:.2e}",
        report.x_min, report.slope_relative_deviation
    );
    if report.converged {
        Ok(())
    } else {
        Err(CliError::Numerical("a rate in the Taylor check did not converge".into()))
    }
}
