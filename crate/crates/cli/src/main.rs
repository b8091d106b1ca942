use std::path::PathBuf;
use std::process::ExitCode;

use bootamg::bench::{
    build_final_method, format_hierarchy, load_problem, run_benchmark, solve_ones, MetricsRow, Problem, RunConfig,
};
use bootamg::bootstrap::bootstrap_run;
use bootamg::error::AmgError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bootamg", version, about = "Bootstrap AMG with multi-vector prolongators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark protocol and write the metrics CSV
    Bench(Common),
    /// Solve A x = 1 for one Matrix Market matrix
    Solve(Common),
    /// Print the multi-vector hierarchy structure
    Info(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matrix Market input (overrides the configured problem)
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Problem name: ani1, ani2 or mtx:<path>
    #[arg(long)]
    problem: Option<String>,
    /// Smooth-vector counts, comma separated
    #[arg(long)]
    nsv: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, AmgError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            cfg.set("problem", p)?;
        }
        if let Some(m) = &self.matrix {
            cfg.problem = Problem::Mtx(m.clone());
        }
        if let Some(nsv) = &self.nsv {
            cfg.set("nsv", nsv)?;
        }
        if let Some(g) = self.grid {
            cfg.grid_n = g;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn bench(args: &Common) -> Result<(), AmgError> {
    let cfg = args.config()?;
    let out = run_benchmark(&cfg)?;
    println!("{}", MetricsRow::CSV_HEADER);
    for row in &out.rows {
        println!("{}", row.csv_line());
    }
    Ok(())
}

fn solve(args: &Common) -> Result<(), AmgError> {
    let mut cfg = args.config()?;
    if args.matrix.is_none() && !matches!(cfg.problem, Problem::Mtx(_)) {
        return Err(AmgError::Config("solve needs --matrix or a mtx: problem".into()));
    }
    let nsv = *cfg.nsv.iter().max().unwrap();
    cfg.nsv = vec![nsv];
    let a = load_problem(&cfg)?;
    let composite = bootstrap_run(&a, None, &cfg.bootstrap_params())?;
    let method = build_final_method(&a, &composite, nsv, cfg.multivector_params())?;
    let (_, report, ts) = solve_ones(&a, &method.hierarchy, cfg.pcg_options())?;
    println!("n {}", a.n_rows());
    println!("stages {}", composite.components.len());
    println!("nl {}", method.multivector.nl());
    println!("nit {}", report.iterations);
    println!("converged {}", report.converged);
    println!("relative_residual {:.3e}", report.final_relative_residual);
    println!("mvtb_seconds {:.3}", method.build_seconds);
    println!("ts_seconds {ts:.3}");
    if !report.converged {
        return Err(AmgError::NotConverged { iterations: report.iterations, residual: report.final_relative_residual });
    }
    Ok(())
}

fn info(args: &Common) -> Result<(), AmgError> {
    let cfg = args.config()?;
    let nsv = *cfg.nsv.iter().max().unwrap();
    let a = load_problem(&cfg)?;
    let composite = bootstrap_run(&a, None, &cfg.bootstrap_params())?;
    let method = build_final_method(&a, &composite, nsv, cfg.multivector_params())?;
    print!("{}", format_hierarchy(&method.multivector));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Bench(a) => bench(a),
        Command::Solve(a) => solve(a),
        Command::Info(a) => info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage_error() { 1 } else { 2 })
        }
    }
}
