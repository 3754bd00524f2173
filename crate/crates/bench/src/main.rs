use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use coherency::Method;
use coherency_bench::cases::{builtin_cases, CaseConfig, GridSource};
use coherency_bench::run::run_scenario_full;
use coherency_bench::scenario::{parse_scenario, Scenario, ScenarioError};
use coherency_bench::sweep::{sweep, sweep_rows, write_sweep_csv, SweepParam};
use coherency_bench::RunReport;

#[derive(Parser)]
#[command(name = "coherency", version, about = "Coherence experiments on swing-equation networks")]
struct Cli {
    /// Output directory (default: the scenario's `out`, else `out/<name>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use fixed-step RK4 for bit-reproducible output.
    #[arg(long, global = true)]
    fixed_step: bool,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write its trajectory and report.
    Simulate { scenario: PathBuf },
    /// Integrate a scenario and print its certificate verdicts.
    Certify { scenario: PathBuf },
    /// Run the three-case experiment.
    Cases {
        /// Network file (JSON or MATPOWER) to use instead of the synthetic grid.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Repeat a scenario over values of one parameter.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
}

fn load(cli: &Cli, path: &Path) -> Result<Scenario> {
    if !path.exists() {
        return Err(ScenarioError::MissingFile(path.to_path_buf()).into());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut file = parse_scenario(&text, path)?;
    if let Some(seed) = cli.seed {
        file.seed = seed;
    }
    if cli.fixed_step {
        file.integrator.method = Method::FixedRk4;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(Scenario::resolve(file, base)?)
}

fn out_dir(cli: &Cli, s: &Scenario) -> PathBuf {
    cli.out.clone().or_else(|| s.file.out.clone()).unwrap_or_else(|| Path::new("out").join(s.name()))
}

fn print_summary(r: &RunReport) {
    println!("scenario {} ({} buses, {}), hash {}", r.scenario, r.n_buses, r.network_source, &r.scenario_hash[..16]);
    println!("  lambda2 = {:.6e}, sup err = {:.6e}, samples = {}", r.lambda2, r.sup_err, r.samples);
    for s in &r.stages {
        let decay = s.decay.as_ref().map_or("-".to_string(), |d| format!("{:.4} on [{:.2}, {:.2}]", d.rate, d.t_start, d.t_end));
        println!("  stage {} [{:.2}, {:.2}]: sup err {:.6e}, decay {decay}", s.index, s.start, s.end, s.sup_err);
    }
    println!("  wall time {:.3}s", r.timings.total_s);
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate { scenario } => {
            let s = load(&cli, scenario)?;
            let dir = out_dir(&cli, &s);
            let (r, _) = run_scenario_full(&s, Some(&dir))?;
            print_summary(&r);
            println!("  wrote {}", dir.display());
            Ok(true)
        }
        Command::Certify { scenario } => {
            let s = load(&cli, scenario)?;
            if s.file.certificates.is_empty() {
                bail!("{} requests no certificates", scenario.display());
            }
            let dir = out_dir(&cli, &s);
            let (r, _) = run_scenario_full(&s, Some(&dir))?;
            print_summary(&r);
            let mut ok = true;
            for v in &r.certificates {
                let line = match (&v.verification, &v.error) {
                    (Some(ver), _) => format!(
                        "{} (worst ratio {:.3e}, {} violations)",
                        if ver.holds { "holds" } else { "VIOLATED" },
                        ver.worst_ratio,
                        ver.violation_times.len()
                    ),
                    (None, Some(e)) => format!("not available: {e}"),
                    (None, None) => "not available".to_string(),
                };
                ok &= v.holds();
                println!("  {} stage {}: {line}", v.kind.as_str(), v.stage);
            }
            Ok(ok)
        }
        Command::Cases { grid } => {
            let mut cfg = CaseConfig { fixed_step: cli.fixed_step, ..Default::default() };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(g) = grid {
                cfg.grid = GridSource::File(g.clone());
            }
            cfg.out = Some(cli.out.clone().unwrap_or_else(|| PathBuf::from("out/cases")));
            let suite = builtin_cases(&cfg)?;
            println!("grid: {}", suite.source);
            for r in &suite.reports {
                print_summary(r);
            }
            for c in &suite.comparisons {
                println!("{:<40} {:.6e} < {:.6e}: {}", c.name, c.lhs, c.rhs, if c.pass { "pass" } else { "FAIL" });
            }
            Ok(suite.all_pass())
        }
        Command::Sweep { scenario, param, values } => {
            let s = load(&cli, scenario)?;
            let dir = out_dir(&cli, &s);
            let points = sweep(&s, *param, values, Some(&dir));
            let rows = sweep_rows(&s, *param, &points);
            let path = dir.join("sweep.csv");
            write_sweep_csv(&path, &rows)?;
            for row in &rows {
                println!(
                    "{}={} {} stage {}: holds={} rate={} floor={}",
                    row.param,
                    row.value.unwrap_or(f64::NAN),
                    row.kind,
                    row.stage,
                    row.holds,
                    row.rate.map_or("-".into(), |v| format!("{v:.4e}")),
                    row.floor.map_or("-".into(), |v| format!("{v:.4e}")),
                );
            }
            println!("wrote {}", path.display());
            Ok(points.iter().all(|p| p.report.is_ok()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
