use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use starnoma::baselines::{framework_channels, solve, Framework, FrameworkSolution, Instance};
use starnoma::harness::{emit_csv, emit_summary_csv, emit_trace, oracle, run_experiment, ExperimentSpec, ResultTable, SweepVariable};
use starnoma::{Error, Result, SystemConfig};

#[derive(Parser)]
#[command(name = "starnoma", version, about = "STAR-RIS hybrid NOMA-TDMA max-min rate simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scenario seed (base seed for sweeps). Overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 30)]
    trials: usize,
    /// Comma-separated framework names, or `all`.
    #[arg(long, global = true)]
    frameworks: Option<String>,
    /// Comma-separated ablation names, or `all`.
    #[arg(long, global = true)]
    ablations: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and print the allocation summary.
    Solve,
    /// Write inner and outer objective traces of the proposed algorithm.
    Convergence,
    /// Sweep the number of users per side.
    SweepUsers {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 3.0, 4.0, 5.0, 6.0])]
        values: Vec<f64>,
    },
    /// Sweep the BS-RIS ground distance, one series per element count.
    SweepDistance {
        #[arg(long, value_delimiter = ',', default_values_t = vec![50.0, 100.0, 200.0, 400.0])]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![16, 36, 64, 100])]
        elements: Vec<usize>,
    },
    /// Compare the optimizer against brute-force references.
    OracleCheck {
        #[arg(long, default_value_t = 10)]
        instances: usize,
    },
}

fn parse_list(text: &str, all: &[Framework]) -> Result<Vec<Framework>> {
    if text.trim() == "all" {
        return Ok(all.to_vec());
    }
    text.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

impl Common {
    fn load_config(&self) -> Result<SystemConfig> {
        let mut config = match &self.config {
            Some(path) => SystemConfig::load(path)?,
            None => SystemConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    fn frameworks(&self, default: &[Framework]) -> Result<Vec<Framework>> {
        let mut list = match &self.frameworks {
            Some(text) => parse_list(text, &Framework::ARCHITECTURES)?,
            None => default.to_vec(),
        };
        if let Some(text) = &self.ablations {
            for a in parse_list(text, &Framework::ABLATIONS)? {
                if !a.is_ablation() {
                    return Err(Error::InvalidArgument(format!("{a} is not an ablation")));
                }
                if !list.contains(&a) {
                    list.push(a);
                }
            }
        }
        Ok(list)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn fmt_rates(rates: &[f64]) -> String {
    rates.iter().map(|r| format!("{r:.6}")).collect::<Vec<_>>().join(" ")
}

fn cmd_solve(common: &Common) -> Result<()> {
    let config = common.load_config()?;
    let instance = Instance::<f64>::generate(&config, config.seed)?;
    println!("seed {} K {} M {}", config.seed, config.users_per_side, config.num_elements());
    for f in common.frameworks(&[Framework::HybridNomaStar])? {
        let sol = solve(f, &instance)?;
        sol.validate(&framework_channels(f, &instance), instance.link)?;
        println!("{f}: min_rate {:.6} bit/s/Hz", sol.min_rate());
        match &sol {
            FrameworkSolution::Hybrid(s) => {
                let pairs: Vec<String> = s.matching.pairs().map(|(t, r)| format!("T{t}-R{r}")).collect();
                println!("  pairing {}", pairs.join(" "));
                println!("  beta    {}", fmt_rates(&s.allocation.star.beta));
                println!("  rho     {}", fmt_rates(&s.allocation.rho));
                println!("  tau     {}", fmt_rates(&s.allocation.tau));
                println!("  order   {:?}", s.allocation.pi);
                println!("  rates   {}", fmt_rates(&s.report.rate));
                println!("  inner iterations {} converged {} outer attempts {}", s.iterations, s.converged, s.outer_trace.len());
            }
            FrameworkSolution::Tdma(s) => {
                println!("  tau     {}", fmt_rates(&s.tau));
                println!("  rates   {}", fmt_rates(&s.rate));
            }
        }
    }
    Ok(())
}

fn cmd_convergence(common: &Common) -> Result<()> {
    let config = common.load_config()?;
    let instance = Instance::<f64>::generate(&config, config.seed)?;
    let sol = starnoma::baselines::solve_hybrid_star(&instance)?;
    let out = common.out_or("convergence.csv");
    emit_trace(&sol, &out)?;
    for p in sol.inner_trace.iter().filter(|p| p.block == starnoma::inner_ao::Block::Time || p.iteration == 0) {
        println!("inner {:>3} {:.9}", p.iteration, p.objective);
    }
    for (i, s) in sol.outer_trace.iter().enumerate() {
        println!("outer {:>3} swap T{} T{} candidate {:.9} accepted {}", i + 1, s.tu_a, s.tu_b, s.candidate, s.accepted);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn print_table(table: &ResultTable) {
    for (f, v, s) in table.cells() {
        println!("{:<26} {:>8} mean {:.6} stderr {:.6} (n={})", f.name(), v, s.mean, s.stderr, s.n);
    }
    for f in &table.failures {
        eprintln!("failed: {} value {} trial {}: {}", f.framework, f.value, f.trial, f.message);
    }
}

fn write_table(table: &ResultTable, out: &Path) -> Result<()> {
    emit_csv(table, out)?;
    let summary = out.with_file_name(format!(
        "{}_summary.csv",
        out.file_stem().and_then(|s| s.to_str()).unwrap_or("results")
    ));
    emit_summary_csv(table, &summary)?;
    println!("wrote {} and {}", out.display(), summary.display());
    Ok(())
}

fn cmd_sweep_users(common: &Common, values: Vec<f64>) -> Result<()> {
    let config = common.load_config()?;
    let spec = ExperimentSpec {
        frameworks: common.frameworks(&Framework::ARCHITECTURES)?,
        sweep: SweepVariable::NumUsers,
        values,
        trials: common.trials,
        base_seed: config.seed,
        base: config,
    };
    let table = run_experiment(&spec)?;
    print_table(&table);
    write_table(&table, &common.out_or("sweep_users.csv"))
}

fn cmd_sweep_distance(common: &Common, values: Vec<f64>, elements: Vec<usize>) -> Result<()> {
    let config = common.load_config()?;
    let out = common.out_or("sweep_distance.csv");
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep_distance").to_string();
    for m in elements {
        let base = SweepVariable::Elements.apply(&config, m as f64)?;
        let spec = ExperimentSpec {
            frameworks: common.frameworks(&[Framework::HybridNomaStar])?,
            sweep: SweepVariable::BsRisDistance,
            values: values.clone(),
            trials: common.trials,
            base_seed: config.seed,
            base,
        };
        let table = run_experiment(&spec)?;
        println!("M = {m}");
        print_table(&table);
        write_table(&table, &out.with_file_name(format!("{stem}_m{m}.csv")))?;
    }
    Ok(())
}

fn cmd_oracle_check(common: &Common, instances: usize) -> Result<bool> {
    let seed = common.seed.unwrap_or(0);
    let checks = oracle::run_suite(seed, instances)?;
    let mut report = String::from("check,passed,detail\n");
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        report.push_str(&format!("{},{},\"{}\"\n", c.name, c.passed, c.detail));
    }
    if let Some(out) = &common.out {
        std::fs::write(out, report).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve => cmd_solve(&cli.common).map(|_| true),
        Command::Convergence => cmd_convergence(&cli.common).map(|_| true),
        Command::SweepUsers { values } => cmd_sweep_users(&cli.common, values).map(|_| true),
        Command::SweepDistance { values, elements } => cmd_sweep_distance(&cli.common, values, elements).map(|_| true),
        Command::OracleCheck { instances } => cmd_oracle_check(&cli.common, instances),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
