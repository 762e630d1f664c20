use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctax_core::harness::{
    self, compare_to_reference, irf_experiment, load_bundle, run_experiment, sensitivity_suite, ExperimentConfig,
    Tolerances,
};
use ctax_core::perturbation::Order;
use ctax_core::reference::TableId;
use ctax_core::Error;

const EXIT_SOLVER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_COMPARISON: u8 = 3;

#[derive(Parser)]
#[command(name = "ctax", version, about = "Optimal carbon taxes with hand-to-mouth households")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, simulate and write the tables and IRFs for a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Compare a written bundle against the embedded published tables.
    Compare {
        bundle: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        table: TableArg,
        /// Reference preset; defaults to the one in the bundle manifest.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run the baseline and all six sensitivity presets.
    Sensitivity {
        outdir: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Write impulse responses only.
    Irf {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Args, Clone, Default)]
struct RunOpts {
    /// Simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated periods kept for moments.
    #[arg(long)]
    horizon: Option<usize>,
    /// Periods discarded before the kept sample.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Size of the TFP impulse in standard deviations.
    #[arg(long)]
    shock_sds: Option<f64>,
    /// Ensemble-averaged generalized impulse responses.
    #[arg(long)]
    girf: bool,
    /// Perturbation order.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    order: Option<u8>,
    /// Output directory, overriding the config. Without it, bundles go
    /// under `$CTAX_OUT` (or `ctax-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunOpts {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        if let Some(s) = self.shock_sds {
            cfg.shock_sds = s;
        }
        if self.girf {
            cfg.girf = true;
        }
        if let Some(k) = self.order {
            cfg.order = Order::from_int(k).expect("range checked by clap");
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    Means,
    Stds,
    Welfare,
    All,
}

impl TableArg {
    fn tables(self) -> Vec<TableId> {
        match self {
            TableArg::Means => vec![TableId::Means],
            TableArg::Stds => vec![TableId::Stds],
            TableArg::Welfare => vec![TableId::Welfare],
            TableArg::All => vec![TableId::Means, TableId::Welfare, TableId::Stds],
        }
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_SOLVER })
}

fn load(config: &PathBuf, opts: &RunOpts) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(config)?;
    opts.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn compare(bundle: &harness::Bundle, preset: &str, tables: &[TableId], dir: &std::path::Path) -> Result<bool, Error> {
    let mut ok = true;
    for &t in tables {
        let c = compare_to_reference(bundle, preset, t, &Tolerances::default())?;
        print!("{}", c.listing());
        c.write_csv(&dir.join(format!("comparison_{}.csv", t.as_str())))?;
        ok &= c.pass();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, opts } => {
            let cfg = match load(&config, &opts) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let report = match run_experiment(&cfg) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            for o in &report.outcomes {
                match &o.result {
                    Ok(r) => println!("{:20} ok   {:.2}s", o.key, r.seconds),
                    Err(e) => println!("{:20} FAIL {e}", o.key),
                }
            }
            println!("bundle written to {}", cfg.output.display());
            if report.failures().next().is_some() {
                return ExitCode::from(EXIT_SOLVER);
            }
            if cfg.compare {
                let bundle = harness::bundle_from_report(&report);
                match compare(&bundle, &cfg.preset, &TableArg::All.tables(), &cfg.output) {
                    Ok(true) => {}
                    Ok(false) => return ExitCode::from(EXIT_COMPARISON),
                    Err(e) => return fail(&e),
                }
            }
            ExitCode::SUCCESS
        }
        Command::Compare { bundle, table, preset } => {
            let b = match load_bundle(&bundle) {
                Ok(b) => b,
                Err(e) => return fail(&e),
            };
            let Some(preset) = preset.or_else(|| b.preset().map(String::from)) else {
                eprintln!("error: no preset given and none recorded in the bundle manifest");
                return ExitCode::from(EXIT_CONFIG);
            };
            match compare(&b, &preset, &table.tables(), &bundle) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_COMPARISON),
                Err(e) => fail(&e),
            }
        }
        Command::Sensitivity { outdir, opts } => {
            let mut template = match ExperimentConfig::preset("baseline") {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            opts.apply(&mut template);
            if let Err(e) = template.validate() {
                return fail(&e);
            }
            let report = match sensitivity_suite(&template, &outdir) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            for c in &report.comparisons {
                let n = c.failures().count();
                println!("{:12} {:8} {:3} cells, {n} failed", c.preset, c.table.as_str(), c.cells.len());
            }
            for c in &report.checks {
                println!("{} {} ({})", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            if report.solver_failures() > 0 {
                ExitCode::from(EXIT_SOLVER)
            } else if report.comparisons.iter().all(|c| c.pass()) && report.checks.iter().all(|c| c.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_COMPARISON)
            }
        }
        Command::Irf { config, opts } => {
            let cfg = match load(&config, &opts) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match irf_experiment(&cfg) {
                Ok(sets) => {
                    let mut ok = true;
                    for (key, s) in &sets {
                        match s {
                            Ok(_) => println!("{key:20} ok"),
                            Err(e) => {
                                ok = false;
                                println!("{key:20} FAIL {e}");
                            }
                        }
                    }
                    if ok {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_SOLVER)
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}
