use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use azema::filter::{init_cloud, run_filter, FilterModel, Observation};
use azema::harness::{
    convergence_study, emit, emit_study, pricing_state, run_suite, timings_csv, ExperimentConfig, Format, StudyAxis,
    Suite,
};
use azema::hitting::DensityTable;
use azema::par;
use azema::pricing::{bond_price, duffie_diagnostic, price_via_intensity_discount};
use azema::rng::{derive_seed, Domain};
use azema::simulate::{simulate_batch, simulate_scenario, simulate_summary};

#[derive(Parser)]
#[command(
    name = "azema",
    version,
    about = "Filtering and default-intensity pricing for noisy structural credit models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed overriding every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenario paths; writes `path_<i>.csv` and `summary.json`.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paths: Option<usize>,
        /// Only the batch summary, without per-path files.
        #[arg(long)]
        summary_only: bool,
    },
    /// Filter one scenario path; writes `trajectory_<i>.csv`.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        path: usize,
        /// Density table to use instead of building one.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Write the density table in use to this file.
        #[arg(long)]
        dump_table: Option<PathBuf>,
    },
    /// Price the bond at the configured valuation time; writes `pricing.json`.
    Price {
        #[command(flatten)]
        common: Common,
        /// Scenario path; the first one alive at the valuation time when omitted.
        #[arg(long)]
        path: Option<usize>,
        /// Also run the nested estimators into `nested.json`.
        #[arg(long)]
        nested: bool,
    },
    /// Run the verification suites; exit code 0 iff every check passes.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Restrict to these suites (repeatable).
        #[arg(long = "suite")]
        suites: Vec<Suite>,
    },
    /// Convergence study along one axis.
    Study {
        #[command(flatten)]
        common: Common,
        /// dt, n_particles, n_paths or epsilon.
        #[arg(long)]
        axis: StudyAxis,
        /// Comma-separated levels, at least three.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.harness.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn filter_model(cfg: &ExperimentConfig, table: Option<&Path>) -> Result<FilterModel> {
    let sc = &cfg.scenario;
    match table {
        None => Ok(cfg.filter_model(&cfg.filter, sc.step(), sc.horizon)?),
        Some(p) => {
            let tab = DensityTable::load(p).with_context(|| format!("loading {}", p.display()))?;
            let hitting = cfg
                .hitting_model(&sc.drift, cfg.filter.epsilon_for(sc.step()), sc.horizon)?
                .with_table(tab);
            Ok(FilterModel::new(
                sc.drift.clone(),
                sc.obs,
                hitting,
                &cfg.filter,
                sc.step(),
            )?)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate {
            common,
            paths,
            summary_only,
        } => {
            let mut cfg = load(&common)?;
            if let Some(n) = paths {
                cfg.scenario.n_paths = n;
            }
            let dir = out_dir(&common, &cfg)?;
            if summary_only {
                let s = simulate_summary(&cfg.scenario)?;
                write(&dir.join("summary.json"), &s.to_json())?;
                println!("{} paths, default frequency {}", s.n_paths, s.default_freq);
            } else {
                let set = simulate_batch(&cfg.scenario)?;
                set.write(&dir)?;
                println!(
                    "{} paths, default frequency {}",
                    set.summary.n_paths, set.summary.default_freq
                );
            }
            Ok(true)
        }
        Command::Filter {
            common,
            path,
            table,
            dump_table,
        } => {
            let cfg = load(&common)?;
            let dir = out_dir(&common, &cfg)?;
            let model = filter_model(&cfg, table.as_deref())?;
            if let Some(p) = dump_table {
                match model.hitting.table() {
                    Some(t) => t.save(&p)?,
                    None => bail!("the drift has a closed-form density; no table to dump"),
                }
            }
            let sc = simulate_scenario(&cfg.scenario, path)?;
            let seed = cfg.filter.seed;
            let cloud = init_cloud(
                &cfg.scenario.init,
                cfg.filter.n_particles,
                derive_seed(seed, Domain::Init as u64, path as u64, 0),
            )?;
            let key = derive_seed(seed, Domain::Particle as u64, path as u64, 0);
            let tr = run_filter(&model, cloud, key, &Observation::from_scenario(&sc), &[])?;
            write(&dir.join(format!("trajectory_{path:05}.csv")), &tr.to_csv())?;
            if let Some(t) = tr.absorbed_at {
                eprintln!("warning: particle cloud absorbed at t = {t}");
            }
            Ok(true)
        }
        Command::Price { common, path, nested } => {
            let cfg = load(&common)?;
            let dir = out_dir(&common, &cfg)?;
            let st = pricing_state(&cfg, path)?;
            let rep = bond_price(&st.cloud, &st.model.hitting, cfg.pricing.t, &cfg.bond(), st.defaulted)?;
            write(&dir.join("pricing.json"), &format!("{}\n", rep.to_json()))?;
            println!("path {}: {}", st.path_id, rep.to_json());
            if nested && !st.defaulted {
                let spec = cfg.nested(cfg.pricing.n_inner);
                let maturity = cfg.maturity();
                let disc = price_via_intensity_discount(&st.model, &st.cloud, maturity, &spec)?;
                let duffie = duffie_diagnostic(&st.sim, &st.model, &st.cloud, maturity, &spec)?;
                let body = serde_json::json!({ "intensity_discount": disc, "stochastic_discount": duffie });
                write(
                    &dir.join("nested.json"),
                    &format!("{}\n", serde_json::to_string_pretty(&body)?),
                )?;
            }
            Ok(true)
        }
        Command::Verify { common, suites } => {
            let mut cfg = load(&common)?;
            if !suites.is_empty() {
                cfg.harness.suites = suites;
            }
            let dir = out_dir(&common, &cfg)?;
            let report = run_suite(&cfg)?;
            emit(&report, Format::Json, &dir.join("report.json"))?;
            emit(&report, Format::Csv, &dir.join("report.csv"))?;
            write(&dir.join("timings.csv"), &timings_csv(&report))?;
            for c in &report.checks {
                println!(
                    "{} {}.{} statistic {} ({})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.suite,
                    c.name,
                    c.statistic,
                    c.detail
                );
            }
            println!(
                "{}",
                if report.pass {
                    "all checks passed"
                } else {
                    "some checks failed"
                }
            );
            Ok(report.pass)
        }
        Command::Study {
            common,
            axis,
            levels,
            format,
        } => {
            let cfg = load(&common)?;
            let dir = out_dir(&common, &cfg)?;
            let table = convergence_study(&cfg, axis, &levels)?;
            let ext = match format {
                Format::Csv => "csv",
                Format::Json => "json",
            };
            emit_study(&table, format, &dir.join(format!("study_{axis}.{ext}")))?;
            for r in &table.rows {
                println!("{axis} {} {} {}", r.level, table.statistic, r.statistic);
            }
            println!("order {} monotone {}", table.order, table.monotone);
            Ok(axis != StudyAxis::Dt || table.monotone)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match par::env_threads() {
        Some(n) => par::with_threads(n, || run(cli)),
        None => run(cli),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
