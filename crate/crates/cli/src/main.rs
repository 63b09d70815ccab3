use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use ups_core::datagen::Dataset;
use ups_core::harness::{
    builtin_config, emit_report, fit_dataset, generate_dataset, run_experiment, tables, ExperimentConfig,
    ExperimentId, ExperimentReport, Method, ReportFormat, Scale,
};
use ups_core::phase::{phase_grid, write_grid_csv};
use ups_core::ups::hamming;

#[derive(Parser, Debug)]
#[command(name = "ups", version, about = "Screen-and-clean variable selection: simulations, fits and phase diagrams")]
struct Cli {
    /// Master seed, overriding the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Problem sizes of the built-in experiments.
    #[arg(long, global = true, value_enum, default_value_t = ScaleArg::Desk)]
    scale: ScaleArg,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScaleArg {
    Paper,
    Desk,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Paper => Scale::Paper,
            ScaleArg::Desk => Scale::Desk,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Phase-region labels and exponents on a (vartheta, r) grid, as CSV.
    Phase {
        #[arg(long, default_value_t = 0.01)]
        vartheta_step: f64,
        #[arg(long, default_value_t = 0.05)]
        r_step: f64,
        #[arg(long, default_value_t = 6.0)]
        r_max: f64,
        /// Correlation level of the bivariate lasso and subset analyses.
        #[arg(long, default_value_t = 0.45)]
        a: f64,
    },
    /// Writes one simulated dataset to the `--out` directory.
    Gen {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, default_value_t = 0)]
        sweep_index: usize,
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
    /// Runs one method on a dataset directory written by `gen`.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// One of ups_ideal, ups_estimated, ups_refined, lasso, soft, hard, subset_components, ups_stein.
        #[arg(long)]
        method: String,
        /// Tuning exponent overriding the dataset's configuration.
        #[arg(long)]
        q: Option<f64>,
    },
    /// Runs an experiment and writes its report.
    Simulate {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        reps: Option<usize>,
        /// Report format; inferred from the `--out` extension when absent.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Runs built-in experiments and compares them with the published tables.
    Tables {
        /// Exit with status 3 when a comparison fails.
        #[arg(long)]
        check: bool,
        /// Experiments to run (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "exp1")]
        experiments: Vec<String>,
        #[arg(long)]
        reps: Option<usize>,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct ConfigSource {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in experiment id (exp1, exp2a, ..., exp4b).
    #[arg(long)]
    experiment: Option<String>,
}

#[derive(Debug)]
enum Failure {
    Runtime(String),
    Check(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let scale: Scale = cli.scale.into();
    match cli.command {
        Command::Phase {
            vartheta_step,
            r_step,
            r_max,
            a,
        } => {
            if !(vartheta_step > 0.0 && vartheta_step < 1.0 && r_step > 0.0 && r_max > 0.0) {
                return Err(Failure::Runtime("grid steps must be positive and vartheta_step below 1".into()));
            }
            let varthetas: Vec<f64> = (1..)
                .map(|k| k as f64 * vartheta_step)
                .take_while(|&v| v < 1.0 - 1e-12)
                .collect();
            let rs: Vec<f64> = (1..).map(|k| k as f64 * r_step).take_while(|&r| r <= r_max + 1e-12).collect();
            let rows = phase_grid(&varthetas, &rs, a)?;
            let out = require_out(&cli.out)?;
            write_grid_csv(&rows, out)?;
            info!("wrote {} grid rows to {}", rows.len(), out.display());
        }
        Command::Gen {
            source,
            sweep_index,
            rep,
        } => {
            let cfg = load_config(&source, scale, cli.seed)?;
            let out = require_out(&cli.out)?;
            let (dataset, point) = generate_dataset(&cfg, sweep_index, rep)?;
            let params = serde_json::json!({
                "config": cfg,
                "sweep_index": sweep_index,
                "rep": rep,
                "point": point,
            });
            dataset.write_dir(out, params)?;
            println!("wrote dataset p={} n={} to {}", dataset.p(), dataset.n(), out.display());
        }
        Command::Fit { data, method, q } => {
            let method = Method::parse(&method)?;
            let dataset = Dataset::read_dir(&data)?;
            let meta_path = data.join("meta.json");
            let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;
            let params = &meta["params"];
            let mut cfg: ExperimentConfig = serde_json::from_value(params["config"].clone())
                .map_err(|e| Failure::Runtime(format!("{}: no usable configuration in params ({e})", meta_path.display())))?;
            if let Some(q) = q {
                cfg.params.q = q;
                for axis in &mut cfg.sweep {
                    if axis.field == ups_core::harness::SweepField::Q {
                        axis.values.iter_mut().for_each(|v| *v = q);
                    }
                }
            }
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let sweep_index = params["sweep_index"].as_u64().unwrap_or(0) as usize;
            let rep = params["rep"].as_u64().unwrap_or(0) as usize;
            let fit = fit_dataset(&cfg, sweep_index, rep, &dataset, method)?;
            let loss = hamming(&fit.beta_hat, &dataset.beta)?;
            let mut json = fit.to_json();
            json["hamming"] = serde_json::to_value(loss)?;
            let text = serde_json::to_string_pretty(&json)?;
            match &cli.out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
        }
        Command::Simulate { source, reps, format } => {
            let mut cfg = load_config(&source, scale, cli.seed)?;
            if let Some(r) = reps {
                cfg.reps = r;
            }
            let report = run_experiment(&cfg)?;
            let format = match (format, &cli.out) {
                (Some(FormatArg::Json), _) => ReportFormat::Json,
                (Some(FormatArg::Csv), _) => ReportFormat::Csv,
                (None, Some(p)) if p.extension().is_some_and(|e| e == "json") => ReportFormat::Json,
                _ => ReportFormat::Csv,
            };
            write_report(&report, format, cli.out.as_deref())?;
        }
        Command::Tables {
            check,
            experiments,
            reps,
        } => {
            let mut checks = Vec::new();
            let mut report_4a = None;
            let mut report_4b = None;
            for name in &experiments {
                let id = ExperimentId::parse(name)?;
                let mut cfg = builtin_config(id, scale)?;
                if let Some(seed) = cli.seed {
                    cfg.seed = seed;
                }
                if let Some(r) = reps {
                    cfg.reps = r;
                }
                eprintln!("running {name} ({} sweep points x {} reps)", cfg.sweep_points()?.len(), cfg.reps);
                let report = run_experiment(&cfg)?;
                if let Some(dir) = &cli.out {
                    std::fs::create_dir_all(dir)?;
                    emit_report(&report, ReportFormat::Csv, &dir.join(format!("{name}.csv")))?;
                    emit_report(&report, ReportFormat::Json, &dir.join(format!("{name}.json")))?;
                }
                match id {
                    ExperimentId::Exp1 => checks.extend(tables::check_table2(&report)),
                    ExperimentId::Exp2a | ExperimentId::Exp2b | ExperimentId::Exp2c => {
                        let part = match id {
                            ExperimentId::Exp2a => 0,
                            ExperimentId::Exp2b => 1,
                            _ => 2,
                        };
                        checks.extend(tables::check_table3(&report, part, scale == Scale::Paper));
                    }
                    ExperimentId::Exp4a => report_4a = Some(report),
                    ExperimentId::Exp4b => report_4b = Some(report),
                    _ => eprintln!("{name}: no published table to compare against"),
                }
            }
            checks.extend(tables::check_table5(report_4a.as_ref(), report_4b.as_ref()));
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            println!("{} of {} comparisons within tolerance", checks.len() - failed, checks.len());
            if check && failed > 0 {
                return Err(Failure::Check(format!("{failed} comparison(s) outside tolerance")));
            }
        }
    }
    Ok(())
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path, Failure> {
    out.as_deref()
        .ok_or_else(|| Failure::Runtime("this subcommand needs --out".into()))
}

fn load_config(source: &ConfigSource, scale: Scale, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (&source.config, &source.experiment) {
        (Some(path), _) => ExperimentConfig::from_json_file(path)?,
        (None, Some(id)) => builtin_config(ExperimentId::parse(id)?, scale)?,
        (None, None) => return Err(Failure::Runtime("either --config or --experiment is required".into())),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_report(report: &ExperimentReport, format: ReportFormat, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => emit_report(report, format, path)?,
        None => match format {
            ReportFormat::Csv => ups_core::harness::report::write_csv(report, std::io::stdout().lock())?,
            ReportFormat::Json => println!("{}", serde_json::to_string_pretty(report)?),
        },
    }
    Ok(())
}
