mod config;
mod error;
mod output;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgAction, Args, Parser, Subcommand};

use cgtc_core::csv_io::{parse_feature_row, read_dataset, read_queries, write_dataset};
use cgtc_core::{
    dp_sample, run_experiment, tune_allocation, AllocationMode, AlphaAllocation, CgtcModel, DataSource, DpConfig,
    ExperimentSpec, LabelTable, LabeledDataset, Method, PValueVariant, PipelineConfig, RandomSource,
    SplitStrategy, Stream, TuningConfig,
};

use config::{load, required, AllocChoice, PredictOptions, RunOptions, SimulateOptions, TuneOptions};
use error::{CliError, Result};

#[derive(Parser)]
#[command(name = "cgtc", version, about = "Open-set conformal classification with Good-Turing tests")]
struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file supplying defaults for this command's options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the effective options as TOML, then run.
    #[arg(long)]
    write_config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Dirichlet-process dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: SimulateOptions,
    },
    /// Run repeated experiments and report coverage, set size and joker rate.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: RunOptions,
    },
    /// Choose the significance allocation by cross-validation.
    Tune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: TuneOptions,
    },
    /// Prediction sets for query points against a reference dataset.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: PredictOptions,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Simulate { common, opts } => simulate(&common, opts),
        Command::Run { common, opts } => run(&common, opts),
        Command::Tune { common, opts } => tune(&common, opts),
        Command::Predict { common, opts } => predict(&common, opts),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn read_data(path: &Path) -> Result<(LabeledDataset, LabelTable)> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut table = LabelTable::new();
    let data = read_dataset(BufReader::new(file), &mut table)?;
    Ok((data, table))
}

fn pipeline(split: SplitStrategy, cal_fraction: f64, variant: PValueVariant) -> PipelineConfig {
    let mut p = PipelineConfig {
        split,
        cal_fraction,
        ..PipelineConfig::default()
    };
    p.gt.unseen = variant;
    p
}

fn tuning(lambda: f64, folds: usize) -> TuningConfig {
    TuningConfig {
        lambda,
        folds,
        ..TuningConfig::default()
    }
}

fn simulate(common: &Common, flags: SimulateOptions) -> Result<()> {
    let o = flags.over(load(common.config.as_deref())?);
    let defaults = DpConfig::new(1.0, 500);
    let cfg = DpConfig {
        theta: required(o.theta, "theta")?,
        n: o.n.unwrap_or(defaults.n),
        dim: o.dim.unwrap_or(defaults.dim),
        sigma2: o.sigma2.unwrap_or(defaults.sigma2),
    };
    cfg.validate()?;
    let seed = o.seed.unwrap_or(0);
    if let Some(path) = &common.write_config {
        let resolved = SimulateOptions {
            theta: Some(cfg.theta),
            n: Some(cfg.n),
            dim: Some(cfg.dim),
            sigma2: Some(cfg.sigma2),
            seed: Some(seed),
            out: o.out.clone(),
        };
        config::save(path, &resolved)?;
    }

    let sample = dp_sample(&cfg, &mut RandomSource::new(seed).named(Stream::Dp).rng())?;
    // DP labels are sequential ids; intern them in order so ids print as-is.
    let mut table = LabelTable::new();
    let top = sample.data().labels().iter().map(|y| y.0).max().unwrap_or(0);
    for id in 0..=top {
        table.intern(&id.to_string());
    }
    match &o.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            write_dataset(BufWriter::new(file), sample.data(), &table)?;
            log::info!(
                "wrote {} rows, {} distinct labels, to {}",
                cfg.n,
                sample.distinct(),
                path.display()
            );
        }
        None => write_dataset(std::io::stdout().lock(), sample.data(), &table)?,
    }
    Ok(())
}

fn run(common: &Common, flags: RunOptions) -> Result<()> {
    let o = flags.over(load(common.config.as_deref())?);
    let alpha = o.alpha.unwrap_or(0.1);
    let methods = o.methods.clone().unwrap_or_else(|| Method::ALL.to_vec());
    if methods.is_empty() {
        return Err(CliError::Missing("methods"));
    }
    let variant = o.variant.unwrap_or(PValueVariant::Xgt);
    let alloc_text = o.alloc.clone().unwrap_or_else(|| "even".into());
    let reps = o.reps.unwrap_or(20);
    let tests = o.tests.unwrap_or(200);
    let seed = o.seed.unwrap_or(0);
    let cal_fraction = o.cal_fraction.unwrap_or(0.1);
    let lambda = o.lambda.unwrap_or(0.5);
    let folds = o.folds.unwrap_or(10);
    let dp_defaults = DpConfig::new(1.0, 500);
    let sigma2 = o.sigma2.unwrap_or(dp_defaults.sigma2);
    let dim = o.dim.unwrap_or(dp_defaults.dim);

    let allocation = match AllocChoice::parse(&alloc_text, alpha)? {
        AllocChoice::Even => AllocationMode::Fixed(AlphaAllocation::even(alpha)?),
        AllocChoice::Tuned => AllocationMode::Tuned(tuning(lambda, folds)),
        AllocChoice::Fixed(a) => AllocationMode::Fixed(a),
    };

    let (sources, n): (Vec<DataSource>, usize) = match (&o.data, &o.theta) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("`data` and `theta` are mutually exclusive".into()));
        }
        (Some(path), None) => {
            let (data, _) = read_data(path)?;
            let n = o.n.unwrap_or(data.len().saturating_sub(tests));
            (
                vec![DataSource::Pool {
                    data: Arc::new(data),
                    n,
                }],
                n,
            )
        }
        (None, Some(thetas)) => {
            if thetas.is_empty() {
                return Err(CliError::Missing("theta"));
            }
            let n = o.n.unwrap_or(dp_defaults.n);
            let sources = thetas
                .iter()
                .map(|&theta| DataSource::Dp(DpConfig { theta, n, sigma2, dim }))
                .collect();
            (sources, n)
        }
        (None, None) => return Err(CliError::Missing("theta")),
    };

    if let Some(path) = &common.write_config {
        let resolved = RunOptions {
            methods: Some(methods.clone()),
            variant: Some(variant),
            alpha: Some(alpha),
            alloc: Some(alloc_text.clone()),
            theta: o.theta.clone(),
            n: Some(n),
            reps: Some(reps),
            tests: Some(tests),
            seed: Some(seed),
            data: o.data.clone(),
            sigma2: Some(sigma2),
            dim: Some(dim),
            cal_fraction: Some(cal_fraction),
            lambda: Some(lambda),
            folds: Some(folds),
            out: o.out.clone(),
            plot: o.plot.clone(),
        };
        config::save(path, &resolved)?;
    }

    let mut specs = Vec::new();
    for source in &sources {
        for &method in &methods {
            let mut spec = ExperimentSpec::new(source.clone(), method, alpha);
            spec.variant = variant;
            spec.allocation = allocation.clone();
            spec.reps = reps;
            spec.tests = tests;
            spec.seed = seed;
            spec.pipeline.cal_fraction = cal_fraction;
            spec.validate()?;
            specs.push(spec);
        }
    }
    let mut results = Vec::with_capacity(specs.len());
    for spec in &specs {
        log::info!("running {} at theta={:?}", spec.method, spec.source.theta());
        results.push(run_experiment(spec)?);
    }

    let tuned = matches!(allocation, AllocationMode::Tuned(_));
    if let Some(path) = &o.out {
        output::write_metrics(path, &results, tuned)?;
    }
    if let Some(path) = &o.plot {
        output::write_plot(path, &results)?;
    }
    output::print_summary(&mut std::io::stdout().lock(), &results).map_err(|e| CliError::io("stdout", e))
}

fn tune(common: &Common, flags: TuneOptions) -> Result<()> {
    let o = flags.over(load(common.config.as_deref())?);
    let path = required(o.data.clone(), "data")?;
    let alpha = o.alpha.unwrap_or(0.1);
    let lambda = o.lambda.unwrap_or(0.5);
    let folds = o.folds.unwrap_or(10);
    let split = o.split.unwrap_or_default();
    let variant = o.variant.unwrap_or(PValueVariant::Xgt);
    let cal_fraction = o.cal_fraction.unwrap_or(0.1);
    let seed = o.seed.unwrap_or(0);
    if let Some(cfg_path) = &common.write_config {
        let resolved = TuneOptions {
            data: Some(path.clone()),
            alpha: Some(alpha),
            lambda: Some(lambda),
            folds: Some(folds),
            split: Some(split),
            variant: Some(variant),
            cal_fraction: Some(cal_fraction),
            seed: Some(seed),
            out: o.out.clone(),
        };
        config::save(cfg_path, &resolved)?;
    }

    let (data, _) = read_data(&path)?;
    let result = tune_allocation(
        &data,
        alpha,
        &pipeline(split, cal_fraction, variant),
        &tuning(lambda, folds),
        &RandomSource::new(seed),
    )?;
    let a = result.allocation;
    println!(
        "alpha_class={:.4} alpha_unseen={:.4} alpha_seen={:.4} (loss {:.6}, {} folds)",
        a.alpha_class, a.alpha_unseen, a.alpha_seen, result.loss, result.folds
    );
    if let Some(out) = &o.out {
        config::save(out, &a)?;
    }
    Ok(())
}

fn predict(common: &Common, flags: PredictOptions) -> Result<()> {
    let o = flags.over(load(common.config.as_deref())?);
    let path = required(o.data.clone(), "data")?;
    let alpha = o.alpha.unwrap_or(0.1);
    let alloc_text = o.alloc.clone().unwrap_or_else(|| "even".into());
    let split = o.split.unwrap_or_default();
    let variant = o.variant.unwrap_or(PValueVariant::Xgt);
    let cal_fraction = o.cal_fraction.unwrap_or(0.1);
    let seed = o.seed.unwrap_or(0);
    if o.query.is_none() && o.queries.is_none() {
        return Err(CliError::Missing("query"));
    }
    let choice = match &o.alloc_file {
        Some(file) => {
            let a: AlphaAllocation = config::read_toml(file)?;
            a.validate(alpha)?;
            AllocChoice::Fixed(a)
        }
        None => AllocChoice::parse(&alloc_text, alpha)?,
    };
    if let Some(cfg_path) = &common.write_config {
        let resolved = PredictOptions {
            data: Some(path.clone()),
            query: o.query.clone(),
            queries: o.queries.clone(),
            alpha: Some(alpha),
            alloc: Some(alloc_text.clone()),
            alloc_file: o.alloc_file.clone(),
            split: Some(split),
            variant: Some(variant),
            cal_fraction: Some(cal_fraction),
            seed: Some(seed),
            out: o.out.clone(),
        };
        config::save(cfg_path, &resolved)?;
    }

    let mut queries = Vec::new();
    for (i, text) in o.query.iter().flatten().enumerate() {
        queries.push(parse_feature_row(text, i + 1)?);
    }
    if let Some(qpath) = &o.queries {
        let file = File::open(qpath).map_err(|e| CliError::io(qpath, e))?;
        queries.extend(read_queries(BufReader::new(file))?);
    }

    let (data, table) = read_data(&path)?;
    let src = RandomSource::new(seed);
    let pipe = pipeline(split, cal_fraction, variant);
    let alloc = match choice {
        AllocChoice::Even => AlphaAllocation::even(alpha)?,
        AllocChoice::Fixed(a) => a,
        AllocChoice::Tuned => tune_allocation(&data, alpha, &pipe, &TuningConfig::default(), &src)?.allocation,
    };
    let model = CgtcModel::fit(&data, &pipe, &src)?;
    let query_src = src.named(Stream::Tests);

    let mut rows = Vec::with_capacity(queries.len());
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (q, x) in queries.iter().enumerate() {
        let e = model
            .evaluate(x, &query_src.fork(q as u64 + 1))
            .map_err(|source| match source {
                cgtc_core::Error::DimensionMismatch { expected, found } => cgtc_core::Error::MalformedRow {
                    row: q + 1,
                    reason: format!("query has {found} features, reference data has {expected}"),
                },
                other => other,
            })?;
        let set = e.assemble(&alloc);
        writeln!(
            out,
            "{}\tpsi_unseen={:.4}\tpsi_seen={:.4}",
            output::render_set(&set, &table),
            e.psi_unseen,
            e.psi_seen
        )
        .map_err(|e| CliError::io("stdout", e))?;
        rows.push(output::PredictionRow {
            set,
            psi_unseen: e.psi_unseen,
            psi_seen: e.psi_seen,
        });
    }
    if let Some(path) = &o.out {
        output::write_predictions(path, &rows, &table)?;
    }
    Ok(())
}
