use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use dcrec::data::{compute_propensities, gini_index, save_dataset, save_propensities, RawFormat};
use dcrec::eval::EvalReport;
use dcrec::experiment::{
    data_root, evaluate_test, plot, propensities_for, run_cached, run_experiment, DatasetSource, DatasetSpec,
    ExperimentSpec, PlotKind, ResultTable, RunConfig,
};
use dcrec::model::load_checkpoint;
use dcrec::{Error, Result};

#[derive(Parser)]
#[command(name = "dcrec", version, about = "Debiased sequential recommendation experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Preprocess a raw log (or the dataset section of a spec) into a dataset file.
    Prepare {
        /// Raw interaction file, or an experiment spec (`.toml`).
        dataset: PathBuf,
        /// movielens_dat, amazon_csv or steam_json; guessed from the extension when omitted.
        #[arg(long, value_parser = |s: &str| s.parse::<RawFormat>().map_err(|e| e.to_string()))]
        format: Option<RawFormat>,
        /// Minimum interactions per user and item.
        #[arg(long)]
        core: Option<usize>,
        /// Output dataset file; propensities are written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and test the base configuration of a spec once.
    Train {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-evaluate a saved model on the test split.
    Evaluate {
        checkpoint: PathBuf,
        /// Run config (`config.json`); defaults to the one beside the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra inference constants to report.
        #[arg(long, value_delimiter = ',')]
        c: Vec<f64>,
        /// Write the report here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every sweep point and seed of a spec and write the result table.
    Sweep { spec: PathBuf },
    /// Print the result table of an experiment directory.
    Report { dir: PathBuf },
    /// Draw SVG plots from an experiment directory.
    Plot {
        dir: PathBuf,
        /// Plot kind; both are drawn when omitted.
        #[arg(long, value_enum)]
        kind: Option<PlotKind>,
        /// Sweep parameter on the horizontal axis of the sweep curve.
        #[arg(long)]
        x_axis: Option<String>,
    },
}

fn guess_format(path: &Path) -> Result<RawFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("dat") => Ok(RawFormat::MovielensDat),
        Some("csv") => Ok(RawFormat::AmazonCsv),
        Some("json") | Some("jsonl") => Ok(RawFormat::SteamJson),
        _ => Err(Error::Config(format!("cannot tell the format of {}; pass --format", path.display()))),
    }
}

fn prepare(dataset: PathBuf, format: Option<RawFormat>, core: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut spec = if dataset.extension().is_some_and(|e| e == "toml") {
        ExperimentSpec::load(&dataset)?.dataset
    } else {
        let source = match format.map_or_else(|| guess_format(&dataset), Ok)? {
            RawFormat::MovielensDat => DatasetSource::MovielensDat,
            RawFormat::AmazonCsv => DatasetSource::AmazonCsv,
            RawFormat::SteamJson => DatasetSource::SteamJson,
        };
        let id = dataset.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
        DatasetSpec {
            id,
            source,
            // a path typed on the command line is relative to the working directory, not the data root
            path: Some(std::path::absolute(&dataset).map_err(|e| Error::io(&dataset, e))?),
            ..DatasetSpec::default()
        }
    };
    if let Some(k) = core {
        spec.preprocess.min_count = k;
    }
    let ds = spec.load()?;
    let out = out.unwrap_or_else(|| data_root().join(format!("{}.dataset.json", spec.id)));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    save_dataset(&out, &ds)?;
    let props = compute_propensities(&ds.fit_view().train_counts(), Default::default())?;
    let prop_path = out.with_extension("propensity.json");
    save_propensities(&prop_path, &props)?;
    let stats = json!({
        "dataset": spec.id,
        "users": ds.num_users(),
        "items": ds.num_items(),
        "interactions": ds.num_interactions(),
        "gini_train": gini_index(&ds.train_counts())?,
        "gini_all": gini_index(&ds.all_counts())?,
        "output": out,
        "propensities": prop_path,
    });
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn train(spec: PathBuf, seed: Option<u64>) -> Result<()> {
    let spec = ExperimentSpec::load(spec)?;
    let mut cfg = spec.base();
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let ds = cfg.dataset.load()?;
    let root = spec.output_path()?;
    let extra = spec.c_values()?.unwrap_or_default();
    let outcome = run_cached(&cfg, &ds, &extra, &root)?;
    println!("run directory: {}", outcome.dir.display());
    if outcome.cached {
        println!("(identical run found, reused)");
    }
    print!("{}", outcome.report.to_text());
    Ok(())
}

fn evaluate(checkpoint: PathBuf, config: Option<PathBuf>, c: Vec<f64>, out: Option<PathBuf>) -> Result<()> {
    let config = config.unwrap_or_else(|| checkpoint.with_file_name("config.json"));
    let text = std::fs::read_to_string(&config).map_err(|e| Error::io(&config, e))?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    let model = load_checkpoint(&checkpoint)?;
    let ds = cfg.dataset.load()?;
    if ds.num_items() != model.num_items() || ds.num_users() != model.num_users() {
        return Err(Error::Precondition("checkpoint does not match the dataset of its config".into()));
    }
    let props = propensities_for(&ds, &cfg)?;
    let report: EvalReport = evaluate_test(&model, &ds, &cfg, &props, &c)?;
    match out {
        Some(p) => report.save(p)?,
        None => print!("{}", report.to_text()),
    }
    Ok(())
}

fn sweep(spec: PathBuf) -> Result<()> {
    let spec = ExperimentSpec::load(spec)?;
    let table = run_experiment(&spec)?;
    println!("results: {}", spec.output_path()?.display());
    print!("{}", table.render());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.verb {
        Verb::Prepare { dataset, format, core, out } => prepare(dataset, format, core, out),
        Verb::Train { spec, seed } => train(spec, seed),
        Verb::Evaluate { checkpoint, config, c, out } => evaluate(checkpoint, config, c, out),
        Verb::Sweep { spec } => sweep(spec),
        Verb::Report { dir } => {
            print!("{}", ResultTable::load(&dir)?.render());
            Ok(())
        }
        Verb::Plot { dir, kind, x_axis } => {
            let table = ResultTable::load(&dir)?;
            let kinds = kind.map_or_else(|| vec![PlotKind::SweepCurve, PlotKind::ExposureBars], |k| vec![k]);
            for k in kinds {
                let out = dir.join(k.file_name());
                match plot(&table, k, x_axis.as_deref(), &out) {
                    Ok(()) => println!("{}", out.display()),
                    // without exposure reports only the curve can be drawn
                    Err(Error::Empty(what)) if kind.is_none() && k == PlotKind::ExposureBars => {
                        log::warn!("skipping exposure bars: {what}")
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
