mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sketchgroup::abstraction::{self, read_pgm, SynthInput, DEFAULT_RELATIVE_THRESHOLDS};
use sketchgroup::inference;
use sketchgroup::metrics::{
    evaluate, CoveringDirection, EvalItem, EvalOptions, EvalReport, Weighting,
};
use sketchgroup::model::HyperParams;
use sketchgroup::par::Execution;
use sketchgroup::stroke::{
    gen_synthetic, import_quickdraw, parse_stroke3, write_stroke3, GroupLabels, Sketch,
    SketchRecord, SyntheticCategory, DEFAULT_MAX_SEGMENTS,
};
use sketchgroup::train::{
    fit_with, load_checkpoint, save_checkpoint, Checkpoint, FitEvent, TrainConfig,
};
use sketchgroup::write_atomic;

use crate::error::{CliError, CliResult};

/// Perceptual grouping of stroke sketches.
#[derive(Parser)]
#[command(name = "sketchgroup", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Compute per-sketch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write labeled synthetic sketches.
    Synth(SynthArgs),
    /// Train a grouper on labeled sketches.
    Train(TrainArgs),
    /// Predict groups with a trained model.
    Group(GroupArgs),
    /// Compare predicted groups with ground truth.
    Eval(EvalArgs),
    /// Drop unimportant groups from a drawing or PGM edge map.
    Abstract(AbstractArgs),
    /// Draw a sketch as SVG, coloured by group.
    Render(RenderArgs),
    /// Convert raw QuickDraw drawings to the interchange format.
    ImportQuickdraw(ImportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Comma-separated category names; all four by default.
    #[arg(long, value_delimiter = ',')]
    categories: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Labeled sketches scored at every checkpoint.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Checkpoint path; also rewritten at every periodic checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Metrics log; defaults to the checkpoint path with `.log` appended.
    #[arg(long)]
    log: Option<PathBuf>,
    /// `key = value` settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, same keys as the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    augment: bool,
}

#[derive(Args)]
struct GroupArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write each predicted affinity matrix as one JSON line.
    #[arg(long)]
    dump_affinity: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Equal,
    ArcLength,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// One row per category above the Average row.
    #[arg(long)]
    per_category: bool,
    #[arg(long, value_enum, default_value = "equal")]
    weighting: WeightingArg,
    /// Average the covering over both directions.
    #[arg(long)]
    symmetric_sc: bool,
}

#[derive(Args)]
struct AbstractArgs {
    /// Required unless --given-labels.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Binary PGM edge map or interchange file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Fractions of the top group importance.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Use the labels stored in the input instead of a model.
    #[arg(long)]
    given_labels: bool,
    /// Treat light PGM pixels as strokes.
    #[arg(long)]
    invert: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Colour strokes by the record's labels.
    #[arg(long)]
    labels: bool,
    /// Record to draw.
    #[arg(long, default_value_t = 0)]
    index: usize,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_SEGMENTS)]
    max_segments: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a, exec),
        Command::Group(a) => group(a, exec),
        Command::Eval(a) => eval(a),
        Command::Abstract(a) => abstract_cmd(a),
        Command::Render(a) => render_cmd(a),
        Command::ImportQuickdraw(a) => import(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_records(path: &Path) -> CliResult<Vec<SketchRecord>> {
    parse_stroke3(&read_text(path)?, usize::MAX)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))
}

fn load_model(path: &Path) -> CliResult<Checkpoint> {
    load_checkpoint(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Classify as usual and name the record in the message.
fn at_record(i: usize, e: sketchgroup::Error) -> CliError {
    match CliError::from(e) {
        CliError::Usage(m) => CliError::Usage(m),
        CliError::Data(m) => CliError::Data(format!("record {i}: {m}")),
        CliError::Runtime(m) => CliError::Runtime(format!("record {i}: {m}")),
    }
}

fn labeled(records: Vec<SketchRecord>, what: &Path) -> CliResult<Vec<(Sketch, GroupLabels)>> {
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r.labels {
            Some(l) => Ok((r.sketch, l)),
            None => Err(CliError::Data(format!(
                "{}: record {i} has no labels",
                what.display()
            ))),
        })
        .collect()
}

fn synth(a: SynthArgs) -> CliResult {
    let cats: Vec<SyntheticCategory> = if a.categories.is_empty() {
        SyntheticCategory::ALL.to_vec()
    } else {
        a.categories
            .iter()
            .map(|c| {
                c.parse()
                    .map_err(|_| CliError::Usage(format!("unknown category '{c}'")))
            })
            .collect::<CliResult<_>>()?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let records = (0..a.count)
        .map(|i| {
            let (s, l) = gen_synthetic(cats[i % cats.len()], a.jitter, &mut rng)?;
            Ok(SketchRecord::new(s, Some(l)))
        })
        .collect::<Result<Vec<_>, sketchgroup::Error>>()?;
    write(&a.out, &write_stroke3(&records))
}

fn resolve_settings(a: &TrainArgs) -> CliResult<(HyperParams, TrainConfig)> {
    let (mut hyper, mut config) = (HyperParams::default(), TrainConfig::default());
    let mut pairs = match &a.config {
        Some(p) => config::read(p)?,
        None => Vec::new(),
    };
    for s in &a.set {
        let Some((k, v)) = s.split_once('=') else {
            return Err(CliError::Usage(format!(
                "--set expects KEY=VALUE, got '{s}'"
            )));
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    for (k, v) in &pairs {
        config::apply(&mut hyper, &mut config, k, v)?;
    }
    if let Some(x) = a.lr0 {
        config.lr0 = x;
    }
    if let Some(x) = a.iters {
        config.iters = x;
    }
    if let Some(x) = a.batch {
        config.batch = x;
    }
    if let Some(x) = a.seed {
        config.seed = x;
    }
    if let Some(x) = a.checkpoint_every {
        config.checkpoint_every = x;
    }
    if a.augment && config.augment.is_none() {
        config.augment = Some(Default::default());
    }
    hyper
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((hyper, config))
}

fn score(records: &[(Sketch, GroupLabels)], ck: &Checkpoint) -> CliResult<EvalReport> {
    let preds = records
        .iter()
        .map(|(s, _)| inference::group(s, &ck.params, &ck.hyper).map(|(l, _)| l))
        .collect::<Result<Vec<_>, _>>()?;
    let items: Vec<EvalItem> = records
        .iter()
        .zip(&preds)
        .map(|((s, t), p)| EvalItem {
            predicted: p,
            truth: t,
            category: s.category(),
            sketch: Some(s),
        })
        .collect();
    Ok(evaluate(&items, EvalOptions::default())?)
}

fn train(a: TrainArgs, exec: Execution) -> CliResult {
    let (hyper, config) = resolve_settings(&a)?;
    let data = labeled(read_records(&a.data)?, &a.data)?;
    let val = match &a.val {
        Some(p) => Some(labeled(read_records(p)?, p)?),
        None => None,
    };
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".log");
        PathBuf::from(s)
    });
    let mut lines = String::new();
    let report_val = |ck: &Checkpoint, step: u64| -> CliResult {
        if let Some(v) = &val {
            let m = score(v, ck)?.average;
            println!(
                "step {step} validation voi {:.4} pri {:.4} sc {:.4}",
                m.voi, m.pri, m.sc
            );
        }
        Ok(())
    };
    let mut failure: Option<CliError> = None;
    let outcome = fit_with(&data, &hyper, &config, exec, |ev| {
        match ev {
            FitEvent::Step(row) => {
                lines.push_str(&row.to_line());
                lines.push('\n');
            }
            FitEvent::Checkpoint(ck) => {
                let r = save_checkpoint(ck, &a.out)
                    .map_err(CliError::from)
                    .and_then(|_| write(&log_path, &lines))
                    .and_then(|_| report_val(ck, ck.optimizer.step));
                if let Err(e) = r {
                    failure = Some(e);
                    return Err(sketchgroup::Error::Config("aborted".into()));
                }
            }
        }
        Ok(())
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let outcome = outcome?;
    save_checkpoint(&outcome.checkpoint, &a.out)?;
    write(&log_path, &lines)?;
    report_val(&outcome.checkpoint, outcome.checkpoint.optimizer.step)?;
    if let Some(last) = outcome.log.last() {
        println!(
            "step {} loss {:.4} moving average {:.4}",
            last.step, last.loss, last.moving_average
        );
    }
    Ok(())
}

fn group(a: GroupArgs, exec: Execution) -> CliResult {
    let ck = load_model(&a.model)?;
    let records = read_records(&a.input)?;
    let idx: Vec<usize> = (0..records.len()).collect();
    let results = exec.try_map(&idx, |&i| {
        inference::group(&records[i].sketch, &ck.params, &ck.hyper).map_err(|e| at_record(i, e))
    })?;
    let mut out = Vec::with_capacity(records.len());
    let mut dump = String::new();
    for (r, (labels, g)) in records.into_iter().zip(results) {
        dump.push_str(&json!({ "n": g.n(), "values": g.values() }).to_string());
        dump.push('\n');
        out.push(SketchRecord {
            sketch: r.sketch,
            labels: Some(labels),
            provenance: r.provenance,
        });
    }
    write(&a.out, &write_stroke3(&out))?;
    if let Some(p) = &a.dump_affinity {
        write(p, &dump)?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let pred = read_records(&a.pred)?;
    let truth = read_records(&a.truth)?;
    if pred.is_empty() || truth.is_empty() {
        return Err(CliError::Data("nothing to evaluate".into()));
    }
    if pred.len() != truth.len() {
        return Err(CliError::Data(format!(
            "{} predictions for {} ground-truth records",
            pred.len(),
            truth.len()
        )));
    }
    for (i, (p, t)) in pred.iter().zip(&truth).enumerate() {
        let (Some(pl), Some(tl)) = (&p.labels, &t.labels) else {
            return Err(CliError::Data(format!("record {i} lacks labels")));
        };
        if pl.len() != tl.len() {
            return Err(CliError::Data(format!(
                "record {i}: {} predicted labels, {} true",
                pl.len(),
                tl.len()
            )));
        }
    }
    let items: Vec<EvalItem> = pred
        .iter()
        .zip(&truth)
        .map(|(p, t)| EvalItem {
            predicted: p.labels.as_ref().unwrap(),
            truth: t.labels.as_ref().unwrap(),
            category: t.sketch.category(),
            sketch: Some(&t.sketch),
        })
        .collect();
    let opts = EvalOptions {
        weighting: match a.weighting {
            WeightingArg::Equal => Weighting::Equal,
            WeightingArg::ArcLength => Weighting::ArcLength,
        },
        covering: if a.symmetric_sc {
            CoveringDirection::Symmetric
        } else {
            CoveringDirection::HumanByMachine
        },
    };
    let report = evaluate(&items, opts).map_err(|e| CliError::Data(e.to_string()))?;
    print!("{}", report.to_table(a.per_category));
    Ok(())
}

fn abstract_cmd(a: AbstractArgs) -> CliResult {
    let rel = if a.thresholds.is_empty() {
        DEFAULT_RELATIVE_THRESHOLDS.to_vec()
    } else {
        a.thresholds.clone()
    };
    let model = match (&a.model, a.given_labels) {
        (Some(p), false) => Some(load_model(p)?),
        (None, false) => {
            return Err(CliError::Usage(
                "--model is required unless --given-labels is set".into(),
            ))
        }
        (_, true) => None,
    };
    let bytes = std::fs::read(&a.input)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    let mut out = Vec::new();
    if bytes.starts_with(b"P5") {
        let Some(ck) = &model else {
            return Err(CliError::Usage("a raster input needs --model".into()));
        };
        let bmp = read_pgm(&bytes, a.invert)?;
        let s = abstraction::synthesize(SynthInput::Raster(&bmp), &ck.params, &ck.hyper, &rel)?;
        out.extend(s.levels.into_iter().map(|l| l.record));
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Data("input is neither PGM nor text".into()))?;
        let records = parse_stroke3(&text, usize::MAX)?;
        if records.is_empty() {
            return Err(CliError::Data("input has no sketches".into()));
        }
        for (i, r) in records.iter().enumerate() {
            let s = match &model {
                Some(ck) => abstraction::synthesize(
                    SynthInput::Sketch(&r.sketch),
                    &ck.params,
                    &ck.hyper,
                    &rel,
                ),
                None => {
                    let labels = r
                        .labels
                        .as_ref()
                        .ok_or_else(|| CliError::Data(format!("record {i} has no labels")))?;
                    abstraction::PolylineGroups::from_sketch(&r.sketch, labels).and_then(|g| {
                        abstraction::synthesize_grouped(
                            g,
                            &rel,
                            r.sketch.category().map(str::to_string),
                        )
                    })
                }
            };
            let s = s.map_err(|e| at_record(i, e))?;
            out.extend(s.levels.into_iter().map(|l| l.record));
        }
    }
    write(&a.out, &write_stroke3(&out))
}

fn render_cmd(a: RenderArgs) -> CliResult {
    let records = read_records(&a.input)?;
    let r = records
        .get(a.index)
        .ok_or_else(|| CliError::Data(format!("no record {} in {}", a.index, a.input.display())))?;
    let labels = if a.labels { r.labels.as_ref() } else { None };
    write(&a.out, &sketchgroup::render::render_svg(&r.sketch, labels))
}

fn import(a: ImportArgs) -> CliResult {
    let (records, skipped) = import_quickdraw(&read_text(&a.input)?, a.max_segments)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    if skipped > 0 {
        log::warn!("skipped {skipped} empty strokes");
    }
    write(&a.out, &write_stroke3(&records))
}
