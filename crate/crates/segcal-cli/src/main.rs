//! `segcal` command line: synthesize datasets, fit calibrators, evaluate
//! ECE reports, compare methods side by side, and run the selector-accuracy
//! ablation sweep.
//!
//! Exit codes: 0 success, 2 usage error, 3 degenerate data, 4 I/O or format
//! error. All payload output (files and stdout) is deterministic for fixed
//! flags and seed; timing goes to stderr only.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use segcal::calibrators::{
    apply_calibrator, ensemble_average, evaluate_params, fit_dirichlet, fit_metacal_ext,
    fit_selective, fit_temperature, fit_vector, CalibratorFile, CalibratorParams, FitConfig,
    FitReport, PARAMS_FILE_VERSION,
};
use segcal::io::{
    generate_synthetic, read_container, split_dataset, write_container, Dataset, Manifest,
    Provenance, SplitSpec, SyntheticConfig,
};
use segcal::metrics::{
    boundary_mask, dataset_ece, reliability_diagram_data, BinningConfig, BoundaryConfig,
    EceReport, ReliabilityBins,
};
use segcal::seg::{argmax_predict, correctness_mask, Correctness};
use segcal::selector::selector_accuracy_sweep;
use segcal::{ProbMap, SegcalError};

#[derive(Parser)]
#[command(
    name = "segcal",
    version,
    about = "Calibration toolkit for per-pixel classifiers",
    long_about = "Synthesize datasets, fit post-hoc calibrators, and evaluate \
                  expected calibration error.\n\nSet SEGCAL_THREADS to cap the \
                  worker pool (default 1; evaluation is currently sequential)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset container plus manifest
    Synth(SynthArgs),
    /// Fit a calibrator and write its parameters to JSON
    Fit(FitArgs),
    /// Evaluate fitted parameters on a dataset
    Eval(EvalArgs),
    /// Fit several methods on shared splits and tabulate test-set results
    Compare(CompareArgs),
    /// Sweep selector detection rates and report ECE per rate
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output container path (a .manifest.json sidecar is written next to it)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    images: usize,
    /// Image shape as HxW, e.g. 32x32
    #[arg(long)]
    size: String,
    #[arg(long)]
    classes: usize,
    /// 1.0 emits calibrated-by-construction logits; s > 1 is over-confident
    /// with NLL-optimal temperature exactly s
    #[arg(long, default_value_t = 1.0)]
    sharpness: f64,
    /// Probability of re-drawing labels inside the boundary band
    #[arg(long, default_value_t = 0.0)]
    boundary_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Method {
    Temp,
    Vector,
    Dirichlet,
    Metacal,
    Ensemble,
    Selective,
}

impl Method {
    fn label(self) -> &'static str {
        match self {
            Method::Temp => "TempS",
            Method::Vector => "LogS",
            Method::Dirichlet => "DirS",
            Method::Metacal => "MetaCal*",
            Method::Ensemble => "Ens.",
            Method::Selective => "Selective",
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Train,val,test fractions
    #[arg(long, default_value = "0.5,0.2,0.3")]
    split: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output params JSON path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Report JSON path (also printed to stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the calibrated reliability diagram as CSV
    #[arg(long)]
    diagram: Option<PathBuf>,
    /// Add boundary vs. non-boundary ECE to the report
    #[arg(long)]
    regional: bool,
    #[arg(long, default_value_t = 2)]
    boundary_radius: usize,
    /// Add correct vs. incorrect pixel ECE to the report
    #[arg(long)]
    split_correctness: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated: temp,vector,dirichlet,metacal,ensemble,selective
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, default_value = "0.5,0.2,0.3")]
    split: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON output path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated target detection rates in [0, 1]
    #[arg(long, default_value = "0,0.25,0.5,0.75,1.0")]
    rates: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON output path
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(SegcalError),
}

impl From<SegcalError> for CliError {
    fn from(err: SegcalError) -> Self {
        CliError::Data(err)
    }
}

fn exit_code(err: &SegcalError) -> u8 {
    use SegcalError::*;
    match err {
        DegenerateLabels(_) | AllPixelsIgnored(_) | EmptyDataset | EmptyInput
        | SplitMissing(_) | EmptyEnsemble => 3,
        Io(_) | Json(_) | BadMagic | VersionUnsupported(_) | TruncatedPayload { .. }
        | TrailingBytes { .. } | ClassCountMismatch { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = check_thread_env() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let started = Instant::now();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    match result {
        Ok(()) => {
            // timing is log-only so payload output stays byte-identical
            eprintln!("done in {:.3}s", started.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn check_thread_env() -> Result<usize, String> {
    match std::env::var("SEGCAL_THREADS") {
        Ok(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| format!("SEGCAL_THREADS must be a positive integer, got {raw:?}")),
        Err(_) => Ok(1),
    }
}

fn parse_size(raw: &str) -> Result<(usize, usize), CliError> {
    let mut parts = raw.split('x');
    let bad = || CliError::Usage(format!("--size must look like 32x32, got {raw:?}"));
    let h = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
    let w = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
    if parts.next().is_some() || h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

fn parse_split(raw: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--split must be three fractions, got {raw:?}")))?;
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "--split must be three fractions, got {raw:?}"
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn map_invalid_flags(err: SegcalError) -> CliError {
    match err {
        SegcalError::InvalidConfig(msg) => CliError::Usage(msg),
        other => CliError::Data(other),
    }
}

fn write_deterministic_json(path: &PathBuf, value: &serde_json::Value) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(value).map_err(SegcalError::from)?;
    json.push('\n');
    std::fs::write(path, json).map_err(SegcalError::from)?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let (h, w) = parse_size(&args.size)?;
    let mut cfg = SyntheticConfig::new(args.images, h, w, args.classes);
    cfg.sharpness = args.sharpness;
    cfg.boundary_noise = args.boundary_noise;
    cfg.seed = args.seed;
    cfg.validate().map_err(map_invalid_flags)?;
    let dataset = generate_synthetic(&cfg)?;
    write_container(&dataset.images, &args.out)?;
    let manifest = Manifest {
        path: args.out.display().to_string(),
        num_classes: cfg.num_classes,
        image_count: dataset.images.len(),
        provenance: Provenance::Generator { config: cfg },
    };
    let mut manifest_path = args.out.clone().into_os_string();
    manifest_path.push(".manifest.json");
    manifest.save(PathBuf::from(manifest_path))?;
    Ok(())
}

fn load_and_split(
    data: &PathBuf,
    split: &str,
    seed: u64,
) -> Result<(usize, Dataset, Dataset, Dataset), CliError> {
    let (num_classes, images) = read_container(data)?;
    let spec = SplitSpec {
        fractions: parse_split(split)?,
        seed,
    };
    spec.validate().map_err(map_invalid_flags)?;
    let (train, val, test) = split_dataset(images, &spec)?;
    Ok((num_classes, train, val, test))
}

fn run_fit(
    method: Method,
    train: &Dataset,
    val: &Dataset,
    cfg: &FitConfig,
) -> Result<FitReport, SegcalError> {
    match method {
        Method::Temp => fit_temperature(train, val, cfg),
        Method::Vector => fit_vector(train, val, cfg),
        Method::Dirichlet => fit_dirichlet(train, val, cfg),
        Method::Metacal => fit_metacal_ext(train, val, cfg),
        Method::Selective => fit_selective(train, val, cfg),
        Method::Ensemble => Err(SegcalError::InvalidParams(
            "the ensemble row is built inside `segcal compare`; \
             fit its member methods individually"
                .into(),
        )),
    }
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    if args.method == Method::Ensemble {
        return Err(CliError::Usage(
            "`fit --method ensemble` is not a standalone fit; use `segcal compare`".into(),
        ));
    }
    let (num_classes, train, val, _test) =
        load_and_split(&args.data, &args.split, args.seed)?;
    let mut cfg = FitConfig::with_seed(args.seed);
    cfg.bins = BinningConfig::new(args.bins).map_err(map_invalid_flags)?;
    let report = run_fit(args.method, &train, &val, &cfg)?;
    CalibratorFile {
        version: PARAMS_FILE_VERSION,
        num_classes,
        params: report.params.clone(),
    }
    .save(&args.out)?;
    let json = serde_json::to_string_pretty(&report).map_err(SegcalError::from)?;
    println!("{json}");
    Ok(())
}

/// Pooled bins over every non-ignored pixel, split by an arbitrary per-pixel
/// predicate.
fn pooled_split_bins(
    images: &Dataset,
    probs: &[ProbMap],
    bins: BinningConfig,
    mut in_first: impl FnMut(usize, usize, Correctness) -> bool,
) -> Result<(ReliabilityBins, ReliabilityBins), SegcalError> {
    let mut first = ReliabilityBins::new(bins);
    let mut second = ReliabilityBins::new(bins);
    for (img_idx, (img, p)) in images.iter().zip(probs).enumerate() {
        let pred = argmax_predict(p);
        let mask = correctness_mask(&pred, &img.labels)?;
        for (pix, &c) in mask.iter().enumerate() {
            let ok = match c {
                Correctness::Ignored => continue,
                Correctness::Correct => true,
                Correctness::Incorrect => false,
            };
            let conf = pred.confidence()[pix];
            if in_first(img_idx, pix, c) {
                first.push(conf, ok);
            } else {
                second.push(conf, ok);
            }
        }
    }
    Ok((first, second))
}

fn bins_summary(bins: &ReliabilityBins) -> serde_json::Value {
    serde_json::json!({
        "ece": (bins.total_count() > 0).then(|| bins.ece()),
        "count": bins.total_count(),
    })
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let (num_classes, images) = read_container(&args.data)?;
    let file = CalibratorFile::load(&args.params)?;
    if file.num_classes != num_classes {
        return Err(SegcalError::ClassCountMismatch {
            expected: file.num_classes,
            found: num_classes,
        }
        .into());
    }
    let bins = BinningConfig::new(args.bins).map_err(map_invalid_flags)?;

    let uncal = evaluate_params(&CalibratorParams::Identity, &images, bins)?;
    let probs: Vec<ProbMap> = images
        .iter()
        .map(|img| apply_calibrator(&file.params, &img.logits))
        .collect::<Result<_, _>>()?;
    let calibrated = dataset_ece(
        images
            .iter()
            .zip(&probs)
            .map(|(img, p)| (img.id, p, &img.labels)),
        bins,
    )?;

    let mut report = serde_json::json!({
        "method": file.params.method_name(),
        "num_classes": num_classes,
        "num_bins": args.bins,
        "uncalibrated": uncal.to_json_value(),
        "calibrated": calibrated.to_json_value(),
    });

    if args.regional {
        let masks: Vec<Vec<bool>> = images
            .iter()
            .map(|img| {
                boundary_mask(
                    &img.labels,
                    BoundaryConfig {
                        radius: args.boundary_radius,
                    },
                )
            })
            .collect();
        let (boundary, interior) =
            pooled_split_bins(&images, &probs, bins, |img_idx, pix, _| masks[img_idx][pix])?;
        report["regional"] = serde_json::json!({
            "boundary_radius": args.boundary_radius,
            "boundary": bins_summary(&boundary),
            "non_boundary": bins_summary(&interior),
        });
    }

    if args.split_correctness {
        let (correct, incorrect) =
            pooled_split_bins(&images, &probs, bins, |_, _, c| c == Correctness::Correct)?;
        report["split_correctness"] = serde_json::json!({
            "ece_correct": (correct.total_count() > 0).then(|| correct.ece()),
            "ece_incorrect": (incorrect.total_count() > 0).then(|| incorrect.ece()),
            "correct_count": correct.total_count(),
            "incorrect_count": incorrect.total_count(),
        });
    }

    if let Some(path) = &args.diagram {
        let mut csv = String::from("bin_low,bin_high,acc,conf,count,gap\n");
        for row in reliability_diagram_data(&calibrated.bins) {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                row.low, row.high, row.acc, row.conf, row.count, row.gap
            )
            .expect("string write");
        }
        std::fs::write(path, csv).map_err(SegcalError::from)?;
    }

    let json = serde_json::to_string_pretty(&report).map_err(SegcalError::from)?;
    println!("{json}");
    if let Some(path) = &args.out {
        write_deterministic_json(path, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    method: &'static str,
    ece: Option<f64>,
    accuracy: Option<f64>,
    miou: Option<f64>,
    nll: Option<f64>,
    best: bool,
    split_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

fn fnv1a_hash(ids: &[u32]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for id in ids {
        for byte in id.to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{hash:016x}")
}

fn mean_iou(images: &Dataset, probs: &[ProbMap], num_classes: usize) -> Result<f64, SegcalError> {
    let mut tp = vec![0u64; num_classes];
    let mut fp = vec![0u64; num_classes];
    let mut fneg = vec![0u64; num_classes];
    for (img, p) in images.iter().zip(probs) {
        let pred = argmax_predict(p);
        for (pix, &y) in img.labels.labels().iter().enumerate() {
            if y == segcal::IGNORE_LABEL {
                continue;
            }
            let y = usize::from(y);
            let yhat = usize::from(pred.predicted()[pix]);
            if y == yhat {
                tp[y] += 1;
            } else {
                fp[yhat] += 1;
                fneg[y] += 1;
            }
        }
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..num_classes {
        let denom = tp[c] + fp[c] + fneg[c];
        if denom > 0 {
            sum += tp[c] as f64 / denom as f64;
            present += 1;
        }
    }
    if present == 0 {
        return Err(SegcalError::EmptyInput);
    }
    Ok(sum / present as f64)
}

struct MethodEval {
    report: EceReport,
    miou: f64,
    nll: f64,
}

fn eval_probs(
    images: &Dataset,
    probs: &[ProbMap],
    bins: BinningConfig,
    num_classes: usize,
) -> Result<MethodEval, SegcalError> {
    let report = dataset_ece(
        images
            .iter()
            .zip(probs)
            .map(|(img, p)| (img.id, p, &img.labels)),
        bins,
    )?;
    let miou = mean_iou(images, probs, num_classes)?;
    let mut nll_sum = 0.0;
    let mut nll_n = 0u64;
    for (img, p) in images.iter().zip(probs) {
        let k = p.num_classes();
        for (pix, &y) in img.labels.labels().iter().enumerate() {
            if y == segcal::IGNORE_LABEL {
                continue;
            }
            nll_sum += -p.values()[pix * k + usize::from(y)]
                .max(segcal::PROB_FLOOR)
                .ln();
            nll_n += 1;
        }
    }
    Ok(MethodEval {
        report,
        miou,
        nll: nll_sum / nll_n as f64,
    })
}

fn params_probs(
    params: &CalibratorParams,
    images: &Dataset,
) -> Result<Vec<ProbMap>, SegcalError> {
    images
        .iter()
        .map(|img| apply_calibrator(params, &img.logits))
        .collect()
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    if args.methods.is_empty() {
        return Err(CliError::Usage("--methods needs at least one method".into()));
    }
    let (num_classes, train, val, test) =
        load_and_split(&args.data, &args.split, args.seed)?;
    if test.is_empty() {
        return Err(SegcalError::SplitMissing("test").into());
    }
    let mut cfg = FitConfig::with_seed(args.seed);
    cfg.bins = BinningConfig::new(args.bins).map_err(map_invalid_flags)?;
    let split_hash = fnv1a_hash(&test.iter().map(|img| img.id).collect::<Vec<_>>());

    // fixed presentation order; Uncal always leads
    let order = [
        Method::Temp,
        Method::Vector,
        Method::Dirichlet,
        Method::Metacal,
        Method::Ensemble,
        Method::Selective,
    ];
    let mut rows: Vec<CompareRow> = Vec::new();
    let uncal = eval_probs(
        &test,
        &params_probs(&CalibratorParams::Identity, &test)?,
        cfg.bins,
        num_classes,
    )?;
    rows.push(CompareRow {
        method: "Uncal",
        ece: Some(uncal.report.dataset_ece),
        accuracy: Some(uncal.report.accuracy),
        miou: Some(uncal.miou),
        nll: Some(uncal.nll),
        best: false,
        split_hash: split_hash.clone(),
        note: None,
    });

    // the ensemble row averages the probability maps of the fitted scaling
    // calibrators (temperature, vector, Dirichlet)
    let mut scaling_probs: Vec<Vec<ProbMap>> = Vec::new();
    for method in order {
        if !args.methods.contains(&method) {
            if matches!(method, Method::Temp | Method::Vector | Method::Dirichlet)
                && args.methods.contains(&Method::Ensemble)
            {
                // still fit it silently as an ensemble member
                if let Ok(report) = run_fit(method, &train, &val, &cfg) {
                    if let Ok(probs) = params_probs(&report.fitted, &test) {
                        scaling_probs.push(probs);
                    }
                }
            }
            continue;
        }
        let row = if method == Method::Ensemble {
            if scaling_probs.is_empty() {
                Err(SegcalError::EmptyEnsemble)
            } else {
                let averaged: Result<Vec<ProbMap>, _> = (0..test.len())
                    .map(|i| {
                        ensemble_average(
                            &scaling_probs.iter().map(|m| m[i].clone()).collect::<Vec<_>>(),
                        )
                    })
                    .collect();
                averaged.and_then(|probs| eval_probs(&test, &probs, cfg.bins, num_classes))
            }
        } else {
            run_fit(method, &train, &val, &cfg).and_then(|report| {
                let probs = params_probs(&report.params, &test)?;
                if matches!(method, Method::Temp | Method::Vector | Method::Dirichlet) {
                    scaling_probs.push(params_probs(&report.fitted, &test)?);
                }
                eval_probs(&test, &probs, cfg.bins, num_classes)
            })
        };
        match row {
            Ok(eval) => rows.push(CompareRow {
                method: method.label(),
                ece: Some(eval.report.dataset_ece),
                accuracy: Some(eval.report.accuracy),
                miou: Some(eval.miou),
                nll: Some(eval.nll),
                best: false,
                split_hash: split_hash.clone(),
                note: None,
            }),
            Err(err) => rows.push(CompareRow {
                method: method.label(),
                ece: None,
                accuracy: None,
                miou: None,
                nll: None,
                best: false,
                split_hash: split_hash.clone(),
                note: Some(err.to_string()),
            }),
        }
    }

    if let Some(best_idx) = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.ece.map(|e| (i, e)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(i, _)| i)
    {
        rows[best_idx].best = true;
    }

    print_compare_table(&rows);
    if let Some(path) = &args.out {
        let value = serde_json::to_value(&rows).map_err(SegcalError::from)?;
        write_deterministic_json(path, &value)?;
    }
    Ok(())
}

fn print_compare_table(rows: &[CompareRow]) {
    let fmt = |v: Option<f64>| match v {
        Some(v) => format!("{v:.4}"),
        None => "—".to_string(),
    };
    let mut lines = vec![[
        "Method".to_string(),
        "ECE".to_string(),
        "Acc".to_string(),
        "mIoU".to_string(),
        "NLL".to_string(),
    ]];
    for row in rows {
        let mut name = row.method.to_string();
        if row.best {
            name.push_str(" *");
        }
        lines.push([
            name,
            fmt(row.ece),
            fmt(row.accuracy),
            fmt(row.miou),
            fmt(row.nll),
        ]);
    }
    let widths: Vec<usize> = (0..5)
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap())
        .collect();
    for line in &lines {
        let mut out = String::new();
        for (c, cell) in line.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                out.push_str(cell);
                out.push_str(&" ".repeat(pad));
            } else {
                out.push_str(&" ".repeat(pad));
                out.push_str(cell);
            }
        }
        println!("{}", out.trim_end());
    }
    for row in rows {
        if let Some(note) = &row.note {
            println!("note: {} failed: {note}", row.method);
        }
    }
}

fn cmd_ablate(args: AblateArgs) -> Result<(), CliError> {
    let rates: Vec<f64> = args
        .rates
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--rates must be numbers, got {:?}", args.rates)))?;
    if rates.is_empty() || rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(CliError::Usage(
            "--rates entries must lie in [0, 1]".into(),
        ));
    }
    let (_num_classes, images) = read_container(&args.data)?;
    let bins = BinningConfig::new(args.bins).map_err(map_invalid_flags)?;
    let points = selector_accuracy_sweep(&images, &rates, bins, args.seed)?;
    let monotone = points
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 0.005);
    let value = serde_json::json!({
        "points": points
            .iter()
            .map(|(rate, ece)| serde_json::json!({"rate": rate, "ece": ece}))
            .collect::<Vec<_>>(),
        "monotone_non_increasing": monotone,
        "tolerance": 0.005,
    });
    println!("{:>6}  {:>8}", "rate", "ECE");
    for (rate, ece) in &points {
        println!("{rate:>6.2}  {ece:>8.4}");
    }
    println!(
        "monotone non-increasing (tol 0.005): {}",
        if monotone { "yes" } else { "no" }
    );
    if let Some(path) = &args.out {
        write_deterministic_json(path, &value)?;
    }
    Ok(())
}
