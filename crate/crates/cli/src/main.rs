//! `tripseg`: dataset validation, label/mask alignment, statistics,
//! evaluation, paired method comparison, and the fusion self-check.
//!
//! Exit codes: 0 success, 1 invalid data or flags, 2 I/O failure.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tripseg_core::alignment::{align_frames, alignment_stats, read_label_stream, read_mask_stream};
use tripseg_core::dataset::{
    dataset_stats, read_ground_truth, read_predictions, validate_ground_truth, write_ground_truth,
};
use tripseg_core::eval::{evaluate, evaluate_subset, ApMethod, Averaging, EvalConfig, Mode};
use tripseg_core::fusion::run_fusion_checks;
use tripseg_core::schema::{load_schema, Component, TripletSchema};
use tripseg_core::stats::{compare_methods, partition_frames, Comparison, WilcoxonResult};
use tripseg_core::{Error, FrameKey, Result};

#[derive(Parser)]
#[command(
    name = "tripseg",
    version,
    about = "Grounded surgical action triplet datasets and evaluation"
)]
struct Cli {
    /// Worker threads; outputs are identical for every value [default: all cores]
    #[arg(short, long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Triplet schema CSV [default: the bundled 100-triplet schema]
    #[arg(long, global = true, value_name = "CSV")]
    schema: Option<PathBuf>,

    /// Extra diagnostics on stderr
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    /// No human-readable summary on stdout
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a ground-truth directory and report every problem found
    Validate {
        /// Directory of per-video ground-truth JSON files
        gt: PathBuf,
        /// Write per-file diagnostics as JSON
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// Join a frame-level triplet label stream with an instance mask stream
    Align {
        /// CSV with columns video_id,frame_id,triplet_id
        #[arg(long, value_name = "CSV")]
        labels: PathBuf,
        /// Directory of per-video instance mask files
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        /// Output directory for the grounded dataset
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Ambiguity report (JSON) for manual resolution
        #[arg(long, value_name = "PATH")]
        report: PathBuf,
        /// Alignment summary (JSON)
        #[arg(long, value_name = "PATH")]
        summary: Option<PathBuf>,
    },
    /// Dataset counts and class histograms
    Stats {
        /// Directory of per-video ground-truth JSON files
        gt: PathBuf,
        /// Also write the counts as JSON
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// Score predictions against ground truth
    Eval(EvalArgs),
    /// Paired comparison of two methods over disjoint frame subsets
    Compare(CompareArgs),
    /// Invariant and gradient checks of the gated fusion reference
    FusionCheck {
        /// Seed of the random fusion instance
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the check report as JSON
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Seg,
    Det,
    Rec,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Seg => Mode::Seg,
            ModeArg::Det => Mode::Det,
            ModeArg::Rec => Mode::Rec,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Pooled,
    PerVideo,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApMethodArg {
    Envelope,
    Step,
}

#[derive(Args)]
struct ProtocolArgs {
    /// IoU threshold for a localisation match (seg/det)
    #[arg(long = "iou", default_value_t = 0.5, value_name = "TAU")]
    iou_threshold: f64,
    /// Components to report
    #[arg(long, value_delimiter = ',', default_value = "I,V,T,IV,IT,IVT")]
    components: Vec<Component>,
    /// Pool all frames per class, or average class AP over videos
    #[arg(long, value_enum, default_value_t = AveragingArg::Pooled)]
    averaging: AveragingArg,
    /// AP integration [default: envelope for seg/det, step for rec]
    #[arg(long, value_enum)]
    ap_method: Option<ApMethodArg>,
}

impl ProtocolArgs {
    fn config(&self, mode: Mode) -> Result<EvalConfig> {
        let mut c = EvalConfig::new(mode);
        c.iou_threshold = self.iou_threshold;
        c.components = self.components.clone();
        c.averaging = match self.averaging {
            AveragingArg::Pooled => Averaging::Pooled,
            AveragingArg::PerVideo => Averaging::PerVideo,
        };
        c.ap_method = self.ap_method.map(|m| match m {
            ApMethodArg::Envelope => ApMethod::Envelope,
            ApMethodArg::Step => ApMethod::Step,
        });
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth directory
    #[arg(long, value_name = "DIR")]
    gt: PathBuf,
    /// Prediction file (JSON array)
    #[arg(long, value_name = "PATH")]
    pred: PathBuf,
    /// Mask matching, box matching, or frame-level recognition
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Write the report JSON here
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Row label in the printed table
    #[arg(long, default_value = "method")]
    label: String,
}

#[derive(Args)]
struct CompareArgs {
    /// Ground-truth directory. Without it, --a and --b are JSON arrays of
    /// per-subset metric values.
    #[arg(long, value_name = "DIR")]
    gt: Option<PathBuf>,
    /// Predictions (or per-subset values) of method A, the one hypothesised to be better
    #[arg(long, value_name = "PATH")]
    a: PathBuf,
    /// Predictions (or per-subset values) of method B
    #[arg(long, value_name = "PATH")]
    b: PathBuf,
    #[arg(long, default_value = "A")]
    label_a: String,
    #[arg(long, default_value = "B")]
    label_b: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Seg)]
    mode: ModeArg,
    /// Component whose mAP is compared
    #[arg(long, default_value = "IVT")]
    component: Component,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Number of disjoint frame subsets
    #[arg(long, default_value_t = 12)]
    n_subsets: usize,
    /// Frames per subset
    #[arg(long, default_value_t = 500)]
    subset_size: usize,
    /// Seed of the subset partition
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-subset scores and the test result as JSON
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

struct Ui {
    verbose: u8,
    quiet: bool,
}

impl Ui {
    fn out(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
            let _ = std::io::stdout().flush();
        }
    }

    fn info(&self, text: &str) {
        if self.verbose > 0 {
            eprintln!("{text}");
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::InvalidInput("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot start {n} workers: {e}")))?;
    }
    let ui = Ui {
        verbose: cli.verbose,
        quiet: cli.quiet,
    };
    let schema = match &cli.schema {
        Some(path) => load_schema(path)?,
        None => TripletSchema::bundled(),
    };
    let start = Instant::now();
    let code = match cli.command {
        Command::Validate { gt, json } => cmd_validate(&gt, json.as_deref(), &schema, &ui)?,
        Command::Align {
            labels,
            masks,
            out,
            report,
            summary,
        } => cmd_align(
            &labels,
            &masks,
            &out,
            &report,
            summary.as_deref(),
            &schema,
            &ui,
        )?,
        Command::Stats { gt, json } => cmd_stats(&gt, json.as_deref(), &schema, &ui)?,
        Command::Eval(args) => cmd_eval(&args, &schema, &ui)?,
        Command::Compare(args) => cmd_compare(&args, &schema, &ui)?,
        Command::FusionCheck { seed, output } => cmd_fusion_check(seed, output.as_deref(), &ui)?,
    };
    ui.info(&format!("done in {:.2} s", start.elapsed().as_secs_f64()));
    Ok(code)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct FileReport {
    path: String,
    frames: usize,
    errors: Vec<String>,
}

fn cmd_validate(
    gt: &Path,
    json: Option<&Path>,
    schema: &TripletSchema,
    ui: &Ui,
) -> Result<ExitCode> {
    let diags = validate_ground_truth(gt, schema)?;
    let mut total = 0;
    let mut frames = 0;
    let mut files = Vec::new();
    for d in &diags {
        frames += d.frames;
        total += d.errors.len();
        for e in &d.errors {
            eprintln!("{e}");
        }
        files.push(FileReport {
            path: d.path.display().to_string(),
            frames: d.frames,
            errors: d.errors.iter().map(ToString::to_string).collect(),
        });
    }
    if let Some(path) = json {
        write_json(path, &files)?;
    }
    // I/O problems inside individual files still make the run an I/O failure
    if diags.iter().flat_map(|d| &d.errors).any(Error::is_io) {
        ui.out(&format!(
            "{} files, {frames} frames: {total} errors\n",
            diags.len()
        ));
        return Ok(ExitCode::from(2));
    }
    ui.out(&format!(
        "{} files, {frames} frames: {total} error{}\n",
        diags.len(),
        if total == 1 { "" } else { "s" }
    ));
    Ok(if total == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_align(
    labels: &Path,
    masks: &Path,
    out: &Path,
    report_path: &Path,
    summary_path: Option<&Path>,
    schema: &TripletSchema,
    ui: &Ui,
) -> Result<ExitCode> {
    let label_frames = read_label_stream(labels)?;
    let mask_frames = read_mask_stream(masks, schema)?;
    ui.info(&format!(
        "{} labelled frames, {} mask frames",
        label_frames.len(),
        mask_frames.len()
    ));
    let (frames, report) = align_frames(&label_frames, &mask_frames, schema)?;
    write_ground_truth(out, &frames)?;
    write_json(report_path, &report)?;
    let summary = alignment_stats(&report, &frames);
    if let Some(path) = summary_path {
        write_json(path, &summary)?;
    }
    ui.out(&summary.render());
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(gt: &Path, json: Option<&Path>, schema: &TripletSchema, ui: &Ui) -> Result<ExitCode> {
    let frames = read_ground_truth(gt, schema)?;
    let summary = dataset_stats(&frames, schema);
    if let Some(path) = json {
        write_json(path, &summary)?;
    }
    ui.out(&summary.render(schema));
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs, schema: &TripletSchema, ui: &Ui) -> Result<ExitCode> {
    let mode = Mode::from(args.mode);
    let config = args.protocol.config(mode)?;
    let gt = read_ground_truth(&args.gt, schema)?;
    let preds = read_predictions(&args.pred, mode)?;
    ui.info(&format!("{} ground-truth frames loaded", gt.len()));
    let report = evaluate(&gt, &preds, &config, schema)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    ui.out(&report.render_table(&args.label));
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CompareReport<'a> {
    metric: String,
    labels: [&'a str; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    protocol: Option<CompareProtocol>,
    n_subsets: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    subset_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    per_subset: &'a [tripseg_core::stats::PairedValue],
    wilcoxon: &'a WilcoxonResult,
    summary: &'a tripseg_core::stats::ComparisonSummary,
}

#[derive(Serialize)]
struct CompareProtocol {
    mode: Mode,
    component: Component,
    iou_threshold: f64,
    averaging: Averaging,
    ap_method: ApMethod,
}

fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::InvalidInput(format!(
            "{}: expected a JSON array of numbers: {e}",
            path.display()
        ))
    })
}

fn cmd_compare(args: &CompareArgs, schema: &TripletSchema, ui: &Ui) -> Result<ExitCode> {
    let (comparison, metric, protocol, partition): (
        Comparison,
        String,
        Option<CompareProtocol>,
        Option<(usize, u64)>,
    ) = match &args.gt {
        None => {
            let a = read_values(&args.a)?;
            let b = read_values(&args.b)?;
            (
                compare_methods(&a, &b)?,
                "per-subset values".to_string(),
                None,
                None,
            )
        }
        Some(gt_dir) => {
            let mode = Mode::from(args.mode);
            let mut config = args.protocol.config(mode)?;
            config.components = vec![args.component];
            let gt = read_ground_truth(gt_dir, schema)?;
            let preds_a = read_predictions(&args.a, mode)?;
            let preds_b = read_predictions(&args.b, mode)?;
            let keys: Vec<FrameKey> = gt.iter().map(|f| f.key()).collect();
            let part = partition_frames(&keys, args.n_subsets, args.subset_size, args.seed)?;
            let mut a = Vec::with_capacity(part.subsets.len());
            let mut b = Vec::with_capacity(part.subsets.len());
            for (i, subset) in part.subsets.iter().enumerate() {
                let subset: BTreeSet<FrameKey> = subset.iter().cloned().collect();
                for (preds, values, label) in [
                    (&preds_a, &mut a, &args.label_a),
                    (&preds_b, &mut b, &args.label_b),
                ] {
                    let r = evaluate_subset(&gt, preds, &subset, &config, schema)?;
                    let v = r.map(args.component).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "subset {i} has no ground truth for component {}",
                            args.component
                        ))
                    })?;
                    ui.info(&format!("subset {i} {label}: {v:.4}"));
                    values.push(v);
                }
            }
            let protocol = CompareProtocol {
                mode,
                component: args.component,
                iou_threshold: config.iou_threshold,
                averaging: config.averaging,
                ap_method: config.resolved_ap_method(),
            };
            (
                compare_methods(&a, &b)?,
                format!("mAP_{}^{}", args.component, mode),
                Some(protocol),
                Some((args.subset_size, args.seed)),
            )
        }
    };
    let report = CompareReport {
        metric,
        labels: [&args.label_a, &args.label_b],
        protocol,
        n_subsets: comparison.per_subset.len(),
        subset_size: partition.map(|p| p.0),
        seed: partition.map(|p| p.1),
        per_subset: &comparison.per_subset,
        wilcoxon: &comparison.wilcoxon,
        summary: &comparison.summary,
    };
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    ui.out(&comparison.render(&args.label_a, &args.label_b));
    Ok(ExitCode::SUCCESS)
}

fn cmd_fusion_check(seed: u64, output: Option<&Path>, ui: &Ui) -> Result<ExitCode> {
    let report = run_fusion_checks(seed)?;
    if let Some(path) = output {
        write_json(path, &report)?;
    }
    ui.out(&report.render());
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
