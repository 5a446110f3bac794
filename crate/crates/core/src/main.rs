use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use singsim::cleanse::{CleanserKind, CorpusManifest};
use singsim::config::ToolConfig;
use singsim::error::Error;
use singsim::labels::SegmentList;
use singsim::metrics::{build_eval_mask, mask_from_segments, score_corpus, MaskPolicy};
use singsim::pit::PredictionMatrix;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(
    name = "singsim",
    version,
    about = "Simulated multi-singer diarization data generation and scoring",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label a WAV file with energy-based VAD and write RTTM
    Vad(VadArgs),
    /// Split a WAV file into fixed-length segments
    Segment(SegmentArgs),
    /// Prepare a corpus: filter, segment, cleanse, and label input WAVs
    Cleanse(CleanseArgs),
    /// Prepare a corpus and render a simulated mixture dataset
    Simulate(SimulateArgs),
    /// Score hypothesis RTTM against reference RTTM (DER and counting errors)
    Score(ScoreArgs),
    /// Evaluate the permutation-invariant BCE loss of predictions against labels
    PitCheck(PitCheckArgs),
    /// Report corpus duration and overlap-ratio statistics from RTTM files
    Stats(StatsArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML config file; flags override its values
    #[arg(long, env = "SINGSIM_CONFIG", global = false)]
    config: Option<PathBuf>,
    /// Expected input sample rate in Hz
    #[arg(long, env = "SINGSIM_SAMPLE_RATE")]
    sample_rate: Option<u32>,
    /// VAD threshold in dB relative to mean frame energy
    #[arg(long, env = "SINGSIM_THRESHOLD_DB", allow_negative_numbers = true)]
    threshold_db: Option<f64>,
    /// VAD frame length in milliseconds
    #[arg(long, env = "SINGSIM_FRAME_MS")]
    frame_ms: Option<f64>,
    /// Median filter width in frames (odd)
    #[arg(long, env = "SINGSIM_MEDIAN_FRAMES")]
    median_frames: Option<usize>,
    /// Minimum VAD-active fraction below which a clip is instrumental
    #[arg(long, env = "SINGSIM_MIN_ACTIVE_FRAC")]
    min_active_frac: Option<f64>,
    /// Segment length in seconds
    #[arg(long, env = "SINGSIM_SEGMENT_SECONDS")]
    segment_seconds: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ToolConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ToolConfig::load(path)?,
            None => ToolConfig::default(),
        };
        if let Some(rate) = self.sample_rate {
            cfg.sample_rate = rate;
        }
        if let Some(db) = self.threshold_db {
            cfg.vad.threshold_db = db;
        }
        if let Some(ms) = self.frame_ms {
            cfg.vad.frame_len = ((ms / 1000.0) * cfg.sample_rate as f64).round() as usize;
        }
        if let Some(w) = self.median_frames {
            cfg.vad.median_width = w;
        }
        if let Some(f) = self.min_active_frac {
            cfg.vad.min_active_fraction = f;
        }
        if let Some(s) = self.segment_seconds {
            cfg.segment_seconds = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct VadArgs {
    /// Input mono WAV file
    #[arg(long)]
    input: PathBuf,
    /// Output RTTM path (defaults to input with .rttm extension)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Skip the median filter pass
    #[arg(long)]
    no_median: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SegmentArgs {
    /// Input mono WAV file
    #[arg(long)]
    input: PathBuf,
    /// Directory for the segment WAVs
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct CleanseArgs {
    /// Directory of input WAV files (vocal tracks)
    #[arg(long, env = "SINGSIM_INPUT_DIR")]
    input_dir: Option<PathBuf>,
    /// Directory for cleansed clips, labels, and the manifest
    #[arg(long, env = "SINGSIM_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// External cleanser command with {in} and {out} placeholders
    /// (default: identity passthrough)
    #[arg(long)]
    cmd: Option<String>,
    /// Timeout for the external cleanser, in seconds
    #[arg(long, default_value_t = 600.0)]
    cmd_timeout: f64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory of input WAV files; runs corpus preparation first
    #[arg(long, env = "SINGSIM_INPUT_DIR")]
    input_dir: Option<PathBuf>,
    /// Existing corpus manifest (skips preparation)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Working directory for the prepared corpus
    #[arg(long, env = "SINGSIM_WORK_DIR")]
    work_dir: Option<PathBuf>,
    /// Output directory for the rendered dataset
    #[arg(long, env = "SINGSIM_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Number of mixtures to render
    #[arg(long, default_value_t = 100)]
    n_mix: u64,
    /// Master seed for all randomness
    #[arg(long, env = "SINGSIM_SEED")]
    seed: Option<u64>,
    /// Lower SNR bound in dB
    #[arg(long, env = "SINGSIM_SNR_LOW", allow_negative_numbers = true)]
    snr_low: Option<f64>,
    /// Upper SNR bound in dB
    #[arg(long, env = "SINGSIM_SNR_HIGH", allow_negative_numbers = true)]
    snr_high: Option<f64>,
    /// Clips per mixture
    #[arg(long, env = "SINGSIM_SINGERS")]
    singers: Option<usize>,
    /// Worker threads (output is identical for any value)
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// External cleanser command with {in} and {out} placeholders
    #[arg(long)]
    cmd: Option<String>,
    /// Timeout for the external cleanser, in seconds
    #[arg(long, default_value_t = 600.0)]
    cmd_timeout: f64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ScoreArgs {
    /// Reference RTTM
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Hypothesis RTTM
    #[arg(long = "hyp")]
    hypothesis: PathBuf,
    /// Optional external VAD RTTM restricting evaluated sections
    #[arg(long)]
    vad: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct PitCheckArgs {
    /// Label RTTM (one recording)
    #[arg(long)]
    labels: PathBuf,
    /// CSV of predicted probabilities, frames x singers, no header
    #[arg(long)]
    pred: PathBuf,
    /// Recording id to use when the RTTM holds several
    #[arg(long)]
    recording: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct StatsArgs {
    /// RTTM files to analyze
    #[arg(required = true)]
    rttm: Vec<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Vad(args) => run_vad(args),
        Command::Segment(args) => run_segment(args),
        Command::Cleanse(args) => run_cleanse(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Score(args) => run_score(args),
        Command::PitCheck(args) => run_pit_check(args),
        Command::Stats(args) => run_stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

fn check_rate(clip: &singsim::AudioClip, cfg: &ToolConfig) -> Result<(), Error> {
    if clip.sample_rate != cfg.sample_rate {
        return Err(Error::SampleRateMismatch {
            left: cfg.sample_rate,
            right: clip.sample_rate,
        });
    }
    Ok(())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run_vad(args: VadArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let clip = singsim::load_wav(&args.input)?;
    check_rate(&clip, &cfg)?;
    let outcome = singsim::energy_vad(&clip, &cfg.vad)?;
    let labels = if args.no_median {
        outcome.labels.clone()
    } else {
        singsim::median_filter(&outcome.labels, cfg.vad.median_width)?
    };
    let output = args.output.unwrap_or_else(|| args.input.with_extension("rttm"));
    let segments = singsim::frames_to_segments(&labels, &clip.id);
    singsim::write_rttm(&[&segments], &output)?;
    print_json(&json!({
        "input": args.input,
        "output": output,
        "num_frames": labels.num_frames(),
        "active_fraction": labels.active_fraction(),
        "silent": outcome.silent,
        "instrumental": outcome.silent || outcome.active_fraction() < cfg.vad.min_active_fraction,
    }));
    Ok(())
}

fn run_segment(args: SegmentArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let clip = singsim::load_wav(&args.input)?;
    check_rate(&clip, &cfg)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let segments = singsim::segment_clip(&clip, cfg.segment_seconds)?;
    let mut paths = Vec::new();
    for segment in &segments {
        let path = args.out_dir.join(format!("{}.wav", segment.id));
        singsim::save_wav(segment, &path)?;
        paths.push(path);
    }
    print_json(&json!({
        "input": args.input,
        "segment_seconds": cfg.segment_seconds,
        "segments": paths,
    }));
    Ok(())
}

fn cleanser_from_cmd(cmd: Option<&str>, timeout_s: f64) -> Result<CleanserKind, Error> {
    match cmd {
        Some(template) => CleanserKind::external(template, Duration::from_secs_f64(timeout_s)),
        None => Ok(CleanserKind::Identity),
    }
}

fn require_dir(value: Option<PathBuf>, fallback: Option<PathBuf>, what: &str) -> Result<PathBuf, Error> {
    value
        .or(fallback)
        .ok_or_else(|| Error::Config(format!("{what} is required (flag or config file)")))
}

fn run_cleanse(args: CleanseArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let input_dir = require_dir(args.input_dir, cfg.paths.input_dir.clone(), "--input-dir")?;
    let out_dir = require_dir(args.out_dir, cfg.paths.output_dir.clone(), "--out-dir")?;
    let kind = cleanser_from_cmd(args.cmd.as_deref(), args.cmd_timeout)?;
    let manifest = singsim::prepare_corpus(
        &input_dir,
        &out_dir,
        &cfg.vad,
        &kind,
        cfg.segment_seconds,
        Some(cfg.sample_rate),
    )?;
    print_json(&json!({
        "manifest": out_dir.join(singsim::cleanse::MANIFEST_FILE),
        "accepted": manifest.accepted().count(),
        "rejected": manifest.rejected().count(),
    }));
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let mut sim = cfg.sim.clone();
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    if let Some(low) = args.snr_low {
        sim.snr_low_db = low;
    }
    if let Some(high) = args.snr_high {
        sim.snr_high_db = high;
    }
    if let Some(singers) = args.singers {
        sim.singers_per_mix = singers;
    }
    sim.validate()?;

    let manifest = match (&args.corpus, &args.input_dir.clone().or(cfg.paths.input_dir.clone())) {
        (Some(path), _) => CorpusManifest::load(path)?,
        (None, Some(input_dir)) => {
            let work_dir = require_dir(args.work_dir.clone(), cfg.paths.work_dir.clone(), "--work-dir")?;
            let kind = cleanser_from_cmd(args.cmd.as_deref(), args.cmd_timeout)?;
            singsim::prepare_corpus(
                input_dir,
                &work_dir,
                &cfg.vad,
                &kind,
                cfg.segment_seconds,
                Some(cfg.sample_rate),
            )?
        }
        (None, None) => {
            return Err(Error::Config(
                "simulate needs --corpus or --input-dir".into(),
            ))
        }
    };

    let out_dir = require_dir(args.out_dir, cfg.paths.output_dir.clone(), "--out-dir")?;
    let dataset = singsim::write_static_dataset(&manifest, &sim, args.n_mix, &out_dir, args.jobs)?;
    print_json(&json!({
        "corpus_entries": manifest.accepted().count(),
        "mixtures": dataset.records.len(),
        "out_dir": out_dir,
        "seed": sim.seed,
    }));
    Ok(())
}

/// Frame count covering every segment end in the given lists.
fn grid_frames(lists: &[Option<&SegmentList>], frame_duration: f64) -> usize {
    let max_end = lists
        .iter()
        .flatten()
        .map(|l| l.max_end())
        .fold(0.0f64, f64::max);
    (max_end / frame_duration).ceil() as usize
}

fn run_score(args: ScoreArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let fd = cfg.frame_duration();
    let reference = singsim::read_rttm(&args.reference)?;
    let hypothesis = singsim::read_rttm(&args.hypothesis)?;
    let vad: BTreeMap<String, SegmentList> = match &args.vad {
        Some(path) => singsim::read_rttm(path)?,
        None => BTreeMap::new(),
    };
    if reference.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no recordings in {}",
            args.reference.display()
        )));
    }

    let empty = |rec: &str| SegmentList {
        recording_id: rec.to_string(),
        segments: Vec::new(),
    };
    let mut pairs = Vec::new();
    let mut masks = Vec::new();
    for (rec, ref_list) in &reference {
        let hyp_list = hypothesis.get(rec).cloned().unwrap_or_else(|| empty(rec));
        let vad_list = vad.get(rec);
        let frames = grid_frames(&[Some(ref_list), Some(&hyp_list), vad_list], fd);
        let ref_m = singsim::segments_to_frames(ref_list, fd, frames)?;
        let hyp_m = singsim::segments_to_frames(&hyp_list, fd, frames)?;
        let mask = match vad_list {
            Some(list) => mask_from_segments(list, fd, frames)?,
            None => build_eval_mask(&ref_m),
        };
        pairs.push((ref_m, hyp_m));
        masks.push(mask);
    }

    let report = if pairs.len() == 1 {
        singsim::der(&pairs[0].0, &pairs[0].1, &masks[0])?
    } else {
        let refs: Vec<(&singsim::LabelMatrix, &singsim::LabelMatrix)> =
            pairs.iter().map(|(r, h)| (r, h)).collect();
        score_corpus(&refs, MaskPolicy::External(&masks))?
    };
    print_json(&serde_json::to_value(&report).expect("serializable"));
    Ok(())
}

fn read_pred_csv(path: &PathBuf) -> Result<Vec<Vec<f64>>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut frames: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, Error> = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!(
                        "{}:{}: bad probability {:?}",
                        path.display(),
                        lineno + 1,
                        field
                    ))
                })
            })
            .collect();
        let row = row?;
        if let Some(first) = frames.first() {
            if row.len() != first.len() {
                return Err(Error::InvalidParameter(format!(
                    "{}:{}: expected {} columns, found {}",
                    path.display(),
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        frames.push(row);
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no rows", path.display())));
    }
    Ok(frames)
}

fn run_pit_check(args: PitCheckArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let fd = cfg.frame_duration();
    let lists = singsim::read_rttm(&args.labels)?;
    let list = match &args.recording {
        Some(rec) => lists.get(rec).ok_or_else(|| {
            Error::EmptyInput(format!("recording {rec:?} not in {}", args.labels.display()))
        })?,
        None => {
            if lists.len() != 1 {
                return Err(Error::InvalidParameter(format!(
                    "{} holds {} recordings; pick one with --recording",
                    args.labels.display(),
                    lists.len()
                )));
            }
            lists.values().next().expect("len checked")
        }
    };

    // CSV rows are frames; prediction column n pairs with the n-th singer
    // by order of first appearance in the RTTM.
    let frames = read_pred_csv(&args.pred)?;
    let num_frames = frames.len();
    let num_singers = frames[0].len();
    let mut pred_rows = vec![vec![0.0f64; num_frames]; num_singers];
    for (t, row) in frames.iter().enumerate() {
        for (n, &p) in row.iter().enumerate() {
            pred_rows[n][t] = p;
        }
    }
    let predictions = PredictionMatrix::from_rows(&pred_rows, fd)?;
    let labels = singsim::segments_to_frames(list, fd, num_frames)?;
    let result = singsim::pit_loss_assignment(&labels, &predictions)?;
    print_json(&json!({
        "loss": result.loss,
        "permutation": result.permutation,
        "per_pair_cost": result.per_pair_cost,
        "singer_order": labels.singer_ids(),
    }));
    Ok(())
}

fn run_stats(args: StatsArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let fd = cfg.frame_duration();
    let mut per_recording = serde_json::Map::new();
    let mut total_duration = 0.0f64;
    let mut total_active_frames = 0u64;
    let mut total_overlap_frames = 0u64;
    for path in &args.rttm {
        for (rec, list) in singsim::read_rttm(path)? {
            let frames = grid_frames(&[Some(&list)], fd);
            let matrix = singsim::segments_to_frames(&list, fd, frames)?;
            let mut active = 0u64;
            let mut overlapped = 0u64;
            for t in 0..matrix.num_frames() {
                let count = matrix.active_at(t);
                if count >= 1 {
                    active += 1;
                }
                if count >= 2 {
                    overlapped += 1;
                }
            }
            total_duration += list.max_end();
            total_active_frames += active;
            total_overlap_frames += overlapped;
            per_recording.insert(
                rec.clone(),
                json!({
                    "duration_s": list.max_end(),
                    "active_s": active as f64 * fd,
                    "num_singers": matrix.num_singers(),
                    "overlap_ratio_pct": singsim::overlap_ratio(&matrix),
                }),
            );
        }
    }
    if per_recording.is_empty() {
        return Err(Error::EmptyInput("no recordings in the given RTTM files".into()));
    }
    let overall = if total_active_frames == 0 {
        0.0
    } else {
        100.0 * total_overlap_frames as f64 / total_active_frames as f64
    };
    print_json(&json!({
        "recordings": per_recording.len(),
        "total_duration_s": total_duration,
        "total_active_s": total_active_frames as f64 * fd,
        "overlap_ratio_pct": overall,
        "per_recording": per_recording,
    }));
    Ok(())
}
