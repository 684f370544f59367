use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sedsynth", version, about = "Strongly labeled sound event scene synthesis and evaluation")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, env = "SEDSYNTH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 means one per core. Never changes outputs.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed for every random draw; required by `mix` and `enrich`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut one event segment out of each source recording.
    Clip(ClipArgs),
    /// Synthesize scenes from an event bank and backgrounds.
    Mix(MixArgs),
    /// Pad every scene's phrase set with cluster-disjoint negatives.
    Enrich(EnrichArgs),
    /// Evaluate a loss on a fixture or a tensor batch.
    Loss(LossArgs),
    /// Detection and retrieval metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Check a manifest's schema and invariants.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ClipArgs {
    /// JSONL of {"id", "audio", "label"} source recordings.
    #[arg(long, env = "SEDSYNTH_CLIP_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "SEDSYNTH_CLIP_OUT")]
    pub out: PathBuf,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long)]
    pub threshold_db: Option<f64>,
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long)]
    pub hop_s: Option<f64>,
    #[arg(long)]
    pub merge_gap_s: Option<f64>,
    #[arg(long)]
    pub min_dur_s: Option<f64>,
    #[arg(long)]
    pub max_dur_s: Option<f64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct MixArgs {
    /// Event manifest written by `clip`.
    #[arg(long, env = "SEDSYNTH_MIX_EVENTS")]
    pub events: PathBuf,
    /// Directory of background WAVs or a JSONL of {"id", "audio"}.
    #[arg(long, env = "SEDSYNTH_MIX_BACKGROUNDS")]
    pub backgrounds: PathBuf,
    #[arg(long, env = "SEDSYNTH_MIX_OUT")]
    pub out: PathBuf,
    /// Caption templates, one per line, each containing "{}".
    #[arg(long, env = "SEDSYNTH_MIX_TEMPLATES")]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub timeline_s: Option<f64>,
    #[arg(long)]
    pub max_events: Option<usize>,
    #[arg(long)]
    pub repeat_max: Option<usize>,
    #[arg(long)]
    pub repeat_threshold_s: Option<f64>,
    #[arg(long)]
    pub snr_min_db: Option<f64>,
    #[arg(long)]
    pub snr_max_db: Option<f64>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Also write labels/<scene>.csv frame-label sidecars.
    #[arg(long)]
    pub label_csv: bool,
}

#[derive(Debug, Args)]
pub struct EnrichArgs {
    /// Dataset manifest written by `mix`.
    #[arg(long, env = "SEDSYNTH_ENRICH_DATASET")]
    pub dataset: PathBuf,
    #[arg(long, env = "SEDSYNTH_CENTROIDS")]
    pub centroids: PathBuf,
    #[arg(long, env = "SEDSYNTH_PHRASES")]
    pub phrases: PathBuf,
    #[arg(long, env = "SEDSYNTH_ENRICH_OUT")]
    pub out: PathBuf,
    /// Phrase-set size per scene.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Fill a too-small negative pool by drawing with replacement instead of failing.
    #[arg(long)]
    pub allow_replacement: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Clip,
    Frame,
    Total,
    Infonce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    AsPrinted,
    Siglip,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct LossArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Named fixture: b1_s1, b1_s0, b2_orthonormal, b2_uniform, frame_l2, frame_all_pos.
    #[arg(long, conflicts_with = "batch", required_unless_present = "batch")]
    pub fixture: Option<String>,
    /// Directory holding audio, text, frames, phrases and labels tensors (.sedt or .csv).
    #[arg(long, env = "SEDSYNTH_LOSS_BATCH")]
    pub batch: Option<PathBuf>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub t_frame: Option<f64>,
    #[arg(long)]
    pub b_frame: Option<f64>,
    #[arg(long, value_enum)]
    pub convention: Option<ConventionArg>,
    /// Also compare analytic gradients against central differences.
    #[arg(long)]
    pub gradcheck: bool,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Polyphonic sound detection score from detection and ground-truth TSVs.
    Psds(PsdsArgs),
    /// Recall@k from a square similarity matrix.
    Retrieval(RetrievalArgs),
    /// Zero-shot classification accuracy.
    Accuracy(AccuracyArgs),
}

#[derive(Debug, Args)]
pub struct PsdsArgs {
    #[arg(long, env = "SEDSYNTH_DETECTIONS")]
    pub detections: PathBuf,
    #[arg(long, env = "SEDSYNTH_GROUND_TRUTH")]
    pub ground_truth: PathBuf,
    /// Total duration of the evaluated clips in hours.
    #[arg(long)]
    pub duration_h: f64,
    #[arg(long)]
    pub dtc: Option<f64>,
    #[arg(long)]
    pub gtc: Option<f64>,
    #[arg(long)]
    pub alpha_st: Option<f64>,
    #[arg(long)]
    pub e_max: Option<f64>,
    /// Number of evenly spaced thresholds.
    #[arg(long)]
    pub thresholds: Option<usize>,
    /// Also write the JSON report here.
    #[arg(long, env = "SEDSYNTH_EVAL_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrievalArgs {
    /// m×m similarity matrix (.sedt or .csv); row i matches column i.
    #[arg(long)]
    pub similarity: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    pub k: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct AccuracyArgs {
    /// m×d audio embeddings.
    #[arg(long)]
    pub audio: PathBuf,
    /// C×d class text embeddings.
    #[arg(long)]
    pub classes: PathBuf,
    /// One class index per line.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ManifestKindArg {
    Event,
    Rejection,
    Dataset,
    Enriched,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub manifest: PathBuf,
    /// Skip kind detection.
    #[arg(long, value_enum)]
    pub kind: Option<ManifestKindArg>,
    /// Do not require the referenced audio files to exist.
    #[arg(long)]
    pub no_audio_check: bool,
    /// Required phrase-set size for enriched manifests.
    #[arg(long)]
    pub n: Option<usize>,
    /// With --phrases, also check that negatives are cluster-disjoint from positives.
    #[arg(long, requires = "phrases", env = "SEDSYNTH_CENTROIDS")]
    pub centroids: Option<PathBuf>,
    #[arg(long, requires = "centroids", env = "SEDSYNTH_PHRASES")]
    pub phrases: Option<PathBuf>,
}
