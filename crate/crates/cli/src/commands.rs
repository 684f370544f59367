use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ndarray::{Array2, Array3, ArrayD, Ix2, Ix3};
use serde_json::{json, Value};

use sedsynth::clipper::{self, EVENTS_MANIFEST, REJECTIONS_LOG};
use sedsynth::dataset::{self, BuildOptions, DATASET_MANIFEST};
use sedsynth::manifest::{self, DatasetRow};
use sedsynth::metrics::{self, PsdsConfig};
use sedsynth::mixer::{self, AudioBank, DEFAULT_TEMPLATE};
use sedsynth::objectives::{fixtures, gradient_check_with, EmbeddingBatch, LossKind, SignConvention};
use sedsynth::sampler::{self, ClusterSpace};
use sedsynth::tensor;
use sedsynth::validate::{self, ManifestKind, ValidateOptions, ValidationReport};

use crate::args::*;
use crate::config::{apply, RunConfig};

/// What a command hands back to `main`: a JSON document for stdout and whether
/// it counts as success.
pub struct Outcome {
    pub output: Value,
    pub ok: bool,
}

impl Outcome {
    fn ok(output: Value) -> Self {
        Outcome { output, ok: true }
    }
}

fn announce(command: &str, cfg: &Value, paths: Value) {
    eprintln!("{}", json!({ "command": command, "resolved_config": cfg, "paths": paths }));
}

fn distinct(input: &Path, output: &Path) -> Result<()> {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == output,
    };
    ensure!(!same, "input {} and output {} must differ", input.display(), output.display());
    Ok(())
}

pub fn clip(args: &ClipArgs, mut cfg: RunConfig) -> Result<Outcome> {
    apply(&mut cfg.sample_rate, args.sample_rate);
    let c = &mut cfg.clipper;
    apply(&mut c.threshold_db, args.threshold_db);
    apply(&mut c.window_s, args.window_s);
    apply(&mut c.hop_s, args.hop_s);
    apply(&mut c.merge_gap_s, args.merge_gap_s);
    apply(&mut c.min_dur_s, args.min_dur_s);
    apply(&mut c.max_dur_s, args.max_dur_s);
    distinct(&args.input, &args.out)?;
    announce(
        "clip",
        &json!({ "seed": cfg.seed, "workers": cfg.workers, "sample_rate": cfg.sample_rate, "clipper": cfg.clipper }),
        json!({ "input": args.input, "out": args.out }),
    );
    let report = clipper::clip_event_bank(&args.input, &args.out, &cfg.clipper, cfg.sample_rate, cfg.workers())?;
    Ok(Outcome::ok(json!({
        "events": report.events.len(),
        "rejections": report.rejections.len(),
        "manifest": args.out.join(EVENTS_MANIFEST),
        "rejection_log": args.out.join(REJECTIONS_LOG),
    })))
}

pub fn mix(args: &MixArgs, mut cfg: RunConfig) -> Result<Outcome> {
    let m = &mut cfg.mixer;
    apply(&mut m.count, args.count.map(Some));
    apply(&mut m.timeline_s, args.timeline_s);
    apply(&mut m.max_events, args.max_events);
    apply(&mut m.repeat_max, args.repeat_max);
    apply(&mut m.repeat_threshold_s, args.repeat_threshold_s);
    apply(&mut m.snr_min_db, args.snr_min_db);
    apply(&mut m.snr_max_db, args.snr_max_db);
    apply(&mut m.frames, args.frames);
    let seed = cfg.require_seed("mix")?;
    let Some(count) = cfg.mixer.count else {
        bail!("`mix` needs a scene count: pass --count or set mixer.count in the config file");
    };
    distinct(&args.events, &args.out)?;
    let params = cfg.mixer.params(seed);
    params.validate()?;
    announce(
        "mix",
        &json!({ "seed": seed, "workers": cfg.workers, "sample_rate": cfg.sample_rate, "mixer": cfg.mixer }),
        json!({ "events": args.events, "backgrounds": args.backgrounds, "templates": args.templates, "out": args.out }),
    );
    let templates = match &args.templates {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading templates {}", p.display()))?;
            mixer::parse_templates(&text)?
        }
        None => vec![DEFAULT_TEMPLATE.to_string()],
    };
    let workers = cfg.workers();
    let events = dataset::load_event_bank(&args.events, workers)?;
    let backgrounds = dataset::load_backgrounds(&args.backgrounds, workers)?;
    let bank = AudioBank::new(backgrounds, events)?;
    bank.check_sample_rate(cfg.sample_rate)?;
    let opts = BuildOptions {
        workers,
        emit_label_csv: args.label_csv,
    };
    let rows = dataset::build_dataset(&bank, &params, &templates, count, &args.out, opts)?;
    Ok(Outcome::ok(json!({
        "scenes": rows.len(),
        "manifest": args.out.join(DATASET_MANIFEST),
    })))
}

pub fn enrich(args: &EnrichArgs, mut cfg: RunConfig) -> Result<Outcome> {
    apply(&mut cfg.sampler.n, args.n);
    apply(&mut cfg.sampler.frames, args.frames.map(Some));
    if args.allow_replacement {
        cfg.sampler.strict = false;
    }
    let seed = cfg.require_seed("enrich")?;
    distinct(&args.dataset, &args.out)?;
    let opts = cfg.enrich_options(seed);
    announce(
        "enrich",
        &json!({ "seed": seed, "workers": cfg.workers, "sampler": opts }),
        json!({ "dataset": args.dataset, "centroids": args.centroids, "phrases": args.phrases, "out": args.out }),
    );
    let space = ClusterSpace::load(&args.centroids, &args.phrases)?;
    let rows: Vec<DatasetRow> = manifest::read_jsonl(&args.dataset)?;
    let mut enriched = sampler::enrich_manifest(&rows, &space, &opts, cfg.workers())?;
    // keep audio paths valid relative to the new manifest's directory
    for row in &mut enriched {
        let abs = manifest::resolve_relative(&args.dataset, &row.scene.audio);
        row.scene.audio = relative_to(&abs, &args.out).to_string_lossy().into_owned();
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    manifest::write_jsonl(&args.out, &enriched)?;
    Ok(Outcome::ok(json!({ "rows": enriched.len(), "manifest": args.out })))
}

/// Path of `target` as seen from the directory containing `manifest`, when
/// both share that directory as a prefix; otherwise `target` unchanged.
fn relative_to(target: &Path, manifest: &Path) -> PathBuf {
    let dir = manifest.parent().unwrap_or(Path::new(""));
    let norm = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
    let dir_abs = if dir.as_os_str().is_empty() {
        norm(Path::new("."))
    } else {
        norm(dir)
    };
    let target_abs = norm(target);
    match target_abs.strip_prefix(&dir_abs) {
        Ok(rel) => rel.to_path_buf(),
        Err(_) => target_abs,
    }
}

fn kind_of(k: KindArg) -> LossKind {
    match k {
        KindArg::Clip => LossKind::Clip,
        KindArg::Frame => LossKind::Frame,
        KindArg::Total => LossKind::Total,
        KindArg::Infonce => LossKind::Infonce,
    }
}

fn find_tensor(dir: &Path, stem: &str) -> Result<Option<ArrayD<f64>>> {
    for ext in ["sedt", "csv"] {
        let p = dir.join(format!("{stem}.{ext}"));
        if p.is_file() {
            return Ok(Some(tensor::read_array(&p)?));
        }
    }
    Ok(None)
}

fn binary<D: ndarray::Dimension>(a: ndarray::Array<f64, D>, what: &str) -> Result<ndarray::Array<u8, D>> {
    ensure!(a.iter().all(|&v| v == 0.0 || v == 1.0), "{what} must hold only 0 and 1");
    Ok(a.mapv(|v| v as u8))
}

fn load_batch(dir: &Path) -> Result<EmbeddingBatch> {
    let need = |stem: &str| -> Result<ArrayD<f64>> {
        find_tensor(dir, stem)?.with_context(|| format!("{} has no {stem}.sedt or {stem}.csv", dir.display()))
    };
    let two = |a: ArrayD<f64>, what: &str| -> Result<Array2<f64>> {
        a.into_dimensionality::<Ix2>().with_context(|| format!("{what} must be 2-D"))
    };
    let three = |a: ArrayD<f64>, what: &str| -> Result<Array3<f64>> {
        a.into_dimensionality::<Ix3>().with_context(|| format!("{what} must be 3-D"))
    };
    let g = two(need("audio")?, "audio")?;
    let t = two(need("text")?, "text")?;
    let mut batch = match find_tensor(dir, "frames")? {
        Some(f) => EmbeddingBatch::new(
            g,
            t,
            three(f, "frames")?,
            three(need("phrases")?, "phrases")?,
            binary(three(need("labels")?, "labels")?, "labels")?,
        )?,
        None => EmbeddingBatch::clip_only(g, t)?,
    };
    if let Some(m) = find_tensor(dir, "matches")? {
        batch = batch.with_matches(binary(two(m, "matches")?, "matches")?)?;
    }
    if let Some(a) = find_tensor(dir, "annotated")? {
        let bits = binary(a, "annotated")?;
        batch = batch.with_annotated(bits.iter().map(|&v| v == 1).collect())?;
    }
    Ok(batch)
}

pub fn loss(args: &LossArgs, mut cfg: RunConfig) -> Result<Outcome> {
    let p = &mut cfg.loss;
    apply(&mut p.t, args.t);
    apply(&mut p.b, args.b);
    apply(&mut p.t_frame, args.t_frame);
    apply(&mut p.b_frame, args.b_frame);
    apply(
        &mut p.convention,
        args.convention.map(|c| match c {
            ConventionArg::AsPrinted => SignConvention::AsPrinted,
            ConventionArg::Siglip => SignConvention::Siglip,
        }),
    );
    cfg.loss.validate()?;
    let kind = kind_of(args.kind);
    announce(
        "loss",
        &json!({ "seed": cfg.seed, "workers": cfg.workers, "kind": kind, "loss": cfg.loss, "epsilon": args.epsilon }),
        json!({ "fixture": args.fixture, "batch": args.batch }),
    );
    let batch = match (&args.fixture, &args.batch) {
        (Some(name), _) => fixtures::fixture(name).with_context(|| {
            format!("unknown fixture {name:?}; known: {}", fixtures::FIXTURE_NAMES.join(", "))
        })?,
        (None, Some(dir)) => load_batch(dir)?,
        (None, None) => bail!("pass --fixture or --batch"),
    };
    let out = kind.evaluate(&batch, &cfg.loss)?;
    let mut report = json!({
        "kind": kind,
        "value": out.value,
        "grad_norms": out.grads.norms(),
        "params": cfg.loss,
    });
    if args.gradcheck {
        ensure!(args.epsilon > 0.0, "epsilon must be positive");
        let check = gradient_check_with(kind, &batch, &cfg.loss, args.epsilon, cfg.workers())?;
        report["gradcheck"] = serde_json::to_value(check)?;
    }
    Ok(Outcome::ok(report))
}

pub fn eval(cmd: &EvalCommand, mut cfg: RunConfig) -> Result<Outcome> {
    match cmd {
        EvalCommand::Psds(a) => {
            let c = &mut cfg.psds;
            apply(&mut c.dtc, a.dtc);
            apply(&mut c.gtc, a.gtc);
            apply(&mut c.alpha_st, a.alpha_st);
            apply(&mut c.e_max, a.e_max);
            apply(&mut c.thresholds, a.thresholds.map(PsdsConfig::even_thresholds));
            announce(
                "eval psds",
                &json!({ "workers": cfg.workers, "psds": cfg.psds, "duration_h": a.duration_h }),
                json!({ "detections": a.detections, "ground_truth": a.ground_truth, "out": a.out }),
            );
            let dets = metrics::read_events_tsv(&a.detections)?;
            let gts = metrics::read_events_tsv(&a.ground_truth)?;
            let report = metrics::psds(&dets, &gts, a.duration_h, &cfg.psds, cfg.workers())?;
            let value = serde_json::to_value(&report)?;
            if let Some(out) = &a.out {
                fs::write(out, serde_json::to_string_pretty(&value)?).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(Outcome::ok(value))
        }
        EvalCommand::Retrieval(a) => {
            announce("eval retrieval", &json!({ "k": a.k }), json!({ "similarity": a.similarity }));
            let sim = tensor::read_array(&a.similarity)?
                .into_dimensionality::<Ix2>()
                .context("similarity must be 2-D")?;
            let mut recall = serde_json::Map::new();
            for &k in &a.k {
                recall.insert(format!("R@{k}"), json!(metrics::recall_at_k(sim.view(), k)?));
            }
            Ok(Outcome::ok(json!({ "rows": sim.nrows(), "recall": recall })))
        }
        EvalCommand::Accuracy(a) => {
            announce(
                "eval accuracy",
                &json!({}),
                json!({ "audio": a.audio, "classes": a.classes, "labels": a.labels }),
            );
            let audio = tensor::read_array(&a.audio)?.into_dimensionality::<Ix2>().context("audio must be 2-D")?;
            let classes = tensor::read_array(&a.classes)?
                .into_dimensionality::<Ix2>()
                .context("classes must be 2-D")?;
            let text = fs::read_to_string(&a.labels).with_context(|| format!("reading {}", a.labels.display()))?;
            let labels = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .enumerate()
                .map(|(i, l)| l.parse::<usize>().with_context(|| format!("label {} is not an index: {l:?}", i + 1)))
                .collect::<Result<Vec<_>>>()?;
            let acc = metrics::zero_shot_accuracy(audio.view(), classes.view(), &labels)?;
            Ok(Outcome::ok(json!({ "clips": labels.len(), "accuracy": acc })))
        }
    }
}

pub fn validate(args: &ValidateArgs, cfg: RunConfig) -> Result<Outcome> {
    let space = match (&args.centroids, &args.phrases) {
        (Some(c), Some(p)) => Some(ClusterSpace::load(c, p)?),
        _ => None,
    };
    let kind = args.kind.map(|k| match k {
        ManifestKindArg::Event => ManifestKind::Event,
        ManifestKindArg::Rejection => ManifestKind::Rejection,
        ManifestKindArg::Dataset => ManifestKind::Dataset,
        ManifestKindArg::Enriched => ManifestKind::Enriched,
    });
    let opts = ValidateOptions {
        kind,
        check_audio: !args.no_audio_check,
        event_duration_s: Some((cfg.clipper.min_dur_s, cfg.clipper.max_dur_s)),
        timeline_s: Some(cfg.mixer.timeline_s),
        max_events: Some(cfg.mixer.max_events),
        snr_db: Some((cfg.mixer.snr_min_db, cfg.mixer.snr_max_db)),
        frames: cfg.sampler_frames(),
        phrase_set_size: args.n,
        clusters: space.as_ref(),
    };
    announce(
        "validate",
        &json!({
            "kind": kind,
            "check_audio": opts.check_audio,
            "event_duration_s": opts.event_duration_s,
            "timeline_s": opts.timeline_s,
            "max_events": opts.max_events,
            "snr_db": opts.snr_db,
            "frames": opts.frames,
            "phrase_set_size": opts.phrase_set_size,
        }),
        json!({ "manifest": args.manifest, "centroids": args.centroids, "phrases": args.phrases }),
    );
    let report: ValidationReport = validate::validate_manifest(&args.manifest, &opts)?;
    for v in &report.violations {
        eprintln!("{}: {v}", args.manifest.display());
    }
    Ok(Outcome {
        ok: report.is_ok(),
        output: serde_json::to_value(&report)?,
    })
}

