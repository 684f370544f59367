//! Scene synthesis: a background plus randomly placed, SNR-scaled foreground
//! events, with frame labels and a templated caption.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{self, db_to_linear, AudioClip, Decibels};
use crate::error::{Error, Result};
use crate::labels::{labels_for_intervals, FrameLabels};
use crate::rng::{derive_rng, Domain};

pub const DEFAULT_TEMPLATE: &str = "This audio contains the sounds of {}.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixParams {
    pub timeline_s: f64,
    /// Events per scene are drawn from `1..=max_events`.
    pub max_events: usize,
    /// Short events are repeated `1..=repeat_max` times.
    pub repeat_max: usize,
    /// Events shorter than this are eligible for repetition.
    pub repeat_threshold_s: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    /// Frames per scene for frame labels.
    pub frames: usize,
    pub seed: u64,
}

impl Default for MixParams {
    fn default() -> Self {
        Self {
            timeline_s: 10.0,
            max_events: 5,
            repeat_max: 3,
            repeat_threshold_s: 3.0,
            snr_min_db: 12.0,
            snr_max_db: 20.0,
            frames: 64,
            seed: 0,
        }
    }
}

impl MixParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.timeline_s > 0.0) {
            return bad(format!("timeline_s must be positive, got {}", self.timeline_s));
        }
        if self.max_events < 1 {
            return bad("max_events must be >= 1".into());
        }
        if self.repeat_max < 1 {
            return bad("repeat_max must be >= 1".into());
        }
        if self.frames < 1 {
            return bad("frames must be >= 1".into());
        }
        if !(self.snr_min_db.is_finite() && self.snr_max_db.is_finite())
            || self.snr_min_db > self.snr_max_db
        {
            return bad(format!(
                "need finite snr_min_db <= snr_max_db, got {} and {}",
                self.snr_min_db, self.snr_max_db
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEvent {
    pub id: String,
    pub phrase: String,
    pub audio: AudioClip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub id: String,
    pub audio: AudioClip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub event_id: String,
    pub phrase: String,
    pub repeat_count: usize,
    pub onset_s: f64,
    pub offset_s: f64,
    pub snr_db: f64,
    /// Linear amplitude gain applied to the event.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub scene_index: usize,
    pub background_id: String,
    pub placements: Vec<Placement>,
    /// Whole-mixture factor applied to avoid clipping; 1.0 when none was needed.
    pub rescale: f64,
}

impl SceneRecipe {
    /// Distinct phrases in order of first placement.
    pub fn phrases(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for p in &self.placements {
            if !seen.contains(&p.phrase) {
                seen.push(p.phrase.clone());
            }
        }
        seen
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub audio: AudioClip,
    pub caption: String,
    pub annotations: Vec<(String, FrameLabels)>,
    pub recipe: SceneRecipe,
}

pub trait AudioLookup {
    fn background(&self, id: &str) -> Option<&AudioClip>;
    fn event(&self, id: &str) -> Option<&AudioClip>;
}

/// In-memory backgrounds and event bank.
#[derive(Debug, Clone, Default)]
pub struct AudioBank {
    pub backgrounds: Vec<Background>,
    pub events: Vec<BankEvent>,
    bg_index: HashMap<String, usize>,
    ev_index: HashMap<String, usize>,
}

impl AudioBank {
    pub fn new(backgrounds: Vec<Background>, events: Vec<BankEvent>) -> Result<Self> {
        let mut bg_index = HashMap::new();
        for (i, b) in backgrounds.iter().enumerate() {
            if bg_index.insert(b.id.clone(), i).is_some() {
                return Err(Error::InvalidParam(format!("duplicate background id {}", b.id)));
            }
        }
        let mut ev_index = HashMap::new();
        for (i, e) in events.iter().enumerate() {
            if ev_index.insert(e.id.clone(), i).is_some() {
                return Err(Error::InvalidParam(format!("duplicate event id {}", e.id)));
            }
        }
        Ok(Self {
            backgrounds,
            events,
            bg_index,
            ev_index,
        })
    }

    /// Checks every clip against the working sample rate.
    pub fn check_sample_rate(&self, sample_rate: u32) -> Result<()> {
        let mismatch = |what: String, actual: u32| Error::SampleRateMismatch {
            expected: sample_rate,
            actual,
            what,
        };
        for b in &self.backgrounds {
            if b.audio.sample_rate() != sample_rate {
                return Err(mismatch(format!("background {}", b.id), b.audio.sample_rate()));
            }
        }
        for e in &self.events {
            if e.audio.sample_rate() != sample_rate {
                return Err(mismatch(format!("event {}", e.id), e.audio.sample_rate()));
            }
        }
        Ok(())
    }
}

impl AudioLookup for AudioBank {
    fn background(&self, id: &str) -> Option<&AudioClip> {
        self.bg_index.get(id).map(|&i| &self.backgrounds[i].audio)
    }

    fn event(&self, id: &str) -> Option<&AudioClip> {
        self.ev_index.get(id).map(|&i| &self.events[i].audio)
    }
}

fn timeline_samples(params: &MixParams, sample_rate: u32) -> usize {
    audio::seconds_to_samples(params.timeline_s, sample_rate)
}

fn background_bed<'a>(bg: &'a AudioClip, id: &str, timeline: usize, timeline_s: f64) -> Result<&'a [f64]> {
    if bg.len() < timeline {
        return Err(Error::BackgroundTooShort {
            id: id.to_string(),
            duration_s: bg.duration_s(),
            timeline_s,
        });
    }
    Ok(&bg.samples()[..timeline])
}

/// Plans scene `scene_index` with draws from the stream derived from `(params.seed, scene_index)`.
pub fn plan_scene(
    background: &Background,
    bank: &[BankEvent],
    params: &MixParams,
    scene_index: usize,
) -> Result<SceneRecipe> {
    let mut rng = derive_rng(params.seed, Domain::ScenePlan, scene_index as u64);
    plan_scene_with(background, bank, params, scene_index, &mut rng)
}

pub fn plan_scene_with<R: Rng>(
    background: &Background,
    bank: &[BankEvent],
    params: &MixParams,
    scene_index: usize,
    rng: &mut R,
) -> Result<SceneRecipe> {
    params.validate()?;
    if bank.is_empty() {
        return Err(Error::EmptyInput("event bank"));
    }
    let sr = background.audio.sample_rate();
    let timeline = timeline_samples(params, sr);
    let bed = background_bed(&background.audio, &background.id, timeline, params.timeline_s)?;
    let bg_rms = audio::rms_of(bed)?;
    if bg_rms == 0.0 {
        return Err(Error::SilentBackground(background.id.clone()));
    }

    let mut distinct: Vec<&str> = bank.iter().map(|e| e.phrase.as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let count = rng.gen_range(1..=params.max_events).min(distinct.len());

    let mut used: Vec<&str> = Vec::with_capacity(count);
    let mut placements = Vec::with_capacity(count);
    for _ in 0..count {
        let candidates: Vec<&BankEvent> = bank
            .iter()
            .filter(|e| !used.contains(&e.phrase.as_str()))
            .collect();
        let event = *candidates.choose(rng).expect("count never exceeds distinct phrases");
        used.push(&event.phrase);

        if event.audio.sample_rate() != sr {
            return Err(Error::SampleRateMismatch {
                expected: sr,
                actual: event.audio.sample_rate(),
                what: format!("event {}", event.id),
            });
        }
        let len = event.audio.len();
        let ev_rms = if len == 0 { 0.0 } else { audio::rms(&event.audio)? };
        if ev_rms == 0.0 {
            return Err(Error::SilentEvent(event.id.clone()));
        }
        if len > timeline {
            return Err(Error::InvalidParam(format!(
                "event {} ({} s) does not fit the {} s timeline",
                event.id,
                event.audio.duration_s(),
                params.timeline_s
            )));
        }

        // Drawing R uniformly from the counts that fit equals redrawing until it fits.
        let repeat_count = if event.audio.duration_s() < params.repeat_threshold_s {
            let fit = params.repeat_max.min(timeline / len);
            rng.gen_range(1..=fit)
        } else {
            1
        };
        let effective = repeat_count * len;
        let onset = rng.gen_range(0..=timeline - effective);
        let snr_db = params.snr_min_db + (params.snr_max_db - params.snr_min_db) * rng.gen::<f64>();
        let gain = bg_rms / ev_rms * db_to_linear(Decibels(snr_db));

        placements.push(Placement {
            event_id: event.id.clone(),
            phrase: event.phrase.clone(),
            repeat_count,
            onset_s: onset as f64 / sr as f64,
            offset_s: (onset + effective) as f64 / sr as f64,
            snr_db,
            gain,
        });
    }

    Ok(SceneRecipe {
        scene_index,
        background_id: background.id.clone(),
        placements,
        rescale: 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub audio: AudioClip,
    pub rescale: f64,
}

/// Mixture before any overflow rescale.
pub fn mix_unscaled(recipe: &SceneRecipe, lookup: &dyn AudioLookup, timeline_s: f64) -> Result<AudioClip> {
    let bg = lookup
        .background(&recipe.background_id)
        .ok_or_else(|| Error::MissingAudio(format!("background {}", recipe.background_id)))?;
    let sr = bg.sample_rate();
    let timeline = audio::seconds_to_samples(timeline_s, sr);
    let mut mix = background_bed(bg, &recipe.background_id, timeline, timeline_s)?.to_vec();
    for p in &recipe.placements {
        let ev = lookup
            .event(&p.event_id)
            .ok_or_else(|| Error::MissingAudio(format!("event {}", p.event_id)))?;
        if ev.sample_rate() != sr {
            return Err(Error::SampleRateMismatch {
                expected: sr,
                actual: ev.sample_rate(),
                what: format!("event {}", p.event_id),
            });
        }
        let start = audio::seconds_to_samples(p.onset_s, sr);
        let copies = ev.samples().iter().cycle().take(p.repeat_count * ev.len());
        for (slot, &x) in mix.iter_mut().skip(start).zip(copies) {
            *slot += p.gain * x;
        }
    }
    AudioClip::new(mix, sr)
}

pub fn render_scene(recipe: &SceneRecipe, lookup: &dyn AudioLookup, timeline_s: f64) -> Result<RenderedScene> {
    let mix = mix_unscaled(recipe, lookup, timeline_s)?;
    let peak = mix.peak();
    if peak > 1.0 {
        let sr = mix.sample_rate();
        let samples = mix.into_samples().into_iter().map(|x| x / peak).collect();
        return Ok(RenderedScene {
            audio: AudioClip::new(samples, sr)?,
            rescale: 1.0 / peak,
        });
    }
    Ok(RenderedScene {
        audio: mix,
        rescale: 1.0,
    })
}

/// One label vector per distinct phrase, in order of first placement.
pub fn render_frame_labels(recipe: &SceneRecipe, frames: usize, timeline_s: f64) -> Vec<(String, FrameLabels)> {
    recipe
        .phrases()
        .into_iter()
        .map(|phrase| {
            let intervals: Vec<(f64, f64)> = recipe
                .placements
                .iter()
                .filter(|p| p.phrase == phrase)
                .map(|p| (p.onset_s, p.offset_s))
                .collect();
            let y = labels_for_intervals(&intervals, frames, timeline_s);
            (phrase, y)
        })
        .collect()
}

/// Joins phrases as "a, b and c".
pub fn join_phrases(phrases: &[String]) -> String {
    match phrases {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

pub fn generate_caption<R: Rng>(phrases: &[String], templates: &[String], rng: &mut R) -> Result<String> {
    if phrases.is_empty() {
        return Err(Error::EmptyInput("caption phrases"));
    }
    if let Some(bad) = templates.iter().find(|t| !t.contains("{}")) {
        return Err(Error::TemplateWithoutSlot(bad.clone()));
    }
    let template = templates.choose(rng).ok_or(Error::EmptyInput("caption templates"))?;
    Ok(template.replacen("{}", &join_phrases(phrases), 1))
}

/// Parses a template file: one template per non-blank line, each with a `{}` slot.
pub fn parse_templates(text: &str) -> Result<Vec<String>> {
    let templates: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if templates.is_empty() {
        return Err(Error::EmptyInput("caption templates"));
    }
    if let Some(bad) = templates.iter().find(|t| !t.contains("{}")) {
        return Err(Error::TemplateWithoutSlot(bad.clone()));
    }
    Ok(templates)
}

/// Full synthesis of scene `index`: background choice, plan, mix, labels, caption.
pub fn synthesize_scene(
    bank: &AudioBank,
    params: &MixParams,
    templates: &[String],
    index: usize,
) -> Result<SyntheticScene> {
    let mut bg_rng = derive_rng(params.seed, Domain::Background, index as u64);
    let background = bank
        .backgrounds
        .choose(&mut bg_rng)
        .ok_or(Error::EmptyInput("backgrounds"))?;
    let mut recipe = plan_scene(background, &bank.events, params, index)?;
    let rendered = render_scene(&recipe, bank, params.timeline_s)?;
    recipe.rescale = rendered.rescale;
    let annotations = render_frame_labels(&recipe, params.frames, params.timeline_s);
    let mut caption_rng = derive_rng(params.seed, Domain::Caption, index as u64);
    let caption = generate_caption(&recipe.phrases(), templates, &mut caption_rng)?;
    Ok(SyntheticScene {
        audio: rendered.audio,
        caption,
        annotations,
        recipe,
    })
}
