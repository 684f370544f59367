//! Run configuration: defaults, then the TOML file, then command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sedsynth::audio::DEFAULT_SAMPLE_RATE;
use sedsynth::clipper::ClipperParams;
use sedsynth::metrics::PsdsConfig;
use sedsynth::mixer::MixParams;
use sedsynth::objectives::LossParams;
use sedsynth::par::Workers;
use sedsynth::sampler::{EnrichOptions, PoolPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixerConfig {
    pub count: Option<usize>,
    pub timeline_s: f64,
    pub max_events: usize,
    pub repeat_max: usize,
    pub repeat_threshold_s: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub frames: usize,
}

impl Default for MixerConfig {
    fn default() -> Self {
        let p = MixParams::default();
        MixerConfig {
            count: None,
            timeline_s: p.timeline_s,
            max_events: p.max_events,
            repeat_max: p.repeat_max,
            repeat_threshold_s: p.repeat_threshold_s,
            snr_min_db: p.snr_min_db,
            snr_max_db: p.snr_max_db,
            frames: p.frames,
        }
    }
}

impl MixerConfig {
    pub fn params(&self, seed: u64) -> MixParams {
        MixParams {
            timeline_s: self.timeline_s,
            max_events: self.max_events,
            repeat_max: self.repeat_max,
            repeat_threshold_s: self.repeat_threshold_s,
            snr_min_db: self.snr_min_db,
            snr_max_db: self.snr_max_db,
            frames: self.frames,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n: usize,
    /// Frames per scene; falls back to `mixer.frames`.
    pub frames: Option<usize>,
    /// Fail when a scene's negative pool is too small (otherwise draw with replacement).
    pub strict: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n: EnrichOptions::default().n,
            frames: None,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// 0 or absent means one worker per core.
    pub workers: Option<usize>,
    pub sample_rate: u32,
    pub clipper: ClipperParams,
    pub mixer: MixerConfig,
    pub sampler: SamplerConfig,
    pub loss: LossParams,
    pub psds: PsdsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            workers: None,
            sample_rate: DEFAULT_SAMPLE_RATE,
            clipper: ClipperParams::default(),
            mixer: MixerConfig::default(),
            sampler: SamplerConfig::default(),
            loss: LossParams::default(),
            psds: PsdsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn workers(&self) -> Workers {
        Workers::from_count(self.workers)
    }

    pub fn require_seed(&self, command: &str) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => bail!("`{command}` needs a seed: pass --seed or set `seed` in the config file"),
        }
    }

    pub fn sampler_frames(&self) -> usize {
        self.sampler.frames.unwrap_or(self.mixer.frames)
    }

    pub fn enrich_options(&self, seed: u64) -> EnrichOptions {
        EnrichOptions {
            n: self.sampler.n,
            seed,
            frames: self.sampler_frames(),
            policy: if self.sampler.strict {
                PoolPolicy::Strict
            } else {
                PoolPolicy::AllowReplacement
            },
        }
    }
}

/// Replaces `slot` with the flag value when the flag was given.
pub fn apply<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_override_defaults() {
        let cfg: RunConfig = toml::from_str(
            "seed = 7\n[mixer]\ncount = 3\nsnr_min_db = 10.0\n[sampler]\nn = 8\nstrict = false\n[loss]\nconvention = \"siglip\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.mixer.count, Some(3));
        assert_eq!(cfg.mixer.snr_min_db, 10.0);
        assert_eq!(cfg.mixer.snr_max_db, 20.0);
        assert_eq!(cfg.enrich_options(7).policy, PoolPolicy::AllowReplacement);
        assert_eq!(cfg.enrich_options(7).n, 8);
        assert_eq!(cfg.clipper, ClipperParams::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[mixer]\nseed = 1").is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::default().require_seed("mix").is_err());
    }
}
