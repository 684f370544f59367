//! Mono waveform container, WAV I/O and elementary level measures.
//!
//! Samples are held as `f64` regardless of the file encoding so that RMS and
//! mixing chains do not accumulate single-precision error.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Level reported for windows or signals with no energy at all.
pub const SILENCE_FLOOR_DB: f64 = -120.0;

/// Working sample rate used when none is configured.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, rejecting a zero sample rate and non-finite samples.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidAudio(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Number of samples covering `seconds` at this clip's rate, rounded to nearest.
    pub fn samples_for(&self, seconds: f64) -> usize {
        seconds_to_samples(seconds, self.sample_rate)
    }

    /// Copy of the samples in `[start, end)`, clamped to the clip.
    pub fn slice(&self, start: usize, end: usize) -> AudioClip {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        AudioClip {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: f64) -> AudioClip {
        AudioClip {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub fn seconds_to_samples(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round().max(0.0) as usize
}

/// A level in decibels, power-ratio convention (amplitude ratio = 10^(dB/20)).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Decibels(pub f64);

impl Decibels {
    pub const SILENCE: Decibels = Decibels(SILENCE_FLOOR_DB);

    /// Level of a mean-square power relative to full scale; zero power maps to the floor.
    pub fn from_power(power: f64) -> Decibels {
        if power <= 0.0 {
            return Decibels::SILENCE;
        }
        Decibels((10.0 * power.log10()).max(SILENCE_FLOOR_DB))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_silence_floor(self) -> bool {
        self.0 <= SILENCE_FLOOR_DB
    }
}

pub fn db_to_linear(db: Decibels) -> f64 {
    10f64.powf(db.0 / 20.0)
}

pub fn mean_square(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("rms of an empty signal"));
    }
    Ok(samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64)
}

pub fn rms_of(samples: &[f64]) -> Result<f64> {
    mean_square(samples).map(f64::sqrt)
}

pub fn rms(clip: &AudioClip) -> Result<f64> {
    rms_of(clip.samples())
}

/// Reads a PCM WAV (16-bit integer or 32-bit float, one or two channels) as mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedEncoding {
            path: path.into(),
            detail: format!("{} channels", spec.channels),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.into(),
                detail: format!("{bits}-bit {format:?}"),
            })
        }
    };
    let channels = spec.channels as usize;
    let mono: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    if mono.is_empty() {
        return Err(Error::EmptyAudio(path.into()));
    }
    AudioClip::new(mono, spec.sample_rate).map_err(|e| Error::Unreadable {
        path: path.into(),
        reason: e.to_string(),
    })
}

fn wav_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: path.into(),
            detail: "unsupported WAV format".into(),
        },
        other => Error::Unreadable {
            path: path.into(),
            reason: other.to_string(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    /// 32-bit IEEE float.
    #[default]
    Float32,
    /// 16-bit signed integer PCM.
    Int16,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WavWriteOptions {
    pub encoding: WavEncoding,
    /// Reject samples outside [-1, 1] instead of clamping them.
    pub strict: bool,
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>, opts: WavWriteOptions) -> Result<()> {
    let path = path.as_ref();
    if opts.strict {
        if let Some((index, &value)) = clip
            .samples()
            .iter()
            .enumerate()
            .find(|(_, x)| x.abs() > 1.0)
        {
            return Err(Error::OutOfRange { index, value });
        }
    }
    let spec = match opts.encoding {
        WavEncoding::Float32 => WavSpec {
            channels: 1,
            sample_rate: clip.sample_rate(),
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        },
        WavEncoding::Int16 => WavSpec {
            channels: 1,
            sample_rate: clip.sample_rate(),
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        },
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = WavWriter::create(path, spec).map_err(io)?;
    for &x in clip.samples() {
        let x = x.clamp(-1.0, 1.0);
        match opts.encoding {
            WavEncoding::Float32 => writer.write_sample(x as f32).map_err(io)?,
            WavEncoding::Int16 => {
                let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q).map_err(io)?
            }
        }
    }
    writer.finalize().map_err(io)
}
