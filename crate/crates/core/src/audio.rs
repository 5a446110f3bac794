//! Waveform I/O, segmentation, framing, and frame-energy computation.

use std::path::Path;

use crate::error::{Error, Result};

/// Mono sampled waveform. Amplitudes are dimensionless with nominal range
/// [-1, 1]; samples are kept as f64 so that energy ratios survive large
/// gain factors without rounding into the dB tolerances downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, id: impl Into<String>) -> Self {
        assert!(sample_rate > 0, "sample_rate must be positive");
        Self {
            samples,
            sample_rate,
            id: id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Contiguous non-overlapping framing of a clip. The trailing remainder
/// (fewer than `frame_len` samples) is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    pub frame_len: usize,
    pub num_frames: usize,
}

impl FrameGrid {
    pub fn from_clip(clip: &AudioClip, frame_len: usize) -> Result<Self> {
        if frame_len == 0 {
            return Err(Error::InvalidParameter("frame_len must be positive".into()));
        }
        let num_frames = clip.samples.len() / frame_len;
        if num_frames == 0 {
            return Err(Error::TooShort {
                id: clip.id.clone(),
                samples: clip.samples.len(),
                frame_len,
            });
        }
        Ok(Self {
            frame_len,
            num_frames,
        })
    }

    pub fn frame_duration(&self, sample_rate: u32) -> f64 {
        self.frame_len as f64 / sample_rate as f64
    }

    /// Sample range covered by frame `t`.
    pub fn frame_range(&self, t: usize) -> std::ops::Range<usize> {
        let start = t * self.frame_len;
        start..start + self.frame_len
    }
}

/// Counters reported by [`save_wav`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SaveStats {
    /// Samples outside [-1, 1] that were clamped before quantization.
    pub clamped: usize,
}

/// Reads a mono PCM WAV file (16-bit integer or 32-bit float).
///
/// 16-bit samples map to amplitude by division by 32768, so integer
/// full scale -32768 becomes exactly -1.0. The clip id is the file stem.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::MultichannelInput {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedWav {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {format:?} (need 16-bit int or 32-bit float)"),
            })
        }
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".to_string());
    Ok(AudioClip::new(samples, spec.sample_rate, id))
}

/// Writes a clip as mono 16-bit PCM WAV. Amplitudes are quantized as
/// round(s * 32768) clamped to [-32768, 32767], which keeps the save/load
/// round-trip error within 2^-15 per sample and makes re-saving a loaded
/// file byte-stable. Out-of-range inputs are clamped and counted.
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<SaveStats> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    let mut stats = SaveStats::default();
    for &s in &clip.samples {
        let clamped = s.clamp(-1.0, 1.0);
        if clamped != s {
            stats.clamped += 1;
        }
        let q = (clamped * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))?;
    Ok(stats)
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::UnsupportedWav {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

/// Splits a clip into consecutive non-overlapping segments of
/// `segment_seconds`. A trailing remainder is kept only if it covers at
/// least half the target length. Segment ids are the clip id suffixed
/// with the segment index.
pub fn segment_clip(clip: &AudioClip, segment_seconds: f64) -> Result<Vec<AudioClip>> {
    if !(segment_seconds > 0.0) {
        return Err(Error::InvalidParameter(
            "segment_seconds must be positive".into(),
        ));
    }
    let seg_len = (segment_seconds * clip.sample_rate as f64).round() as usize;
    if seg_len == 0 {
        return Err(Error::InvalidParameter(
            "segment_seconds is shorter than one sample".into(),
        ));
    }
    let keep_threshold = seg_len.div_ceil(2);
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut index = 0usize;
    while start < clip.samples.len() {
        let end = (start + seg_len).min(clip.samples.len());
        let len = end - start;
        if len == seg_len || len >= keep_threshold {
            out.push(AudioClip::new(
                clip.samples[start..end].to_vec(),
                clip.sample_rate,
                format!("{}_{:04}", clip.id, index),
            ));
        }
        start = end;
        index += 1;
    }
    Ok(out)
}

/// Per-frame energy in dB relative to the mean frame energy of the clip:
///
/// `e_t = 10*log10( sum_l s[l,t]^2 / ((1/T) * sum_t sum_l s[l,t]^2) )`
///
/// Only full frames participate; the trailing remainder is ignored. A clip
/// whose framed region carries zero energy yields [`Error::SilentClip`].
pub fn frame_energies(clip: &AudioClip, frame_len: usize) -> Result<Vec<f64>> {
    let grid = FrameGrid::from_clip(clip, frame_len)?;
    let mut energies = Vec::with_capacity(grid.num_frames);
    let mut total = 0.0f64;
    for t in 0..grid.num_frames {
        let e: f64 = clip.samples[grid.frame_range(t)].iter().map(|s| s * s).sum();
        total += e;
        energies.push(e);
    }
    if total == 0.0 {
        return Err(Error::SilentClip {
            id: clip.id.clone(),
        });
    }
    let mean = total / grid.num_frames as f64;
    Ok(energies
        .into_iter()
        .map(|e| 10.0 * (e / mean).log10())
        .collect())
}
