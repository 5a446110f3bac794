//! Mixture simulation: SNR-controlled summing of cleansed clips with label
//! concatenation, as a deterministic on-the-fly stream or a static dataset.

use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::audio::{save_wav, AudioClip};
use crate::cleanse::CorpusManifest;
use crate::error::{Error, Result};
use crate::labels::{concat_singers, frames_to_segments, write_rttm, LabelMatrix};

/// Mixture simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Number of clips summed per mixture.
    pub singers_per_mix: usize,
    pub snr_low_db: f64,
    pub snr_high_db: f64,
    /// Upper bound on mixture duration; stems beyond it are cropped.
    pub mixture_seconds: f64,
    pub seed: u64,
    /// Peak amplitude target: a mixture whose summed peak exceeds this is
    /// rescaled as a whole (labels untouched).
    pub peak_norm: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            singers_per_mix: 2,
            snr_low_db: -5.0,
            snr_high_db: 5.0,
            mixture_seconds: 30.0,
            seed: 0,
            peak_norm: 0.9,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.singers_per_mix < 2 {
            return Err(Error::InvalidParameter(format!(
                "singers_per_mix must be >= 2, got {}",
                self.singers_per_mix
            )));
        }
        if self.snr_low_db > self.snr_high_db {
            return Err(Error::InvalidParameter(format!(
                "snr range [{}, {}] is inverted",
                self.snr_low_db, self.snr_high_db
            )));
        }
        if !(self.peak_norm > 0.0) {
            return Err(Error::InvalidParameter("peak_norm must be positive".into()));
        }
        if !(self.mixture_seconds > 0.0) {
            return Err(Error::InvalidParameter(
                "mixture_seconds must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Origin of one stem inside a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceProvenance {
    pub id: String,
    /// Amplitude gain applied to this stem, in dB (0 for the reference).
    pub gain_db: f64,
    /// SNR drawn against the reference stem; absent for the reference.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snr_db: Option<f64>,
}

/// One simulated mixture with its labels and provenance.
#[derive(Debug, Clone)]
pub struct MixtureRecord {
    pub clip: AudioClip,
    pub labels: LabelMatrix,
    pub sources: Vec<SourceProvenance>,
    /// Child seed this mixture was drawn from.
    pub seed: u64,
    /// Stream index.
    pub index: u64,
    /// Rescale factor applied to the summed waveform (1.0 = untouched).
    pub peak_scale: f64,
}

/// Mean squared amplitude over samples inside VAD-active frames. This is
/// the power reference for SNR: silent stretches would otherwise make
/// clip power depend on arrangement.
pub fn active_power(clip: &AudioClip, labels: &LabelMatrix) -> Result<f64> {
    let frame_len = (labels.frame_duration() * clip.sample_rate as f64).round() as usize;
    if frame_len == 0 {
        return Err(Error::InvalidParameter(
            "frame duration shorter than one sample".into(),
        ));
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for t in 0..labels.num_frames() {
        if labels.active_at(t) == 0 {
            continue;
        }
        let start = t * frame_len;
        let end = ((t + 1) * frame_len).min(clip.len());
        for s in &clip.samples[start..end] {
            sum += s * s;
        }
        count += end - start;
    }
    if count == 0 {
        return Err(Error::NoActiveFrames {
            id: clip.id.clone(),
        });
    }
    Ok(sum / count as f64)
}

/// Mixes the given (clip, labels) entries. The first entry is the gain
/// reference; every other stem is scaled so its active power sits at a
/// uniformly drawn SNR below/above the reference. Waveforms are zero-padded
/// to the longest stem and summed (no noise floor); labels are concatenated
/// along the singer dimension with zero padding.
pub fn mix_pair(
    entries: &[(&AudioClip, &LabelMatrix)],
    cfg: &SimConfig,
    rng: &mut StdRng,
) -> Result<MixtureRecord> {
    cfg.validate()?;
    if entries.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "mixing needs at least 2 entries, got {}",
            entries.len()
        )));
    }
    let rate = entries[0].0.sample_rate;
    for (clip, _) in entries {
        if clip.sample_rate != rate {
            return Err(Error::SampleRateMismatch {
                left: rate,
                right: clip.sample_rate,
            });
        }
    }

    let ref_power = active_power(entries[0].0, entries[0].1)?;
    let mut gains = vec![1.0f64];
    let mut sources = vec![SourceProvenance {
        id: entries[0].0.id.clone(),
        gain_db: 0.0,
        snr_db: None,
    }];
    for (clip, labels) in &entries[1..] {
        let power = active_power(clip, labels)?;
        let snr_db = rng.gen_range(cfg.snr_low_db..=cfg.snr_high_db);
        // 10*log10(P_ref / (g^2 * P)) = snr  =>  g = sqrt(P_ref / (P * 10^(snr/10)))
        let gain = (ref_power / (power * 10f64.powf(snr_db / 10.0))).sqrt();
        gains.push(gain);
        sources.push(SourceProvenance {
            id: clip.id.clone(),
            gain_db: 20.0 * gain.log10(),
            snr_db: Some(snr_db),
        });
    }

    let cap = (cfg.mixture_seconds * rate as f64).floor() as usize;
    let mix_len = entries
        .iter()
        .map(|(c, _)| c.len())
        .max()
        .expect("nonempty")
        .min(cap.max(1));
    let mut samples = vec![0.0f64; mix_len];
    for ((clip, _), gain) in entries.iter().zip(&gains) {
        for (s, &v) in samples.iter_mut().zip(&clip.samples) {
            *s += gain * v;
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let peak_scale = if peak > cfg.peak_norm {
        cfg.peak_norm / peak
    } else {
        1.0
    };
    if peak_scale != 1.0 {
        for s in &mut samples {
            *s *= peak_scale;
        }
    }

    let frame_len = (entries[0].1.frame_duration() * rate as f64).round() as usize;
    let num_frames = mix_len / frame_len.max(1);
    let mut labels = entries[0].1.truncated(num_frames);
    for (_, l) in &entries[1..] {
        labels = concat_singers(&labels, &l.truncated(num_frames))?;
    }
    labels = labels.zero_padded(num_frames);

    Ok(MixtureRecord {
        clip: AudioClip::new(samples, rate, "mix"),
        labels,
        sources,
        seed: cfg.seed,
        index: 0,
        peak_scale,
    })
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for mixture k: a pure function of (seed, k), so any mixture
/// is reproducible in isolation and streams are identical across runs and
/// worker counts.
pub fn child_seed(seed: u64, k: u64) -> u64 {
    splitmix64(seed ^ splitmix64(k))
}

/// Deterministic on-the-fly mixture generator over an accepted corpus.
pub struct DynamicMixer {
    entries: Vec<(AudioClip, LabelMatrix)>,
    cfg: SimConfig,
}

impl DynamicMixer {
    pub fn new(manifest: &CorpusManifest, cfg: SimConfig) -> Result<Self> {
        let entries: Vec<(AudioClip, LabelMatrix)> = manifest
            .accepted()
            .map(|e| manifest.load_entry(e))
            .collect::<Result<_>>()?;
        Self::from_entries(entries, cfg)
    }

    /// Builds a mixer over in-memory entries (tests, synthetic corpora).
    pub fn from_entries(entries: Vec<(AudioClip, LabelMatrix)>, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        if entries.len() < cfg.singers_per_mix {
            return Err(Error::CorpusTooSmall {
                available: entries.len(),
                required: cfg.singers_per_mix,
            });
        }
        Ok(Self { entries, cfg })
    }

    pub fn corpus_size(&self) -> usize {
        self.entries.len()
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Random access: mixture k, identical to the k-th element of
    /// sequential iteration.
    pub fn mixture(&self, k: u64) -> Result<MixtureRecord> {
        let seed = child_seed(self.cfg.seed, k);
        let mut rng = StdRng::seed_from_u64(seed);
        let picks = rand::seq::index::sample(&mut rng, self.entries.len(), self.cfg.singers_per_mix);
        let selected: Vec<(&AudioClip, &LabelMatrix)> = picks
            .iter()
            .map(|i| (&self.entries[i].0, &self.entries[i].1))
            .collect();
        let mut record = mix_pair(&selected, &self.cfg, &mut rng)?;
        record.seed = seed;
        record.index = k;
        record.clip.id = format!("mix_{k:08}");
        Ok(record)
    }

    /// Infinite stream of mixtures, k = 0, 1, 2, ...
    pub fn iter(&self) -> impl Iterator<Item = Result<MixtureRecord>> + '_ {
        (0u64..).map(move |k| self.mixture(k))
    }
}

/// Spec-named constructor for the dynamic mixing stream.
pub fn dynamic_mixing(manifest: &CorpusManifest, cfg: SimConfig) -> Result<DynamicMixer> {
    DynamicMixer::new(manifest, cfg)
}

/// One line of the static dataset manifest. Paths are relative to the
/// dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub mix_id: String,
    pub wav_path: String,
    pub rttm_path: String,
    pub sources: Vec<SourceProvenance>,
    pub seed: u64,
    pub k: u64,
    pub peak_scale: f64,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<DatasetRecord>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", lineno + 1),
            })?);
        }
        Ok(Self {
            root: path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
            records,
        })
    }
}

/// Renders `count` mixtures to WAV + RTTM files plus a JSONL manifest.
/// Deterministic given the seed; `jobs > 1` parallelizes generation with
/// byte-identical output.
pub fn write_static_dataset(
    manifest: &CorpusManifest,
    cfg: &SimConfig,
    count: u64,
    out_dir: impl AsRef<Path>,
    jobs: usize,
) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be >= 1".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mixer = DynamicMixer::new(manifest, cfg.clone())?;

    let render = |k: u64| -> Result<DatasetRecord> {
        let record = mixer.mixture(k)?;
        let wav_rel = format!("{}.wav", record.clip.id);
        let rttm_rel = format!("{}.rttm", record.clip.id);
        save_wav(&record.clip, out_dir.join(&wav_rel))?;
        let segments = frames_to_segments(&record.labels, &record.clip.id);
        write_rttm(&[&segments], out_dir.join(&rttm_rel))?;
        Ok(DatasetRecord {
            mix_id: record.clip.id.clone(),
            wav_path: wav_rel,
            rttm_path: rttm_rel,
            sources: record.sources,
            seed: record.seed,
            k,
            peak_scale: record.peak_scale,
        })
    };

    let records: Vec<DatasetRecord> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..count).into_par_iter().map(render).collect::<Result<_>>())?
    } else {
        (0..count).map(render).collect::<Result<_>>()?
    };

    let manifest_path = out_dir.join("dataset.jsonl");
    let mut text = String::new();
    for record in &records {
        text.push_str(&serde_json::to_string(record).map_err(|e| Error::Manifest {
            path: manifest_path.clone(),
            detail: e.to_string(),
        })?);
        text.push('\n');
    }
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(DatasetManifest {
        root: out_dir.to_path_buf(),
        records,
    })
}
