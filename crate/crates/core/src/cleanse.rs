//! Pluggable data-cleansing stage and corpus preparation.
//!
//! A cleanser converts raw (possibly choral) vocal clips into material fit
//! for single-singer labeling. The production route is an external command
//! operating on WAV files; the dominant-stem oracle exists so the full
//! pipeline can run on synthetic data with known ground truth.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, save_wav, segment_clip, AudioClip};
use crate::error::{Error, Result};
use crate::labels::{frames_to_segments, write_rttm, LabelMatrix, SegmentList};
use crate::vad::{energy_vad, median_filter, VadConfig};

/// The cleansing strategy applied to every clip of a corpus.
#[derive(Debug, Clone)]
pub enum CleanserKind {
    /// Pass clips through unchanged (the naive pipeline).
    Identity,
    /// Run an external converter: `{in}` and `{out}` placeholders are
    /// replaced with temporary WAV paths.
    ExternalCommand {
        command_template: String,
        timeout: Duration,
    },
    /// Oracle cleanser: returns the stem with the highest total energy,
    /// standing in for a model that collapses choral audio to one voice.
    DominantStem { stems: Vec<AudioClip> },
}

impl CleanserKind {
    pub fn external(command_template: impl Into<String>, timeout: Duration) -> Result<Self> {
        let kind = CleanserKind::ExternalCommand {
            command_template: command_template.into(),
            timeout,
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CleanserKind::Identity => Ok(()),
            CleanserKind::ExternalCommand {
                command_template, ..
            } => {
                if !command_template.contains("{in}") || !command_template.contains("{out}") {
                    return Err(Error::InvalidParameter(format!(
                        "command template {command_template:?} must contain {{in}} and {{out}}"
                    )));
                }
                Ok(())
            }
            CleanserKind::DominantStem { stems } => {
                let Some(first) = stems.first() else {
                    return Err(Error::InvalidParameter(
                        "DominantStem needs at least one stem".into(),
                    ));
                };
                for stem in stems {
                    if stem.sample_rate != first.sample_rate {
                        return Err(Error::SampleRateMismatch {
                            left: first.sample_rate,
                            right: stem.sample_rate,
                        });
                    }
                    if stem.len() != first.len() {
                        return Err(Error::ShapeMismatch {
                            detail: "DominantStem stems must share length".into(),
                        });
                    }
                }
                Ok(())
            }
        }
    }
}

/// Applies the cleansing stage to one clip. The output keeps the input's
/// sample rate and id but may differ in length (external converters can
/// pad or trim); downstream VAD uses the output's own length.
pub fn cleanse(clip: &AudioClip, kind: &CleanserKind) -> Result<AudioClip> {
    kind.validate()?;
    match kind {
        CleanserKind::Identity => Ok(clip.clone()),
        CleanserKind::DominantStem { stems } => {
            let best = stems
                .iter()
                .max_by(|a, b| {
                    let ea: f64 = a.samples.iter().map(|s| s * s).sum();
                    let eb: f64 = b.samples.iter().map(|s| s * s).sum();
                    ea.partial_cmp(&eb).expect("finite energies")
                })
                .expect("validated nonempty");
            Ok(AudioClip::new(
                best.samples.clone(),
                best.sample_rate,
                clip.id.clone(),
            ))
        }
        CleanserKind::ExternalCommand {
            command_template,
            timeout,
        } => run_external(clip, command_template, *timeout),
    }
}

fn run_external(clip: &AudioClip, template: &str, timeout: Duration) -> Result<AudioClip> {
    let dir = tempfile::Builder::new()
        .prefix("cleanse")
        .tempdir()
        .map_err(|e| Error::io("<tempdir>", e))?;
    let in_path = dir.path().join("in.wav");
    let out_path = dir.path().join("out.wav");
    save_wav(clip, &in_path)?;
    let command = template
        .replace("{in}", &in_path.to_string_lossy())
        .replace("{out}", &out_path.to_string_lossy());

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Cleanse {
            id: clip.id.clone(),
            detail: format!("failed to spawn {command:?}: {e}"),
        })?;
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let stderr_reader = std::thread::spawn(move || {
        let mut buf = String::new();
        stderr_pipe.read_to_string(&mut buf).ok();
        buf
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {
                if Instant::now() >= deadline {
                    child.kill().ok();
                    child.wait().ok();
                    return Err(Error::Cleanse {
                        id: clip.id.clone(),
                        detail: format!(
                            "command timed out after {:.1}s: {command}",
                            timeout.as_secs_f64()
                        ),
                    });
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                return Err(Error::Cleanse {
                    id: clip.id.clone(),
                    detail: format!("wait failed: {e}"),
                })
            }
        }
    };
    let stderr = stderr_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(Error::Cleanse {
            id: clip.id.clone(),
            detail: format!("command exited with {status}: {command}\nstderr: {stderr}"),
        });
    }
    let cleansed = load_wav(&out_path).map_err(|e| Error::Cleanse {
        id: clip.id.clone(),
        detail: format!("output unreadable: {e}\nstderr: {stderr}"),
    })?;
    Ok(AudioClip::new(
        cleansed.samples,
        cleansed.sample_rate,
        clip.id.clone(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Accepted,
    Rejected,
}

/// One manifest line. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub clip_path: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label_path: Option<String>,
    pub duration_s: f64,
    pub active_fraction: f64,
    pub status: EntryStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame_duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub num_frames: Option<usize>,
}

/// Prepared-corpus manifest: accepted clips with their label files, plus
/// rejections with reasons. Serialized as JSON Lines, one entry per line.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    root: PathBuf,
    pub entries: Vec<CorpusEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl CorpusManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<CorpusEntry>) -> Self {
        Self {
            root: root.into(),
            entries,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn accepted(&self) -> impl Iterator<Item = &CorpusEntry> {
        self.entries
            .iter()
            .filter(|e| e.status == EntryStatus::Accepted)
    }

    pub fn rejected(&self) -> impl Iterator<Item = &CorpusEntry> {
        self.entries
            .iter()
            .filter(|e| e.status == EntryStatus::Rejected)
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).map_err(|e| Error::Manifest {
                path: path.clone(),
                detail: e.to_string(),
            })?);
            out.push('\n');
        }
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CorpusEntry = serde_json::from_str(line).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", lineno + 1),
            })?;
            entries.push(entry);
        }
        Ok(Self { root, entries })
    }

    /// Loads an accepted entry's audio and labels from disk.
    pub fn load_entry(&self, entry: &CorpusEntry) -> Result<(AudioClip, LabelMatrix)> {
        let clip = load_wav(self.root.join(&entry.clip_path))?;
        let label_rel = entry.label_path.as_ref().ok_or_else(|| Error::Manifest {
            path: self.root.join(MANIFEST_FILE),
            detail: format!("entry {} has no label path", entry.clip_path),
        })?;
        let frame_duration = entry.frame_duration_s.ok_or_else(|| Error::Manifest {
            path: self.root.join(MANIFEST_FILE),
            detail: format!("entry {} has no frame duration", entry.clip_path),
        })?;
        let num_frames = entry.num_frames.ok_or_else(|| Error::Manifest {
            path: self.root.join(MANIFEST_FILE),
            detail: format!("entry {} has no frame count", entry.clip_path),
        })?;
        let label_path = self.root.join(label_rel);
        let lists = crate::labels::read_rttm(&label_path)?;
        let list = lists
            .get(&clip.id)
            .or_else(|| lists.values().next())
            .cloned()
            .unwrap_or(SegmentList {
                recording_id: clip.id.clone(),
                segments: Vec::new(),
            });
        let mut labels = crate::labels::segments_to_frames(&list, frame_duration, num_frames)?;
        if labels.num_singers() == 0 {
            labels = LabelMatrix::zeros(vec![clip.id.clone()], num_frames, frame_duration)?;
        }
        Ok((clip, labels))
    }
}

/// Runs the corpus preparation pipeline over every WAV in `input_dir`:
/// instrumental rejection before cleansing, segmentation, cleansing, VAD
/// labeling with median filtering, and a second instrumental rejection
/// after cleansing (external converters can fail to near-silence).
/// Accepted clips and RTTM labels land in `out_dir` along with the
/// manifest. Per-clip errors become rejection entries; the pipeline
/// continues. There is no resampling: when `expected_sample_rate` is set,
/// files at any other rate are rejected.
pub fn prepare_corpus(
    input_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    cfg: &VadConfig,
    kind: &CleanserKind,
    segment_seconds: f64,
    expected_sample_rate: Option<u32>,
) -> Result<CorpusManifest> {
    let input_dir = input_dir.as_ref();
    let out_dir = out_dir.as_ref();
    cfg.validate()?;
    kind.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut wavs: Vec<PathBuf> = std::fs::read_dir(input_dir)
        .map_err(|e| Error::io(input_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("wav"))
                .unwrap_or(false)
        })
        .collect();
    wavs.sort();
    if wavs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .wav files in {}",
            input_dir.display()
        )));
    }

    let mut entries = Vec::new();
    for path in &wavs {
        match process_file(path, out_dir, cfg, kind, segment_seconds, expected_sample_rate) {
            Ok(mut file_entries) => entries.append(&mut file_entries),
            Err(e) => entries.push(rejection(path.to_string_lossy().as_ref(), 0.0, e.to_string())),
        }
    }
    let manifest = CorpusManifest::new(out_dir, entries);
    manifest.save()?;
    Ok(manifest)
}

fn rejection(clip_path: &str, duration_s: f64, reason: String) -> CorpusEntry {
    CorpusEntry {
        clip_path: clip_path.to_string(),
        label_path: None,
        duration_s,
        active_fraction: 0.0,
        status: EntryStatus::Rejected,
        reason: Some(reason),
        frame_duration_s: None,
        num_frames: None,
    }
}

fn process_file(
    path: &Path,
    out_dir: &Path,
    cfg: &VadConfig,
    kind: &CleanserKind,
    segment_seconds: f64,
    expected_sample_rate: Option<u32>,
) -> Result<Vec<CorpusEntry>> {
    let input_name = path.to_string_lossy().into_owned();
    let clip = load_wav(path)?;
    if let Some(expected) = expected_sample_rate {
        if clip.sample_rate != expected {
            return Err(Error::SampleRateMismatch {
                left: expected,
                right: clip.sample_rate,
            });
        }
    }
    let duration = clip.duration_seconds();

    // Pre-cleansing instrumental filter on the whole track.
    let check = crate::vad::is_instrumental(&clip, cfg)?;
    if check.instrumental {
        return Ok(vec![rejection(
            &input_name,
            duration,
            format!(
                "instrumental (active fraction {:.4} < {:.4})",
                check.active_fraction, cfg.min_active_fraction
            ),
        )]);
    }

    let mut entries = Vec::new();
    for segment in segment_clip(&clip, segment_seconds)? {
        let segment_id = segment.id.clone();
        match process_segment(segment, out_dir, cfg, kind) {
            Ok(entry) => entries.push(entry),
            Err(e) => entries.push(rejection(
                &input_name,
                duration,
                format!("segment {segment_id}: {e}"),
            )),
        }
    }
    Ok(entries)
}

fn process_segment(
    segment: AudioClip,
    out_dir: &Path,
    cfg: &VadConfig,
    kind: &CleanserKind,
) -> Result<CorpusEntry> {
    let cleansed = cleanse(&segment, kind)?;
    let outcome = energy_vad(&cleansed, cfg)?;
    let raw_fraction = outcome.active_fraction();
    if outcome.silent || raw_fraction < cfg.min_active_fraction {
        return Err(Error::NoActiveFrames {
            id: segment.id.clone(),
        });
    }
    let labels = median_filter(&outcome.labels, cfg.median_width.min(max_odd_width(&outcome.labels)))?;

    let clip_rel = format!("{}.wav", cleansed.id);
    let label_rel = format!("{}.rttm", cleansed.id);
    save_wav(&cleansed, out_dir.join(&clip_rel))?;
    let segments = frames_to_segments(&labels, &cleansed.id);
    write_rttm(&[&segments], out_dir.join(&label_rel))?;

    Ok(CorpusEntry {
        clip_path: clip_rel,
        label_path: Some(label_rel),
        duration_s: cleansed.duration_seconds(),
        active_fraction: labels.active_fraction(),
        status: EntryStatus::Accepted,
        reason: None,
        frame_duration_s: Some(labels.frame_duration()),
        num_frames: Some(labels.num_frames()),
    })
}

/// Largest odd width that still fits the row (2T - 1), so very short
/// clips do not reject the configured filter outright.
fn max_odd_width(labels: &LabelMatrix) -> usize {
    (2 * labels.num_frames()).saturating_sub(1).max(1)
}
