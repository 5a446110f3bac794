//! singsim: simulated multi-singer diarization data generation and scoring.
//!
//! The pipeline turns solo/choral vocal clips into labeled training
//! mixtures: instrumental filtering, segmentation, a pluggable cleansing
//! stage, energy-based VAD labeling, and SNR-controlled mixing (static or
//! dynamic). Evaluation covers frame-based DER with optimal singer
//! mapping, an identity-agnostic singer counting error rate, and a
//! permutation-invariant BCE loss for external model training.

pub mod assignment;
pub mod audio;
pub mod cleanse;
pub mod config;
pub mod error;
pub mod labels;
pub mod metrics;
pub mod mixing;
pub mod pit;
pub mod vad;

pub use audio::{frame_energies, load_wav, save_wav, segment_clip, AudioClip, FrameGrid};
pub use cleanse::{cleanse, prepare_corpus, CleanserKind, CorpusEntry, CorpusManifest};
pub use config::ToolConfig;
pub use error::{Error, Result};
pub use labels::{
    concat_singers, frames_to_segments, overlap_ratio, read_rttm, segments_to_frames, write_rttm,
    LabelMatrix, Segment, SegmentList,
};
pub use metrics::{build_eval_mask, der, dscer, score_corpus, EvalMask, MaskPolicy, ScoreReport};
pub use mixing::{
    active_power, dynamic_mixing, mix_pair, write_static_dataset, DynamicMixer, MixtureRecord,
    SimConfig,
};
pub use pit::{bce, pit_loss_assignment, pit_loss_bruteforce, PitResult, PredictionMatrix};
pub use vad::{energy_vad, is_instrumental, median_filter, VadConfig};
