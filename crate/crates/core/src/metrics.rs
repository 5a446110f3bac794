//! Frame-based DER with optimal singer mapping, and the identity-agnostic
//! singer counting error rate (under/over counting), both restricted to an
//! evaluation mask.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_matching;
use crate::error::{Error, Result};
use crate::labels::{frame_durations_match, segments_to_frames, LabelMatrix, SegmentList};

/// Binary per-frame evaluation mask; 1 = frame is scored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalMask(Vec<u8>);

impl EvalMask {
    pub fn new(frames: Vec<u8>) -> Self {
        Self(frames.into_iter().map(|v| u8::from(v != 0)).collect())
    }

    pub fn all_ones(num_frames: usize) -> Self {
        Self(vec![1; num_frames])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_evaluated(&self, frame: usize) -> bool {
        self.0.get(frame).copied().unwrap_or(0) == 1
    }
}

/// Default evaluation mask: frames where at least one reference singer is
/// active.
pub fn build_eval_mask(reference: &LabelMatrix) -> EvalMask {
    EvalMask(
        (0..reference.num_frames())
            .map(|t| u8::from(reference.active_at(t) >= 1))
            .collect(),
    )
}

/// Evaluation mask from an external VAD segment list (the karaoke case:
/// singing sections are known). A frame is evaluated iff VAD segments
/// cover at least half of it.
pub fn mask_from_segments(
    vad: &SegmentList,
    frame_duration: f64,
    num_frames: usize,
) -> Result<EvalMask> {
    let matrix = segments_to_frames(vad, frame_duration, num_frames)?;
    Ok(EvalMask(
        (0..num_frames)
            .map(|t| u8::from(matrix.active_at(t) >= 1))
            .collect(),
    ))
}

/// Diarization and counting error decomposition over one or more
/// recordings. DER percentages are relative to total reference singer
/// frames; counting percentages are relative to frames with reference
/// activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub der_pct: f64,
    pub miss_pct: f64,
    pub fa_pct: f64,
    pub cf_pct: f64,
    pub dscer_pct: f64,
    pub under_pct: f64,
    pub over_pct: f64,
    pub total_ref_singer_frames: u64,
    pub total_active_frames: u64,
    /// Hypothesis singer id -> reference singer id, for pairs with at
    /// least one co-active masked frame. Empty for corpus aggregates.
    pub mapping: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default)]
struct Counts {
    miss: u64,
    fa: u64,
    cf: u64,
    ref_singer_frames: u64,
    under: u64,
    over: u64,
    active_frames: u64,
}

impl Counts {
    fn add(&mut self, other: &Counts) {
        self.miss += other.miss;
        self.fa += other.fa;
        self.cf += other.cf;
        self.ref_singer_frames += other.ref_singer_frames;
        self.under += other.under;
        self.over += other.over;
        self.active_frames += other.active_frames;
    }

    fn into_report(self, mapping: BTreeMap<String, String>) -> Result<ScoreReport> {
        if self.ref_singer_frames == 0 {
            return Err(Error::UndefinedScore);
        }
        let der_den = self.ref_singer_frames as f64;
        let count_den = self.active_frames as f64;
        Ok(ScoreReport {
            der_pct: 100.0 * (self.miss + self.fa + self.cf) as f64 / der_den,
            miss_pct: 100.0 * self.miss as f64 / der_den,
            fa_pct: 100.0 * self.fa as f64 / der_den,
            cf_pct: 100.0 * self.cf as f64 / der_den,
            dscer_pct: 100.0 * (self.under + self.over) as f64 / count_den,
            under_pct: 100.0 * self.under as f64 / count_den,
            over_pct: 100.0 * self.over as f64 / count_den,
            total_ref_singer_frames: self.ref_singer_frames,
            total_active_frames: self.active_frames,
            mapping,
        })
    }
}

struct Aligned {
    reference: LabelMatrix,
    hypothesis: LabelMatrix,
    mask: EvalMask,
}

/// Zero-pads both matrices (and the mask) to a common frame count.
fn align(reference: &LabelMatrix, hypothesis: &LabelMatrix, mask: &EvalMask) -> Result<Aligned> {
    if !frame_durations_match(reference.frame_duration(), hypothesis.frame_duration()) {
        return Err(Error::FrameDurationMismatch {
            left: reference.frame_duration(),
            right: hypothesis.frame_duration(),
        });
    }
    let frames = reference
        .num_frames()
        .max(hypothesis.num_frames())
        .max(mask.len());
    let mut mask_bits = mask.0.clone();
    mask_bits.resize(frames, 0);
    Ok(Aligned {
        reference: reference.zero_padded(frames),
        hypothesis: hypothesis.zero_padded(frames),
        mask: EvalMask(mask_bits),
    })
}

/// Optimal one-to-one hypothesis-to-reference mapping, maximizing co-active
/// masked frames. Returns (hyp row -> ref row) and the readable id map for
/// pairs that actually co-occur.
fn optimal_mapping(aligned: &Aligned) -> (Vec<Option<usize>>, BTreeMap<String, String>) {
    let reference = &aligned.reference;
    let hypothesis = &aligned.hypothesis;
    let mut weights = vec![vec![0.0f64; reference.num_singers()]; hypothesis.num_singers()];
    for t in 0..reference.num_frames() {
        if !aligned.mask.is_evaluated(t) {
            continue;
        }
        for (h, row) in weights.iter_mut().enumerate() {
            if hypothesis.get(h, t) {
                for (r, w) in row.iter_mut().enumerate() {
                    if reference.get(r, t) {
                        *w += 1.0;
                    }
                }
            }
        }
    }
    let assignment = max_weight_matching(&weights);
    let mut mapping = BTreeMap::new();
    for (h, target) in assignment.iter().enumerate() {
        if let Some(r) = *target {
            if weights[h][r] > 0.0 {
                mapping.insert(
                    hypothesis.singer_ids()[h].clone(),
                    reference.singer_ids()[r].clone(),
                );
            }
        }
    }
    (assignment, mapping)
}

fn count_errors(aligned: &Aligned, assignment: &[Option<usize>]) -> Counts {
    let reference = &aligned.reference;
    let hypothesis = &aligned.hypothesis;
    let mut counts = Counts::default();
    for t in 0..reference.num_frames() {
        if !aligned.mask.is_evaluated(t) {
            continue;
        }
        let r_count = reference.active_at(t) as u64;
        let h_count = hypothesis.active_at(t) as u64;
        counts.ref_singer_frames += r_count;
        let matched = assignment
            .iter()
            .enumerate()
            .filter(|(h, target)| {
                hypothesis.get(*h, t)
                    && target.is_some_and(|r| reference.get(r, t))
            })
            .count() as u64;
        counts.miss += r_count.saturating_sub(h_count);
        counts.fa += h_count.saturating_sub(r_count);
        counts.cf += r_count.min(h_count) - matched;
        if r_count >= 1 {
            counts.active_frames += 1;
            match h_count.cmp(&r_count) {
                std::cmp::Ordering::Less => counts.under += 1,
                std::cmp::Ordering::Greater => counts.over += 1,
                std::cmp::Ordering::Equal => {}
            }
        }
    }
    counts
}

/// Scores a hypothesis against a reference over an evaluation mask.
///
/// DER maps hypothesis singers to reference singers by maximal co-active
/// time; per masked frame, miss = max(|R|-|H|, 0), false alarm =
/// max(|H|-|R|, 0), confusion = min(|R|,|H|) minus matched pairs. The
/// counting errors compare per-frame singer counts only, over masked
/// frames with reference activity.
pub fn der(reference: &LabelMatrix, hypothesis: &LabelMatrix, mask: &EvalMask) -> Result<ScoreReport> {
    let aligned = align(reference, hypothesis, mask)?;
    let (assignment, mapping) = optimal_mapping(&aligned);
    count_errors(&aligned, &assignment).into_report(mapping)
}

/// Counting error rate over frames where the reference has at least one
/// active singer. Identity-agnostic: only per-frame counts matter.
pub fn dscer(reference: &LabelMatrix, hypothesis: &LabelMatrix) -> Result<ScoreReport> {
    der(reference, hypothesis, &build_eval_mask(reference))
}

/// Mask selection for corpus scoring.
pub enum MaskPolicy<'a> {
    /// Evaluate frames with reference activity (per recording).
    RefActivity,
    /// Caller-supplied masks, one per pair.
    External(&'a [EvalMask]),
}

/// Micro-averaged corpus score: error counts and denominators are summed
/// over recordings before division. The aggregate carries no id mapping.
pub fn score_corpus(
    pairs: &[(&LabelMatrix, &LabelMatrix)],
    mask_policy: MaskPolicy<'_>,
) -> Result<ScoreReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("score_corpus needs at least one pair".into()));
    }
    if let MaskPolicy::External(masks) = &mask_policy {
        if masks.len() != pairs.len() {
            return Err(Error::ShapeMismatch {
                detail: format!("{} masks for {} pairs", masks.len(), pairs.len()),
            });
        }
    }
    let mut total = Counts::default();
    for (i, (reference, hypothesis)) in pairs.iter().enumerate() {
        let mask = match &mask_policy {
            MaskPolicy::RefActivity => build_eval_mask(reference),
            MaskPolicy::External(masks) => masks[i].clone(),
        };
        let aligned = align(reference, hypothesis, &mask)?;
        let (assignment, _) = optimal_mapping(&aligned);
        total.add(&count_errors(&aligned, &assignment));
    }
    total.into_report(BTreeMap::new())
}
