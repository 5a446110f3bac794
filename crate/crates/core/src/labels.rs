//! Binary singer-activity matrices, segment lists, RTTM interchange, and
//! corpus statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Relative tolerance used when comparing frame durations for equality.
const FRAME_DURATION_REL_TOL: f64 = 1e-9;

pub(crate) fn frame_durations_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= FRAME_DURATION_REL_TOL * a.abs().max(b.abs())
}

/// Binary singer-activity matrix y in {0,1}^(N x T) at a fixed frame
/// duration. Row n is singer n's per-frame activity.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    num_singers: usize,
    num_frames: usize,
    frame_duration: f64,
    singer_ids: Vec<String>,
    data: Vec<u8>, // row-major, entries 0 or 1
}

impl LabelMatrix {
    pub fn zeros(singer_ids: Vec<String>, num_frames: usize, frame_duration: f64) -> Result<Self> {
        if !(frame_duration > 0.0) {
            return Err(Error::InvalidParameter(
                "frame_duration must be positive".into(),
            ));
        }
        for (i, id) in singer_ids.iter().enumerate() {
            if singer_ids[..i].contains(id) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate singer id {id:?}"
                )));
            }
        }
        let num_singers = singer_ids.len();
        Ok(Self {
            num_singers,
            num_frames,
            frame_duration,
            singer_ids,
            data: vec![0; num_singers * num_frames],
        })
    }

    /// Builds a matrix from per-singer rows of 0/1 values.
    pub fn from_rows(
        singer_ids: Vec<String>,
        rows: &[Vec<u8>],
        frame_duration: f64,
    ) -> Result<Self> {
        if singer_ids.len() != rows.len() {
            return Err(Error::ShapeMismatch {
                detail: format!("{} ids for {} rows", singer_ids.len(), rows.len()),
            });
        }
        let num_frames = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_frames) {
            return Err(Error::ShapeMismatch {
                detail: "rows have unequal lengths".into(),
            });
        }
        let mut m = Self::zeros(singer_ids, num_frames, frame_duration)?;
        for (n, row) in rows.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::InvalidParameter(format!(
                        "label entry ({n},{t}) = {v}; entries must be 0 or 1"
                    )));
                }
                m.set(n, t, v == 1);
            }
        }
        Ok(m)
    }

    pub fn num_singers(&self) -> usize {
        self.num_singers
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_duration
    }

    pub fn singer_ids(&self) -> &[String] {
        &self.singer_ids
    }

    pub fn get(&self, singer: usize, frame: usize) -> bool {
        self.data[singer * self.num_frames + frame] == 1
    }

    pub fn set(&mut self, singer: usize, frame: usize, active: bool) {
        self.data[singer * self.num_frames + frame] = u8::from(active);
    }

    pub fn row(&self, singer: usize) -> &[u8] {
        let start = singer * self.num_frames;
        &self.data[start..start + self.num_frames]
    }

    /// Number of active singers at frame `t` (column sum).
    pub fn active_at(&self, frame: usize) -> usize {
        (0..self.num_singers)
            .filter(|&n| self.get(n, frame))
            .count()
    }

    /// Fraction of frames where at least one singer is active.
    pub fn active_fraction(&self) -> f64 {
        if self.num_frames == 0 {
            return 0.0;
        }
        let active = (0..self.num_frames)
            .filter(|&t| self.active_at(t) >= 1)
            .count();
        active as f64 / self.num_frames as f64
    }

    /// Returns a copy extended (or unchanged) to `num_frames` frames,
    /// padding new frames with silence.
    pub fn zero_padded(&self, num_frames: usize) -> Self {
        if num_frames <= self.num_frames {
            return self.clone();
        }
        let mut out = Self::zeros(self.singer_ids.clone(), num_frames, self.frame_duration)
            .expect("ids already validated");
        for n in 0..self.num_singers {
            for t in 0..self.num_frames {
                out.set(n, t, self.get(n, t));
            }
        }
        out
    }

    /// Returns a copy keeping only the first `num_frames` frames (no-op if
    /// the matrix is already short enough).
    pub fn truncated(&self, num_frames: usize) -> Self {
        if num_frames >= self.num_frames {
            return self.clone();
        }
        let mut out = Self::zeros(self.singer_ids.clone(), num_frames, self.frame_duration)
            .expect("ids already validated");
        for n in 0..self.num_singers {
            for t in 0..num_frames {
                out.set(n, t, self.get(n, t));
            }
        }
        out
    }

    /// Reorders rows; `order[i]` is the source row for output row `i`.
    pub fn permuted_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.num_singers {
            return Err(Error::ShapeMismatch {
                detail: "permutation length != number of singers".into(),
            });
        }
        let ids = order
            .iter()
            .map(|&i| self.singer_ids[i].clone())
            .collect::<Vec<_>>();
        let mut out = Self::zeros(ids, self.num_frames, self.frame_duration)?;
        for (dst, &src) in order.iter().enumerate() {
            for t in 0..self.num_frames {
                out.set(dst, t, self.get(src, t));
            }
        }
        Ok(out)
    }
}

/// One labeled interval: singer active on [onset, onset + duration).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub singer_id: String,
    pub onset: f64,
    pub duration: f64,
}

/// RTTM-style segment list for one recording. Per singer, segments are
/// non-overlapping and sorted after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentList {
    pub recording_id: String,
    pub segments: Vec<Segment>,
}

impl SegmentList {
    pub fn new(recording_id: impl Into<String>, segments: Vec<Segment>) -> Result<Self> {
        let mut list = Self {
            recording_id: recording_id.into(),
            segments,
        };
        list.normalize()?;
        Ok(list)
    }

    /// Sorts segments by (onset, singer) and merges overlapping or touching
    /// segments of the same singer. Rejects non-positive durations.
    pub fn normalize(&mut self) -> Result<()> {
        for seg in &self.segments {
            if !(seg.duration > 0.0) || seg.onset < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "segment ({}, {}, {}) must have onset >= 0 and duration > 0",
                    seg.singer_id, seg.onset, seg.duration
                )));
            }
        }
        let mut by_singer: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for seg in &self.segments {
            by_singer
                .entry(seg.singer_id.clone())
                .or_default()
                .push((seg.onset, seg.onset + seg.duration));
        }
        let mut merged = Vec::new();
        for (singer, mut spans) in by_singer {
            spans.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
            let mut current = spans[0];
            for &(start, end) in &spans[1..] {
                if start <= current.1 + 1e-9 {
                    current.1 = current.1.max(end);
                } else {
                    merged.push((singer.clone(), current));
                    current = (start, end);
                }
            }
            merged.push((singer, current));
        }
        merged.sort_by(|a, b| {
            (a.1 .0, &a.0)
                .partial_cmp(&(b.1 .0, &b.0))
                .expect("finite times")
        });
        self.segments = merged
            .into_iter()
            .map(|(singer_id, (start, end))| Segment {
                singer_id,
                onset: start,
                duration: end - start,
            })
            .collect();
        Ok(())
    }

    /// Distinct singer ids in order of first appearance.
    pub fn singer_ids(&self) -> Vec<String> {
        let mut ids = Vec::new();
        for seg in &self.segments {
            if !ids.contains(&seg.singer_id) {
                ids.push(seg.singer_id.clone());
            }
        }
        ids
    }

    /// End time of the last segment, or 0 for an empty list.
    pub fn max_end(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.onset + s.duration)
            .fold(0.0, f64::max)
    }
}

/// Rasterizes segments onto a frame grid. A singer is active in a frame
/// iff its segments cover at least 50% of the frame's time span. Segments
/// extending beyond the grid are truncated.
pub fn segments_to_frames(
    segs: &SegmentList,
    frame_duration: f64,
    num_frames: usize,
) -> Result<LabelMatrix> {
    if !(frame_duration > 0.0) {
        return Err(Error::InvalidParameter(
            "frame_duration must be positive".into(),
        ));
    }
    let singer_ids = segs.singer_ids();
    let index: BTreeMap<&str, usize> = singer_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    // Coverage accumulates per (singer, frame); per-singer segments are
    // non-overlapping after normalization so no span is counted twice.
    let mut coverage = vec![0.0f64; singer_ids.len() * num_frames];
    for seg in &segs.segments {
        let n = index[seg.singer_id.as_str()];
        let end = seg.onset + seg.duration;
        let first = (seg.onset / frame_duration).floor().max(0.0) as usize;
        let last = ((end / frame_duration).ceil() as usize).min(num_frames);
        for t in first..last {
            let f_start = t as f64 * frame_duration;
            let f_end = f_start + frame_duration;
            let overlap = end.min(f_end) - seg.onset.max(f_start);
            if overlap > 0.0 {
                coverage[n * num_frames + t] += overlap;
            }
        }
    }
    let mut m = LabelMatrix::zeros(singer_ids, num_frames, frame_duration)?;
    let threshold = 0.5 * frame_duration * (1.0 - 1e-9);
    for n in 0..m.num_singers() {
        for t in 0..num_frames {
            if coverage[n * num_frames + t] >= threshold {
                m.set(n, t, true);
            }
        }
    }
    Ok(m)
}

/// Converts maximal runs of consecutive active frames into segments.
pub fn frames_to_segments(labels: &LabelMatrix, recording_id: &str) -> SegmentList {
    let fd = labels.frame_duration();
    let mut segments = Vec::new();
    for n in 0..labels.num_singers() {
        let row = labels.row(n);
        let mut t = 0;
        while t < row.len() {
            if row[t] == 1 {
                let start = t;
                while t < row.len() && row[t] == 1 {
                    t += 1;
                }
                segments.push(Segment {
                    singer_id: labels.singer_ids()[n].clone(),
                    onset: start as f64 * fd,
                    duration: (t - start) as f64 * fd,
                });
            } else {
                t += 1;
            }
        }
    }
    SegmentList {
        recording_id: recording_id.to_string(),
        segments,
    }
}

/// Parses an RTTM file into per-recording segment lists. Only SPEAKER
/// lines are meaningful; anything else is a parse error with its line
/// number.
pub fn read_rttm(path: impl AsRef<Path>) -> Result<BTreeMap<String, SegmentList>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut by_recording: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let parse_err = |detail: String| Error::RttmParse {
            path: path.to_path_buf(),
            line: lineno,
            detail,
        };
        if fields.len() < 9 {
            return Err(parse_err(format!(
                "expected at least 9 fields, found {}",
                fields.len()
            )));
        }
        if fields[0] != "SPEAKER" {
            return Err(parse_err(format!(
                "unsupported record type {:?} (only SPEAKER is handled)",
                fields[0]
            )));
        }
        let onset: f64 = fields[3]
            .parse()
            .map_err(|_| parse_err(format!("bad onset {:?}", fields[3])))?;
        let duration: f64 = fields[4]
            .parse()
            .map_err(|_| parse_err(format!("bad duration {:?}", fields[4])))?;
        if !(duration > 0.0) || onset < 0.0 {
            return Err(parse_err(format!(
                "onset {onset} / duration {duration} out of range"
            )));
        }
        by_recording
            .entry(fields[1].to_string())
            .or_default()
            .push(Segment {
                singer_id: fields[7].to_string(),
                onset,
                duration,
            });
    }
    by_recording
        .into_iter()
        .map(|(rec, segments)| SegmentList::new(rec.clone(), segments).map(|l| (rec, l)))
        .collect()
}

fn format_rttm(lists: &[&SegmentList]) -> String {
    let mut out = String::new();
    for list in lists {
        for seg in &list.segments {
            writeln!(
                out,
                "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
                list.recording_id, seg.onset, seg.duration, seg.singer_id
            )
            .expect("string write");
        }
    }
    out
}

/// Writes segment lists as RTTM SPEAKER lines with 3-decimal times.
pub fn write_rttm(lists: &[&SegmentList], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(format_rttm(lists).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Percentage of active frames (column sum >= 1) where two or more
/// singers are simultaneously active. 0 for an all-silent matrix.
pub fn overlap_ratio(labels: &LabelMatrix) -> f64 {
    let mut active = 0usize;
    let mut overlapped = 0usize;
    for t in 0..labels.num_frames() {
        let count = labels.active_at(t);
        if count >= 1 {
            active += 1;
        }
        if count >= 2 {
            overlapped += 1;
        }
    }
    if active == 0 {
        0.0
    } else {
        100.0 * overlapped as f64 / active as f64
    }
}

/// Stacks two matrices along the singer dimension. The shorter matrix is
/// zero-padded to the longer frame count; colliding singer ids get a
/// numeric suffix.
pub fn concat_singers(a: &LabelMatrix, b: &LabelMatrix) -> Result<LabelMatrix> {
    if !frame_durations_match(a.frame_duration(), b.frame_duration()) {
        return Err(Error::FrameDurationMismatch {
            left: a.frame_duration(),
            right: b.frame_duration(),
        });
    }
    let num_frames = a.num_frames().max(b.num_frames());
    let mut ids: Vec<String> = a.singer_ids().to_vec();
    for id in b.singer_ids() {
        ids.push(disambiguate(&ids, id));
    }
    let mut out = LabelMatrix::zeros(ids, num_frames, a.frame_duration())?;
    for (n, src) in [a, b].into_iter().enumerate() {
        let offset = if n == 0 { 0 } else { a.num_singers() };
        for row in 0..src.num_singers() {
            for t in 0..src.num_frames() {
                out.set(offset + row, t, src.get(row, t));
            }
        }
    }
    Ok(out)
}

fn disambiguate(existing: &[String], id: &str) -> String {
    if !existing.iter().any(|e| e == id) {
        return id.to_string();
    }
    let mut k = 2;
    loop {
        let candidate = format!("{id}#{k}");
        if !existing.iter().any(|e| e == &candidate) {
            return candidate;
        }
        k += 1;
    }
}
