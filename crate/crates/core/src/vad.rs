//! Energy-based voice activity detection and label post-filtering.

use serde::{Deserialize, Serialize};

use crate::audio::{frame_energies, AudioClip, FrameGrid};
use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

/// Parameters for energy VAD and instrumental-clip rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    /// Activity threshold in dB relative to the clip's mean frame energy.
    pub threshold_db: f64,
    /// Frame length in samples.
    pub frame_len: usize,
    /// Median filter width in frames (odd).
    pub median_width: usize,
    /// Clips whose raw VAD is active on less than this fraction of frames
    /// are treated as instrumental.
    pub min_active_fraction: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            threshold_db: 10.0,
            frame_len: 800,
            median_width: 11,
            min_active_fraction: 0.05,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.median_width == 0 || self.median_width % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "median_width must be odd and >= 1, got {}",
                self.median_width
            )));
        }
        if self.frame_len == 0 {
            return Err(Error::InvalidParameter("frame_len must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_active_fraction) {
            return Err(Error::InvalidParameter(format!(
                "min_active_fraction must be in [0, 1], got {}",
                self.min_active_fraction
            )));
        }
        Ok(())
    }
}

/// Raw VAD labels for one clip, plus the silent-clip flag that feeds
/// instrumental rejection.
#[derive(Debug, Clone, PartialEq)]
pub struct VadOutcome {
    /// Single-singer label matrix (N = 1), one frame per full frame of the clip.
    pub labels: LabelMatrix,
    /// True when the framed region carried no energy at all.
    pub silent: bool,
}

impl VadOutcome {
    /// Fraction of frames labeled active.
    pub fn active_fraction(&self) -> f64 {
        self.labels.active_fraction()
    }
}

/// Labels each frame active iff its relative energy strictly exceeds the
/// threshold. A silent clip is not an error here: it yields all-zero
/// labels with `silent` set, so the caller can reject it as instrumental.
pub fn energy_vad(clip: &AudioClip, cfg: &VadConfig) -> Result<VadOutcome> {
    cfg.validate()?;
    let grid = FrameGrid::from_clip(clip, cfg.frame_len)?;
    let frame_duration = grid.frame_duration(clip.sample_rate);
    let (active, silent) = match frame_energies(clip, cfg.frame_len) {
        Ok(energies) => (
            energies
                .iter()
                .map(|&e| u8::from(e > cfg.threshold_db))
                .collect::<Vec<_>>(),
            false,
        ),
        Err(Error::SilentClip { .. }) => (vec![0u8; grid.num_frames], true),
        Err(e) => return Err(e),
    };
    let labels = LabelMatrix::from_rows(vec![clip.id.clone()], &[active], frame_duration)?;
    Ok(VadOutcome { labels, silent })
}

/// Majority filter over a centered window per singer row. Windows are
/// clipped at the row ends; a tie in a clipped even-sized window keeps the
/// frame's original value.
pub fn median_filter(labels: &LabelMatrix, width: usize) -> Result<LabelMatrix> {
    if width == 0 || width % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "median filter width must be odd and >= 1, got {width}"
        )));
    }
    let half = width / 2;
    let t_total = labels.num_frames();
    let mut out = labels.clone();
    for n in 0..labels.num_singers() {
        let row = labels.row(n);
        for t in 0..t_total {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(t_total.saturating_sub(1));
            let ones: usize = row[lo..=hi].iter().map(|&v| v as usize).sum();
            let zeros = (hi - lo + 1) - ones;
            let value = match ones.cmp(&zeros) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => row[t] == 1,
            };
            out.set(n, t, value);
        }
    }
    Ok(out)
}

/// Diagnostics from [`is_instrumental`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstrumentalCheck {
    pub instrumental: bool,
    pub active_fraction: f64,
    pub silent: bool,
}

/// A clip counts as instrumental when its raw VAD activity covers less
/// than `min_active_fraction` of frames, or the clip is silent outright.
pub fn is_instrumental(clip: &AudioClip, cfg: &VadConfig) -> Result<InstrumentalCheck> {
    let outcome = energy_vad(clip, cfg)?;
    let active_fraction = outcome.active_fraction();
    Ok(InstrumentalCheck {
        instrumental: outcome.silent || active_fraction < cfg.min_active_fraction,
        active_fraction,
        silent: outcome.silent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, 8000, "t")
    }

    fn row1(values: &[u8]) -> LabelMatrix {
        LabelMatrix::from_rows(vec!["s".into()], &[values.to_vec()], 0.1).unwrap()
    }

    #[test]
    fn constant_clip_yields_no_activity() {
        let c = clip(vec![0.5; 8000]);
        let out = energy_vad(&c, &VadConfig::default()).unwrap();
        assert!(!out.silent);
        assert_eq!(out.labels.num_singers(), 1);
        assert!(out.labels.row(0).iter().all(|&v| v == 0));
    }

    #[test]
    fn one_loud_frame_among_quiet_is_the_only_active() {
        // 99 quiet frames at ~1e-8 of the loud energy, 1 loud frame:
        // loud e_t ~ 10*log10(100) = 20 dB > 10 dB.
        let cfg = VadConfig::default();
        let mut samples = vec![1e-4; 100 * cfg.frame_len];
        for s in samples.iter_mut().take(cfg.frame_len) {
            *s = 1.0;
        }
        let out = energy_vad(&clip(samples), &cfg).unwrap();
        let row = out.labels.row(0);
        assert_eq!(row[0], 1);
        assert!(row[1..].iter().all(|&v| v == 0));
    }

    #[test]
    fn exact_threshold_is_inactive() {
        // 16 frames; one frame of energy 100 (100 unit samples), fifteen of
        // energy 4. Mean frame energy is 160/16 = 10 exactly, so the loud
        // frame sits at exactly 10*log10(10) = 10.0 dB and the strict
        // comparison must leave it inactive.
        let cfg = VadConfig::default();
        let mut samples = vec![0.0; 16 * cfg.frame_len];
        for s in samples.iter_mut().take(100) {
            *s = 1.0;
        }
        for frame in 1..16 {
            for k in 0..4 {
                samples[frame * cfg.frame_len + k] = 1.0;
            }
        }
        let c = clip(samples);
        let energies = crate::audio::frame_energies(&c, cfg.frame_len).unwrap();
        assert_eq!(energies[0], 10.0);
        let out = energy_vad(&c, &cfg).unwrap();
        assert!(out.labels.row(0).iter().all(|&v| v == 0));
    }

    #[test]
    fn silent_clip_flags_instrumental_not_error() {
        let out = energy_vad(&clip(vec![0.0; 4000]), &VadConfig::default()).unwrap();
        assert!(out.silent);
        assert!(out.labels.row(0).iter().all(|&v| v == 0));
    }

    #[test]
    fn vad_gain_invariance_exact() {
        // 5% duty cycle: the loud frames sit near 10*log10(20) ~ 13 dB, so
        // the default 10 dB threshold produces a nontrivial label row.
        let samples: Vec<f64> = (0..80_000)
            .map(|i| {
                if (i / 800) % 20 == 0 {
                    ((i * 31) % 211) as f64 / 211.0 - 0.5
                } else {
                    1e-5
                }
            })
            .collect();
        let cfg = VadConfig::default();
        let base = energy_vad(&clip(samples.clone()), &cfg).unwrap();
        assert!(base.labels.row(0).iter().any(|&v| v == 1));
        assert!(base.labels.row(0).iter().any(|&v| v == 0));
        for c in [1e-3, 1e3] {
            let scaled = clip(samples.iter().map(|s| s * c).collect());
            let out = energy_vad(&scaled, &cfg).unwrap();
            assert_eq!(out.labels.row(0), base.labels.row(0));
        }
    }

    #[test]
    fn median_filter_removes_isolated_spike() {
        let m = row1(&[0, 0, 1, 0, 0]);
        let f = median_filter(&m, 3).unwrap();
        assert_eq!(f.row(0), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn median_filter_fills_gap() {
        let m = row1(&[1, 1, 0, 1, 1]);
        let f = median_filter(&m, 3).unwrap();
        assert_eq!(f.row(0), &[1, 1, 1, 1, 1]);
    }

    #[test]
    fn median_filter_keeps_constant_rows() {
        for v in [0u8, 1] {
            let m = row1(&[v; 9]);
            for width in [1, 3, 5, 11] {
                assert_eq!(median_filter(&m, width).unwrap().row(0), m.row(0));
            }
        }
    }

    #[test]
    fn median_filter_rejects_even_width() {
        let m = row1(&[0, 1, 0]);
        assert!(median_filter(&m, 4).is_err());
        assert!(median_filter(&m, 0).is_err());
    }

    fn run_count(row: &[u8]) -> usize {
        let mut runs = 0;
        let mut prev = None;
        for &v in row {
            if Some(v) != prev {
                runs += 1;
                prev = Some(v);
            }
        }
        runs
    }

    fn min_run(row: &[u8]) -> usize {
        let mut best = usize::MAX;
        let mut t = 0;
        while t < row.len() {
            let start = t;
            while t < row.len() && row[t] == row[start] {
                t += 1;
            }
            best = best.min(t - start);
        }
        if best == usize::MAX {
            0
        } else {
            best
        }
    }

    /// Exhaustive check over all binary rows up to T = 12: one filter pass
    /// never increases the run count, and rows whose filtered form has no
    /// run shorter than (width+1)/2 are fixed points of a second pass.
    #[test]
    fn median_filter_exhaustive_run_and_root_properties() {
        for t_len in 1..=12usize {
            for bits in 0u32..(1 << t_len) {
                let row: Vec<u8> = (0..t_len).map(|i| ((bits >> i) & 1) as u8).collect();
                let m = row1(&row);
                for width in [3usize, 5] {
                    let f1 = median_filter(&m, width).unwrap();
                    assert!(
                        run_count(f1.row(0)) <= run_count(&row),
                        "runs increased: {row:?} -> {:?} (width {width})",
                        f1.row(0)
                    );
                    if min_run(f1.row(0)) >= (width + 1) / 2 {
                        let f2 = median_filter(&f1, width).unwrap();
                        assert_eq!(
                            f2.row(0),
                            f1.row(0),
                            "root row not a fixed point: {row:?} (width {width})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn instrumental_rejection_by_fraction() {
        let cfg = VadConfig::default();
        // 2% duty cycle: 2 loud frames of 100, e_t ~ 10*log10(50) = 17 dB.
        let mut quiet = vec![1e-6; 100 * cfg.frame_len];
        for s in quiet.iter_mut().take(2 * cfg.frame_len) {
            *s = 0.8;
        }
        let check = is_instrumental(&clip(quiet), &cfg).unwrap();
        assert!(check.instrumental);
        assert!((check.active_fraction - 0.02).abs() < 1e-12);

        // A relative threshold above 0 dB caps the reachable active
        // fraction (at 10 dB no more than 10% of frames can exceed ten
        // times the mean), so the 50%-active case needs a lower threshold.
        let cfg_half = VadConfig {
            threshold_db: 0.0,
            ..VadConfig::default()
        };
        let mut half = vec![1e-6; 100 * cfg.frame_len];
        for s in half.iter_mut().take(50 * cfg.frame_len) {
            *s = 0.8;
        }
        let check = is_instrumental(&clip(half), &cfg_half).unwrap();
        assert!(!check.instrumental);
        assert!((check.active_fraction - 0.5).abs() < 1e-12);

        let check = is_instrumental(&clip(vec![0.0; 8000]), &cfg).unwrap();
        assert!(check.instrumental);
        assert!(check.silent);
    }
}
