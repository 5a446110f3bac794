//! Tool-level configuration: one TOML file covering every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::SimConfig;
use crate::vad::VadConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub input_dir: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// Whole-pipeline configuration with defaults matching the standard
/// 8 kHz / 30 s / 10 dB / ±5 dB / 11-frame operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolConfig {
    pub sample_rate: u32,
    pub segment_seconds: f64,
    pub vad: VadConfig,
    pub sim: SimConfig,
    pub paths: PathsConfig,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            segment_seconds: 30.0,
            vad: VadConfig::default(),
            sim: SimConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl ToolConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ToolConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !(self.segment_seconds > 0.0) {
            return Err(Error::Config("segment_seconds must be positive".into()));
        }
        self.vad.validate()?;
        self.sim.validate()?;
        Ok(())
    }

    /// Frame duration implied by the VAD frame length at the configured
    /// sample rate.
    pub fn frame_duration(&self) -> f64 {
        self.vad.frame_len as f64 / self.sample_rate as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The defaults are the published operating point: 8 kHz audio, 30 s
    /// segments, 10 dB VAD threshold, 100 ms frames, 11-frame median
    /// filter, 2-mix with SNR in [-5, +5] dB.
    #[test]
    fn defaults_match_reference_operating_point() {
        let cfg = ToolConfig::default();
        assert_eq!(cfg.sample_rate, 8000);
        assert_eq!(cfg.segment_seconds, 30.0);
        assert_eq!(cfg.vad.threshold_db, 10.0);
        assert_eq!(cfg.vad.frame_len, 800);
        assert_eq!(cfg.frame_duration(), 0.1);
        assert_eq!(cfg.vad.median_width, 11);
        assert_eq!(cfg.sim.singers_per_mix, 2);
        assert_eq!(cfg.sim.snr_low_db, -5.0);
        assert_eq!(cfg.sim.snr_high_db, 5.0);
        assert_eq!(cfg.sim.mixture_seconds, 30.0);
        assert_eq!(cfg.sim.peak_norm, 0.9);
    }

    #[test]
    fn partial_toml_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(
            &path,
            "segment_seconds = 10.0\n[vad]\nthreshold_db = 3.0\n[sim]\nseed = 99\n",
        )
        .unwrap();
        let cfg = ToolConfig::load(&path).unwrap();
        assert_eq!(cfg.segment_seconds, 10.0);
        assert_eq!(cfg.vad.threshold_db, 3.0);
        assert_eq!(cfg.vad.median_width, 11);
        assert_eq!(cfg.sim.seed, 99);
        assert_eq!(cfg.sample_rate, 8000);
    }

    #[test]
    fn invalid_config_is_rejected_with_detail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[vad]\nmedian_width = 4\n").unwrap();
        match ToolConfig::load(&path) {
            Err(Error::InvalidParameter(msg)) => assert!(msg.contains("median_width")),
            other => panic!("expected config rejection, got {other:?}"),
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ToolConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: ToolConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
