use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{load_synth_spec, AugmentConfig, SynthSpec};
use crate::error::{Error, Result};
use crate::net::NetConfig;
use crate::optim::{AdamConfig, LrSchedule};
use crate::swtf::FusionConfig;

/// Resize target used for non-synthetic data when `resize` is unset.
pub const DEFAULT_RESIZE: [usize; 2] = [420, 720];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

/// Every knob of a run. All fields have defaults, so `{}` trains on a
/// synthetic dataset generated under `dataset_root` if none is there yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    /// Spec used when `dataset_root` holds no manifest yet.
    pub synth: SynthSpec,
    #[serde(rename = "T")]
    pub t: usize,
    pub batch_size: usize,
    pub epochs: u32,
    /// `[height, width]`. Unset: the native size of a synthetic root,
    /// otherwise 420×720.
    pub resize: Option<[usize; 2]>,
    pub seed: u64,
    pub deterministic: bool,
    pub mode: RunMode,
    pub dtype: Dtype,
    pub output_dir: PathBuf,
    /// Evaluate the test split after every epoch and keep `best.ckpt`.
    pub eval_each_epoch: bool,
    /// Training stops once test accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    /// `null` disables augmentation.
    pub augment: Option<AugmentConfig>,
    pub fusion: FusionConfig,
    pub net: NetConfig,
    pub optimizer: AdamConfig,
    pub schedule: LrSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("data/synth"),
            synth: SynthSpec::default(),
            t: 15,
            batch_size: 2,
            epochs: 80,
            resize: None,
            seed: 0,
            deterministic: true,
            mode: RunMode::Train,
            dtype: Dtype::F32,
            output_dir: PathBuf::from("runs/default"),
            eval_each_epoch: true,
            target_accuracy: None,
            augment: Some(AugmentConfig::default()),
            fusion: FusionConfig::default(),
            net: NetConfig::default(),
            optimizer: AdamConfig::default(),
            schedule: LrSchedule::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.t < self.fusion.k {
            return Err(Error::Config(format!(
                "T = {} is smaller than K = {}",
                self.t, self.fusion.k
            )));
        }
        if let Some([h, w]) = self.resize {
            if h < 8 || w < 8 {
                return Err(Error::Config(format!("resize target {h}x{w} is below 8x8")));
            }
        }
        if let Some(a) = self.target_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!(
                    "target_accuracy must lie in [0, 1], got {a}"
                )));
            }
        }
        self.fusion.validate()?;
        self.net.validate()?;
        self.optimizer.validate()?;
        self.schedule.validate()
    }

    /// `(height, width)` frames are resized to before the fusion front end.
    pub fn resolved_resize(&self) -> Result<(usize, usize)> {
        if let Some([h, w]) = self.resize {
            return Ok((h, w));
        }
        Ok(match load_synth_spec(&self.dataset_root)? {
            Some(spec) => (spec.height, spec.width),
            None => (DEFAULT_RESIZE[0], DEFAULT_RESIZE[1]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.t, c.batch_size, c.epochs, c.fusion.k), (15, 2, 80, 3));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"epoch": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"net": {"units": 3}}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig {
            resize: Some([64, 64]),
            augment: None,
            seed: 42,
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn resize_defaults_follow_the_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig {
            dataset_root: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        assert_eq!(c.resolved_resize().unwrap(), (420, 720));
        let spec = SynthSpec {
            snippets_per_class: 1,
            height: 40,
            width: 48,
            ..SynthSpec::default()
        };
        crate::dataio::synth_generate(&spec, 0, dir.path()).unwrap();
        assert_eq!(c.resolved_resize().unwrap(), (40, 48));
        c.resize = Some([32, 32]);
        assert_eq!(c.resolved_resize().unwrap(), (32, 32));
    }

    #[test]
    fn invalid_combinations() {
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.batch_size = 0));
        assert!(bad(|c| c.t = 2));
        assert!(bad(|c| c.net.keep_p = 0.0));
        assert!(bad(|c| c.schedule.period = 0));
    }
}
