use std::path::{Path, PathBuf};

use crate::dataio::{
    augment, load_manifest, load_snippet, normalize_frame, resize_bilinear, synth_generate, Frame,
    Manifest, Snippet,
};
use crate::error::{Error, Result};
use crate::net::{NetBatch, Scalar, Tensor};
use crate::pipeline::config::RunConfig;
use crate::swtf::{swtf_preprocess, FusionConfig, FusionMode, SamplingMode};

/// The snippets of one split, held in memory.
#[derive(Debug, Clone)]
pub struct Split {
    pub names: Vec<String>,
    pub snippets: Vec<Snippet>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub classes: Vec<String>,
}

impl Dataset {
    /// Opens `config.dataset_root`, generating the synthetic dataset from
    /// `config.synth` first when `generate_missing` is set and no manifest
    /// exists.
    pub fn open(config: &RunConfig, generate_missing: bool) -> Result<Self> {
        let root = &config.dataset_root;
        if generate_missing && !root.join("manifest.json").exists() {
            log::info!(
                "no manifest under {}, generating synthetic data",
                root.display()
            );
            synth_generate(&config.synth, config.seed, root)?;
        }
        let manifest = load_manifest(root)?;
        let first = manifest
            .train
            .first()
            .or(manifest.test.first())
            .ok_or_else(|| Error::Dataset(format!("{} lists no snippets", root.display())))?;
        let classes = load_snippet(&root.join(first))?.classes;
        Ok(Self {
            root: root.clone(),
            manifest,
            classes,
        })
    }

    pub fn load_split(&self, name: &str) -> Result<Split> {
        let names = self.manifest.split(name)?.to_vec();
        let snippets = Manifest::resolve(&self.root, &names)
            .iter()
            .map(|p| self.load_checked(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Split { names, snippets })
    }

    fn load_checked(&self, path: &Path) -> Result<Snippet> {
        let s = load_snippet(path)?;
        if s.classes != self.classes {
            return Err(Error::Dataset(format!(
                "{} uses classes {:?}, dataset uses {:?}",
                path.display(),
                s.classes,
                self.classes
            )));
        }
        Ok(s)
    }
}

/// λ = 1 blending leaves every frame unchanged, so flow estimation can be
/// skipped without changing a single value.
pub fn is_identity_fusion(config: &FusionConfig) -> bool {
    config.mode == FusionMode::Blended && config.blend_lambda == 1.0
}

/// Snippet after augmentation, resizing, normalization and fusion.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub frames: Vec<Frame>,
    pub boxes: Vec<Vec<crate::dataio::BoundingBox>>,
}

pub enum Stage {
    /// Augmentation (if configured) and random segment sampling.
    Train,
    /// Center sampling, no augmentation.
    Eval,
}

pub fn prepare(snippet: &Snippet, config: &RunConfig, stage: Stage, seed: u64) -> Result<Prepared> {
    if snippet.len() != config.t {
        return Err(Error::Dataset(format!(
            "snippet has {} frames, config expects T = {}",
            snippet.len(),
            config.t
        )));
    }
    let augmented;
    let snippet = match (&stage, &config.augment) {
        (Stage::Train, Some(aug)) => {
            augmented = augment(snippet, aug, crate::util::derive_seed(seed, &[0]))?;
            &augmented
        }
        _ => snippet,
    };
    let (h, w) = config.resolved_resize()?;
    let frames: Vec<Frame> = snippet
        .frames
        .iter()
        .map(|raw| resize_bilinear(&normalize_frame(raw), h, w).0)
        .collect();
    let frames = if is_identity_fusion(&config.fusion) {
        frames
    } else {
        let mode = match stage {
            Stage::Train => SamplingMode::Random,
            Stage::Eval => SamplingMode::Center,
        };
        swtf_preprocess(
            &frames,
            &snippet.boxes,
            &config.fusion,
            mode,
            crate::util::derive_seed(seed, &[1]),
        )?
        .frames
    };
    Ok(Prepared {
        frames,
        boxes: snippet.boxes.clone(),
    })
}

/// Stacks prepared snippets snippet-major into one network batch.
pub fn assemble<T: Scalar>(prepared: &[Prepared]) -> Result<NetBatch<T>> {
    let first = prepared
        .first()
        .and_then(|p| p.frames.first())
        .ok_or_else(|| Error::Shape("empty batch".into()))?;
    let (c, h, w) = first.shape();
    let t = prepared[0].frames.len();
    let mut data = Vec::with_capacity(prepared.len() * t * c * h * w);
    for p in prepared {
        if p.frames.len() != t {
            return Err(Error::Shape(
                "snippets of different lengths in one batch".into(),
            ));
        }
        for f in &p.frames {
            if f.shape() != (c, h, w) {
                return Err(Error::Shape(format!(
                    "frame {:?} in a batch of {:?}",
                    f.shape(),
                    (c, h, w)
                )));
            }
            data.extend(f.data.iter().map(|&v| T::of(v)));
        }
    }
    Ok(NetBatch {
        images: Tensor::from_vec(&[prepared.len() * t, c, h, w], data),
        frames: t,
        boxes: prepared.iter().map(|p| p.boxes.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SynthSpec;

    fn small_config(root: &Path) -> RunConfig {
        RunConfig {
            dataset_root: root.to_path_buf(),
            synth: SynthSpec {
                snippets_per_class: 2,
                height: 32,
                width: 32,
                ..SynthSpec::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn open_generates_missing_synthetic_data() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        assert!(Dataset::open(&config, false).is_err());
        let ds = Dataset::open(&config, true).unwrap();
        assert_eq!(ds.classes, ["right", "left", "down", "up"]);
        let train = ds.load_split("train").unwrap();
        assert_eq!(
            train.snippets.len() + ds.load_split("test").unwrap().snippets.len(),
            8
        );
    }

    #[test]
    fn identity_fusion_passes_frames_through() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path());
        config.fusion.blend_lambda = 1.0;
        let ds = Dataset::open(&config, true).unwrap();
        let s = &ds.load_split("train").unwrap().snippets[0];
        let p = prepare(s, &config, Stage::Eval, 0).unwrap();
        assert_eq!(p.frames[3], normalize_frame(&s.frames[3]));
        let mut full = config.clone();
        full.fusion.blend_lambda = 0.999_999;
        let q = prepare(s, &full, Stage::Eval, 0).unwrap();
        assert_ne!(q.frames[3], p.frames[3]);
    }

    #[test]
    fn assemble_stacks_snippet_major() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let ds = Dataset::open(&config, true).unwrap();
        let split = ds.load_split("train").unwrap();
        let a = prepare(&split.snippets[0], &config, Stage::Eval, 0).unwrap();
        let b = prepare(&split.snippets[1], &config, Stage::Eval, 0).unwrap();
        let batch = assemble::<f64>(&[a.clone(), b]).unwrap();
        assert_eq!(batch.images.shape(), &[30, 3, 32, 32]);
        assert_eq!(
            &batch.images.data()[..a.frames[0].data.len()],
            a.frames[0].data.as_slice()
        );
    }

    #[test]
    fn wrong_length_is_a_dataset_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path());
        let ds = Dataset::open(&config, true).unwrap();
        config.t = 10;
        let s = &ds.load_split("train").unwrap().snippets[0];
        assert!(matches!(
            prepare(s, &config, Stage::Eval, 0),
            Err(Error::Dataset(_))
        ));
    }
}
