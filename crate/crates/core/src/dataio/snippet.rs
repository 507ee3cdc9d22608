use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{ppm, RawFrame};
use crate::error::{Error, Result};

/// Axis-aligned subject box in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub track_id: u32,
    pub label: usize,
}

impl BoundingBox {
    pub fn is_valid(&self) -> bool {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        in_unit(self.x1)
            && in_unit(self.x2)
            && in_unit(self.y1)
            && in_unit(self.y2)
            && self.x1 < self.x2
            && self.y1 < self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }
}

/// `T` ordered frames with their per-frame subject boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    pub frames: Vec<RawFrame>,
    /// `boxes[t]` holds the subjects visible in frame `t`.
    pub boxes: Vec<Vec<BoundingBox>>,
    pub classes: Vec<String>,
}

impl Snippet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.frames[0].height, self.frames[0].width)
    }

    /// Track ids present anywhere in the snippet, ascending.
    pub fn track_ids(&self) -> Vec<u32> {
        self.boxes
            .iter()
            .flatten()
            .map(|b| b.track_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Label of a track, taken from its first appearance.
    pub fn track_label(&self, track_id: u32) -> Option<usize> {
        self.boxes
            .iter()
            .flatten()
            .find(|b| b.track_id == track_id)
            .map(|b| b.label)
    }

    pub fn labels(&self) -> BTreeSet<usize> {
        self.boxes.iter().flatten().map(|b| b.label).collect()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.frames.len() < 2 {
            return Err(format!(
                "snippet needs at least 2 frames, has {}",
                self.frames.len()
            ));
        }
        if self.boxes.len() != self.frames.len() {
            return Err("one box list per frame required".into());
        }
        let (w, h) = (self.frames[0].width, self.frames[0].height);
        if w < 8 || h < 8 {
            return Err(format!("frames must be at least 8x8, got {w}x{h}"));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if (f.width, f.height) != (w, h) {
                return Err(format!(
                    "frame {} is {}x{}, expected {w}x{h}",
                    t + 1,
                    f.width,
                    f.height
                ));
            }
        }
        for (t, boxes) in self.boxes.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for b in boxes {
                if !b.is_valid() {
                    return Err(format!("box coordinates outside image in frame {}", t + 1));
                }
                if !seen.insert(b.track_id) {
                    return Err(format!("duplicate track {} in frame {}", b.track_id, t + 1));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationsFile {
    #[serde(rename = "T")]
    t: usize,
    classes: Vec<String>,
    frames: Vec<FrameRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    index: usize,
    boxes: Vec<BoundingBox>,
}

pub(crate) fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.ppm")
}

/// Reads `frame_00001.ppm …` and `annotations.json` from a snippet directory.
///
/// Pixels are returned raw; normalization is a separate step.
pub fn load_snippet(dir: &Path) -> Result<Snippet> {
    let bad = |msg: String| Error::Snippet {
        path: dir.to_path_buf(),
        msg,
    };
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indices = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(num) = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix(".ppm"))
        {
            let idx: usize = num
                .parse()
                .map_err(|_| bad(format!("unparseable frame file name {name}")))?;
            indices.push(idx);
        }
    }
    indices.sort_unstable();
    if indices.is_empty() {
        return Err(bad("no frame files".into()));
    }
    for (expected, &idx) in (1..).zip(&indices) {
        if idx != expected {
            return Err(bad(format!(
                "gap in frame numbering: expected frame {expected}, found {idx}"
            )));
        }
    }
    let frames = indices
        .iter()
        .map(|&i| ppm::read_ppm(&dir.join(frame_file_name(i))))
        .collect::<Result<Vec<_>>>()?;

    let ann_path = dir.join("annotations.json");
    let text = std::fs::read_to_string(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
    let ann: AnnotationsFile =
        serde_json::from_str(&text).map_err(|e| Error::json(&ann_path, e))?;
    if ann.t != frames.len() {
        return Err(bad(format!(
            "annotations declare T={} but {} frames exist",
            ann.t,
            frames.len()
        )));
    }
    let mut boxes = vec![Vec::new(); frames.len()];
    for rec in ann.frames {
        if rec.index == 0 || rec.index > frames.len() {
            return Err(Error::AnnotationOutOfRange {
                index: rec.index,
                frames: frames.len(),
            });
        }
        for b in rec.boxes {
            if b.label >= ann.classes.len() {
                return Err(bad(format!("label {} outside class list", b.label)));
            }
            boxes[rec.index - 1].push(b);
        }
    }
    for frame_boxes in &mut boxes {
        frame_boxes.sort_by_key(|b| b.track_id);
    }
    let snippet = Snippet {
        frames,
        boxes,
        classes: ann.classes,
    };
    snippet.validate().map_err(bad)?;
    Ok(snippet)
}

/// Writes a snippet in the layout [`load_snippet`] reads.
pub fn save_snippet(snippet: &Snippet, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in snippet.frames.iter().enumerate() {
        ppm::write_ppm(&dir.join(frame_file_name(i + 1)), frame)?;
    }
    let ann = AnnotationsFile {
        t: snippet.len(),
        classes: snippet.classes.clone(),
        frames: snippet
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| FrameRecord {
                index: i + 1,
                boxes: b.clone(),
            })
            .collect(),
    };
    let path = dir.join("annotations.json");
    let text = serde_json::to_string_pretty(&ann).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// `manifest.json`: snippet directories relative to the dataset root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Manifest {
    pub fn split(&self, name: &str) -> Result<&[String]> {
        match name {
            "train" => Ok(&self.train),
            "test" => Ok(&self.test),
            other => Err(Error::Dataset(format!("unknown split {other:?}"))),
        }
    }

    pub fn resolve(root: &Path, entries: &[String]) -> Vec<PathBuf> {
        entries.iter().map(|e| root.join(e)).collect()
    }
}

pub fn load_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

pub fn save_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    let path = root.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_snippet(frames: usize) -> Snippet {
        let frame = RawFrame {
            width: 8,
            height: 8,
            pixels: (0..192).map(|i| i as u8).collect(),
        };
        let b = BoundingBox {
            x1: 0.25,
            y1: 0.25,
            x2: 0.5,
            y2: 0.75,
            track_id: 3,
            label: 1,
        };
        Snippet {
            frames: vec![frame; frames],
            boxes: vec![vec![b]; frames],
            classes: vec!["a".into(), "b".into()],
        }
    }

    fn write_annotations(dir: &Path, json: &str) {
        std::fs::write(dir.join("annotations.json"), json).unwrap();
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let snippet = tiny_snippet(4);
        save_snippet(&snippet, dir.path()).unwrap();
        assert_eq!(load_snippet(dir.path()).unwrap(), snippet);
    }

    #[test]
    fn annotation_past_last_frame_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_snippet(&tiny_snippet(15), dir.path()).unwrap();
        write_annotations(
            dir.path(),
            r#"{"T": 15, "classes": ["a"], "frames": [{"index": 16, "boxes": []}]}"#,
        );
        let err = load_snippet(dir.path()).unwrap_err();
        assert!(err.to_string().contains("annotation out of range"), "{err}");
    }

    #[test]
    fn gap_in_numbering_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_snippet(&tiny_snippet(4), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("frame_00002.ppm")).unwrap();
        let err = load_snippet(dir.path()).unwrap_err();
        assert!(err.to_string().contains("gap"), "{err}");
    }

    #[test]
    fn outside_and_duplicate_boxes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_snippet(&tiny_snippet(2), dir.path()).unwrap();
        write_annotations(
            dir.path(),
            r#"{"T": 2, "classes": ["a"], "frames": [{"index": 1, "boxes": [
                {"track_id": 0, "x1": 0.5, "y1": 0.1, "x2": 1.2, "y2": 0.3, "label": 0}]}]}"#,
        );
        assert!(load_snippet(dir.path())
            .unwrap_err()
            .to_string()
            .contains("outside image"));
        write_annotations(
            dir.path(),
            r#"{"T": 2, "classes": ["a"], "frames": [
                {"index": 1, "boxes": [{"track_id": 0, "x1": 0.1, "y1": 0.1, "x2": 0.2, "y2": 0.3, "label": 0}]},
                {"index": 1, "boxes": [{"track_id": 0, "x1": 0.3, "y1": 0.1, "x2": 0.4, "y2": 0.3, "label": 0}]}]}"#,
        );
        assert!(load_snippet(dir.path())
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
    }

    #[test]
    fn malformed_frame_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_snippet(&tiny_snippet(2), dir.path()).unwrap();
        std::fs::write(dir.path().join("frame_00002.ppm"), b"P6\n8 8\n1023\n").unwrap();
        assert!(matches!(load_snippet(dir.path()), Err(Error::Ppm(_))));
    }

    #[test]
    fn track_helpers() {
        let mut s = tiny_snippet(3);
        let extra = BoundingBox {
            track_id: 1,
            label: 0,
            ..s.boxes[0][0]
        };
        s.boxes[2].push(extra);
        assert_eq!(s.track_ids(), vec![1, 3]);
        assert_eq!(s.track_label(1), Some(0));
        assert_eq!(s.labels().into_iter().collect::<Vec<_>>(), vec![0, 1]);
    }
}
