use std::path::{Path, PathBuf};

use crate::dataio::{
    denormalize_frame, load_snippet, normalize_frame, resize_bilinear, write_ppm, Frame, RawFrame,
};
use crate::error::{Error, Result};
use crate::pipeline::config::RunConfig;
use crate::swtf::{swtf_preprocess, SampledIndices, SamplingMode};
use crate::util::derive_seed;

pub const MAP_FILE: &str = "xF.ppm";

const FUSE_STREAM: u64 = 20;

#[derive(Debug, Clone)]
pub struct FuseDump {
    pub map: PathBuf,
    pub frames: Vec<PathBuf>,
    pub indices: SampledIndices,
}

pub fn fused_file_name(index: usize) -> String {
    format!("fused_{index:05}.ppm")
}

/// Map values in `[0, 1]` scaled by 255 and rounded.
pub fn map_to_raw(map: &Frame) -> RawFrame {
    let mut raw = RawFrame::new(map.width, map.height);
    for y in 0..map.height {
        for x in 0..map.width {
            let px = |c: usize| {
                (map.at(c.min(map.channels - 1), y, x) * 255.0)
                    .round()
                    .clamp(0.0, 255.0) as u8
            };
            raw.set_pixel(x, y, [px(0), px(1), px(2)]);
        }
    }
    raw
}

/// Writes the fusion map and every fused frame of one snippet. Segment
/// sampling is random but seeded from `config.seed`.
pub fn fuse_dump(config: &RunConfig, snippet_dir: &Path, out_dir: &Path) -> Result<FuseDump> {
    config.fusion.validate()?;
    let snippet = load_snippet(snippet_dir)?;
    let (h, w) = config.resolved_resize()?;
    let frames: Vec<Frame> = snippet
        .frames
        .iter()
        .map(|raw| resize_bilinear(&normalize_frame(raw), h, w).0)
        .collect();
    let fused = swtf_preprocess(
        &frames,
        &snippet.boxes,
        &config.fusion,
        SamplingMode::Random,
        derive_seed(config.seed, &[FUSE_STREAM]),
    )?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let map = out_dir.join(MAP_FILE);
    write_ppm(&map, &map_to_raw(fused.map.frame()))?;
    let mut paths = Vec::with_capacity(fused.frames.len());
    for (i, f) in fused.frames.iter().enumerate() {
        let p = out_dir.join(fused_file_name(i));
        write_ppm(&p, &denormalize_frame(f))?;
        paths.push(p);
    }
    Ok(FuseDump {
        map,
        frames: paths,
        indices: fused.indices,
    })
}
