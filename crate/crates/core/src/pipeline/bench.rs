use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::dataio::{normalize_frame, synth_snippet, Frame, SynthSpec};
use crate::error::{Error, Result};
use crate::pipeline::config::RunConfig;
use crate::swtf::{swtf_preprocess_with, CountingSolver, FlowSolver, HornSchunck, SamplingMode};
use crate::util::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub width: usize,
    pub height: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub sparse_flow_solves: usize,
    pub dense_flow_solves: usize,
    pub sparse_flow_ms: f64,
    pub dense_flow_ms: f64,
    /// Whole fusion front end (sampling, flows, map, application).
    pub preprocess_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from(
            "resolution\tT\tK\tsparse_solves\tdense_solves\tsparse_ms\tdense_ms\tpreprocess_ms\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}x{}\t{}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}",
                r.width,
                r.height,
                r.t,
                r.k,
                r.sparse_flow_solves,
                r.dense_flow_solves,
                r.sparse_flow_ms,
                r.dense_flow_ms,
                r.preprocess_ms
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Parses `WxH[,WxH...]`, e.g. `64x64,128x96`.
pub fn parse_resolutions(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|item| {
            let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|&v| v > 0);
            match item.split_once('x') {
                Some((w, h)) => match (parse(w), parse(h)) {
                    (Some(w), Some(h)) => Ok((w, h)),
                    _ => Err(Error::Config(format!("bad resolution {item:?}"))),
                },
                None => Err(Error::Config(format!("resolution {item:?} is not WxH"))),
            }
        })
        .collect()
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Counts and times flow solves for the sparse `K`-sample strategy against
/// `T − 1` consecutive-frame solves, one synthetic snippet per resolution.
pub fn bench(config: &RunConfig, resolutions: &[(usize, usize)]) -> Result<BenchReport> {
    config.fusion.validate()?;
    let solver = HornSchunck {
        params: config.fusion.flow,
    };
    let mut rows = Vec::with_capacity(resolutions.len());
    for &(width, height) in resolutions {
        let spec = SynthSpec {
            t: config.t,
            height,
            width,
            sprite_size: (width.min(height) as f64 / 5.0).max(1.0),
            speed: (width.min(height) as f64 * 0.6 / config.t as f64).min(1.0),
            ..SynthSpec::default()
        };
        spec.validate()?;
        let snippet = synth_snippet(&spec, config.seed, 0, 0);
        let frames: Vec<Frame> = snippet.frames.iter().map(normalize_frame).collect();
        let seed = derive_seed(config.seed, &[30]);

        let sparse = CountingSolver::new(&solver);
        let start = Instant::now();
        swtf_preprocess_with(
            &frames,
            &snippet.boxes,
            &config.fusion,
            SamplingMode::Random,
            seed,
            &sparse,
        )?;
        let preprocess_ms = millis(start);

        let timed = CountingSolver::new(&solver);
        let start = Instant::now();
        let plan = crate::swtf::plan_segments(frames.len(), config.fusion.k)?;
        let indices = crate::swtf::sample_indices(&plan, SamplingMode::Random, seed);
        for (a, b) in indices.pairs() {
            timed.estimate(&frames[a], &frames[b])?;
        }
        let sparse_flow_ms = millis(start);

        let dense = CountingSolver::new(&solver);
        let start = Instant::now();
        for pair in frames.windows(2) {
            dense.estimate(&pair[0], &pair[1])?;
        }
        let dense_flow_ms = millis(start);

        rows.push(BenchRow {
            width,
            height,
            t: config.t,
            k: config.fusion.k,
            sparse_flow_solves: sparse.calls(),
            dense_flow_solves: dense.calls(),
            sparse_flow_ms,
            dense_flow_ms,
            preprocess_ms,
        });
    }
    Ok(BenchReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_at_default_t_and_k() {
        let report = bench(&RunConfig::default(), &[(32, 32), (48, 40)]).unwrap();
        assert_eq!(report.rows.len(), 2);
        for r in &report.rows {
            assert_eq!((r.sparse_flow_solves, r.dense_flow_solves), (2, 14));
        }
        assert_eq!(report.to_text().lines().count(), 3);
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["rows"][1]["dense_flow_solves"], 14);
    }

    #[test]
    fn sparse_count_ignores_t() {
        for t in [6, 15, 30] {
            let config = RunConfig {
                t,
                ..RunConfig::default()
            };
            let r = &bench(&config, &[(32, 32)]).unwrap().rows[0];
            assert_eq!((r.sparse_flow_solves, r.dense_flow_solves), (2, t - 1));
        }
    }

    #[test]
    fn resolution_parsing() {
        assert_eq!(
            parse_resolutions("64x64,128x96").unwrap(),
            vec![(64, 64), (128, 96)]
        );
        assert!(parse_resolutions("64").is_err());
        assert!(parse_resolutions("0x4").is_err());
    }
}
