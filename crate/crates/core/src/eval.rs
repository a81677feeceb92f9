//! GOT-10k style scoring and submission files.
//!
//! Frame 1 carries the initialization box and is never scored; absent frames
//! are skipped too. A frame succeeds at threshold `t` when IoU is strictly
//! greater than `t`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use crate::error::EvalError;
use crate::geometry::{iou, BBox};
use crate::sampler::{parse_xywh_line, SequenceAnnotation};

/// Number of points on the success curve (thresholds 0.00, 0.01, ..., 1.00).
pub const CURVE_POINTS: usize = 101;

/// Name of the archive written next to the per-sequence directories.
pub const SUBMISSION_ZIP: &str = "submission.zip";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub name: String,
    pub predictions: Vec<BBox>,
    pub ground_truth: Vec<BBox>,
    pub absent: Vec<bool>,
    /// Seconds per frame, if timing was recorded.
    pub latencies: Option<Vec<f64>>,
}

impl SequenceResult {
    /// Perfect track: predictions equal the ground truth.
    pub fn oracle(seq: &SequenceAnnotation) -> Self {
        Self {
            name: seq.name.clone(),
            predictions: seq.boxes.clone(),
            ground_truth: seq.boxes.clone(),
            absent: seq.absent.clone(),
            latencies: None,
        }
    }

    fn check(&self) -> Result<(), EvalError> {
        let n = self.predictions.len();
        if self.ground_truth.len() != n || self.absent.len() != n {
            return Err(EvalError::LengthMismatch {
                seq: self.name.clone(),
                predictions: n,
                ground_truth: self.ground_truth.len(),
                absent: self.absent.len(),
            });
        }
        if let Some(l) = &self.latencies {
            if l.len() != n {
                return Err(EvalError::LatencyMismatch {
                    seq: self.name.clone(),
                    frames: n,
                    latencies: l.len(),
                });
            }
        }
        Ok(())
    }

    /// Indices of scored frames.
    pub fn counted_frames(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.predictions.len()).filter(|&i| !self.absent[i])
    }

    /// IoU per scored frame.
    pub fn overlaps(&self) -> Vec<f64> {
        self.counted_frames()
            .map(|i| iou(&self.predictions[i], &self.ground_truth[i]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub name: String,
    pub mean_iou: f64,
    pub sr_050: f64,
    pub sr_075: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ao: f64,
    pub sr_050: f64,
    pub sr_075: f64,
    /// Success rate at thresholds `i / 100`.
    pub curve: Vec<f64>,
    /// Scored frames per second of latency, when every sequence is timed.
    pub fps: Option<f64>,
    pub per_sequence: Vec<SequenceScore>,
}

/// Fraction of `overlaps` strictly above `threshold`.
pub fn success_rate(overlaps: &[f64], threshold: f64) -> f64 {
    if overlaps.is_empty() {
        return 0.0;
    }
    overlaps.iter().filter(|&&o| o > threshold).count() as f64 / overlaps.len() as f64
}

pub fn threshold(i: usize) -> f64 {
    i as f64 / (CURVE_POINTS - 1) as f64
}

struct Scored {
    score: SequenceScore,
    curve: Vec<f64>,
    timing: Option<f64>,
}

fn score_sequence(r: &SequenceResult) -> Scored {
    let overlaps = r.overlaps();
    let n = overlaps.len();
    let mean_iou = if n == 0 { 0.0 } else { overlaps.iter().sum::<f64>() / n as f64 };
    let curve = (0..CURVE_POINTS).map(|i| success_rate(&overlaps, threshold(i))).collect();
    let timing = r
        .latencies
        .as_ref()
        .map(|l| r.counted_frames().map(|i| l[i]).sum::<f64>());
    Scored {
        score: SequenceScore {
            name: r.name.clone(),
            mean_iou,
            sr_050: success_rate(&overlaps, 0.5),
            sr_075: success_rate(&overlaps, 0.75),
            frames: n,
        },
        curve,
        timing,
    }
}

/// Scores every sequence and averages over sequences (not over pooled frames).
///
/// Sequences with no scored frame are reported but left out of the averages.
pub fn evaluate(results: &[SequenceResult]) -> Result<EvalReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    for r in results {
        r.check()?;
    }
    let mut order: Vec<&SequenceResult> = results.iter().collect();
    order.sort_by(|a, b| a.name.cmp(&b.name));
    let scored: Vec<Scored> = order.par_iter().map(|r| score_sequence(r)).collect();

    let counted: Vec<&Scored> = scored.iter().filter(|s| s.score.frames > 0).collect();
    let k = counted.len().max(1) as f64;
    let mean = |f: &dyn Fn(&Scored) -> f64| counted.iter().map(|s| f(s)).sum::<f64>() / k;
    let curve = (0..CURVE_POINTS).map(|i| mean(&|s| s.curve[i])).collect();

    let frames: usize = scored.iter().map(|s| s.score.frames).sum();
    let fps = scored
        .iter()
        .map(|s| s.timing)
        .sum::<Option<f64>>()
        .filter(|&t| t > 0.0)
        .map(|t| frames as f64 / t);

    Ok(EvalReport {
        ao: mean(&|s| s.score.mean_iou),
        sr_050: mean(&|s| s.score.sr_050),
        sr_075: mean(&|s| s.score.sr_075),
        curve,
        fps,
        per_sequence: scored.into_iter().map(|s| s.score).collect(),
    })
}

/// Predictions read back from a submission tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrack {
    pub name: String,
    pub boxes: Vec<BBox>,
    pub latencies: Option<Vec<f64>>,
}

/// Pairs predictions with ground truth by sequence name.
pub fn join_ground_truth(
    predictions: &[PredictedTrack],
    ground_truth: &[SequenceAnnotation],
) -> Result<Vec<SequenceResult>, EvalError> {
    let by_name: BTreeMap<&str, &SequenceAnnotation> =
        ground_truth.iter().map(|s| (s.name.as_str(), s)).collect();
    predictions
        .iter()
        .map(|p| {
            let gt = by_name
                .get(p.name.as_str())
                .ok_or_else(|| EvalError::UnknownSequence(p.name.clone()))?;
            Ok(SequenceResult {
                name: p.name.clone(),
                predictions: p.boxes.clone(),
                ground_truth: gt.boxes.clone(),
                absent: gt.absent.clone(),
                latencies: p.latencies.clone(),
            })
        })
        .collect()
}

pub fn format_box_line(b: &BBox) -> String {
    let [x, y, w, h] = b.to_xywh();
    format!("{x:.4},{y:.4},{w:.4},{h:.4}")
}

fn box_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name).join(format!("{name}_001.txt"))
}

fn time_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name).join(format!("{name}_time.txt"))
}

fn write_file(path: &Path, text: &str) -> Result<(), EvalError> {
    fs::write(path, text).map_err(|e| EvalError::io(path, e))
}

/// Writes `<name>/<name>_001.txt` and `<name>/<name>_time.txt` per sequence,
/// then zips the tree into `out/submission.zip`. Returns the archive path.
pub fn write_submission(tracks: &[PredictedTrack], out: impl AsRef<Path>) -> Result<PathBuf, EvalError> {
    let out = out.as_ref();
    let mut files: Vec<(String, String)> = Vec::new();
    for t in tracks {
        let dir = out.join(&t.name);
        fs::create_dir_all(&dir).map_err(|e| EvalError::io(&dir, e))?;
        let mut boxes = String::new();
        for b in &t.boxes {
            boxes.push_str(&format_box_line(b));
            boxes.push('\n');
        }
        write_file(&box_file(out, &t.name), &boxes)?;
        files.push((format!("{0}/{0}_001.txt", t.name), boxes));
        if let Some(lat) = &t.latencies {
            let times: String = lat.iter().map(|s| format!("{s:.6}\n")).collect();
            write_file(&time_file(out, &t.name), &times)?;
            files.push((format!("{0}/{0}_time.txt", t.name), times));
        }
    }
    files.sort();

    let zip_path = out.join(SUBMISSION_ZIP);
    let file = File::create(&zip_path).map_err(|e| EvalError::io(&zip_path, e))?;
    let mut zip = ZipWriter::new(file);
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default());
    let zerr = |e: zip::result::ZipError| EvalError::Zip(e.to_string());
    for (name, body) in &files {
        zip.start_file(name.as_str(), options).map_err(zerr)?;
        zip.write_all(body.as_bytes()).map_err(|e| EvalError::io(&zip_path, e))?;
    }
    zip.finish().map_err(zerr)?;
    Ok(zip_path)
}

fn read_lines<T>(
    path: &Path,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse(l).map_err(|message| EvalError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

/// Reads every `<name>/<name>_001.txt` under `dir`, sorted by name. A missing
/// time file leaves the latencies unset.
pub fn read_predictions(dir: impl AsRef<Path>) -> Result<Vec<PredictedTrack>, EvalError> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| EvalError::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| EvalError::io(dir, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if box_file(dir, &name).is_file() {
            names.push(name);
        }
    }
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let boxes = read_lines(&box_file(dir, &name), parse_xywh_line)?;
            let times = time_file(dir, &name);
            let latencies = if times.is_file() {
                Some(read_lines(&times, |l| {
                    l.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("`{}` is not a number", l.trim()))
                })?)
            } else {
                None
            };
            Ok(PredictedTrack { name, boxes, latencies })
        })
        .collect()
}
