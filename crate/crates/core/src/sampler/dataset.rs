use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::jpeg::JpegEncoder;
use image::RgbImage;
use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_record, load_got10k, pair_geometry, render_crop, sample_pair, SampleConfig,
    SequenceAnnotation, TrainingRecord,
};
use crate::error::DatasetError;
use crate::rewards::ResponseMode;
use crate::rng::derive_rng;

const JPEG_QUALITY: u8 = 95;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetOptions {
    /// Also write `sft.jsonl` with chat-formatted exchanges.
    pub sft: bool,
    /// Skip writing crop images (records only).
    pub skip_images: bool,
}

/// Summary written to `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub requested: usize,
    pub written: usize,
    pub skipped: usize,
    pub sequences: usize,
    pub seed: u64,
    pub mode: ResponseMode,
    pub records: String,
    pub sft: Option<String>,
    pub config: SampleConfig,
}

fn load_rgb(path: &Path) -> Result<RgbImage, DatasetError> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|source| DatasetError::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn save_jpeg(img: &RgbImage, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut w = BufWriter::new(file);
    JpegEncoder::new_with_quality(&mut w, JPEG_QUALITY)
        .encode_image(img)
        .map_err(|source| DatasetError::Image {
            path: path.to_path_buf(),
            source,
        })?;
    w.flush().map_err(|e| DatasetError::io(path, e))
}

fn make_record(
    index: usize,
    seqs: &[&SequenceAnnotation],
    cfg: &SampleConfig,
    out: &Path,
    opts: &DatasetOptions,
) -> Result<Option<TrainingRecord>, DatasetError> {
    let mut rng = derive_rng(cfg.seed, &[index as u64]);
    let seq = seqs[rng.random_range(0..seqs.len())];
    for _ in 0..=cfg.max_retries {
        let pair = sample_pair(seq, cfg, &mut rng)?;
        let geo = match pair_geometry(seq, &pair, cfg) {
            Ok(g) => g,
            Err(DatasetError::DegenerateTarget) => continue,
            Err(e) => return Err(e),
        };
        let template_rel = format!("images/{index:06}_template.jpg");
        let search_rel = format!("images/{index:06}_search.jpg");
        if !opts.skip_images {
            let template_frame = load_rgb(&seq.frames[pair.template_frame])?;
            let search_frame = if pair.search_frame == pair.template_frame {
                template_frame.clone()
            } else {
                load_rgb(&seq.frames[pair.search_frame])?
            };
            save_jpeg(&render_crop(&template_frame, &geo.template_transform), &out.join(&template_rel))?;
            save_jpeg(&render_crop(&search_frame, &geo.search_transform), &out.join(&search_rel))?;
        }
        return build_record(seq, &pair, cfg, template_rel, search_rel).map(Some);
    }
    warn!(
        "record {index}: target left the crop after {} retries in {}, skipping",
        cfg.max_retries, seq.name
    );
    Ok(None)
}

fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        w.write_all(b"\n").map_err(|e| DatasetError::io(path, e))?;
    }
    w.flush().map_err(|e| DatasetError::io(path, e))
}

/// Samples `n` template/search records from the sequences under `root`.
///
/// Writes `records.jsonl`, crop images under `images/`, `manifest.json` and,
/// optionally, `sft.jsonl` into `out`. Sequences are drawn uniformly with
/// replacement. Each record uses its own RNG stream keyed by `(seed, index)`,
/// so output does not depend on the number of worker threads.
pub fn generate_dataset(
    root: impl AsRef<Path>,
    n: usize,
    cfg: &SampleConfig,
    out: impl AsRef<Path>,
    opts: &DatasetOptions,
) -> Result<Manifest, DatasetError> {
    cfg.validate()?;
    let out = out.as_ref();
    let all = load_got10k(root.as_ref())?;
    let seqs: Vec<&SequenceAnnotation> = all
        .iter()
        .filter(|s| {
            let ok = s.usable_frames().len() >= 2;
            if !ok {
                warn!("sequence {} has fewer than 2 usable frames, excluded", s.name);
            }
            ok
        })
        .collect();
    let images_dir: PathBuf = out.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| DatasetError::io(&images_dir, e))?;
    if n > 0 && seqs.is_empty() {
        return Err(DatasetError::NotEnoughFrames {
            seq: root.as_ref().display().to_string(),
            usable: 0,
        });
    }

    let records: Vec<TrainingRecord> = (0..n)
        .into_par_iter()
        .map(|i| make_record(i, &seqs, cfg, out, opts))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    write_lines(&out.join("records.jsonl"), records.iter())?;
    let sft = if opts.sft {
        write_lines(&out.join("sft.jsonl"), records.iter().map(TrainingRecord::to_sft))?;
        Some("sft.jsonl".to_string())
    } else {
        None
    };
    let manifest = Manifest {
        requested: n,
        written: records.len(),
        skipped: n - records.len(),
        sequences: seqs.len(),
        seed: cfg.seed,
        mode: cfg.mode,
        records: "records.jsonl".into(),
        sft,
        config: cfg.clone(),
    };
    let manifest_path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|source| DatasetError::Json {
        path: manifest_path.clone(),
        source,
    })?;
    fs::write(&manifest_path, text + "\n").map_err(|e| DatasetError::io(&manifest_path, e))?;
    info!("wrote {} records to {}", records.len(), out.display());
    Ok(manifest)
}

/// Reads a `records.jsonl` file.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TrainingRecord>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
