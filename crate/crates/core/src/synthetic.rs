//! Synthetic GOT-10k style fixtures: a colored rectangle drifting over a
//! textured background. Used by tests, examples and the oracle pipelines.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;

use crate::error::DatasetError;
use crate::geometry::BBox;
use crate::rng::derive_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub sequences: usize,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Largest per-frame displacement in pixels along each axis.
    pub max_speed: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            sequences: 5,
            frames: 30,
            width: 320,
            height: 240,
            seed: 0,
            max_speed: 4.0,
        }
    }
}

/// Ground-truth trajectory of one synthetic sequence.
pub fn trajectory(spec: &SyntheticSpec, index: usize) -> Vec<BBox> {
    let mut rng = derive_rng(spec.seed, &[index as u64]);
    let (fw, fh) = (spec.width as f64, spec.height as f64);
    let mut w = rng.random_range(0.12..0.25) * fw;
    let mut h = rng.random_range(0.12..0.25) * fh;
    let mut x = rng.random_range(0.0..fw - w);
    let mut y = rng.random_range(0.0..fh - h);
    let mut vx = rng.random_range(-spec.max_speed..=spec.max_speed);
    let mut vy = rng.random_range(-spec.max_speed..=spec.max_speed);
    let growth = rng.random_range(-0.004..0.004);
    let mut boxes = Vec::with_capacity(spec.frames);
    for _ in 0..spec.frames {
        boxes.push(BBox::new(x, y, x + w, y + h).expect("positive size"));
        w = (w * (1.0 + growth)).clamp(8.0, fw * 0.5);
        h = (h * (1.0 + growth)).clamp(8.0, fh * 0.5);
        x += vx;
        y += vy;
        if x < 0.0 || x + w > fw {
            vx = -vx;
            x = x.clamp(0.0, fw - w);
        }
        if y < 0.0 || y + h > fh {
            vy = -vy;
            y = y.clamp(0.0, fh - h);
        }
    }
    boxes
}

/// Renders a frame with the target drawn at `target`.
pub fn render_frame(spec: &SyntheticSpec, index: usize, target: &BBox) -> RgbImage {
    let tint = [(index * 53 % 255) as u8, (index * 97 % 255) as u8, 220];
    RgbImage::from_fn(spec.width, spec.height, |x, y| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        if fx >= target.x_min && fx < target.x_max && fy >= target.y_min && fy < target.y_max {
            Rgb(tint)
        } else {
            let v = ((x / 8 + y / 8) % 2) as u8 * 40 + 60;
            Rgb([v, v + (x % 16) as u8, v + (y % 16) as u8])
        }
    })
}

/// Writes `spec.sequences` sequences in GOT-10k layout under `root` and
/// returns their ground-truth trajectories.
pub fn write_dataset(root: impl AsRef<Path>, spec: &SyntheticSpec) -> Result<Vec<Vec<BBox>>, DatasetError> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| DatasetError::io(root, e))?;
    let mut list = String::new();
    let mut all = Vec::with_capacity(spec.sequences);
    for s in 0..spec.sequences {
        let name = sequence_name(s);
        let dir: PathBuf = root.join(&name);
        fs::create_dir_all(&dir).map_err(|e| DatasetError::io(&dir, e))?;
        let boxes = trajectory(spec, s);
        let mut gt = String::new();
        for (f, b) in boxes.iter().enumerate() {
            let path = dir.join(format!("{:08}.png", f + 1));
            render_frame(spec, s, b)
                .save(&path)
                .map_err(|source| DatasetError::Image { path, source })?;
            let [x, y, w, h] = b.to_xywh();
            gt.push_str(&format!("{x:.4},{y:.4},{w:.4},{h:.4}\n"));
        }
        let gt_path = dir.join("groundtruth.txt");
        fs::write(&gt_path, gt).map_err(|e| DatasetError::io(&gt_path, e))?;
        list.push_str(&name);
        list.push('\n');
        all.push(boxes);
    }
    let list_path = root.join("list.txt");
    fs::write(&list_path, list).map_err(|e| DatasetError::io(&list_path, e))?;
    Ok(all)
}

pub fn sequence_name(index: usize) -> String {
    format!("synthetic_{:04}", index + 1)
}
