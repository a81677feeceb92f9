//! GOT-10k directory layout.
//!
//! ```text
//! root/
//!   list.txt              one sequence directory name per line
//!   GOT-10k_Train_000001/
//!     00000001.jpg ...    zero-padded 8-digit frame images
//!     groundtruth.txt     x,y,w,h per frame
//!     absence.label       optional, 0/1 per frame
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::DatasetError;
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceAnnotation {
    pub name: String,
    pub frames: Vec<PathBuf>,
    /// Ground truth per frame, converted from `x,y,w,h` to corners.
    pub boxes: Vec<BBox>,
    pub absent: Vec<bool>,
}

impl SequenceAnnotation {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Indices of frames whose target is visible with positive area.
    pub fn usable_frames(&self) -> Vec<usize> {
        (0..self.boxes.len().min(self.frames.len()))
            .filter(|&i| !self.absent[i] && !self.boxes[i].is_degenerate())
            .collect()
    }

    pub fn xywh(&self, frame: usize) -> [f64; 4] {
        self.boxes[frame].to_xywh()
    }
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::Missing(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))
}

/// Parses one `x,y,w,h` line (commas, tabs or spaces).
pub fn parse_xywh_line(line: &str) -> Result<BBox, String> {
    let parts: Vec<&str> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if parts.len() != 4 {
        return Err(format!("expected 4 values, found {}", parts.len()));
    }
    let mut v = [0.0; 4];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .parse::<f64>()
            .map_err(|_| format!("`{p}` is not a number"))?;
    }
    if v[2] < 0.0 || v[3] < 0.0 {
        return Err(format!("negative size {}x{}", v[2], v[3]));
    }
    BBox::from_xywh(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

fn read_groundtruth(path: &Path) -> Result<Vec<BBox>, DatasetError> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_xywh_line(l).map_err(|message| DatasetError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

fn read_absence(path: &Path) -> Result<Option<Vec<bool>>, DatasetError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 0 or 1, found `{other}`"),
            }),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn is_frame_file(path: &Path) -> bool {
    let stem_ok = path
        .file_stem()
        .and_then(|s| s.to_str())
        .is_some_and(|s| s.len() == 8 && s.bytes().all(|b| b.is_ascii_digit()));
    let ext_ok = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"));
    stem_ok && ext_ok
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let entries = fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| DatasetError::io(dir, e))?.path();
        if is_frame_file(&path) {
            frames.push(path);
        }
    }
    frames.sort();
    Ok(frames)
}

fn read_sequence_names(root: &Path) -> Result<Vec<String>, DatasetError> {
    let text = read_text(&root.join("list.txt"))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn load_sequence(root: &Path, name: &str, strict: bool) -> Result<SequenceAnnotation, DatasetError> {
    let dir = root.join(name);
    if !dir.is_dir() {
        return Err(DatasetError::Missing(dir));
    }
    let frames = list_frames(&dir)?;
    let boxes = read_groundtruth(&dir.join("groundtruth.txt"))?;
    let mismatch = || DatasetError::CountMismatch {
        seq: name.to_string(),
        frames: frames.len(),
        annotations: boxes.len(),
    };
    if strict && boxes.len() != frames.len() {
        return Err(mismatch());
    }
    if !strict && (boxes.is_empty() || boxes.len() > frames.len()) {
        return Err(mismatch());
    }
    let mut absent = match read_absence(&dir.join("absence.label"))? {
        Some(a) if a.len() != boxes.len() => {
            return Err(DatasetError::CountMismatch {
                seq: name.to_string(),
                frames: boxes.len(),
                annotations: a.len(),
            })
        }
        Some(a) => a,
        None => vec![false; boxes.len()],
    };
    for (i, b) in boxes.iter().enumerate() {
        if !absent[i] && b.is_degenerate() {
            warn!("{name}: frame {} has an empty box, treating it as absent", i + 1);
            absent[i] = true;
        }
    }
    Ok(SequenceAnnotation {
        name: name.to_string(),
        frames,
        boxes,
        absent,
    })
}

/// Loads every sequence named in `root/list.txt`; frame and annotation counts must agree.
pub fn load_got10k(root: impl AsRef<Path>) -> Result<Vec<SequenceAnnotation>, DatasetError> {
    let root = root.as_ref();
    read_sequence_names(root)?
        .iter()
        .map(|name| load_sequence(root, name, true))
        .collect()
}

/// Like [`load_got10k`] but accepts test-split sequences annotated only on
/// their first frames (at least one line).
pub fn load_got10k_for_tracking(
    root: impl AsRef<Path>,
) -> Result<Vec<SequenceAnnotation>, DatasetError> {
    let root = root.as_ref();
    read_sequence_names(root)?
        .iter()
        .map(|name| load_sequence(root, name, false))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_seq(root: &Path, name: &str, frames: usize, gt: &str, absence: Option<&str>) {
        let dir = root.join(name);
        fs::create_dir_all(&dir).unwrap();
        for i in 1..=frames {
            fs::write(dir.join(format!("{i:08}.jpg")), b"").unwrap();
        }
        fs::write(dir.join("groundtruth.txt"), gt).unwrap();
        if let Some(a) = absence {
            fs::write(dir.join("absence.label"), a).unwrap();
        }
    }

    #[test]
    fn loads_fixture() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        fs::write(root.join("list.txt"), "a\nb\n").unwrap();
        write_seq(root, "a", 3, "100.0,150.0,40.0,50.0\n1,1,2,2\n3,3,4,4\n", None);
        write_seq(root, "b", 3, "1,1,2,2\n1,1,2,2\n1,1,2,2\n", Some("0\n1\n0\n"));
        fs::write(root.join("a").join("notes.txt"), "x").unwrap();
        let seqs = load_got10k(root).unwrap();
        assert_eq!(seqs.len(), 2);
        assert!(seqs.iter().all(|s| s.len() == 3));
        assert_eq!(seqs[0].xywh(0), [100.0, 150.0, 40.0, 50.0]);
        assert_eq!(seqs[1].absent, vec![false, true, false]);
        assert_eq!(seqs[1].usable_frames(), vec![0, 2]);
    }

    #[test]
    fn missing_files_name_the_path() {
        let tmp = tempfile::tempdir().unwrap();
        let err = load_got10k(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("list.txt"));

        fs::write(tmp.path().join("list.txt"), "a\n").unwrap();
        fs::create_dir_all(tmp.path().join("a")).unwrap();
        let err = load_got10k(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("groundtruth.txt"), "{err}");
    }

    #[test]
    fn count_mismatch_and_malformed() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        fs::write(root.join("list.txt"), "a\n").unwrap();
        write_seq(root, "a", 3, "1,1,2,2\n", None);
        assert!(matches!(load_got10k(root), Err(DatasetError::CountMismatch { .. })));
        assert_eq!(load_got10k_for_tracking(root).unwrap()[0].boxes.len(), 1);

        write_seq(root, "a", 3, "1,1,2,2\n1,1,x,2\n1,1,2,2\n", None);
        match load_got10k(root) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn xywh_parsing() {
        assert_eq!(
            parse_xywh_line("100.0,150.0,40.0,50.0").unwrap(),
            BBox::new(100.0, 150.0, 140.0, 200.0).unwrap()
        );
        assert!(parse_xywh_line("1\t2\t3\t4").is_ok());
        assert!(parse_xywh_line("1,2,3").is_err());
        assert!(parse_xywh_line("1,2,-3,4").is_err());
    }
}
