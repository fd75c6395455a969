//! Ground-truth, prediction and index files.
//!
//! Label files hold one box per line, `class_id x_min y_min x_max y_max`,
//! with a trailing confidence on prediction files. The index is a TSV of
//! `image_id  app  gt_path  [pred_path]`; relative paths resolve against the
//! index's directory. `#` starts a comment everywhere.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scene::{BBox, Detection, ObjectClass};

use super::metrics::EvalRecord;

#[derive(Debug, Error)]
pub enum EvalFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn read(path: &Path) -> Result<String, EvalFileError> {
    std::fs::read_to_string(path).map_err(|source| EvalFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelFile {
    pub ground_truth: Vec<(ObjectClass, BBox)>,
    pub predictions: Vec<Detection>,
}

/// Parses a label file. Lines with five fields are ground truth, six are
/// predictions; mixing both in one file is rejected.
pub fn parse_labels(text: &str, origin: &Path) -> Result<LabelFile, EvalFileError> {
    let mut out = LabelFile::default();
    for (line, l) in content_lines(text) {
        let err = |message: String| EvalFileError::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 5 && f.len() != 6 {
            return Err(err(format!("expected 5 or 6 fields, found {}", f.len())));
        }
        let class = f[0]
            .parse::<u32>()
            .map_err(|_| err(format!("class_id: not an unsigned integer: {:?}", f[0])))
            .and_then(|id| ObjectClass::from_id(id).map_err(|e| err(e.to_string())))?;
        let mut c = [0.0f64; 4];
        for (i, v) in c.iter_mut().enumerate() {
            *v = f[i + 1]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(format!("coordinate {:?} is not a number", f[i + 1])))?;
        }
        let bbox = BBox::new(c[0], c[1], c[2], c[3]);
        if f.len() == 6 {
            let confidence = f[5]
                .parse::<f32>()
                .ok()
                .filter(|x| (0.0..=1.0).contains(x))
                .ok_or_else(|| err(format!("conf {:?} is not in [0, 1]", f[5])))?;
            out.predictions.push(Detection {
                class,
                bbox,
                confidence,
            });
        } else {
            out.ground_truth.push((class, bbox));
        }
        if !out.predictions.is_empty() && !out.ground_truth.is_empty() {
            return Err(err("ground truth and prediction lines in one file".into()));
        }
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<LabelFile, EvalFileError> {
    parse_labels(&read(path)?, path)
}

fn txt_files(dir: &Path) -> Result<Vec<PathBuf>, EvalFileError> {
    let io = |source| EvalFileError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut v = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if p.extension().and_then(|e| e.to_str()) == Some("txt") {
            v.push(p);
        }
    }
    v.sort();
    Ok(v)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Pairs `<id>.txt` files across the two directories. An image missing on
/// either side contributes an empty list for that side.
pub fn load_dirs(gt_dir: &Path, pred_dir: &Path) -> Result<Vec<EvalRecord>, EvalFileError> {
    let mut ids: Vec<String> = txt_files(gt_dir)?
        .iter()
        .chain(txt_files(pred_dir)?.iter())
        .map(|p| stem(p))
        .collect();
    ids.sort();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let file = format!("{id}.txt");
            let gt = gt_dir.join(&file);
            let pred = pred_dir.join(&file);
            let ground_truth = if gt.exists() {
                load_labels(&gt)?.ground_truth
            } else {
                log::warn!("no ground truth for {id}; scoring against an empty image");
                Vec::new()
            };
            let predictions = if pred.exists() {
                load_labels(&pred)?.predictions
            } else {
                Vec::new()
            };
            Ok(EvalRecord {
                image_id: id,
                ground_truth,
                predictions,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub image_id: String,
    pub app: String,
    pub gt: PathBuf,
    pub pred: Option<PathBuf>,
}

pub fn parse_index(text: &str, base: &Path, origin: &Path) -> Result<Vec<IndexEntry>, EvalFileError> {
    let mut out = Vec::new();
    for (line, l) in content_lines(text) {
        let f: Vec<&str> = l.split('\t').map(str::trim).collect();
        if f.len() != 3 && f.len() != 4 {
            return Err(EvalFileError::Parse {
                path: origin.to_path_buf(),
                line,
                message: format!("expected 3 or 4 tab-separated fields, found {}", f.len()),
            });
        }
        out.push(IndexEntry {
            image_id: f[0].to_string(),
            app: f[1].to_string(),
            gt: base.join(f[2]),
            pred: f.get(3).filter(|p| !p.is_empty()).map(|p| base.join(p)),
        });
    }
    Ok(out)
}

pub fn load_index(path: &Path) -> Result<Vec<IndexEntry>, EvalFileError> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_index(&read(path)?, base, path)
}

/// Loads every indexed image's labels.
pub fn load_indexed(entries: &[IndexEntry]) -> Result<Vec<EvalRecord>, EvalFileError> {
    entries
        .iter()
        .map(|e| {
            Ok(EvalRecord {
                image_id: e.image_id.clone(),
                ground_truth: load_labels(&e.gt)?.ground_truth,
                predictions: match &e.pred {
                    Some(p) => load_labels(p)?.predictions,
                    None => Vec::new(),
                },
            })
        })
        .collect()
}
