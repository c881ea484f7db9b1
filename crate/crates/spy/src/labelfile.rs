//! Plain-text label and detection files, one object per line.
//!
//! Ground-truth label lines are `class_id cx cy w h`; detection lines carry
//! a confidence after the class: `class_id confidence cx cy w h`. All
//! geometry is normalized center/size, written with six decimals. A file's
//! stem (name without extension) ties it to its image.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::domain::NormalizedBox;
use crate::error::{Error, Result};

/// A detection as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub nbox: NormalizedBox,
    pub confidence: f64,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_fields(path: &Path, lineno: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != expected {
        return Err(parse_err(
            path,
            lineno,
            format!("expected {expected} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| parse_err(path, lineno, format!("bad number `{f}`")))
        })
        .collect()
}

fn class_id_of(path: &Path, lineno: usize, v: f64) -> Result<u32> {
    if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
        return Err(parse_err(path, lineno, format!("bad class id `{v}`")));
    }
    Ok(v as u32)
}

pub fn read_labels(path: &Path) -> Result<Vec<NormalizedBox>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let f = parse_fields(path, lineno, line, 5)?;
        let class_id = class_id_of(path, lineno, f[0])?;
        let nbox = NormalizedBox::new(class_id, f[1], f[2], f[3], f[4])
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        out.push(nbox);
    }
    Ok(out)
}

pub fn write_labels(path: &Path, boxes: &[NormalizedBox]) -> Result<()> {
    let mut text = String::new();
    for b in boxes {
        text.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            b.class_id, b.cx, b.cy, b.w, b.h
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let f = parse_fields(path, lineno, line, 6)?;
        let class_id = class_id_of(path, lineno, f[0])?;
        let confidence = f[1];
        if !(0.0..=1.0).contains(&confidence) {
            return Err(parse_err(
                path,
                lineno,
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        let nbox = NormalizedBox::new(class_id, f[2], f[3], f[4], f[5])
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        out.push(DetectionRecord { nbox, confidence });
    }
    Ok(out)
}

pub fn write_detections(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
            r.nbox.class_id, r.confidence, r.nbox.cx, r.nbox.cy, r.nbox.w, r.nbox.h
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Sorted stems of every `*.ext` file directly in `dir`.
pub fn stems_with_extension(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

/// Pairs `a_dir/*.a_ext` with `b_dir/*.b_ext` by stem. Any stem present on
/// one side only is an error naming the offenders.
pub fn pair_stems(
    a_dir: &Path,
    a_ext: &str,
    b_dir: &Path,
    b_ext: &str,
) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let a: BTreeSet<String> = stems_with_extension(a_dir, a_ext)?.into_iter().collect();
    let b: BTreeSet<String> = stems_with_extension(b_dir, b_ext)?.into_iter().collect();
    if a != b {
        let only_a: Vec<&str> = a.difference(&b).map(|s| s.as_str()).collect();
        let only_b: Vec<&str> = b.difference(&a).map(|s| s.as_str()).collect();
        let mut msg = String::new();
        if !only_a.is_empty() {
            msg.push_str(&format!("only in {}: {}", a_dir.display(), only_a.join(", ")));
        }
        if !only_b.is_empty() {
            if !msg.is_empty() {
                msg.push_str("; ");
            }
            msg.push_str(&format!("only in {}: {}", b_dir.display(), only_b.join(", ")));
        }
        return Err(Error::StemMismatch(msg));
    }
    Ok(a
        .into_iter()
        .map(|stem| {
            let pa = a_dir.join(format!("{stem}.{a_ext}"));
            let pb = b_dir.join(format!("{stem}.{b_ext}"));
            (stem, pa, pb)
        })
        .collect())
}
