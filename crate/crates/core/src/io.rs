//! JSONL/JSON/CSV readers and writers for the on-disk formats.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::KeyboardLayout;
use crate::types::{Fixation, HumanParams, KeypressLog, Scanpath};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CoreError + '_ {
    move |source| CoreError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, line: usize, msg: impl ToString) -> CoreError {
    CoreError::Parse { path: path.display().to_string(), line, msg: msg.to_string() }
}

/// Writes through a sibling temp file and renames it over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(path, i + 1, e)))
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("plain data serializes");
        out.push(b'\n');
    }
    out
}

pub fn read_keylogs(path: &Path) -> Result<Vec<KeypressLog>> {
    read_jsonl(path)
}

pub fn write_keylogs(path: &Path, logs: &[KeypressLog]) -> Result<()> {
    write_atomic(path, &to_jsonl(logs))
}

#[derive(Deserialize)]
struct RawFixation {
    x: f64,
    y: f64,
    duration_ms: f64,
    #[serde(default)]
    onset_ms: Option<f64>,
}

#[derive(Deserialize)]
struct RawScanpath {
    trial_id: String,
    fixations: Vec<RawFixation>,
}

impl From<RawScanpath> for Scanpath {
    fn from(raw: RawScanpath) -> Scanpath {
        let mut next = 0.0;
        let fixations = raw
            .fixations
            .into_iter()
            .map(|r| {
                let onset_ms = r.onset_ms.unwrap_or(next);
                next = onset_ms + r.duration_ms;
                Fixation { x: r.x, y: r.y, duration_ms: r.duration_ms, onset_ms }
            })
            .collect();
        Scanpath { trial_id: raw.trial_id, fixations }
    }
}

/// Missing onsets are filled with the end of the previous fixation (0 for the first).
pub fn read_scanpaths(path: &Path) -> Result<Vec<Scanpath>> {
    Ok(read_jsonl::<RawScanpath>(path)?.into_iter().map(Scanpath::from).collect())
}

pub fn parse_scanpath_line(line: &str) -> std::result::Result<Scanpath, serde_json::Error> {
    serde_json::from_str::<RawScanpath>(line).map(Scanpath::from)
}

pub fn write_scanpaths(path: &Path, paths: &[Scanpath]) -> Result<()> {
    write_atomic(path, &to_jsonl(paths))
}

pub fn read_layout(path: &Path) -> Result<KeyboardLayout> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let layout: KeyboardLayout = serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e))?;
    layout.validate()?;
    Ok(layout)
}

pub fn write_layout(path: &Path, layout: &KeyboardLayout) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(layout).expect("plain data serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// `theta.csv`: header `user_id,e_k,f_k,lambda`.
pub fn write_theta_csv(path: &Path, thetas: &BTreeMap<String, HumanParams>) -> Result<()> {
    let mut s = String::from("user_id,e_k,f_k,lambda\n");
    for (u, t) in thetas {
        s.push_str(&format!("{u},{},{},{}\n", t.e_k, t.f_k, t.lambda));
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_theta_csv(path: &Path) -> Result<BTreeMap<String, HumanParams>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (user, rest) = line.split_once(',').ok_or_else(|| parse_err(path, i + 1, "expected 4 columns"))?;
        let theta = HumanParams::parse(rest).map_err(|e| parse_err(path, i + 1, e))?;
        out.insert(user.to_string(), theta);
    }
    Ok(out)
}

/// One sentence per non-blank line.
pub fn read_phrases(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}
