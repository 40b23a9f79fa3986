//! Result files: `#`-prefixed metadata headers, comma-separated rows and
//! all-or-nothing atomic emission.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::convertibility::{SignMap, Verdict};
use crate::entanglement::{EntanglementSpectrum, RenyiCurve};
use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header written at the top of every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub version: String,
    pub command: String,
    /// The fully resolved configuration, enough to re-run the command.
    pub config: Value,
    /// Additional `key: value` lines, in insertion order.
    pub notes: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str, config: Value) -> Self {
        Metadata { version: VERSION.to_string(), command: command.to_string(), config, notes: Vec::new() }
    }

    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.push((key.to_string(), value.to_string()));
        self
    }

    fn header_lines(&self) -> String {
        let mut out = format!("# xyconv {}\n# command: {}\n# config: {}\n", self.version, self.command, self.config);
        for (k, v) in &self.notes {
            // Keep multi-line notes inside the comment block.
            for line in v.lines() {
                let _ = writeln!(out, "# {k}: {line}");
            }
        }
        out
    }

    fn to_json(&self) -> Value {
        let notes: serde_json::Map<String, Value> = self.notes.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        serde_json::json!({
            "version": self.version,
            "command": self.command,
            "config": self.config,
            "notes": notes,
        })
    }
}

/// Formats an optional float, empty when absent.
pub fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV text with a metadata header. Cells are written verbatim, so they must
/// not contain commas.
pub fn csv_document(meta: &Metadata, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = meta.header_lines();
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// JSON document `{"meta": …, "result": …}`, pretty-printed.
pub fn json_document<T: Serialize>(meta: &Metadata, result: &T) -> Result<String> {
    let doc = serde_json::json!({
        "meta": meta.to_json(),
        "result": serde_json::to_value(result).map_err(|e| Error::Io(e.to_string()))?,
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// `index,lambda` rows (1-based).
pub fn spectrum_rows(spec: &EntanglementSpectrum<f64>) -> Vec<Vec<String>> {
    spec.values().iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]).collect()
}

/// `alpha,S_alpha` rows.
pub fn curve_rows(curve: &RenyiCurve<f64>) -> Vec<Vec<String>> {
    curve.alphas.iter().zip(&curve.values).map(|(a, s)| vec![a.to_string(), s.to_string()]).collect()
}

pub const SIGN_COLUMNS: [&str; 5] = ["gamma", "g", "alpha", "sign", "dS_dg"];
pub const VERDICT_COLUMNS: [&str; 5] = ["gamma", "g", "verdict", "alpha_pos_witness", "alpha_neg_witness"];

/// Verdict label for a column; failed columns are written as `failed`.
pub fn verdict_label(v: Option<Verdict>) -> &'static str {
    v.map(Verdict::as_str).unwrap_or("failed")
}

/// `gamma,g,alpha,sign,dS_dg` rows, g-major.
pub fn sign_rows(map: &SignMap) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for col in &map.columns {
        for (ia, &alpha) in map.alpha_grid.iter().enumerate() {
            let (sign, value) = match (col.signs.get(ia), col.derivatives.get(ia)) {
                (Some(s), Some(d)) => (s.as_str().to_string(), d.to_string()),
                _ => ("failed".to_string(), String::new()),
            };
            rows.push(vec![map.gamma.to_string(), col.g.to_string(), alpha.to_string(), sign, value]);
        }
    }
    rows
}

/// `gamma,g,verdict,alpha_pos_witness,alpha_neg_witness` rows.
pub fn verdict_rows(map: &SignMap) -> Vec<Vec<String>> {
    map.columns
        .iter()
        .map(|c| vec![map.gamma.to_string(), c.g.to_string(), verdict_label(c.verdict).to_string(), opt(c.alpha_pos), opt(c.alpha_neg)])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictRow {
    pub gamma: f64,
    pub g: f64,
    /// `None` for failed columns.
    pub verdict: Option<Verdict>,
}

/// Reads a verdict table written by `signmap` or `phasediagram`.
pub fn read_verdict_table(path: &Path) -> Result<Vec<VerdictRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, what: &str| Error::InvalidParameter(format!("{}:{line}: {what}", path.display()));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.split(',').map(str::trim).eq(VERDICT_COLUMNS) => {}
        Some((i, _)) => return Err(bad(i + 1, "not a verdict table header")),
        None => return Err(bad(0, "empty verdict table")),
    }
    lines
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != VERDICT_COLUMNS.len() {
                return Err(bad(i + 1, "wrong number of cells"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
            let verdict = match cells[2] {
                "failed" => None,
                s => Some(Verdict::parse(s).ok_or_else(|| bad(i + 1, "unknown verdict"))?),
            };
            Ok(VerdictRow { gamma: num(cells[0])?, g: num(cells[1])?, verdict })
        })
        .collect()
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory and an atomic rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Output files collected in memory and written only once a command has
/// finished, so a failing run leaves nothing behind.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: PathBuf, contents: String) {
        self.files.push((path, contents));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn get(&self, path: &Path) -> Option<&str> {
        self.files.iter().find(|(p, _)| p == path).map(|(_, c)| c.as_str())
    }

    /// Writes every file; if one write fails the files already written by
    /// this call are removed again.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (path, contents) in &self.files {
            if let Err(e) = write_atomic(path, contents) {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e);
            }
            written.push(path.clone());
        }
        Ok(written)
    }
}
