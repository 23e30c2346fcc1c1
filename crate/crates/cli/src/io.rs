//! File formats: the JSON-lines dataset, versioned JSON documents and CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use lsdr_core::{Dataset, Observation, Truth};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const DATASET_FORMAT: &str = "lsdr-dataset/1";
pub const CHECKPOINT_FORMAT: &str = "lsdr-checkpoint/1";
pub const HISTORY_FORMAT: &str = "lsdr-history/1";
pub const ESTIMATE_FORMAT: &str = "lsdr-estimate/1";
pub const EVAL_FORMAT: &str = "lsdr-eval/1";
pub const MC_FORMAT: &str = "lsdr-mc/1";
pub const SWEEP_FORMAT: &str = "lsdr-sweep/1";
pub const REPORT_FORMAT: &str = "lsdr-report/1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    #[serde(rename = "C")]
    num_classes: usize,
    d: usize,
    #[serde(default)]
    truth: Option<Truth>,
    #[serde(default)]
    config: Value,
}

#[derive(Serialize, Deserialize)]
struct Row {
    x: Vec<f64>,
    a: u8,
    y: Option<usize>,
    #[serde(default)]
    hidden_y: Option<usize>,
}

/// Identifies an input by file name and content hash, never by full path,
/// so that outputs do not depend on where the inputs live.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRef {
    pub file: String,
    pub sha256: String,
}

impl InputRef {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        Ok(Self {
            file: path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

pub fn write_dataset(path: &Path, data: &Dataset, config: &impl Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    let header = Header {
        format: DATASET_FORMAT.into(),
        num_classes: data.num_classes,
        d: data.feature_dim,
        truth: data.truth.clone(),
        config: serde_json::to_value(config)?,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for (i, obs) in data.observations.iter().enumerate() {
        let row = Row {
            x: obs.x.clone(),
            a: u8::from(obs.is_labeled()),
            y: obs.label(),
            hidden_y: data.hidden_labels.as_ref().and_then(|h| h[i]),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().context("dataset file is empty")??;
    let header: Header = serde_json::from_str(&first).context("parsing dataset header")?;
    ensure!(
        header.format == DATASET_FORMAT,
        "unsupported dataset format '{}' (expected {DATASET_FORMAT})",
        header.format
    );
    let mut obs = Vec::new();
    let mut hidden = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).with_context(|| format!("parsing row {}", i + 1))?;
        let o = match (row.a, row.y) {
            (1, Some(y)) => Observation::labeled(row.x, y),
            (0, None) => Observation::unlabeled(row.x),
            (1, None) => bail!("row {}: a = 1 but y is null", i + 1),
            (0, Some(_)) => bail!("row {}: a = 0 rows must have y = null", i + 1),
            (a, _) => bail!("row {}: a = {a} is not 0 or 1", i + 1),
        };
        obs.push(o);
        hidden.push(row.hidden_y);
    }
    let hidden = hidden.iter().any(Option::is_some).then_some(hidden);
    Ok(Dataset::new(obs, header.num_classes, header.d, hidden, header.truth)?)
}

/// A versioned JSON document: `{"format": .., "config": .., ...body}`.
#[derive(Serialize, Deserialize)]
pub struct Document<T> {
    pub format: String,
    pub config: Value,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_document<T: Serialize>(path: &Path, format: &str, config: &impl Serialize, body: &T) -> Result<()> {
    let doc = Document {
        format: format.to_string(),
        config: serde_json::to_value(config)?,
        body,
    };
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_document<T: DeserializeOwned>(path: &Path, format: &str) -> Result<Document<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let found = raw.get("format").and_then(Value::as_str).unwrap_or("<none>");
    ensure!(found == format, "{}: expected format {format}, found {found}", path.display());
    Ok(serde_json::from_value(raw)?)
}

/// The `format` key of a JSON document, for commands that accept several.
pub fn peek_format(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: Value = serde_json::from_str(&text)?;
    Ok(raw
        .get("format")
        .and_then(Value::as_str)
        .context("document has no format key")?
        .to_string())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `out.json` → `out.<suffix>.csv`, next to the JSON output.
pub fn companion(path: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}
