//! Paired base/unlearned representation datasets and the PIDREP container.
//!
//! PIDREP v1 layout (all integers little-endian):
//!
//! | offset | size        | content                                   |
//! |--------|-------------|-------------------------------------------|
//! | 0      | 4           | ASCII `PIDR`                              |
//! | 4      | 2           | version, `u16` = 1                        |
//! | 6      | 2           | flags; bit 0 set when an id section follows |
//! | 8      | 8           | `n`, `u64`                                |
//! | 16     | 4           | `d_b`, `u32`                              |
//! | 20     | 4           | `d_u`, `u32`                              |
//! | 24     | n           | labels, one byte each (0 or 1)            |
//! | ..     | 4·n·d_b     | base matrix, `f32`, row-major             |
//! | ..     | 4·n·d_u     | unlearned matrix, `f32`, row-major        |
//! | ..     | 8 + len     | optional: `u64` byte length, then newline-delimited UTF-8 ids |
//!
//! The id section holds exactly `n` lines, optionally preceded by one header
//! line starting with `#` that carries free-form provenance.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"PIDR";
pub const VERSION: u16 = 1;
pub const FLAG_IDS: u16 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated container: need {expected} bytes, file has {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("label {value} at row {row} is not 0 or 1")]
    Label { row: usize, value: u8 },

    #[error("non-finite value in {matrix} at row {row}, column {col}")]
    NonFinite {
        matrix: &'static str,
        row: usize,
        col: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("dataset has no samples")]
    Empty,

    #[error("invalid split: {0}")]
    Split(String),

    #[error("stratification error: {0}")]
    Stratification(String),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Base-model and unlearned-model representations of the same `n` inputs,
/// with binary membership labels (1 = forget-set member).
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationDataset {
    base: Array2<f32>,
    unlearned: Array2<f32>,
    labels: Vec<u8>,
    ids: Option<Vec<String>>,
    id_header: Option<String>,
}

impl RepresentationDataset {
    pub fn new(
        base: Array2<f32>,
        unlearned: Array2<f32>,
        labels: Vec<u8>,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = labels.len();
        if base.nrows() != n || unlearned.nrows() != n {
            return Err(DatasetError::Shape(format!(
                "{} labels but base has {} rows and unlearned has {}",
                n,
                base.nrows(),
                unlearned.nrows()
            )));
        }
        if let Some((row, &value)) = labels.iter().enumerate().find(|(_, &y)| y > 1) {
            return Err(DatasetError::Label { row, value });
        }
        check_finite("base", base.view())?;
        check_finite("unlearned", unlearned.view())?;
        if let Some(ids) = &ids {
            if ids.len() != n {
                return Err(DatasetError::Shape(format!(
                    "{} ids for {} samples",
                    ids.len(),
                    n
                )));
            }
            if ids.iter().any(|id| id.contains('\n')) {
                return Err(DatasetError::Format("sample ids may not contain newlines".into()));
            }
        }
        Ok(Self {
            base,
            unlearned,
            labels,
            ids,
            id_header: None,
        })
    }

    /// Attaches a one-line provenance header stored ahead of the ids.
    pub fn with_id_header(mut self, header: impl Into<String>) -> Result<Self> {
        let header = header.into();
        if !header.starts_with('#') || header.contains('\n') {
            return Err(DatasetError::Format(
                "id header must be a single line starting with '#'".into(),
            ));
        }
        if self.ids.is_none() {
            return Err(DatasetError::Format("id header requires sample ids".into()));
        }
        self.id_header = Some(header);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d_base(&self) -> usize {
        self.base.ncols()
    }

    pub fn d_unlearned(&self) -> usize {
        self.unlearned.ncols()
    }

    pub fn base(&self) -> ArrayView2<'_, f32> {
        self.base.view()
    }

    pub fn unlearned(&self) -> ArrayView2<'_, f32> {
        self.unlearned.view()
    }

    pub fn base_row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.base.row(i)
    }

    pub fn unlearned_row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.unlearned.row(i)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn id_header(&self) -> Option<&str> {
        self.id_header.as_deref()
    }

    /// Id of sample `i`, falling back to its row index.
    pub fn id_of(&self, i: usize) -> String {
        match &self.ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        }
    }

    /// Column-wise concatenation `[B | U]`.
    pub fn joint(&self) -> Array2<f32> {
        ndarray::concatenate(ndarray::Axis(1), &[self.base.view(), self.unlearned.view()])
            .expect("row counts checked at construction")
    }

    /// SHA-256 over the labels and both matrices (ids excluded), hex-encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.d_base() as u64).to_le_bytes());
        h.update((self.d_unlearned() as u64).to_le_bytes());
        h.update(&self.labels);
        for v in self.base.iter().chain(self.unlearned.iter()) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn check_finite(matrix: &'static str, m: ArrayView2<'_, f32>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(DatasetError::NonFinite { matrix, row, col });
        }
    }
    Ok(())
}

/// Serializes a dataset into PIDREP v1 bytes.
pub fn encode_container(ds: &RepresentationDataset) -> Result<Vec<u8>> {
    if ds.n() == 0 {
        return Err(DatasetError::Empty);
    }
    let d_b = u32::try_from(ds.d_base())
        .map_err(|_| DatasetError::Shape("base width exceeds u32".into()))?;
    let d_u = u32::try_from(ds.d_unlearned())
        .map_err(|_| DatasetError::Shape("unlearned width exceeds u32".into()))?;
    let text = ds.ids.as_ref().map(|ids| {
        let mut lines: Vec<&str> = Vec::with_capacity(ids.len() + 1);
        if let Some(h) = &ds.id_header {
            lines.push(h);
        }
        lines.extend(ids.iter().map(String::as_str));
        lines.join("\n")
    });

    let floats = ds.base.len() + ds.unlearned.len();
    let mut out = Vec::with_capacity(HEADER_LEN + ds.n() + 4 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let flags = if text.is_some() { FLAG_IDS } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(ds.n() as u64).to_le_bytes());
    out.extend_from_slice(&d_b.to_le_bytes());
    out.extend_from_slice(&d_u.to_le_bytes());
    out.extend_from_slice(&ds.labels);
    // Row-major regardless of the arrays' in-memory layout.
    for v in ds.base.iter().chain(ds.unlearned.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(text) = text {
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
    }
    Ok(out)
}

/// Parses PIDREP v1 bytes.
pub fn decode_container(bytes: &[u8]) -> Result<RepresentationDataset> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(DatasetError::Format(format!("bad magic {shown:?}")));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DatasetError::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(DatasetError::Format(format!("unsupported version {version}")));
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    if flags & !FLAG_IDS != 0 {
        return Err(DatasetError::Format(format!("unknown flag bits {flags:#06x}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let d_b = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as u64;
    let d_u = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as u64;

    let body = n
        .checked_mul(d_b.checked_add(d_u).ok_or_else(overflow)?)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(n))
        .and_then(|c| c.checked_add(HEADER_LEN as u64))
        .ok_or_else(overflow)?;
    let actual = bytes.len() as u64;
    let with_len = if flags & FLAG_IDS != 0 {
        body.checked_add(8).ok_or_else(overflow)?
    } else {
        body
    };
    if actual < with_len {
        return Err(DatasetError::Truncated {
            expected: with_len,
            actual,
        });
    }
    let n = n as usize;
    let (d_b, d_u) = (d_b as usize, d_u as usize);
    if n == 0 {
        return Err(DatasetError::Empty);
    }

    let mut pos = HEADER_LEN;
    let labels = bytes[pos..pos + n].to_vec();
    if let Some((row, &value)) = labels.iter().enumerate().find(|(_, &y)| y > 1) {
        return Err(DatasetError::Label { row, value });
    }
    pos += n;
    let base = read_matrix(&bytes[pos..], n, d_b)?;
    pos += 4 * n * d_b;
    let unlearned = read_matrix(&bytes[pos..], n, d_u)?;
    pos += 4 * n * d_u;

    let mut ids = None;
    let mut id_header = None;
    if flags & FLAG_IDS != 0 {
        let len = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
        pos += 8;
        let end = (pos as u64).checked_add(len).ok_or_else(overflow)?;
        if actual < end {
            return Err(DatasetError::Truncated {
                expected: end,
                actual,
            });
        }
        let end = end as usize;
        let text = std::str::from_utf8(&bytes[pos..end])
            .map_err(|e| DatasetError::Format(format!("id section is not UTF-8: {e}")))?;
        let mut lines: Vec<String> = text.split('\n').map(str::to_owned).collect();
        if lines.len() == n + 1 && lines[0].starts_with('#') {
            id_header = Some(lines.remove(0));
        }
        if lines.len() != n {
            return Err(DatasetError::Format(format!(
                "id section has {} lines for {} samples",
                lines.len(),
                n
            )));
        }
        ids = Some(lines);
        pos = end;
    }
    if pos != bytes.len() {
        return Err(DatasetError::Format(format!(
            "{} trailing bytes after container end",
            bytes.len() - pos
        )));
    }

    let mut ds = RepresentationDataset::new(base, unlearned, labels, ids)?;
    ds.id_header = id_header;
    Ok(ds)
}

fn overflow() -> DatasetError {
    DatasetError::Format("declared sizes overflow".into())
}

fn read_matrix(bytes: &[u8], rows: usize, cols: usize) -> Result<Array2<f32>> {
    let data: Vec<f32> = bytes[..4 * rows * cols]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| DatasetError::Shape(e.to_string()))
}

pub fn read_container(path: impl AsRef<Path>) -> Result<RepresentationDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_container(&bytes)
}

pub fn write_container(ds: &RepresentationDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_container(ds)?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Parses the plain-text form: one `id,label,b_1..b_db,u_1..u_du` record per
/// line. A leading `# d_b=<n> d_u=<m>` line fixes the widths; without it the
/// feature columns are split evenly. Blank lines are skipped.
pub fn parse_text(text: &str) -> Result<RepresentationDataset> {
    let mut widths: Option<(usize, usize)> = None;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut base = Vec::new();
    let mut unlearned = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if ids.is_empty() && widths.is_none() {
                widths = Some(parse_width_header(rest)?);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(DatasetError::Format(format!(
                "line {}: expected id and label",
                lineno + 1
            )));
        }
        let n_feat = fields.len() - 2;
        let (d_b, d_u) = match widths {
            Some(w) => w,
            None if n_feat % 2 == 0 => {
                widths = Some((n_feat / 2, n_feat / 2));
                (n_feat / 2, n_feat / 2)
            }
            None => {
                return Err(DatasetError::Format(format!(
                    "line {}: odd feature count {n_feat} needs a '# d_b= d_u=' header",
                    lineno + 1
                )))
            }
        };
        if n_feat != d_b + d_u {
            return Err(DatasetError::Shape(format!(
                "line {}: {n_feat} features, expected {}",
                lineno + 1,
                d_b + d_u
            )));
        }
        let label: u8 = fields[1].parse().map_err(|_| {
            DatasetError::Format(format!("line {}: bad label {:?}", lineno + 1, fields[1]))
        })?;
        if label > 1 {
            return Err(DatasetError::Label {
                row: labels.len(),
                value: label,
            });
        }
        for (k, f) in fields[2..].iter().enumerate() {
            let v: f32 = f.parse().map_err(|_| {
                DatasetError::Format(format!("line {}: bad number {f:?}", lineno + 1))
            })?;
            if k < d_b {
                base.push(v);
            } else {
                unlearned.push(v);
            }
        }
        ids.push(fields[0].to_owned());
        labels.push(label);
    }
    let n = labels.len();
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let (d_b, d_u) = widths.unwrap_or((0, 0));
    let base = Array2::from_shape_vec((n, d_b), base).map_err(|e| DatasetError::Shape(e.to_string()))?;
    let unlearned =
        Array2::from_shape_vec((n, d_u), unlearned).map_err(|e| DatasetError::Shape(e.to_string()))?;
    RepresentationDataset::new(base, unlearned, labels, Some(ids))
}

fn parse_width_header(rest: &str) -> Result<(usize, usize)> {
    let mut d_b = None;
    let mut d_u = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("d_b=") {
            d_b = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("d_u=") {
            d_u = v.parse().ok();
        }
    }
    match (d_b, d_u) {
        (Some(b), Some(u)) => Ok((b, u)),
        _ => Err(DatasetError::Format(format!(
            "header {rest:?} must read '# d_b=<n> d_u=<m>'"
        ))),
    }
}

/// Loads a dataset, choosing the text reader for `.csv`/`.txt` files and the
/// PIDREP reader otherwise.
pub fn load(path: impl AsRef<Path>) -> Result<RepresentationDataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("txt") => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            parse_text(&text)
        }
        _ => read_container(path),
    }
}

/// How to partition sample indices into train/validation/test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub stratified: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::new(0)
    }
}

impl SplitSpec {
    /// 70/10/20, stratified.
    pub fn new(seed: u64) -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
            seed,
            stratified: true,
        }
    }

    pub fn fractions(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(DatasetError::Split(format!("fractions {f:?} must be positive")));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DatasetError::Split(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Disjoint, sorted index lists covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train, &self.validation, &self.test]
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for part in self.parts() {
            h.update((part.len() as u64).to_le_bytes());
            for &i in part {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Splits `total` items by `fractions` with largest-remainder rounding.
fn allocate(total: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts = [0usize; 3];
    for (c, r) in counts.iter_mut().zip(&raw) {
        *c = r.floor() as usize;
    }
    let mut left = total - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    // Stable sort keeps ties in train/validation/test order.
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra)
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Deterministic train/validation/test partition of the dataset's rows.
pub fn split(ds: &RepresentationDataset, spec: &SplitSpec) -> Result<Split> {
    split_labels(ds.labels(), spec)
}

pub fn split_labels(labels: &[u8], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let fractions = spec.fractions();
    if let Some(f) = fractions.iter().find(|&&f| f * (n as f64) < 1.0) {
        return Err(DatasetError::Split(format!(
            "fraction {f} of {n} samples is below one sample"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    let groups: Vec<Vec<usize>> = if spec.stratified {
        (0..2u8)
            .map(|c| (0..n).filter(|&i| labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..n).collect()]
    };
    for (class, mut members) in groups.into_iter().enumerate() {
        members.shuffle(&mut rng);
        let counts = allocate(members.len(), &fractions);
        if spec.stratified {
            if let Some(k) = counts.iter().position(|&c| c == 0) {
                let name = ["train", "validation", "test"][k];
                return Err(DatasetError::Stratification(format!(
                    "class {class} has {} samples, none land in the {name} split",
                    members.len()
                )));
            }
        }
        let mut rest = members.as_slice();
        for (part, &c) in parts.iter_mut().zip(&counts) {
            let (head, tail) = rest.split_at(c);
            part.extend_from_slice(head);
            rest = tail;
        }
    }
    for (k, part) in parts.iter_mut().enumerate() {
        if part.is_empty() {
            return Err(DatasetError::Split(format!(
                "{} split is empty",
                ["train", "validation", "test"][k]
            )));
        }
        part.sort_unstable();
    }
    let [train, validation, test] = parts;
    Ok(Split {
        train,
        validation,
        test,
    })
}
