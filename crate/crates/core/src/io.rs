//! Binary feature and label files, CSV fallbacks, score tables and atomic
//! output.
//!
//! Feature files (`OODF`) carry a 24-byte header: magic, version `u16 = 1`,
//! dtype `u8` (0 = f32, 1 = f64), a reserved `u8 = 0`, then `rows` and
//! `cols` as `u64`, followed by row-major little-endian values. Label files
//! (`OODL`) carry a 14-byte header (magic, version `u16`, `rows u64`) and
//! `i32` values; `-1` marks unlabeled rows.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::FeatureMatrix;
use crate::error::{OodError, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"OODF";
pub const LABEL_MAGIC: &[u8; 4] = b"OODL";
pub const FORMAT_VERSION: u16 = 1;
pub const FEATURE_HEADER_LEN: usize = 24;
pub const LABEL_HEADER_LEN: usize = 14;

/// Stored value type of a feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// Little-endian cursor that reports byte offsets on failure.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(OodError::parse(
                self.bytes.len() as u64,
                format!("truncated {}", self.what),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn check_magic_version(r: &mut Reader<'_>, magic: &[u8; 4]) -> Result<()> {
    let found = r.take(4)?;
    if found != magic {
        return Err(OodError::parse(
            0,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(OodError::parse(4, format!("unsupported version {version}")));
    }
    Ok(())
}

fn payload_len(count: u64, width: usize, header: usize) -> Result<usize> {
    count
        .checked_mul(width as u64)
        .and_then(|b| b.checked_add(header as u64))
        .and_then(|b| usize::try_from(b).ok())
        .ok_or_else(|| OodError::parse(header as u64 - 8, "element count overflows"))
}

fn check_payload(bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() < expected {
        return Err(OodError::parse(bytes.len() as u64, "truncated payload"));
    }
    if bytes.len() > expected {
        return Err(OodError::parse(expected as u64, "trailing bytes after payload"));
    }
    Ok(())
}

pub fn encode_features(m: &FeatureMatrix, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + m.as_slice().len() * dtype.width());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(0);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &x in m.as_slice() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    out
}

/// Parses an `OODF` buffer, returning the matrix and its stored dtype.
pub fn decode_features(bytes: &[u8]) -> Result<(FeatureMatrix, Dtype)> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "header",
    };
    check_magic_version(&mut r, FEATURE_MAGIC)?;
    let code = r.u8()?;
    let dtype = Dtype::from_code(code)
        .ok_or_else(|| OodError::parse(6, format!("unknown dtype {code}")))?;
    let flags = r.u8()?;
    if flags != 0 {
        return Err(OodError::parse(7, format!("reserved flags byte is {flags}, expected 0")));
    }
    let rows = r.u64()?;
    let cols = r.u64()?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| OodError::parse(8, "rows * cols overflows"))?;
    let expected = payload_len(count, dtype.width(), FEATURE_HEADER_LEN)?;
    check_payload(bytes, expected)?;
    let body = &bytes[FEATURE_HEADER_LEN..];
    let data: Vec<f64> = match dtype {
        Dtype::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(OodError::parse(
            (FEATURE_HEADER_LEN + i * dtype.width()) as u64,
            "non-finite feature value",
        ));
    }
    Ok((FeatureMatrix::new(rows as usize, cols as usize, data)?, dtype))
}

pub fn encode_labels(labels: &[i32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(LABEL_HEADER_LEN + 4 * labels.len());
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<i32>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "header",
    };
    check_magic_version(&mut r, LABEL_MAGIC)?;
    let rows = r.u64()?;
    let expected = payload_len(rows, 4, LABEL_HEADER_LEN)?;
    check_payload(bytes, expected)?;
    let labels: Vec<i32> = bytes[LABEL_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = labels.iter().position(|&l| l < -1) {
        return Err(OodError::parse(
            (LABEL_HEADER_LEN + 4 * i) as u64,
            format!("label {} is below -1", labels[i]),
        ));
    }
    Ok(labels)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Parses CSV features with header `f0,...,f{d-1}` and an optional trailing
/// `label` column.
pub fn parse_features_csv(text: &str) -> Result<(FeatureMatrix, Option<Vec<i32>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| OodError::parse(0, format!("bad CSV header: {e}")))?
        .clone();
    let mut names: Vec<&str> = headers.iter().collect();
    let has_label = names.last() == Some(&"label");
    if has_label {
        names.pop();
    }
    if names.is_empty() {
        return Err(OodError::parse(0, "CSV header has no feature columns"));
    }
    for (j, name) in names.iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(OodError::parse(
                0,
                format!("CSV header column {j} is {name:?}, expected \"f{j}\""),
            ));
        }
    }
    let d = names.len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let offset = e.position().map_or(0, |p| p.byte());
            OodError::parse(offset, format!("bad CSV record: {e}"))
        })?;
        let offset = record.position().map_or(0, |p| p.byte());
        if record.len() != headers.len() {
            return Err(OodError::parse(
                offset,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for field in record.iter().take(d) {
            let x: f64 = field
                .parse()
                .map_err(|_| OodError::parse(offset, format!("invalid number {field:?}")))?;
            if !x.is_finite() {
                return Err(OodError::parse(offset, format!("non-finite value {field:?}")));
            }
            data.push(x);
        }
        if has_label {
            let field = &record[d];
            let l: i32 = field
                .parse()
                .map_err(|_| OodError::parse(offset, format!("invalid label {field:?}")))?;
            if l < -1 {
                return Err(OodError::parse(offset, format!("label {l} is below -1")));
            }
            labels.push(l);
        }
    }
    let rows = data.len() / d;
    Ok((FeatureMatrix::new(rows, d, data)?, has_label.then_some(labels)))
}

/// Reads a feature file and any labels stored with it (CSV only).
pub fn read_labeled_features(path: &Path) -> Result<(FeatureMatrix, Option<Vec<i32>>)> {
    let run = || -> Result<_> {
        if is_csv(path) {
            parse_features_csv(&fs::read_to_string(path)?)
        } else {
            Ok((decode_features(&fs::read(path)?)?.0, None))
        }
    };
    run().map_err(|e| e.in_file(path))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    Ok(read_labeled_features(path)?.0)
}

pub fn write_features(m: &FeatureMatrix, path: &Path, dtype: Dtype) -> Result<()> {
    if is_csv(path) {
        let mut s = String::new();
        let header: Vec<String> = (0..m.cols()).map(|j| format!("f{j}")).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for row in m.iter_rows() {
            let cells: Vec<String> = row.iter().map(|&x| format_g17(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        write_atomic(path, s.as_bytes())
    } else {
        write_atomic(path, &encode_features(m, dtype))
    }
}

/// Reads labels from an `OODL` file or a one-column CSV headed `label`.
pub fn read_labels(path: &Path) -> Result<Vec<i32>> {
    let run = || -> Result<_> {
        if is_csv(path) {
            parse_labels_csv(&fs::read_to_string(path)?)
        } else {
            decode_labels(&fs::read(path)?)
        }
    };
    run().map_err(|e| e.in_file(path))
}

fn parse_labels_csv(text: &str) -> Result<Vec<i32>> {
    let mut lines = text.lines();
    let mut offset = 0u64;
    match lines.next() {
        Some(h) if h.trim() == "label" => offset += h.len() as u64 + 1,
        _ => return Err(OodError::parse(0, "label CSV must start with a \"label\" header")),
    }
    let mut out = Vec::new();
    for line in lines {
        let t = line.trim();
        if !t.is_empty() {
            let l: i32 = t
                .parse()
                .map_err(|_| OodError::parse(offset, format!("invalid label {t:?}")))?;
            if l < -1 {
                return Err(OodError::parse(offset, format!("label {l} is below -1")));
            }
            out.push(l);
        }
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

pub fn write_labels(labels: &[i32], path: &Path) -> Result<()> {
    write_atomic(path, &encode_labels(labels))
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let run = || -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    };
    run().map_err(|e| e.in_file(path))
}

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros removed.
/// Parsing the result gives back the same `f64`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        strip_zeros(format!("{x:.decimals$}"))
    } else {
        let m = strip_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn strip_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Renders `index,score` rows preceded by `# key=value` lines.
pub fn render_scores(scores: &[f64], comments: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in comments {
        s.push_str(&format!("# {k}={v}\n"));
    }
    s.push_str("index,score\n");
    for (i, x) in scores.iter().enumerate() {
        s.push_str(&format!("{i},{}\n", format_g17(*x)));
    }
    s
}

pub fn write_scores(path: &Path, scores: &[f64], comments: &[(String, String)]) -> Result<()> {
    write_atomic(path, render_scores(scores, comments).as_bytes())
}

/// Parses a score table, skipping `#` comment lines.
pub fn parse_scores(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut seen_header = false;
    let mut offset = 0u64;
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
        } else if !seen_header {
            if t != "index,score" {
                return Err(OodError::parse(offset, "expected header \"index,score\""));
            }
            seen_header = true;
        } else {
            let (idx, val) = t
                .split_once(',')
                .ok_or_else(|| OodError::parse(offset, "expected two fields"))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| OodError::parse(offset, format!("invalid index {idx:?}")))?;
            if idx != out.len() {
                return Err(OodError::parse(
                    offset,
                    format!("index {idx} out of order, expected {}", out.len()),
                ));
            }
            let v: f64 = val
                .trim()
                .parse()
                .map_err(|_| OodError::parse(offset, format!("invalid score {val:?}")))?;
            if v.is_nan() {
                return Err(OodError::parse(offset, "NaN score"));
            }
            out.push(v);
        }
        offset += line.len() as u64 + 1;
    }
    if !seen_header {
        return Err(OodError::parse(offset, "missing header \"index,score\""));
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<f64>> {
    fs::read_to_string(path)
        .map_err(OodError::from)
        .and_then(|t| parse_scores(&t))
        .map_err(|e| e.in_file(path))
}

/// A JSON value written with `%.17g` numbers.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Num(f64),
    Int(i64),
    Str(String),
    Bool(bool),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn obj<K: Into<String>>(fields: impl IntoIterator<Item = (K, Json)>) -> Json {
        Json::Obj(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    fn write_to(&self, out: &mut String) {
        match self {
            Json::Num(x) if x.is_finite() => out.push_str(&format_g17(*x)),
            Json::Num(_) => out.push_str("null"),
            Json::Int(i) => out.push_str(&i.to_string()),
            Json::Str(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Arr(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    v.write_to(out);
                }
                out.push(']');
            }
            Json::Obj(fields) => {
                out.push('{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                    out.push_str(": ");
                    v.write_to(out);
                }
                out.push('}');
            }
        }
    }

    /// Single line, newline-terminated.
    pub fn render(&self) -> String {
        let mut s = String::new();
        self.write_to(&mut s);
        s.push('\n');
        s
    }
}
