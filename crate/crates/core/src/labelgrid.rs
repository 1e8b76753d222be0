//! Non-overlapping instance label images.
//!
//! A [`LabelGrid`] stores one instance id per pixel in row-major order, with
//! `0` reserved for background. Every pixel belongs to exactly one instance,
//! so masks can never overlap. Labels are taken verbatim: an id does not have
//! to form a connected component.
//!
//! Two interchange formats are supported:
//!
//! * binary PGM (`P5`), one or two bytes per sample depending on `maxval`,
//!   two-byte samples most significant byte first;
//! * an ASCII matrix, one row per line, space separated decimal ids.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest id that can be written to a PGM file.
pub const PGM_MAX_ID: u32 = 65535;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelGrid {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelGrid {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidGrid(format!(
                "grid must be at least 1x1, got {height}x{width}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .ok_or_else(|| Error::InvalidGrid(format!("grid {height}x{width} is too large")))?;
        if labels.len() != expected {
            return Err(Error::InvalidGrid(format!(
                "expected {expected} labels for a {height}x{width} grid, got {}",
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    /// All-background grid.
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0; height.saturating_mul(width)])
    }

    /// Builds a grid from equal-length rows.
    pub fn from_rows<R: AsRef<[u32]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut labels = Vec::with_capacity(height * width);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::InvalidGrid(format!(
                    "row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            labels.extend_from_slice(row);
        }
        Self::new(height, width, labels)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Row-major label buffer.
    #[inline]
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.labels.chunks_exact(self.width)
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.labels.iter().all(|&l| l == 0)
    }

    pub(crate) fn check_same_shape(&self, other: &LabelGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                gt_height: self.height,
                gt_width: self.width,
                pred_height: other.height,
                pred_width: other.width,
            });
        }
        Ok(())
    }

    /// Remaps nonzero ids to `1..=K` in order of first row-major occurrence.
    pub fn relabel_sequential(&self) -> LabelGrid {
        let mut mapping: HashMap<u32, u32> = HashMap::new();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if l == 0 {
                    return 0;
                }
                let next = mapping.len() as u32 + 1;
                *mapping.entry(l).or_insert(next)
            })
            .collect();
        LabelGrid {
            height: self.height,
            width: self.width,
            labels,
        }
    }

    pub fn stats(&self) -> LabelStats {
        LabelStats::from_labels(&self.labels)
    }
}

/// Instance count and per-instance pixel areas of a grid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub instance_count: usize,
    pub areas: BTreeMap<u32, u64>,
    /// Sorted nonzero ids.
    pub id_list: Vec<u32>,
}

impl LabelStats {
    pub fn from_labels(labels: &[u32]) -> Self {
        let mut counts: HashMap<u32, u64> = HashMap::new();
        for &l in labels.iter().filter(|&&l| l != 0) {
            *counts.entry(l).or_insert(0) += 1;
        }
        Self::from_areas(counts.into_iter().collect())
    }

    pub(crate) fn from_areas(areas: BTreeMap<u32, u64>) -> Self {
        let id_list: Vec<u32> = areas.keys().copied().collect();
        LabelStats {
            instance_count: id_list.len(),
            areas,
            id_list,
        }
    }

    pub fn area(&self, id: u32) -> u64 {
        self.areas.get(&id).copied().unwrap_or(0)
    }

    /// Total foreground pixel count.
    pub fn foreground(&self) -> u64 {
        self.areas.values().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelFormat {
    /// Binary PGM, `P5`.
    Pgm,
    /// Whitespace separated decimal matrix.
    Ascii,
}

impl LabelFormat {
    /// `.pgm` files are PGM, everything else is read as an ASCII matrix.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => LabelFormat::Pgm,
            _ => LabelFormat::Ascii,
        }
    }
}

pub fn read_label_image<R: Read>(mut source: R, format: LabelFormat) -> Result<LabelGrid> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<stream>", e))?;
    decode_label_image(&bytes, format)
}

pub fn decode_label_image(bytes: &[u8], format: LabelFormat) -> Result<LabelGrid> {
    match format {
        LabelFormat::Pgm => decode_pgm(bytes),
        LabelFormat::Ascii => decode_ascii(bytes),
    }
}

pub fn encode_label_image(grid: &LabelGrid, format: LabelFormat) -> Result<Vec<u8>> {
    match format {
        LabelFormat::Pgm => encode_pgm(grid),
        LabelFormat::Ascii => Ok(encode_ascii(grid)),
    }
}

/// Reads a label image, picking the format from the file extension.
pub fn load(path: impl AsRef<Path>) -> Result<LabelGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_label_image(&bytes, LabelFormat::from_path(path)).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Writes a label image, picking the format from the file extension.
pub fn save(grid: &LabelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_label_image(grid, LabelFormat::from_path(path))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start, format!("{what} out of range")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<LabelGrid> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::format(0, "missing P5 magic number"));
    }
    let mut cursor = HeaderCursor { bytes, pos: 2 };
    if !cursor
        .bytes
        .get(cursor.pos)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(Error::format(2, "expected whitespace after magic number"));
    }
    let width = cursor.number("width")? as usize;
    let height = cursor.number("height")? as usize;
    let maxval_offset = cursor.pos;
    let maxval = cursor.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(maxval_offset, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            maxval_offset,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => {
            return Err(Error::format(
                cursor.pos,
                "expected single whitespace before raster",
            ))
        }
    }
    let sample_bytes = if maxval <= 255 { 1 } else { 2 };
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(maxval_offset, "image too large"))?;
    let data = &bytes[cursor.pos..];
    let needed = count * sample_bytes;
    if data.len() < needed {
        return Err(Error::format(
            bytes.len(),
            format!(
                "truncated raster: expected {needed} bytes, found {}",
                data.len()
            ),
        ));
    }
    if data.len() > needed {
        return Err(Error::format(
            cursor.pos + needed,
            "unexpected trailing bytes after raster",
        ));
    }
    let mut labels = Vec::with_capacity(count);
    for (i, chunk) in data.chunks_exact(sample_bytes).enumerate() {
        let value = if sample_bytes == 1 {
            u32::from(chunk[0])
        } else {
            u32::from(u16::from_be_bytes([chunk[0], chunk[1]]))
        };
        if u64::from(value) > maxval {
            return Err(Error::format(
                cursor.pos + i * sample_bytes,
                format!("sample {value} exceeds maxval {maxval}"),
            ));
        }
        labels.push(value);
    }
    LabelGrid::new(height, width, labels)
}

fn encode_pgm(grid: &LabelGrid) -> Result<Vec<u8>> {
    let max = grid.max_label();
    if max > PGM_MAX_ID {
        return Err(Error::InvalidGrid(format!(
            "label {max} does not fit in a PGM sample (max {PGM_MAX_ID})"
        )));
    }
    let maxval: u32 = if max <= 255 { 255 } else { 65535 };
    let mut out = format!("P5\n{} {}\n{}\n", grid.width(), grid.height(), maxval).into_bytes();
    if maxval <= 255 {
        out.extend(grid.labels().iter().map(|&l| l as u8));
    } else {
        for &l in grid.labels() {
            out.extend_from_slice(&(l as u16).to_be_bytes());
        }
    }
    Ok(out)
}

fn decode_ascii(bytes: &[u8]) -> Result<LabelGrid> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(e.valid_up_to(), "ASCII matrix is not valid UTF-8"))?;
    let mut width = None;
    let mut height = 0;
    let mut labels = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() {
            // a blank line is only tolerated as the final line
            if text[offset..].trim().is_empty() {
                break;
            }
            return Err(Error::format(line_start, "blank line inside matrix"));
        }
        let mut row_len = 0;
        for (token_start, token) in tokens(content) {
            let value: u32 = token.parse().map_err(|_| {
                Error::format(line_start + token_start, format!("invalid label {token:?}"))
            })?;
            labels.push(value);
            row_len += 1;
        }
        match width {
            None => width = Some(row_len),
            Some(w) if w != row_len => {
                return Err(Error::format(
                    line_start,
                    format!("row {height} has {row_len} entries, expected {w}"),
                ))
            }
            Some(_) => {}
        }
        height += 1;
    }
    let width = width.ok_or_else(|| Error::format(0, "empty matrix"))?;
    LabelGrid::new(height, width, labels)
}

fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split([' ', '\t'])
        .scan(0usize, |pos, tok| {
            let start = *pos;
            *pos += tok.len() + 1;
            Some((start, tok))
        })
        .filter(|(_, tok)| !tok.is_empty())
}

fn encode_ascii(grid: &LabelGrid) -> Vec<u8> {
    let mut out = String::with_capacity(grid.labels().len() * 2);
    for row in grid.rows() {
        let mut first = true;
        for l in row {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&l.to_string());
        }
        out.push('\n');
    }
    out.into_bytes()
}
