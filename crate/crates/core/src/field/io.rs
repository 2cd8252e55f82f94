use super::Field2D;
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

const PGM_MAX: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// ASCII (`P2`).
    Plain,
    /// Binary big-endian 16-bit (`P5`).
    Raw,
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * f64::from(PGM_MAX)).round() as u16
}

/// Encodes a field as a 16-bit PGM. Values are clamped to `[0, 1]` and
/// scaled to `0..=65535`.
pub fn encode_pgm(field: &Field2D, format: PgmFormat) -> Vec<u8> {
    let magic = match format {
        PgmFormat::Plain => "P2",
        PgmFormat::Raw => "P5",
    };
    let mut out =
        format!("{magic}\n{} {}\n{PGM_MAX}\n", field.width(), field.height()).into_bytes();
    match format {
        PgmFormat::Plain => {
            for r in 0..field.height() {
                let line: Vec<String> = field
                    .row(r)
                    .iter()
                    .map(|&v| quantize(v).to_string())
                    .collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        PgmFormat::Raw => {
            for &v in field.values() {
                out.extend_from_slice(&quantize(v).to_be_bytes());
            }
        }
    }
    out
}

/// Splits the header off a PGM byte stream, skipping `#` comments. Returns
/// the four header tokens and the offset of the first byte after them.
fn pgm_header(bytes: &[u8]) -> Result<([String; 4], usize)> {
    let mut tokens: Vec<String> = Vec::with_capacity(4);
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // Exactly one whitespace byte separates the header from raster data.
    let [a, b, c, d]: [String; 4] = tokens.try_into().expect("four tokens");
    Ok(([a, b, c, d], i + 1))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad PGM {what} {s:?}")))
}

pub fn decode_pgm(bytes: &[u8], pixel_size_nm: f64) -> Result<Field2D> {
    let ([magic, w, h, maxval], body) = pgm_header(bytes)?;
    let width = parse_usize(&w, "width")?;
    let height = parse_usize(&h, "height")?;
    let maxval = parse_usize(&maxval, "maxval")?;
    if maxval == 0 || maxval > usize::from(PGM_MAX) {
        return Err(Error::Parse(format!("PGM maxval {maxval}")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let raw: Vec<usize> = match magic.as_str() {
        "P2" => {
            let text = std::str::from_utf8(bytes.get(body.min(bytes.len())..).unwrap_or(&[]))
                .map_err(|_| Error::Parse("non-ASCII P2 body".into()))?;
            text.split_ascii_whitespace()
                .map(|t| parse_usize(t, "sample"))
                .collect::<Result<_>>()?
        }
        "P5" => {
            let data = bytes.get(body..).unwrap_or(&[]);
            if maxval < 256 {
                data.iter().map(|&b| usize::from(b)).collect()
            } else {
                data.chunks_exact(2)
                    .map(|c| usize::from(u16::from_be_bytes([c[0], c[1]])))
                    .collect()
            }
        }
        other => return Err(Error::Parse(format!("unsupported PGM magic {other:?}"))),
    };
    if raw.len() != n {
        return Err(Error::Parse(format!(
            "PGM has {} samples, expected {n}",
            raw.len()
        )));
    }
    Field2D::new(
        width,
        height,
        pixel_size_nm,
        raw.into_iter().map(|v| v as f64 / scale).collect(),
    )
}

pub fn write_pgm(path: impl AsRef<Path>, field: &Field2D, format: PgmFormat) -> Result<()> {
    fs::write(path, encode_pgm(field, format))?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>, pixel_size_nm: f64) -> Result<Field2D> {
    decode_pgm(&fs::read(path)?, pixel_size_nm)
}

/// Writes the field in long form, one `row,col,value` record per pixel.
/// Values use the shortest representation that parses back to the same `f64`.
pub fn write_csv(path: impl AsRef<Path>, field: &Field2D) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(["row", "col", "value"])?;
    for r in 0..field.height() {
        for (c, v) in field.row(r).iter().enumerate() {
            w.write_record([r.to_string(), c.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>, pixel_size_nm: f64) -> Result<Field2D> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut cells = Vec::new();
    let (mut height, mut width) = (0, 0);
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!(
                "expected 3 columns, got {}",
                rec.len()
            )));
        }
        let r: usize = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("row {:?}", &rec[0])))?;
        let c: usize = rec[1]
            .parse()
            .map_err(|_| Error::Parse(format!("col {:?}", &rec[1])))?;
        let v: f64 = rec[2]
            .parse()
            .map_err(|_| Error::Parse(format!("value {:?}", &rec[2])))?;
        height = height.max(r + 1);
        width = width.max(c + 1);
        cells.push((r, c, v));
    }
    if cells.len() != width * height {
        return Err(Error::Parse(format!(
            "{} records for a {width}x{height} grid",
            cells.len()
        )));
    }
    let mut values = vec![f64::NAN; width * height];
    for (r, c, v) in cells {
        values[r * width + c] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse("duplicate or missing CSV cells".into()));
    }
    Field2D::new(width, height, pixel_size_nm, values)
}
