//! File formats: PGM saliency maps (`P5` binary, `P2` ASCII) and the `SMBT`
//! tensor container.
//!
//! `SMBT` layout, all integers little-endian:
//!
//! ```text
//! "SMBT" | u8 rank | rank x u32 extents | u8 dtype (0 = f32, 1 = f64) | values
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dtype, Real, SaliencyMap, Tensor};

pub const SMBT_MAGIC: &[u8; 4] = b"SMBT";

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err("unexpected end of PGM header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| format_err("non-ASCII PGM header"))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| format_err(format!("invalid PGM {what}: {tok:?}")))
    }
}

/// Decodes a `P5` or `P2` greymap, mapping `0..=maxval` linearly onto `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<SaliencyMap> {
    let mut rd = HeaderReader { bytes, pos: 0 };
    let magic = rd.token()?;
    let binary = match magic {
        "P5" => true,
        "P2" => false,
        other => return Err(format_err(format!("not a PGM file (magic {other:?})"))),
    };
    let width = rd.number("width")?;
    let height = rd.number("height")?;
    let maxval = rd.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err("PGM with zero extent"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let raw: Vec<usize> = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = rd.pos + 1;
        let bpp = if maxval < 256 { 1 } else { 2 };
        let body = bytes
            .get(start..start + n * bpp)
            .ok_or_else(|| format_err("truncated P5 raster"))?;
        if bpp == 1 {
            body.iter().map(|&b| b as usize).collect()
        } else {
            body.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                .collect()
        }
    } else {
        (0..n).map(|_| rd.number("sample")).collect::<Result<_>>()?
    };
    if let Some(v) = raw.iter().find(|&&v| v > maxval) {
        return Err(format_err(format!("PGM sample {v} exceeds maxval {maxval}")));
    }
    SaliencyMap::new(height, width, raw.into_iter().map(|v| v as f64 / scale).collect())
}

fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes as binary `P5` with maxval 255.
pub fn encode_pgm(map: &SaliencyMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.values().iter().map(|&v| quantize_u8(v)));
    out
}

/// Encodes as ASCII `P2` with maxval 255, one image row per line.
pub fn encode_pgm_ascii(map: &SaliencyMap) -> String {
    let mut out = format!("P2\n{} {}\n255\n", map.width(), map.height());
    for row in map.values().chunks(map.width()) {
        let line: Vec<String> = row.iter().map(|&v| quantize_u8(v).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, map: &SaliencyMap) -> Result<()> {
    fs::write(path, encode_pgm(map))?;
    Ok(())
}

/// A tensor of either supported element type, as read from an `SMBT` file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> Dtype {
        match self {
            AnyTensor::F32(_) => Dtype::F32,
            AnyTensor::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to the requested element type.
    pub fn into_real<T: Real>(self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode_smbt<T: Real>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + t.len() * T::DTYPE.size());
    out.extend_from_slice(SMBT_MAGIC);
    out.push(t.rank() as u8);
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    out.push(T::DTYPE.code());
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn decode_smbt(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < 6 || &bytes[..4] != SMBT_MAGIC {
        return Err(format_err("missing SMBT magic"));
    }
    let rank = bytes[4] as usize;
    let header = 5 + 4 * rank + 1;
    if bytes.len() < header {
        return Err(format_err("truncated SMBT header"));
    }
    let shape: Vec<usize> = bytes[5..5 + 4 * rank]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let code = bytes[header - 1];
    let dtype = Dtype::from_code(code).ok_or_else(|| format_err(format!("unknown SMBT dtype code {code}")))?;
    let n: usize = shape.iter().product();
    let body = &bytes[header..];
    if body.len() != n * dtype.size() {
        return Err(format_err(format!(
            "SMBT body holds {} bytes, shape {shape:?} needs {}",
            body.len(),
            n * dtype.size()
        )));
    }
    Ok(match dtype {
        Dtype::F32 => AnyTensor::F32(Tensor::new(&shape, body.chunks_exact(4).map(f32::read_le).collect())?),
        Dtype::F64 => AnyTensor::F64(Tensor::new(&shape, body.chunks_exact(8).map(f64::read_le).collect())?),
    })
}

pub fn read_smbt(path: impl AsRef<Path>) -> Result<AnyTensor> {
    decode_smbt(&fs::read(path)?)
}

pub fn write_smbt<T: Real>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    fs::write(path, encode_smbt(t))?;
    Ok(())
}
