//! Dense row-major rasters and the two on-disk encodings the engine reads
//! and writes: the `SVR1` little-endian container and binary PPM (P6).
//!
//! `SVR1` layout:
//!
//! ```text
//! "SVR1" | u32 width | u32 height | u8 channels | u8 dtype (0 = u8, 1 = f32) | payload
//! ```
//!
//! The payload is row-major, channel-interleaved, little-endian.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const SVR_MAGIC: &[u8; 4] = b"SVR1";

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected SVR1")]
    BadMagic,
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("expected {expected}, found {found}")]
    Layout { expected: String, found: String },
    #[error("malformed PPM: {0}")]
    Ppm(String),
}

/// Single-value-per-pixel grid. Pixel `(x, y)` lives at `data[y * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Mask = Raster<bool>;
pub type Rgb = [f32; 3];
pub type RgbImage = Raster<Rgb>;
pub type Rgb8Image = Raster<[u8; 3]>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }
}

impl<T> Raster<T> {
    /// Panics if `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "raster payload length");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[self.index(x, y)]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        let i = self.index(x, y);
        &mut self.data[i]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    /// Bounds-checked access with signed coordinates.
    #[inline]
    pub fn try_get(&self, x: i64, y: i64) -> Option<&T> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(&self.data[y as usize * self.width + x as usize])
        }
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    /// Iterates `(x, y, &value)` in row-major order.
    pub fn iter_xy(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data.iter().enumerate().map(move |(i, v)| (i % w, i / w, v))
    }

    pub fn same_dims<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Converts an 8-bit image to linear `[0, 1]` floats.
pub fn rgb8_to_f32(img: &Rgb8Image) -> RgbImage {
    img.map(|p| [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0])
}

/// Rounds `[0, 1]` floats back to 8 bits. Exact inverse of [`rgb8_to_f32`].
pub fn rgb_f32_to_8(img: &RgbImage) -> Rgb8Image {
    img.map(|p| {
        let q = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        [q(p[0]), q(p[1]), q(p[2])]
    })
}

/// Payload of an `SVR1` file.
#[derive(Debug, Clone, PartialEq)]
pub enum SvrData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrRaster {
    pub width: usize,
    pub height: usize,
    pub channels: u8,
    pub data: SvrData,
}

impl SvrRaster {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.width * self.height * self.channels as usize * 4);
        out.extend_from_slice(SVR_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.push(self.channels);
        match &self.data {
            SvrData::U8(v) => {
                out.push(0);
                out.extend_from_slice(v);
            }
            SvrData::F32(v) => {
                out.push(1);
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        if bytes.len() < 14 {
            return Err(RasterError::Truncated { expected: 14, found: bytes.len() });
        }
        if &bytes[0..4] != SVR_MAGIC {
            return Err(RasterError::BadMagic);
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let channels = bytes[12];
        let dtype = bytes[13];
        let n = width * height * channels as usize;
        let payload = &bytes[14..];
        let data = match dtype {
            0 => {
                if payload.len() != n {
                    return Err(RasterError::Truncated { expected: n, found: payload.len() });
                }
                SvrData::U8(payload.to_vec())
            }
            1 => {
                if payload.len() != n * 4 {
                    return Err(RasterError::Truncated { expected: n * 4, found: payload.len() });
                }
                SvrData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            t => return Err(RasterError::UnknownDtype(t)),
        };
        Ok(Self { width, height, channels, data })
    }

    pub fn read(path: &Path) -> Result<Self, RasterError> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), RasterError> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    fn layout(&self) -> String {
        let dtype = match self.data {
            SvrData::U8(_) => "u8",
            SvrData::F32(_) => "f32",
        };
        format!("{} channel(s) of {dtype}", self.channels)
    }

    fn expect(&self, channels: u8, dtype: &str) -> Result<(), RasterError> {
        let ok = self.channels == channels
            && matches!((&self.data, dtype), (SvrData::U8(_), "u8") | (SvrData::F32(_), "f32"));
        if ok {
            Ok(())
        } else {
            Err(RasterError::Layout { expected: format!("{channels} channel(s) of {dtype}"), found: self.layout() })
        }
    }

    pub fn from_u8(r: &Raster<u8>) -> Self {
        Self { width: r.width, height: r.height, channels: 1, data: SvrData::U8(r.data.clone()) }
    }

    pub fn from_f32(r: &Raster<f32>) -> Self {
        Self { width: r.width, height: r.height, channels: 1, data: SvrData::F32(r.data.clone()) }
    }

    pub fn from_rgb8(r: &Rgb8Image) -> Self {
        Self {
            width: r.width,
            height: r.height,
            channels: 3,
            data: SvrData::U8(r.data.iter().flat_map(|p| p.iter().copied()).collect()),
        }
    }

    pub fn into_u8(self) -> Result<Raster<u8>, RasterError> {
        self.expect(1, "u8")?;
        match self.data {
            SvrData::U8(v) => Ok(Raster::from_vec(self.width, self.height, v)),
            SvrData::F32(_) => unreachable!(),
        }
    }

    pub fn into_f32(self) -> Result<Raster<f32>, RasterError> {
        self.expect(1, "f32")?;
        match self.data {
            SvrData::F32(v) => Ok(Raster::from_vec(self.width, self.height, v)),
            SvrData::U8(_) => unreachable!(),
        }
    }

    pub fn into_rgb8(self) -> Result<Rgb8Image, RasterError> {
        self.expect(3, "u8")?;
        match self.data {
            SvrData::U8(v) => {
                Ok(Raster::from_vec(self.width, self.height, v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
            }
            SvrData::F32(_) => unreachable!(),
        }
    }
}

pub fn write_ppm<W: Write>(mut w: W, img: &Rgb8Image) -> io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.data.iter().flat_map(|p| p.iter().copied()).collect();
    w.write_all(&bytes)
}

pub fn encode_ppm(img: &Rgb8Image) -> Vec<u8> {
    let mut out = Vec::new();
    write_ppm(&mut out, img).expect("writing to a Vec cannot fail");
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Rgb8Image, RasterError> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(RasterError::Ppm("header ended early".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(RasterError::Ppm(format!("unsupported magic {:?}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| RasterError::Ppm(format!("bad header field {s:?}")));
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(RasterError::Ppm(format!("maxval {maxval} unsupported, expected 255")));
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let n = width * height * 3;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < n {
        return Err(RasterError::Truncated { expected: n, found: payload.len() });
    }
    Ok(Raster::from_vec(width, height, payload[..n].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}

pub fn read_ppm(path: &Path) -> Result<Rgb8Image, RasterError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_ppm(&bytes)
}

/// Reads an RGB image stored either as PPM or as a 3-channel u8 `SVR1` file.
pub fn read_rgb(path: &Path) -> Result<Rgb8Image, RasterError> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(SVR_MAGIC) {
        SvrRaster::decode(&bytes)?.into_rgb8()
    } else {
        decode_ppm(&bytes)
    }
}
