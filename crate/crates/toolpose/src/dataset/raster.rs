//! Binary PPM (P6) images and PGM (P5) masks with 0/255 semantics.

use super::DatasetError;
use std::path::Path;

/// Dimension guard for untrusted headers.
const MAX_DIM: u32 = 1 << 14;

fn err(reason: impl Into<String>) -> DatasetError {
    DatasetError::Raster(reason.into())
}

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

/// Binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

/// Token reader for netpbm headers: ASCII tokens separated by whitespace,
/// `#` comments running to end of line.
struct HeaderReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], DatasetError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(err("unexpected end of header"));
        }
        Ok(&self.data[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32, DatasetError> {
        let tok = self.token()?;
        let s = std::str::from_utf8(tok).map_err(|_| err(format!("non-ASCII {what}")))?;
        let v: u32 = s.parse().map_err(|_| err(format!("bad {what}: {s:?}")))?;
        Ok(v)
    }

    /// Validate dimensions and maxval, consume the single whitespace byte
    /// separating header and payload, and return the payload.
    fn payload(&mut self, magic: &[u8]) -> Result<(u32, u32, &'a [u8]), DatasetError> {
        let tok = self.token()?;
        if tok != magic {
            return Err(err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(tok),
                String::from_utf8_lossy(magic)
            )));
        }
        let width = self.number("width")?;
        let height = self.number("height")?;
        let maxval = self.number("maxval")?;
        if width == 0 || height == 0 {
            return Err(err("zero dimension"));
        }
        if width > MAX_DIM || height > MAX_DIM {
            return Err(err(format!("dimensions {width}x{height} exceed {MAX_DIM}")));
        }
        if maxval != 255 {
            return Err(err(format!("maxval must be 255, got {maxval}")));
        }
        if self.pos >= self.data.len() || !self.data[self.pos].is_ascii_whitespace() {
            return Err(err("missing whitespace after maxval"));
        }
        self.pos += 1;
        Ok((width, height, &self.data[self.pos..]))
    }
}

impl Raster {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width as usize * height as usize * 3],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, DatasetError> {
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(err(format!(
                "pixel buffer length {} != {}x{}x3",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode_ppm(data: &[u8]) -> Result<Self, DatasetError> {
        let mut reader = HeaderReader::new(data);
        let (width, height, payload) = reader.payload(b"P6")?;
        let needed = width as u64 * height as u64 * 3;
        if (payload.len() as u64) < needed {
            return Err(err(format!(
                "payload too short: {} < {needed}",
                payload.len()
            )));
        }
        if payload.len() as u64 > needed {
            return Err(err("trailing bytes after pixel data"));
        }
        Ok(Self {
            width,
            height,
            pixels: payload.to_vec(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let data = std::fs::read(path).map_err(|e| super::io_err(path, e))?;
        Self::decode_ppm(&data)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.encode_ppm()).map_err(|e| super::io_err(path, e))
    }
}

impl Mask {
    pub fn new(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, DatasetError> {
        if bits.len() != width as usize * height as usize {
            return Err(DatasetError::Mask(format!(
                "bit buffer length {} != {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0u8 }));
        out
    }

    pub fn decode_pgm(data: &[u8]) -> Result<Self, DatasetError> {
        let mut reader = HeaderReader::new(data);
        let (width, height, payload) = reader.payload(b"P5")?;
        let needed = width as u64 * height as u64;
        if (payload.len() as u64) < needed {
            return Err(err(format!(
                "payload too short: {} < {needed}",
                payload.len()
            )));
        }
        if payload.len() as u64 > needed {
            return Err(err("trailing bytes after pixel data"));
        }
        let bits = payload
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                255 => Ok(true),
                other => Err(DatasetError::Mask(format!(
                    "mask byte {other} is neither 0 nor 255"
                ))),
            })
            .collect::<Result<Vec<bool>, _>>()?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let data = std::fs::read(path).map_err(|e| super::io_err(path, e))?;
        Self::decode_pgm(&data)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.encode_pgm()).map_err(|e| super::io_err(path, e))
    }
}

/// Object + marker masks of one sample. Every marker pixel must be an
/// object pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPair {
    pub object_mask: Mask,
    pub marker_mask: Mask,
}

impl MaskPair {
    pub fn new(object_mask: Mask, marker_mask: Mask) -> Result<Self, DatasetError> {
        if object_mask.width != marker_mask.width || object_mask.height != marker_mask.height {
            return Err(DatasetError::Mask(format!(
                "mask sizes differ: object {}x{}, marker {}x{}",
                object_mask.width, object_mask.height, marker_mask.width, marker_mask.height
            )));
        }
        let violations = object_mask
            .bits
            .iter()
            .zip(&marker_mask.bits)
            .filter(|&(&obj, &mark)| mark && !obj)
            .count();
        if violations > 0 {
            return Err(DatasetError::Mask(format!(
                "{violations} marker pixels outside the object mask"
            )));
        }
        Ok(Self {
            object_mask,
            marker_mask,
        })
    }

    pub fn width(&self) -> u32 {
        self.object_mask.width
    }

    pub fn height(&self) -> u32 {
        self.object_mask.height
    }
}
