//! Typed raster files.
//!
//! Layout: magic `L3DR`, one dtype byte (1 = u8, 4 = f32), width and height as
//! little-endian u32, then the row-major little-endian payload.

use std::fs;
use std::io;
use std::path::Path;

use lane3d_core::Raster;

pub const MAGIC: &[u8; 4] = b"L3DR";
pub const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    U8 = 1,
    F32 = 4,
}

impl Dtype {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::U8),
            4 => Some(Self::F32),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::F32 => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RasterFileError {
    #[error("file is {0} bytes, shorter than the header")]
    TooShort(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("expected dtype {expected:?}, file holds {found:?}")]
    DtypeMismatch { expected: Dtype, found: Dtype },
    #[error("payload is {got} bytes, {width}x{height} needs {expected}")]
    PayloadLength { width: u32, height: u32, expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Pixel types that have a dtype code.
pub trait RasterElement: Copy {
    const DTYPE: Dtype;
    fn put(self, out: &mut Vec<u8>);
    fn take(bytes: &[u8]) -> Self;
}

impl RasterElement for u8 {
    const DTYPE: Dtype = Dtype::U8;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn take(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

impl RasterElement for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

pub fn encode<T: RasterElement>(raster: &Raster<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + raster.data().len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE as u8);
    out.extend_from_slice(&(raster.width() as u32).to_le_bytes());
    out.extend_from_slice(&(raster.height() as u32).to_le_bytes());
    for &v in raster.data() {
        v.put(&mut out);
    }
    out
}

/// Header fields: dtype, width, height.
pub fn read_header(bytes: &[u8]) -> Result<(Dtype, u32, u32), RasterFileError> {
    if bytes.len() < HEADER_LEN {
        return Err(RasterFileError::TooShort(bytes.len()));
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if &magic != MAGIC {
        return Err(RasterFileError::BadMagic(magic));
    }
    let dtype = Dtype::from_code(bytes[4]).ok_or(RasterFileError::UnknownDtype(bytes[4]))?;
    let width = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]);
    let height = u32::from_le_bytes([bytes[9], bytes[10], bytes[11], bytes[12]]);
    Ok((dtype, width, height))
}

pub fn decode<T: RasterElement>(bytes: &[u8]) -> Result<Raster<T>, RasterFileError> {
    let (dtype, width, height) = read_header(bytes)?;
    if dtype != T::DTYPE {
        return Err(RasterFileError::DtypeMismatch { expected: T::DTYPE, found: dtype });
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = (width as usize) * (height as usize) * dtype.size();
    if payload.len() != expected {
        return Err(RasterFileError::PayloadLength { width, height, expected, got: payload.len() });
    }
    let data = payload.chunks_exact(dtype.size()).map(T::take).collect();
    Ok(Raster::from_vec(width as usize, height as usize, data).expect("payload length checked"))
}

pub fn write_raster<T: RasterElement>(path: impl AsRef<Path>, raster: &Raster<T>) -> io::Result<()> {
    fs::write(path, encode(raster))
}

pub fn read_raster<T: RasterElement>(path: impl AsRef<Path>) -> Result<Raster<T>, RasterFileError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let r = Raster::from_vec(3, 2, vec![1u8, 2, 3, 4, 5, 6]).unwrap();
        let bytes = encode(&r);
        assert_eq!(&bytes[..HEADER_LEN], b"L3DR\x01\x03\x00\x00\x00\x02\x00\x00\x00");
        assert_eq!(&bytes[HEADER_LEN..], &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn f32_payload_is_little_endian_and_keeps_infinity() {
        let r = Raster::from_vec(2, 1, vec![1.5f32, f32::INFINITY]).unwrap();
        let bytes = encode(&r);
        assert_eq!(bytes[4], 4);
        assert_eq!(&bytes[HEADER_LEN..HEADER_LEN + 4], &1.5f32.to_le_bytes());
        assert_eq!(decode::<f32>(&bytes).unwrap(), r);
    }

    #[test]
    fn rejects_malformed_files() {
        let good = encode(&Raster::filled(2, 2, 7u8));
        assert!(matches!(decode::<u8>(&good[..5]), Err(RasterFileError::TooShort(5))));
        assert!(matches!(decode::<u8>(&good[..good.len() - 1]), Err(RasterFileError::PayloadLength { expected: 4, got: 3, .. })));
        assert!(matches!(decode::<f32>(&good), Err(RasterFileError::DtypeMismatch { .. })));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode::<u8>(&bad), Err(RasterFileError::BadMagic(_))));
        bad = good;
        bad[4] = 2;
        assert!(matches!(decode::<u8>(&bad), Err(RasterFileError::UnknownDtype(2))));
    }
}
