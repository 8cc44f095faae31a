//! The FMAT binary matrix format and 8-bit previews.
//!
//! Layout: magic `FMAT`, one tag byte (`0x01` real, `0x02` complex pair),
//! rows and cols as little-endian `u32`, then the row-major payload of
//! little-endian `f64` values (complex entries are interleaved re, im).

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::Image;

pub const MAGIC: &[u8; 4] = b"FMAT";
pub const TAG_REAL: u8 = 0x01;
pub const TAG_COMPLEX: u8 = 0x02;
const HEADER_LEN: usize = 13;

/// A decoded FMAT payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Real(Array2<f64>),
    Complex {
        rows: usize,
        cols: usize,
        data: Vec<Complex64>,
    },
}

impl Matrix {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Matrix::Real(a) => a.dim(),
            Matrix::Complex { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn into_real(self) -> Result<Array2<f64>> {
        match self {
            Matrix::Real(a) => Ok(a),
            Matrix::Complex { .. } => Err(Error::Format {
                offset: 4,
                msg: "expected a real matrix, found complex".into(),
            }),
        }
    }

    pub fn into_complex(self) -> Result<Vec<Complex64>> {
        match self {
            Matrix::Complex { data, .. } => Ok(data),
            Matrix::Real(_) => Err(Error::Format {
                offset: 4,
                msg: "expected a complex matrix, found real".into(),
            }),
        }
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!("FMAT matrices must be non-empty, got {rows}x{cols}")));
    }
    if rows > u32::MAX as usize || cols > u32::MAX as usize {
        return Err(Error::Dimension(format!("{rows}x{cols} does not fit the u32 header")));
    }
    Ok(())
}

fn header(tag: u8, rows: usize, cols: usize) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(MAGIC);
    h[4] = tag;
    h[5..9].copy_from_slice(&(rows as u32).to_le_bytes());
    h[9..13].copy_from_slice(&(cols as u32).to_le_bytes());
    h
}

pub fn encode_real(a: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
    let (rows, cols) = a.dim();
    check_dims(rows, cols)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * a.len());
    out.extend_from_slice(&header(TAG_REAL, rows, cols));
    for x in a.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn encode_complex(rows: usize, cols: usize, data: &[Complex64]) -> Result<Vec<u8>> {
    check_dims(rows, cols)?;
    if data.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{} complex values for a {rows}x{cols} matrix",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * data.len());
    out.extend_from_slice(&header(TAG_COMPLEX, rows, cols));
    for z in data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Matrix> {
    let fmt = |offset: usize, msg: String| Error::Format {
        offset: offset as u64,
        msg,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fmt(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fmt(0, format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    let tag = bytes[4];
    let width = match tag {
        TAG_REAL => 8usize,
        TAG_COMPLEX => 16,
        other => return Err(fmt(4, format!("unknown element tag 0x{other:02x}"))),
    };
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!("FMAT matrices must be non-empty, got {rows}x{cols}")));
    }
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| fmt(5, format!("dimension overflow: {rows}x{cols}")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < payload {
        return Err(fmt(
            HEADER_LEN + body.len(),
            format!("truncated payload: expected {payload} bytes, found {}", body.len()),
        ));
    }
    if body.len() > payload {
        return Err(fmt(HEADER_LEN + payload, "trailing bytes after payload".into()));
    }
    let f = |chunk: &[u8]| f64::from_le_bytes(chunk.try_into().unwrap());
    match tag {
        TAG_REAL => {
            let vals: Vec<f64> = body.chunks_exact(8).map(f).collect();
            Ok(Matrix::Real(Array2::from_shape_vec((rows, cols), vals).unwrap()))
        }
        _ => {
            let data = body
                .chunks_exact(16)
                .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
                .collect();
            Ok(Matrix::Complex { rows, cols, data })
        }
    }
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let bytes = match m {
        Matrix::Real(a) => encode_real(a.view())?,
        Matrix::Complex { rows, cols, data } => encode_complex(*rows, *cols, data)?,
    };
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_real(path: impl AsRef<Path>, a: ArrayView2<'_, f64>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_real(a)?).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    Image::unit(read_matrix(path)?.into_real()?)
}

/// Map `[0, bound]` linearly onto `0..=255`, rounding half up.
pub fn to_gray8(img: &Image) -> Vec<u8> {
    let b = img.bound();
    img.data()
        .iter()
        .map(|&x| {
            let s = (x / b).clamp(0.0, 1.0) * 255.0;
            (s + 0.5).floor() as u8
        })
        .collect()
}

/// Binary PGM (P5).
pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    bytes.extend(to_gray8(img));
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_png(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.cols() as u32, img.rows() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let io_err = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(io_err)?;
    writer.write_image_data(&to_gray8(img)).map_err(io_err)?;
    writer.finish().map_err(io_err)?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn round_trips_small_matrix() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let bytes = encode_real(a.view()).unwrap();
        assert_eq!(bytes.len(), 13 + 32);
        assert_eq!(decode(&bytes).unwrap(), Matrix::Real(a));
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = encode_real(array![[1.0]].view()).unwrap();
        bytes[..4].copy_from_slice(b"XMAT");
        match decode(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_dims() {
        let a = Array2::<f64>::zeros((0, 5));
        assert!(matches!(encode_real(a.view()), Err(Error::Dimension(_))));
        let mut bytes = header(TAG_REAL, 0, 5).to_vec();
        bytes.extend_from_slice(&[0u8; 8]);
        assert!(matches!(decode(&bytes), Err(Error::Dimension(_))));
    }

    #[test]
    fn reports_truncation_offset() {
        let bytes = encode_real(array![[1.0, 2.0]].view()).unwrap();
        match decode(&bytes[..bytes.len() - 3]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, (bytes.len() - 3) as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn huge_dims_do_not_allocate() {
        let mut bytes = header(TAG_COMPLEX, u32::MAX as usize, u32::MAX as usize).to_vec();
        bytes.extend_from_slice(&[0u8; 16]);
        assert!(matches!(decode(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn gray8_rounds_half_up() {
        let img = Image::unit(array![[0.0, 0.5, 1.0, 2.0 / 510.0]]).unwrap();
        assert_eq!(to_gray8(&img), vec![0, 128, 255, 1]);
    }

    #[test]
    fn complex_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.fmat");
        let m = Matrix::Complex {
            rows: 3,
            cols: 1,
            data: vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.0), Complex64::new(-0.0, 7.25)],
        };
        write_matrix(&p, &m).unwrap();
        let back = read_matrix(&p).unwrap();
        assert_eq!(encode_complex(3, 1, &back.into_complex().unwrap()).unwrap(), std::fs::read(&p).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn write_read_preserves_bits(rows in 1usize..6, cols in 1usize..6, bits in proptest::collection::vec(any::<u64>(), 36)) {
            let vals: Vec<f64> = bits[..rows * cols].iter().map(|b| f64::from_bits(*b)).collect();
            let a = Array2::from_shape_vec((rows, cols), vals).unwrap();
            let bytes = encode_real(a.view()).unwrap();
            let back = decode(&bytes).unwrap().into_real().unwrap();
            for (x, y) in a.iter().zip(back.iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            prop_assert_eq!(encode_real(back.view()).unwrap(), bytes);
        }
    }
}
