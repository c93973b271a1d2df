//! Little-endian binary containers.
//!
//! Cube files (`SCUB`):
//!
//! ```text
//! magic   "SCUB"            4 bytes
//! version u16               currently 1
//! dtype   u8                1 = f32, 2 = f64
//! T H W C u32 x 4
//! lambda  f64 x C           nanometers, strictly increasing
//! payload dtype x T*H*W*C   row-major T,H,W,C
//! ```
//!
//! Measurement files (`SMES`) share the scheme with three extents `T H W'`
//! and no wavelength table.

use std::fs;
use std::path::Path;

use crate::cube::{CodedMask, MaskKind, MeasurementSequence, SpectralCube};
use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const CUBE_MAGIC: &[u8; 4] = b"SCUB";
pub const MEAS_MAGIC: &[u8; 4] = b"SMES";
pub const FORMAT_VERSION: u16 = 1;

fn push_payload<F: Scalar>(out: &mut Vec<u8>, data: &[F]) {
    out.reserve(data.len() * F::DTYPE.size());
    for &v in data {
        v.write_le(out);
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_cube<F: Scalar>(cube: &SpectralCube<F>) -> Vec<u8> {
    let (t, h, w, c) = cube.dims();
    let mut out = Vec::with_capacity(7 + 16 + 8 * c + cube.values().len() * F::DTYPE.size());
    out.extend_from_slice(CUBE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(F::DTYPE.code());
    for d in [t, h, w, c] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &lambda in cube.wavelengths() {
        out.extend_from_slice(&lambda.to_le_bytes());
    }
    push_payload(&mut out, cube.values().data());
    out
}

pub fn save_cube<F: Scalar>(cube: &SpectralCube<F>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_cube(cube))
}

pub fn encode_measurement<F: Scalar>(meas: &MeasurementSequence<F>) -> Vec<u8> {
    let mut out = Vec::with_capacity(19 + meas.values().len() * F::DTYPE.size());
    out.extend_from_slice(MEAS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(F::DTYPE.code());
    for d in [meas.frames(), meas.height(), meas.width_prime()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    push_payload(&mut out, meas.values().data());
    out
}

pub fn save_measurement<F: Scalar>(
    meas: &MeasurementSequence<F>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(path.as_ref(), &encode_measurement(meas))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Header {
                path: self.path.to_path_buf(),
                reason: format!("file ends inside {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    /// Magic, version and dtype.
    fn preamble(&mut self, magic: &[u8; 4]) -> Result<DType> {
        if self.bytes.len() < 4 || &self.bytes[..4] != magic {
            return Err(Error::UnrecognizedFormat {
                path: self.path.to_path_buf(),
            });
        }
        self.pos = 4;
        let v = self.take(2, "version")?;
        let version = u16::from_le_bytes([v[0], v[1]]);
        if version != FORMAT_VERSION {
            return Err(Error::Header {
                path: self.path.to_path_buf(),
                reason: format!("unsupported version {version}"),
            });
        }
        let code = self.take(1, "dtype")?[0];
        DType::from_code(code).ok_or_else(|| Error::Header {
            path: self.path.to_path_buf(),
            reason: format!("unknown dtype code {code}"),
        })
    }

    fn payload<F: Scalar>(&mut self, dtype: DType, count: usize) -> Result<Vec<F>> {
        let rest = &self.bytes[self.pos..];
        let expected = count
            .checked_mul(dtype.size())
            .ok_or_else(|| Error::Header {
                path: self.path.to_path_buf(),
                reason: "extent overflow".into(),
            })?;
        if rest.len() != expected {
            return Err(Error::PayloadLength {
                path: self.path.to_path_buf(),
                expected,
                found: rest.len(),
            });
        }
        let values = match dtype {
            DType::F32 => rest
                .chunks_exact(4)
                .map(|b| F::lit(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64))
                .collect(),
            DType::F64 => rest
                .chunks_exact(8)
                .map(|b| F::lit(f64::from_le_bytes(b.try_into().expect("8 bytes"))))
                .collect(),
        };
        self.pos = self.bytes.len();
        Ok(values)
    }
}

pub fn decode_cube<F: Scalar>(bytes: &[u8], path: &Path) -> Result<SpectralCube<F>> {
    let mut r = Reader { bytes, pos: 0, path };
    let dtype = r.preamble(CUBE_MAGIC)?;
    let t = r.u32("extents")?;
    let h = r.u32("extents")?;
    let w = r.u32("extents")?;
    let c = r.u32("extents")?;
    let mut wavelengths = Vec::with_capacity(c);
    for _ in 0..c {
        wavelengths.push(r.f64("wavelength table")?);
    }
    let data = r.payload(dtype, t * h * w * c)?;
    SpectralCube::new(Tensor::from_vec(&[t, h, w, c], data)?, wavelengths)
}

pub fn load_cube<F: Scalar>(path: impl AsRef<Path>) -> Result<SpectralCube<F>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes, path)
}

pub fn decode_measurement<F: Scalar>(bytes: &[u8], path: &Path) -> Result<MeasurementSequence<F>> {
    let mut r = Reader { bytes, pos: 0, path };
    let dtype = r.preamble(MEAS_MAGIC)?;
    let t = r.u32("extents")?;
    let h = r.u32("extents")?;
    let w = r.u32("extents")?;
    let data = r.payload(dtype, t * h * w)?;
    MeasurementSequence::new(Tensor::from_vec(&[t, h, w], data)?)
}

pub fn load_measurement<F: Scalar>(path: impl AsRef<Path>) -> Result<MeasurementSequence<F>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_measurement(&bytes, path)
}

/// Masks are stored as single-frame, single-channel cubes. The wavelength
/// slot carries the mask-kind code (1 random-binary, 2 notch, 3 sparse-grid).
pub fn save_mask<F: Scalar>(mask: &CodedMask<F>, path: impl AsRef<Path>) -> Result<()> {
    let code = match mask.kind() {
        MaskKind::RandomBinary => 1.0,
        MaskKind::Notch => 2.0,
        MaskKind::SparseGrid => 3.0,
    };
    let (h, w) = (mask.height(), mask.width());
    let values = Tensor::from_vec(&[1, h, w, 1], mask.transmission().data().to_vec())?;
    save_cube(&SpectralCube::new(values, vec![code])?, path)
}

pub fn load_mask<F: Scalar>(path: impl AsRef<Path>) -> Result<CodedMask<F>> {
    let path = path.as_ref();
    let cube: SpectralCube<F> = load_cube(path)?;
    let (t, h, w, c) = cube.dims();
    if t != 1 || c != 1 {
        return Err(Error::Shape(format!(
            "{}: mask file must be 1 x H x W x 1, got {t} x {h} x {w} x {c}",
            path.display()
        )));
    }
    let kind = match cube.wavelengths()[0] as i64 {
        2 => MaskKind::Notch,
        3 => MaskKind::SparseGrid,
        _ => MaskKind::RandomBinary,
    };
    CodedMask::new(kind, cube.into_values().reshape(&[h, w])?)
}

/// Stores an arbitrary tensor (rank <= 4) as a cube whose wavelength table is
/// the channel index. Used by the weight bundle.
pub fn save_tensor<F: Scalar>(tensor: &Tensor<F>, path: impl AsRef<Path>) -> Result<()> {
    let shape = tensor.shape();
    if shape.len() > 4 {
        return Err(Error::Shape(format!(
            "tensor rank {} does not fit a cube container",
            shape.len()
        )));
    }
    let mut dims = [1usize; 4];
    dims[4 - shape.len()..].copy_from_slice(shape);
    let c = dims[3];
    let values = Tensor::from_vec(&dims, tensor.data().to_vec())?;
    save_cube(
        &SpectralCube::new(values, (0..c).map(|i| i as f64).collect())?,
        path,
    )
}

pub fn load_tensor<F: Scalar>(path: impl AsRef<Path>, shape: &[usize]) -> Result<Tensor<F>> {
    let path = path.as_ref();
    let cube: SpectralCube<F> = load_cube(path)?;
    let len: usize = shape.iter().product();
    if cube.values().len() != len {
        return Err(Error::Shape(format!(
            "{}: holds {} values, manifest shape {:?} needs {}",
            path.display(),
            cube.values().len(),
            shape,
            len
        )));
    }
    cube.into_values().reshape(shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::default_wavelengths;

    #[test]
    fn zero_cube_layout() {
        let cube = SpectralCube::<f64>::zeros(1, 2, 2, vec![550.0]).unwrap();
        let bytes = encode_cube(&cube);
        assert_eq!(&bytes[..4], b"SCUB");
        assert_eq!(bytes.len(), 4 + 2 + 1 + 16 + 8 + 4 * 8);
        let back: SpectralCube<f64> = decode_cube(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, cube);
    }

    #[test]
    fn header_declares_full_scale_geometry() {
        let cube = SpectralCube::<f32>::zeros(3, 256, 256, default_wavelengths(30)).unwrap();
        let bytes = encode_cube(&cube);
        let dims: Vec<u32> = bytes[7..23]
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        assert_eq!(dims, vec![3, 256, 256, 30]);
        assert_eq!(bytes[6], DType::F32.code());
    }

    #[test]
    fn truncated_payload() {
        let cube = SpectralCube::<f64>::zeros(1, 2, 2, vec![550.0]).unwrap();
        let mut bytes = encode_cube(&cube);
        bytes.truncate(bytes.len() - 8);
        let err = decode_cube::<f64>(&bytes, Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("payload length mismatch"), "{err}");
    }

    #[test]
    fn bad_magic() {
        let cube = SpectralCube::<f64>::zeros(1, 1, 1, vec![550.0]).unwrap();
        let mut bytes = encode_cube(&cube);
        bytes[..4].copy_from_slice(b"XXXX");
        let err = decode_cube::<f64>(&bytes, Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("unrecognized format"), "{err}");
    }

    #[test]
    fn f32_payload_widens_exactly() {
        let cube = SpectralCube::<f32>::from_fn([1, 2, 3, 2], vec![500.0, 600.0], |i| {
            0.1 * (i[1] * 6 + i[2] * 2 + i[3]) as f32
        })
        .unwrap();
        let bytes = encode_cube(&cube);
        let wide: SpectralCube<f64> = decode_cube(&bytes, Path::new("mem")).unwrap();
        for (a, b) in cube.values().data().iter().zip(wide.values().data()) {
            assert_eq!(*a as f64, *b);
        }
    }

    #[test]
    fn measurement_roundtrip() {
        let meas = MeasurementSequence::new(Tensor::<f64>::from_fn(&[2, 3, 5], |i| {
            (i[0] + i[1] * i[2]) as f64 / 7.0
        }))
        .unwrap();
        let bytes = encode_measurement(&meas);
        assert_eq!(&bytes[..4], b"SMES");
        let back: MeasurementSequence<f64> = decode_measurement(&bytes, Path::new("m")).unwrap();
        assert_eq!(back, meas);
        assert!(decode_cube::<f64>(&bytes, Path::new("m")).is_err());
    }
}
