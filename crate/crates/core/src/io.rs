//! JSON sidecar + raw little-endian payload array format.
//!
//! `<stem>.json` holds an [`ArrayHeader`]; `<stem>.bin` holds interleaved
//! `(re, im)` IEEE-754 doubles, dims read left-to-right from outermost to
//! innermost (coil-major, then row-major).

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ComplexImage, MultiCoilImage, MultiCoilKSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    C64,
    C128,
}

impl Dtype {
    fn bytes_per_element(self) -> usize {
        match self {
            Dtype::C64 => 8,
            Dtype::C128 => 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub dims: Vec<usize>,
    pub dtype: Dtype,
    pub order: String,
    pub role: String,
}

impl ArrayHeader {
    pub fn new(dims: Vec<usize>, role: impl Into<String>) -> Self {
        ArrayHeader {
            dims,
            dtype: Dtype::C128,
            order: "row-major".into(),
            role: role.into(),
        }
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().product()
    }
}

pub mod roles {
    pub const IMAGE: &str = "image";
    pub const MULTICOIL: &str = "multicoil-image";
    pub const KSPACE: &str = "kspace";
    pub const MASK: &str = "mask";
    pub const SENSITIVITY: &str = "sensitivity";
    pub const SPIRIT_KERNELS: &str = "spirit-kernels";
    pub const SPIRIT_WEIGHTS: &str = "spirit-weights";
}

/// Borrowed view of one of the three container types.
#[derive(Clone, Copy, Debug)]
pub enum ArrayRef<'a> {
    Image(&'a ComplexImage),
    MultiCoil(&'a MultiCoilImage),
    KSpace(&'a MultiCoilKSpace),
}

/// Owned result of [`load_array`].
#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    Image(ComplexImage),
    MultiCoil(MultiCoilImage),
    KSpace(MultiCoilKSpace),
}

impl<'a> From<&'a ComplexImage> for ArrayRef<'a> {
    fn from(v: &'a ComplexImage) -> Self {
        ArrayRef::Image(v)
    }
}

impl<'a> From<&'a MultiCoilImage> for ArrayRef<'a> {
    fn from(v: &'a MultiCoilImage) -> Self {
        ArrayRef::MultiCoil(v)
    }
}

impl<'a> From<&'a MultiCoilKSpace> for ArrayRef<'a> {
    fn from(v: &'a MultiCoilKSpace) -> Self {
        ArrayRef::KSpace(v)
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn sidecar_path(stem: impl AsRef<Path>) -> PathBuf {
    with_suffix(stem.as_ref(), ".json")
}

pub fn payload_path(stem: impl AsRef<Path>) -> PathBuf {
    with_suffix(stem.as_ref(), ".bin")
}

/// Writes an arbitrary array under `header`. The payload is always c128.
pub fn save_raw(stem: impl AsRef<Path>, header: &ArrayHeader, data: &[Complex64]) -> Result<()> {
    let stem = stem.as_ref();
    if header.dtype != Dtype::C128 {
        return Err(Error::InvalidArgument("only c128 payloads are written".into()));
    }
    if header.dims.is_empty() || header.dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("invalid dims {:?}", header.dims)));
    }
    if header.element_count() != data.len() {
        return Err(Error::Shape(format!(
            "header dims {:?} describe {} elements but {} were given",
            header.dims,
            header.element_count(),
            data.len()
        )));
    }
    let json_path = sidecar_path(stem);
    let bin_path = payload_path(stem);
    let json = serde_json::to_string(header).expect("header serializes");
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let mut bytes = Vec::with_capacity(data.len() * 16);
    for v in data {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))
}

pub fn load_raw(stem: impl AsRef<Path>) -> Result<(ArrayHeader, Vec<Complex64>)> {
    let stem = stem.as_ref();
    let json_path = sidecar_path(stem);
    let bin_path = payload_path(stem);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let header: ArrayHeader =
        serde_json::from_str(&text).map_err(|e| Error::format(&json_path, e.to_string()))?;
    if header.order != "row-major" {
        return Err(Error::format(&json_path, format!("unsupported order {:?}", header.order)));
    }
    if header.dims.is_empty() || header.dims.contains(&0) {
        return Err(Error::format(&json_path, format!("dims must be positive, got {:?}", header.dims)));
    }
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let width = header.dtype.bytes_per_element();
    let expected = header.element_count() * width;
    if bytes.len() != expected {
        return Err(Error::format(
            &bin_path,
            format!(
                "payload has {} bytes, dims {:?} ({:?}) require {}",
                bytes.len(),
                header.dims,
                header.dtype,
                expected
            ),
        ));
    }
    let data = match header.dtype {
        Dtype::C128 => bytes
            .chunks_exact(16)
            .map(|b| {
                let re = f64::from_le_bytes(b[..8].try_into().unwrap());
                let im = f64::from_le_bytes(b[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect(),
        Dtype::C64 => bytes
            .chunks_exact(8)
            .map(|b| {
                let re = f32::from_le_bytes(b[..4].try_into().unwrap());
                let im = f32::from_le_bytes(b[4..].try_into().unwrap());
                Complex64::new(re as f64, im as f64)
            })
            .collect(),
    };
    Ok((header, data))
}

/// Saves with the container's default role.
pub fn save_array<'a>(stem: impl AsRef<Path>, array: impl Into<ArrayRef<'a>>) -> Result<()> {
    let array = array.into();
    let role = match array {
        ArrayRef::Image(_) => roles::IMAGE,
        ArrayRef::MultiCoil(_) => roles::MULTICOIL,
        ArrayRef::KSpace(_) => roles::KSPACE,
    };
    save_array_with_role(stem, array, role)
}

pub fn save_array_with_role<'a>(
    stem: impl AsRef<Path>,
    array: impl Into<ArrayRef<'a>>,
    role: &str,
) -> Result<()> {
    let (dims, data) = match array.into() {
        ArrayRef::Image(img) => (vec![img.rows(), img.cols()], img.data().to_vec()),
        ArrayRef::MultiCoil(x) => (vec![x.num_coils(), x.rows(), x.cols()], x.to_flat()),
        ArrayRef::KSpace(y) => (vec![y.num_coils(), y.rows(), y.cols()], y.to_flat()),
    };
    save_raw(stem, &ArrayHeader::new(dims, role), &data)
}

/// Loads a 2-D array as an image and a 3-D array as a coil stack; the
/// `kspace` role selects [`ArrayData::KSpace`].
pub fn load_array(stem: impl AsRef<Path>) -> Result<ArrayData> {
    let stem = stem.as_ref();
    let (header, data) = load_raw(stem)?;
    let bad = |e: Error| Error::format(sidecar_path(stem), e.to_string());
    match header.dims.as_slice() {
        &[rows, cols] => Ok(ArrayData::Image(ComplexImage::from_vec(rows, cols, data).map_err(bad)?)),
        &[coils, rows, cols] if header.role == roles::KSPACE => Ok(ArrayData::KSpace(
            MultiCoilKSpace::from_flat(coils, rows, cols, data).map_err(bad)?,
        )),
        &[coils, rows, cols] => Ok(ArrayData::MultiCoil(
            MultiCoilImage::from_flat(coils, rows, cols, data).map_err(bad)?,
        )),
        dims => Err(Error::format(
            sidecar_path(stem),
            format!("expected 2 or 3 dims, got {dims:?}"),
        )),
    }
}

impl ArrayData {
    pub fn into_image(self) -> Option<ComplexImage> {
        match self {
            ArrayData::Image(x) => Some(x),
            _ => None,
        }
    }

    /// Any 3-D stack, regardless of role, as coil images.
    pub fn into_multicoil(self) -> Option<MultiCoilImage> {
        match self {
            ArrayData::MultiCoil(x) => Some(x),
            ArrayData::KSpace(y) => MultiCoilImage::new(y.into_coils()).ok(),
            ArrayData::Image(_) => None,
        }
    }

    pub fn into_kspace(self) -> Option<MultiCoilKSpace> {
        match self {
            ArrayData::KSpace(y) => Some(y),
            ArrayData::MultiCoil(x) => MultiCoilKSpace::new(x.into_coils()).ok(),
            ArrayData::Image(_) => None,
        }
    }
}
