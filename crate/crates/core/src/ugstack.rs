//! The UGSTACK container: a JSON header (`<name>.json`) paired with a raw
//! little-endian, C-order payload (`<name>.raw`).
//!
//! The same header + payload can also travel as a single framed blob
//! (`u32` little-endian header length, header JSON, payload), which is how
//! arrays cross the HTTP API.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2, IxDyn};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::volume::{check_spacing, BinaryMask, ProbabilityGroup, Stack};

pub const MAGIC: &str = "UGSTACK1";

/// Content type used for framed UGSTACK payloads over HTTP.
pub const CONTENT_TYPE: &str = "application/x-ugstack";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Stack,
    Probgroup,
    Mask,
    Uncertainty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

impl Kind {
    /// Default element type of the kind.
    fn dtype(self) -> DType {
        match self {
            Kind::Mask => DType::U8,
            _ => DType::F32,
        }
    }

    /// Stacks may also hold 8-bit images.
    fn accepts(self, dtype: DType) -> bool {
        dtype == self.dtype() || (self == Kind::Stack && dtype == DType::U8)
    }

    fn rank(self) -> usize {
        match self {
            Kind::Probgroup => 4,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub magic: String,
    pub kind: Kind,
    /// Outer to inner.
    pub dims: Vec<usize>,
    pub dtype: DType,
    /// One entry per spatial axis, outer to inner, in mm.
    #[serde(default)]
    pub spacing: Vec<f64>,
    /// Free-form metadata carried alongside the array.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Header {
    pub fn new(kind: Kind, dims: Vec<usize>, spacing: Vec<f64>) -> Self {
        Self {
            magic: MAGIC.to_string(),
            kind,
            dims,
            dtype: kind.dtype(),
            spacing,
            extra: Map::new(),
        }
    }

    pub fn payload_len(&self) -> usize {
        self.dims.iter().product::<usize>() * self.dtype.size()
    }

    fn validate(&self) -> Result<()> {
        if self.magic != MAGIC {
            return Err(Error::Header(format!("bad magic {:?}", self.magic)));
        }
        if !self.kind.accepts(self.dtype) {
            return Err(Error::Header(format!(
                "kind {:?} requires dtype {:?}, got {:?}",
                self.kind,
                self.kind.dtype(),
                self.dtype
            )));
        }
        if self.dims.len() != self.kind.rank() {
            return Err(Error::Header(format!(
                "kind {:?} requires {} dims, got {:?}",
                self.kind,
                self.kind.rank(),
                self.dims
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::Header(format!("zero-sized dimension in {:?}", self.dims)));
        }
        if !self.spacing.is_empty() {
            if self.spacing.len() != 3 {
                return Err(Error::Header(format!(
                    "spacing must have 3 entries (slice, row, col), got {:?}",
                    self.spacing
                )));
            }
            check_spacing(&self.spacing)?;
        }
        Ok(())
    }

    /// `(slice mm, row mm, col mm)`, unit spacing when absent.
    pub fn spacing3(&self) -> (f64, f64, f64) {
        match self.spacing.as_slice() {
            [s, r, c] => (*s, *r, *c),
            _ => (1.0, 1.0, 1.0),
        }
    }
}

/// A decoded UGSTACK array.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(ndarray::ArrayD<f32>),
    U8(ndarray::ArrayD<u8>),
}

/// The `.json` and `.raw` paths for a container given by stem or by either file.
pub fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("json"), with("raw"))
}

pub fn decode(header: &Header, payload: &[u8]) -> Result<Payload> {
    header.validate()?;
    let expected = header.payload_len();
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            actual: payload.len(),
        });
    }
    let shape = IxDyn(&header.dims);
    match header.dtype {
        DType::F32 => {
            let values: Vec<f32> = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite value {v} in payload")));
            }
            let array = ndarray::ArrayD::from_shape_vec(shape, values)
                .map_err(|e| Error::Shape(e.to_string()))?;
            Ok(Payload::F32(array))
        }
        DType::U8 => {
            let array = ndarray::ArrayD::from_shape_vec(shape, payload.to_vec())
                .map_err(|e| Error::Shape(e.to_string()))?;
            Ok(Payload::U8(array))
        }
    }
}

fn encode_f32<'a>(values: impl Iterator<Item = &'a f32>, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn spacing_vec(stack_spacing: (f64, f64, f64)) -> Vec<f64> {
    vec![stack_spacing.0, stack_spacing.1, stack_spacing.2]
}

pub fn encode_stack(stack: &Stack) -> (Header, Vec<u8>) {
    let (m, h, w) = stack.dim();
    let (r, c) = stack.pixel_spacing();
    let header = Header::new(Kind::Stack, vec![m, h, w], spacing_vec((stack.slice_spacing(), r, c)));
    (header, encode_f32(stack.data().iter(), m * h * w))
}

pub fn encode_probability_group(pg: &ProbabilityGroup, spacing: (f64, f64, f64)) -> (Header, Vec<u8>) {
    let (n, m, h, w) = pg.data().dim();
    let header = Header::new(Kind::Probgroup, vec![n, m, h, w], spacing_vec(spacing));
    (header, encode_f32(pg.data().iter(), n * m * h * w))
}

pub fn encode_mask(mask: &BinaryMask, spacing: (f64, f64, f64)) -> (Header, Vec<u8>) {
    let (m, h, w) = mask.dim();
    let header = Header::new(Kind::Mask, vec![m, h, w], spacing_vec(spacing));
    (header, mask.data().iter().copied().collect())
}

/// Per-pixel uncertainty (or any other real-valued map), stored as f32.
pub fn encode_uncertainty(map: &Array3<f64>, spacing: (f64, f64, f64)) -> (Header, Vec<u8>) {
    let (m, h, w) = map.dim();
    let header = Header::new(Kind::Uncertainty, vec![m, h, w], spacing_vec(spacing));
    let values: Vec<f32> = map.iter().map(|v| *v as f32).collect();
    (header, encode_f32(values.iter(), m * h * w))
}

/// Decode a stack. An 8-bit stack keeps its raw 0..=255 values.
pub fn stack_from(header: &Header, payload: &[u8]) -> Result<Stack> {
    expect_kind(header, Kind::Stack)?;
    let (s, r, c) = header.spacing3();
    let data = match decode(header, payload)? {
        Payload::F32(a) => into_dim(a)?,
        Payload::U8(a) => into_dim::<u8, ndarray::Ix3>(a)?.mapv(f32::from),
    };
    Stack::new(data, (r, c), s)
}

pub fn probability_group_from(header: &Header, payload: &[u8]) -> Result<ProbabilityGroup> {
    expect_kind(header, Kind::Probgroup)?;
    match decode(header, payload)? {
        Payload::F32(a) => ProbabilityGroup::new(into_dim(a)?),
        Payload::U8(_) => unreachable!("dtype checked against kind"),
    }
}

pub fn mask_from(header: &Header, payload: &[u8]) -> Result<BinaryMask> {
    expect_kind(header, Kind::Mask)?;
    match decode(header, payload)? {
        Payload::U8(a) => BinaryMask::new(into_dim(a)?),
        Payload::F32(_) => unreachable!("dtype checked against kind"),
    }
}

pub fn uncertainty_from(header: &Header, payload: &[u8]) -> Result<Array3<f64>> {
    expect_kind(header, Kind::Uncertainty)?;
    match decode(header, payload)? {
        Payload::F32(a) => Ok(into_dim::<f32, ndarray::Ix3>(a)?.mapv(f64::from)),
        Payload::U8(_) => unreachable!("dtype checked against kind"),
    }
}

fn expect_kind(header: &Header, kind: Kind) -> Result<()> {
    if header.kind == kind {
        Ok(())
    } else {
        Err(Error::Header(format!("expected kind {kind:?}, found {:?}", header.kind)))
    }
}

fn into_dim<T, D: ndarray::Dimension>(a: ndarray::ArrayD<T>) -> Result<ndarray::Array<T, D>> {
    a.into_dimensionality::<D>().map_err(|e| Error::Shape(e.to_string()))
}

pub fn write_container(path: &Path, header: &Header, payload: &[u8]) -> Result<()> {
    let (json_path, raw_path) = container_paths(path);
    let json = serde_json::to_vec_pretty(header).map_err(|e| Error::Header(e.to_string()))?;
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    fs::write(&raw_path, payload).map_err(|e| Error::io(&raw_path, e))?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<(Header, Vec<u8>)> {
    let (json_path, raw_path) = container_paths(path);
    let json = fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Header(e.to_string()))?;
    header.validate()?;
    let payload = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    Ok((header, payload))
}

pub fn read_stack(path: &Path) -> Result<Stack> {
    let (h, p) = read_container(path)?;
    stack_from(&h, &p)
}

pub fn read_probability_group(path: &Path) -> Result<ProbabilityGroup> {
    let (h, p) = read_container(path)?;
    probability_group_from(&h, &p)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let (h, p) = read_container(path)?;
    mask_from(&h, &p)
}

pub fn read_uncertainty(path: &Path) -> Result<Array3<f64>> {
    let (h, p) = read_container(path)?;
    uncertainty_from(&h, &p)
}

pub fn write_stack(stack: &Stack, path: &Path) -> Result<()> {
    let (h, p) = encode_stack(stack);
    write_container(path, &h, &p)
}

pub fn write_probability_group(pg: &ProbabilityGroup, spacing: (f64, f64, f64), path: &Path) -> Result<()> {
    let (h, p) = encode_probability_group(pg, spacing);
    write_container(path, &h, &p)
}

pub fn write_mask(mask: &BinaryMask, spacing: (f64, f64, f64), path: &Path) -> Result<()> {
    let (h, p) = encode_mask(mask, spacing);
    write_container(path, &h, &p)
}

pub fn write_uncertainty(map: &Array3<f64>, spacing: (f64, f64, f64), path: &Path) -> Result<()> {
    let (h, p) = encode_uncertainty(map, spacing);
    write_container(path, &h, &p)
}

/// A single 2D map written as a one-predictor, one-slice probability group.
pub fn write_probability_slice(map: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let (h, w) = map.dim();
    let data = map.mapv(|v| v as f32).into_shape_with_order((1, 1, h, w)).map_err(|e| Error::Shape(e.to_string()))?;
    let pg = ProbabilityGroup::new(data)?;
    write_probability_group(&pg, (1.0, 1.0, 1.0), path)
}

/// Frame a header and payload into one buffer.
pub fn encode_frame(header: &Header, payload: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(4 + json.len() + payload.len());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    out
}

/// Split a framed buffer into its header and payload. The payload length is
/// checked against the header dims.
pub fn decode_frame(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let (header, payload, rest) = split_frame(bytes)?;
    if !rest.is_empty() {
        return Err(Error::PayloadSize {
            expected: header.payload_len(),
            actual: payload.len() + rest.len(),
        });
    }
    Ok((header, payload))
}

/// Split a buffer of back-to-back frames.
pub fn decode_frames(mut bytes: &[u8]) -> Result<Vec<(Header, &[u8])>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (header, payload, rest) = split_frame(bytes)?;
        out.push((header, payload));
        bytes = rest;
    }
    Ok(out)
}

/// The first frame of `bytes` and whatever follows it.
pub fn split_frame(bytes: &[u8]) -> Result<(Header, &[u8], &[u8])> {
    if bytes.len() < 4 {
        return Err(Error::Header("frame shorter than its length prefix".into()));
    }
    let len = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let rest = &bytes[4..];
    if rest.len() < len {
        return Err(Error::Header(format!("frame header claims {len} bytes, {} available", rest.len())));
    }
    let header: Header = serde_json::from_slice(&rest[..len]).map_err(|e| Error::Header(e.to_string()))?;
    header.validate()?;
    let body = &rest[len..];
    let n = header.payload_len();
    if body.len() < n {
        return Err(Error::PayloadSize {
            expected: n,
            actual: body.len(),
        });
    }
    Ok((header, &body[..n], &body[n..]))
}

/// Raw little-endian f32 bytes of a 2D map, C order.
pub fn f32_bytes(map: ArrayView2<'_, f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(map.len() * 4);
    for v in map.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Inverse of [`f32_bytes`].
pub fn f32_map(bytes: &[u8], dim: (usize, usize)) -> Result<Array2<f64>> {
    if bytes.len() != dim.0 * dim.1 * 4 {
        return Err(Error::PayloadSize {
            expected: dim.0 * dim.1 * 4,
            actual: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Array2::from_shape_vec(dim, values).map_err(|e| Error::Shape(e.to_string()))
}
