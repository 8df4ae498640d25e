//! Single-file binary container for cubes, raw captures, codec artifacts and
//! normal stacks.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "SPSI" | version u16 | kind u8 | width u32 | height u32
//! channels u16 | components u16 | dtype u8 | wavelengths f32 × channels
//! kind-specific block | data | bit-packed mask (LSB first)
//! ```
//!
//! Data is ordered channel, component, row, column (column fastest). A zero
//! wavelength means unspecified; an all-zero table reads back as empty.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::analysis::NormalMapStack;
use crate::camera::{BayerColor, MosaicCell, MosaicLayout, RawCapture, RawLayout, TaggedFrame};
use crate::codecs::inr::{inr_from_parts, InrConfig, InrModel};
use crate::codecs::pca::{PatchMode, PcaCodebook};
use crate::error::{Error, Result};
use crate::image::{Frame, StokesImage};

pub const MAGIC: [u8; 4] = *b"SPSI";
pub const VERSION: u16 = 1;
/// Fixed header bytes before the wavelength table.
pub const FIXED_HEADER_LEN: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    StokesCube = 0,
    RawCapture = 1,
    PcaCodebook = 2,
    InrModel = 3,
    NormalStack = 4,
}

impl Kind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Kind::StokesCube,
            1 => Kind::RawCapture,
            2 => Kind::PcaCodebook,
            3 => Kind::InrModel,
            4 => Kind::NormalStack,
            _ => return Err(Error::Corrupt(format!("unknown kind {v}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            _ => Err(Error::Corrupt(format!("unknown dtype {v}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpsiHeader {
    pub version: u16,
    pub kind: Kind,
    pub width: u32,
    pub height: u32,
    pub channels: u16,
    pub components: u16,
    pub dtype: Dtype,
    pub wavelengths: Vec<f32>,
}

impl SpsiHeader {
    pub fn byte_len(&self) -> usize {
        FIXED_HEADER_LEN + 4 * self.channels as usize
    }

    /// Data plus mask bytes of a cube or normal stack with this header.
    pub fn image_payload_len(&self) -> u64 {
        let plane = self.width as u64 * self.height as u64;
        let data = plane * self.channels as u64 * self.components as u64 * self.dtype.size() as u64;
        let mask_bits = match self.kind {
            Kind::NormalStack => plane,
            _ => plane * self.channels as u64,
        };
        data + mask_bits.div_ceil(8)
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&self.components.to_le_bytes());
        out.push(self.dtype as u8);
        for w in &self.wavelengths {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
}

/// Anything the container holds.
#[derive(Clone, Debug, PartialEq)]
pub enum SpsiObject {
    Cube(StokesImage),
    Raw(RawCapture),
    Codebook(PcaCodebook),
    Inr(InrModel),
    Normals(NormalMapStack),
}

impl SpsiObject {
    pub fn kind(&self) -> Kind {
        match self {
            SpsiObject::Cube(_) => Kind::StokesCube,
            SpsiObject::Raw(_) => Kind::RawCapture,
            SpsiObject::Codebook(_) => Kind::PcaCodebook,
            SpsiObject::Inr(_) => Kind::InrModel,
            SpsiObject::Normals(_) => Kind::NormalStack,
        }
    }
}

fn to_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds the container limit")))
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds the container limit")))
}

fn wavelength_table(w: &[f32], channels: usize) -> Result<Vec<f32>> {
    if w.is_empty() {
        Ok(vec![0.0; channels])
    } else if w.len() == channels {
        Ok(w.to_vec())
    } else {
        Err(Error::Dimension(format!(
            "{} wavelengths for {channels} channels",
            w.len()
        )))
    }
}

fn push_bits(out: &mut Vec<u8>, bits: impl Iterator<Item = bool>) {
    let mut byte = 0u8;
    let mut n = 0;
    for b in bits {
        if b {
            byte |= 1 << n;
        }
        n += 1;
        if n == 8 {
            out.push(byte);
            byte = 0;
            n = 0;
        }
    }
    if n > 0 {
        out.push(byte);
    }
}

fn push_f32s(out: &mut Vec<u8>, v: &[f32]) {
    out.reserve(v.len() * 4);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn push_floats(out: &mut Vec<u8>, v: impl IntoIterator<Item = f64>, dtype: Dtype) {
    for x in v {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
}

fn push_dims(out: &mut Vec<u8>, dims: &[u64]) {
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
}

/// Serializes an object. INR parameters are stored at `inr_dtype`; every
/// other payload has a fixed element type.
pub fn encode(obj: &SpsiObject, inr_dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match obj {
        SpsiObject::Cube(img) => {
            img.check()?;
            SpsiHeader {
                version: VERSION,
                kind: Kind::StokesCube,
                width: to_u32(img.width, "width")?,
                height: to_u32(img.height, "height")?,
                channels: to_u16(img.channels, "channels")?,
                components: 4,
                dtype: Dtype::F32,
                wavelengths: wavelength_table(&img.wavelengths, img.channels)?,
            }
            .write(&mut out);
            push_f32s(&mut out, &img.data);
            push_bits(&mut out, img.mask.iter().copied());
        }
        SpsiObject::Normals(st) => {
            st.check()?;
            SpsiHeader {
                version: VERSION,
                kind: Kind::NormalStack,
                width: to_u32(st.width, "width")?,
                height: to_u32(st.height, "height")?,
                channels: to_u16(st.channels, "channels")?,
                components: 3,
                dtype: Dtype::F32,
                wavelengths: vec![0.0; st.channels],
            }
            .write(&mut out);
            push_f32s(&mut out, &st.data);
            push_bits(&mut out, st.mask.iter().copied());
        }
        SpsiObject::Raw(raw) => encode_raw(raw, &mut out)?,
        SpsiObject::Codebook(cb) => {
            SpsiHeader {
                version: VERSION,
                kind: Kind::PcaCodebook,
                width: to_u32(cb.patch, "patch")?,
                height: to_u32(cb.patch, "patch")?,
                channels: to_u16(cb.channels, "channels")?,
                components: match cb.mode {
                    PatchMode::Joint => 4,
                    PatchMode::Element(_) => 1,
                },
                dtype: Dtype::F64,
                wavelengths: vec![0.0; cb.channels],
            }
            .write(&mut out);
            let (d, k) = cb.basis.shape();
            push_dims(
                &mut out,
                &[d as u64, k as u64, cb.mode.code() as u64, cb.samples as u64],
            );
            push_floats(&mut out, cb.mean.iter().copied(), Dtype::F64);
            push_floats(&mut out, cb.basis.iter().copied(), Dtype::F64);
            push_floats(&mut out, cb.sigma.iter().copied(), Dtype::F64);
            push_floats(&mut out, [cb.total_variance], Dtype::F64);
        }
        SpsiObject::Inr(m) => {
            let dim = |v: f64| v as usize + 1;
            SpsiHeader {
                version: VERSION,
                kind: Kind::InrModel,
                width: to_u32(dim(m.coord_max[0]), "width")?,
                height: to_u32(dim(m.coord_max[1]), "height")?,
                channels: to_u16(dim(m.coord_max[2]), "channels")?,
                components: 4,
                dtype: inr_dtype,
                wavelengths: vec![0.0; dim(m.coord_max[2])],
            }
            .write(&mut out);
            let c = m.config;
            push_dims(
                &mut out,
                &[
                    c.layers as u64,
                    c.hidden as u64,
                    c.feature_dim as u64,
                    c.k_spatial as u64,
                    c.k_channel as u64,
                    m.params.len() as u64,
                ],
            );
            push_floats(&mut out, m.params.iter().copied(), inr_dtype);
        }
    }
    Ok(out)
}

fn encode_raw(raw: &RawCapture, out: &mut Vec<u8>) -> Result<()> {
    let plane = raw.width * raw.height;
    let (channels, components, tag) = match &raw.layout {
        RawLayout::Sequential { channels, configs } => (*channels, *configs, 0u8),
        RawLayout::Mosaic(_) => (3, 16, 1u8),
    };
    for f in &raw.frames {
        if f.frame.width != raw.width || f.frame.height != raw.height || f.valid.len() != plane {
            return Err(Error::Dimension("raw frame does not match capture dimensions".into()));
        }
    }
    SpsiHeader {
        version: VERSION,
        kind: Kind::RawCapture,
        width: to_u32(raw.width, "width")?,
        height: to_u32(raw.height, "height")?,
        channels: to_u16(channels, "channels")?,
        components: to_u16(components, "configurations")?,
        dtype: Dtype::F32,
        wavelengths: wavelength_table(&raw.wavelengths, channels)?,
    }
    .write(out);
    out.extend_from_slice(&raw.black_level.to_le_bytes());
    out.extend_from_slice(&raw.saturation_level.to_le_bytes());
    out.push(tag);
    if let RawLayout::Mosaic(layout) = &raw.layout {
        for cell in &layout.cells {
            out.push(match cell.color {
                BayerColor::R => 0,
                BayerColor::G => 1,
                BayerColor::B => 2,
            });
            for v in [cell.polarizer_axis, cell.retarder_axis, cell.retardance] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.extend_from_slice(&to_u32(raw.frames.len(), "frame count")?.to_le_bytes());
    for f in &raw.frames {
        out.extend_from_slice(&to_u16(f.channel, "frame channel")?.to_le_bytes());
        out.extend_from_slice(&to_u16(f.config, "frame configuration")?.to_le_bytes());
    }
    for f in &raw.frames {
        push_f32s(out, &f.frame.data);
    }
    push_bits(out, raw.frames.iter().flat_map(|f| f.valid.iter().copied()));
    Ok(())
}

/// Bounds-checked little-endian reader over the whole file.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(Error::Truncated {
                expected: (self.pos as u64).saturating_add(n as u64),
                found: self.buf.len() as u64,
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    /// Fails up front if fewer than `n` bytes remain.
    fn need(&self, n: u64) -> Result<()> {
        let expected = self.pos as u64 + n;
        if expected > self.buf.len() as u64 {
            return Err(Error::Truncated {
                expected,
                found: self.buf.len() as u64,
            });
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        self.need(n as u64 * 4)?;
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn floats(&mut self, n: usize, dtype: Dtype) -> Result<Vec<f64>> {
        self.need(n as u64 * dtype.size() as u64)?;
        let bytes = self.take(n * dtype.size())?;
        Ok(match dtype {
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        })
    }

    fn bits(&mut self, n: usize) -> Result<Vec<bool>> {
        let bytes = self.take(n.div_ceil(8))?;
        if !n.is_multiple_of(8) && bytes[n / 8] >> (n % 8) != 0 {
            return Err(Error::Corrupt("nonzero mask padding".into()));
        }
        Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
    }

    fn dims(&mut self, expected: usize) -> Result<Vec<u64>> {
        let n = self.u32()? as usize;
        if n != expected {
            return Err(Error::Corrupt(format!(
                "dimension table has {n} entries, expected {expected}"
            )));
        }
        (0..n).map(|_| self.u64()).collect()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn usize_of(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Corrupt(format!("{what} {v} too large")))
}

pub fn parse_header(buf: &[u8], path: &Path) -> Result<SpsiHeader> {
    let mut r = Reader { buf, pos: 0 };
    if buf.len() < 4 || buf[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    r.take(4)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let kind = Kind::from_u8(r.u8()?)?;
    let width = r.u32()?;
    let height = r.u32()?;
    let channels = r.u16()?;
    let components = r.u16()?;
    let dtype = Dtype::from_u8(r.u8()?)?;
    let wavelengths = r.f32s(channels as usize)?;
    Ok(SpsiHeader {
        version,
        kind,
        width,
        height,
        channels,
        components,
        dtype,
        wavelengths,
    })
}

fn table_or_empty(w: Vec<f32>) -> Vec<f32> {
    if w.iter().all(|&v| v == 0.0) {
        Vec::new()
    } else {
        w
    }
}

/// Parses a serialized object; `path` is only used in error messages.
pub fn decode(buf: &[u8], path: &Path) -> Result<SpsiObject> {
    let h = parse_header(buf, path)?;
    let mut r = Reader { buf, pos: h.byte_len() };
    let (w, ht, ch) = (h.width as usize, h.height as usize, h.channels as usize);
    let obj = match h.kind {
        Kind::StokesCube | Kind::NormalStack => {
            let comps = if h.kind == Kind::StokesCube { 4 } else { 3 };
            if h.components != comps || h.dtype != Dtype::F32 {
                return Err(Error::Corrupt(format!(
                    "image kind with {} components and dtype {:?}",
                    h.components, h.dtype
                )));
            }
            r.need(h.image_payload_len())?;
            let data = r.f32s(w * ht * ch * comps as usize)?;
            if h.kind == Kind::StokesCube {
                let mask = r.bits(w * ht * ch)?;
                let img = StokesImage {
                    width: w,
                    height: ht,
                    channels: ch,
                    wavelengths: table_or_empty(h.wavelengths),
                    data,
                    mask,
                };
                img.check().map_err(|e| Error::Corrupt(e.to_string()))?;
                SpsiObject::Cube(img)
            } else {
                let mask = r.bits(w * ht)?;
                SpsiObject::Normals(
                    NormalMapStack::new(w, ht, ch, data, mask).map_err(|e| Error::Corrupt(e.to_string()))?,
                )
            }
        }
        Kind::RawCapture => SpsiObject::Raw(decode_raw(&h, &mut r)?),
        Kind::PcaCodebook => {
            let dims = r.dims(4)?;
            let d = usize_of(dims[0], "dimension")?;
            let k = usize_of(dims[1], "rank")?;
            let mode = PatchMode::from_code(u32::try_from(dims[2]).map_err(|_| Error::Corrupt("patch mode".into()))?)?;
            let samples = usize_of(dims[3], "sample count")?;
            let patch = w;
            if ht != w || d != patch * patch * ch * h.components as usize || k > d {
                return Err(Error::Corrupt("codebook dimensions inconsistent with header".into()));
            }
            r.need(8 * (d + d * k + k + 1) as u64)?;
            let mean = DVector::from_vec(r.floats(d, Dtype::F64)?);
            let basis = DMatrix::from_vec(d, k, r.floats(d * k, Dtype::F64)?);
            let sigma = DVector::from_vec(r.floats(k, Dtype::F64)?);
            let total_variance = r.f64()?;
            let cb = PcaCodebook {
                patch,
                channels: ch,
                mode,
                mean,
                basis,
                sigma,
                total_variance,
                samples,
            };
            check_codebook(&cb)?;
            SpsiObject::Codebook(cb)
        }
        Kind::InrModel => {
            let dims = r.dims(6)?;
            let config = InrConfig {
                layers: usize_of(dims[0], "layers")?,
                hidden: usize_of(dims[1], "hidden")?,
                feature_dim: usize_of(dims[2], "feature width")?,
                k_spatial: usize_of(dims[3], "spatial order")?,
                k_channel: usize_of(dims[4], "channel order")?,
            };
            let n = usize_of(dims[5], "parameter count")?;
            let params = r.floats(n, h.dtype)?;
            let coord_max = [(w - 1) as f64, (ht.max(1) - 1) as f64, (ch.max(1) - 1) as f64];
            SpsiObject::Inr(inr_from_parts(config, params, coord_max).map_err(|e| Error::Corrupt(e.to_string()))?)
        }
    };
    r.finish()?;
    Ok(obj)
}

fn check_codebook(cb: &PcaCodebook) -> Result<()> {
    let finite = cb
        .mean
        .iter()
        .chain(cb.basis.iter())
        .chain(cb.sigma.iter())
        .all(|v| v.is_finite());
    if !finite || !cb.total_variance.is_finite() {
        return Err(Error::Corrupt("non-finite codebook entry".into()));
    }
    let gram = cb.basis.transpose() * &cb.basis;
    let k = cb.basis.ncols();
    let err = (gram - DMatrix::<f64>::identity(k, k)).amax();
    if err > 1e-9 {
        return Err(Error::Corrupt(format!(
            "codebook basis is not orthonormal (error {err:e})"
        )));
    }
    if cb.sigma.iter().any(|&s| s < 0.0) || cb.sigma.as_slice().windows(2).any(|p| p[1] > p[0]) {
        return Err(Error::Corrupt(
            "codebook deviations must be non-negative and non-increasing".into(),
        ));
    }
    Ok(())
}

fn decode_raw(h: &SpsiHeader, r: &mut Reader) -> Result<RawCapture> {
    if h.dtype != Dtype::F32 {
        return Err(Error::Corrupt("raw capture must be f32".into()));
    }
    let (w, ht) = (h.width as usize, h.height as usize);
    let black_level = r.f32()?;
    let saturation_level = r.f32()?;
    let layout = match r.u8()? {
        0 => RawLayout::Sequential {
            channels: h.channels as usize,
            configs: h.components as usize,
        },
        1 => {
            let mut cells = Vec::with_capacity(16);
            for _ in 0..16 {
                let color = match r.u8()? {
                    0 => BayerColor::R,
                    1 => BayerColor::G,
                    2 => BayerColor::B,
                    v => return Err(Error::Corrupt(format!("unknown colour code {v}"))),
                };
                cells.push(MosaicCell {
                    color,
                    polarizer_axis: r.f64()?,
                    retarder_axis: r.f64()?,
                    retardance: r.f64()?,
                });
            }
            RawLayout::Mosaic(MosaicLayout::new(cells).map_err(|e| Error::Corrupt(e.to_string()))?)
        }
        v => return Err(Error::Corrupt(format!("unknown raw layout {v}"))),
    };
    let n = r.u32()? as usize;
    let mut tags = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        tags.push((r.u16()? as usize, r.u16()? as usize));
    }
    let plane = w * ht;
    r.need((n * plane * 4) as u64 + (n * plane).div_ceil(8) as u64)?;
    let mut frames = Vec::with_capacity(n);
    for &(channel, config) in &tags {
        let data = r.f32s(plane)?;
        frames.push(TaggedFrame {
            channel,
            config,
            frame: Frame::from_vec(w, ht, data)?,
            valid: Vec::new(),
        });
    }
    let bits = r.bits(n * plane)?;
    for (f, chunk) in frames.iter_mut().zip(bits.chunks(plane.max(1))) {
        f.valid = chunk.to_vec();
    }
    let mut seen = std::collections::HashSet::new();
    let tags_ok = match &layout {
        RawLayout::Sequential { channels, configs } => tags
            .iter()
            .all(|&(c, i)| c < *channels && i < *configs && seen.insert((c, i))),
        RawLayout::Mosaic(_) => h.channels == 3 && h.components == 16 && tags == [(0, 0)],
    };
    if !tags_ok {
        return Err(Error::Corrupt("frame tags do not match the raw layout".into()));
    }
    let wavelengths = table_or_empty(h.wavelengths.clone());
    Ok(RawCapture {
        width: w,
        height: ht,
        layout,
        frames,
        black_level,
        saturation_level,
        wavelengths,
    })
}

/// Writes bytes through a temporary file in the destination directory and
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_spsi(path: impl AsRef<Path>, obj: &SpsiObject) -> Result<()> {
    write_spsi_with(path, obj, Dtype::F32)
}

pub fn write_spsi_with(path: impl AsRef<Path>, obj: &SpsiObject, inr_dtype: Dtype) -> Result<()> {
    let bytes = encode(obj, inr_dtype)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_spsi(path: impl AsRef<Path>) -> Result<SpsiObject> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf, path)
}

fn wrong_kind(path: &Path, want: &str, got: Kind) -> Error {
    Error::Corrupt(format!("{} holds {got:?}, expected {want}", path.display()))
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<StokesImage> {
    match read_spsi(&path)? {
        SpsiObject::Cube(c) => Ok(c),
        o => Err(wrong_kind(path.as_ref(), "a Stokes cube", o.kind())),
    }
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<RawCapture> {
    match read_spsi(&path)? {
        SpsiObject::Raw(c) => Ok(c),
        o => Err(wrong_kind(path.as_ref(), "a raw capture", o.kind())),
    }
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<PcaCodebook> {
    match read_spsi(&path)? {
        SpsiObject::Codebook(c) => Ok(c),
        o => Err(wrong_kind(path.as_ref(), "a PCA codebook", o.kind())),
    }
}

pub fn read_inr(path: impl AsRef<Path>) -> Result<InrModel> {
    match read_spsi(&path)? {
        SpsiObject::Inr(c) => Ok(c),
        o => Err(wrong_kind(path.as_ref(), "an INR model", o.kind())),
    }
}

pub fn read_normals(path: impl AsRef<Path>) -> Result<NormalMapStack> {
    match read_spsi(&path)? {
        SpsiObject::Normals(c) => Ok(c),
        o => Err(wrong_kind(path.as_ref(), "a normal stack", o.kind())),
    }
}
