//! `VOL1` volumes: a plain-text header ended by a blank line, then raw
//! little-endian samples in (channel, d, h, w) order.
//!
//! ```text
//! VOL1
//! dtype=f64
//! extents=32,32,32
//! spacing=1,1,1
//! channels=1
//!
//! <payload>
//! ```

use std::path::Path;

use crate::error::{FeError, Result};

pub const VOLUME_MAGIC: &str = "VOL1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    /// Integer labels, one byte each.
    U8,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::U8 => "u8",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeHeader {
    pub dtype: Dtype,
    pub extents: [usize; 3],
    /// Millimeters per voxel along (d, h, w).
    pub spacing: [f64; 3],
    pub channels: usize,
}

impl VolumeHeader {
    pub fn new(dtype: Dtype, extents: [usize; 3]) -> Self {
        VolumeHeader { dtype, extents, spacing: [1.0; 3], channels: 1 }
    }

    pub fn numel(&self) -> usize {
        self.channels * self.extents.iter().product::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.extents.contains(&0) || self.channels == 0 {
            return Err(FeError::Format(format!(
                "extents {:?} and channels {} must be positive",
                self.extents, self.channels
            )));
        }
        if !self.spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(FeError::Format(format!("spacing {:?} must be positive", self.spacing)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VolumeData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl VolumeData {
    pub fn dtype(&self) -> Dtype {
        match self {
            VolumeData::F32(_) => Dtype::F32,
            VolumeData::F64(_) => Dtype::F64,
            VolumeData::U8(_) => Dtype::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VolumeData::F32(v) => v.len(),
            VolumeData::F64(v) => v.len(),
            VolumeData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            VolumeData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            VolumeData::F64(v) => v.clone(),
            VolumeData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        labels
            .iter()
            .map(|&l| u8::try_from(l).map_err(|_| FeError::Format(format!("label {l} does not fit in u8"))))
            .collect::<Result<_>>()
            .map(VolumeData::U8)
    }

    pub fn to_labels(&self) -> Result<Vec<usize>> {
        match self {
            VolumeData::U8(v) => Ok(v.iter().map(|&x| x as usize).collect()),
            other => Err(FeError::Format(format!("expected u8 labels, found {}", other.dtype().name()))),
        }
    }
}

pub fn encode_volume(header: &VolumeHeader, data: &VolumeData) -> Result<Vec<u8>> {
    header.validate()?;
    if data.dtype() != header.dtype {
        return Err(FeError::Format(format!(
            "header dtype {} but data is {}",
            header.dtype.name(),
            data.dtype().name()
        )));
    }
    if data.len() != header.numel() {
        return Err(FeError::Format(format!(
            "header describes {} samples, data has {}",
            header.numel(),
            data.len()
        )));
    }
    let [d, h, w] = header.extents;
    let [sd, sh, sw] = header.spacing;
    let mut out = format!(
        "{VOLUME_MAGIC}\ndtype={}\nextents={d},{h},{w}\nspacing={sd:?},{sh:?},{sw:?}\nchannels={}\n\n",
        header.dtype.name(),
        header.channels
    )
    .into_bytes();
    match data {
        VolumeData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        VolumeData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        VolumeData::U8(v) => out.extend_from_slice(v),
    }
    Ok(out)
}

fn triple<T: std::str::FromStr>(key: &str, v: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = v
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| FeError::Format(format!("bad {key} value {v:?}"))))
        .collect::<Result<_>>()?;
    parts.try_into().map_err(|_| FeError::Format(format!("{key} needs three values, got {v:?}")))
}

pub fn decode_volume(buf: &[u8]) -> Result<(VolumeHeader, VolumeData)> {
    if !buf.starts_with(VOLUME_MAGIC.as_bytes()) {
        return Err(FeError::Format("not a volume: missing VOL1 magic".into()));
    }
    let end = buf
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| FeError::Format("volume header is not terminated by a blank line".into()))?;
    let text = std::str::from_utf8(&buf[..end]).map_err(|_| FeError::Format("volume header is not UTF-8".into()))?;
    let mut lines = text.lines();
    if lines.next() != Some(VOLUME_MAGIC) {
        return Err(FeError::Format("not a volume: missing VOL1 magic".into()));
    }
    let (mut dtype, mut extents, mut spacing, mut channels) = (None, None, None, None);
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| FeError::Format(format!("bad header line {line:?}")))?;
        match k {
            "dtype" => {
                dtype = Some(match v {
                    "f32" => Dtype::F32,
                    "f64" => Dtype::F64,
                    "u8" => Dtype::U8,
                    _ => return Err(FeError::Format(format!("unknown dtype {v}"))),
                })
            }
            "extents" => extents = Some(triple::<usize>(k, v)?),
            "spacing" => spacing = Some(triple::<f64>(k, v)?),
            "channels" => {
                channels = Some(v.parse().map_err(|_| FeError::Format(format!("bad channels value {v:?}")))?)
            }
            _ => return Err(FeError::Format(format!("unknown header key {k}"))),
        }
    }
    let missing = |k: &str| FeError::Format(format!("volume header lacks {k}"));
    let header = VolumeHeader {
        dtype: dtype.ok_or_else(|| missing("dtype"))?,
        extents: extents.ok_or_else(|| missing("extents"))?,
        spacing: spacing.ok_or_else(|| missing("spacing"))?,
        channels: channels.ok_or_else(|| missing("channels"))?,
    };
    header.validate()?;
    let payload = &buf[end + 2..];
    let expected = header
        .numel()
        .checked_mul(header.dtype.size())
        .ok_or_else(|| FeError::Format("volume extents overflow".into()))?;
    if payload.len() != expected {
        let what = if payload.len() < expected { "truncated" } else { "oversized" };
        return Err(FeError::Format(format!(
            "{what} volume payload: expected {expected} bytes, found {}",
            payload.len()
        )));
    }
    let data = match header.dtype {
        Dtype::F32 => VolumeData::F32(payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect()),
        Dtype::F64 => VolumeData::F64(payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()),
        Dtype::U8 => VolumeData::U8(payload.to_vec()),
    };
    Ok((header, data))
}

pub fn write_volume(path: &Path, header: &VolumeHeader, data: &VolumeData) -> Result<()> {
    let bytes = encode_volume(header, data)?;
    std::fs::write(path, bytes).map_err(|e| FeError::Io(format!("{}: {e}", path.display())))
}

pub fn read_volume(path: &Path) -> Result<(VolumeHeader, VolumeData)> {
    let buf = std::fs::read(path).map_err(|e| FeError::Io(format!("{}: {e}", path.display())))?;
    decode_volume(&buf)
}
