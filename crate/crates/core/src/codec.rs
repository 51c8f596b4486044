//! Binary and text encodings shared by files and the wire: ADIM images,
//! label text lines, frame/command payloads, and ADNN model checkpoints.
//!
//! Pixels are quantized to f32 in every persisted or transmitted form;
//! model parameters stay f64.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::bbox::BBox;
use crate::control::ControlCommand;
use crate::perception::{DetectorConfig, ModelParams, PerceptionError};
use crate::render::{ImageTensor, LabelSet};
use crate::scene::ObjectKind;

pub const IMAGE_MAGIC: [u8; 4] = *b"ADIM";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ADNN";
pub const CHECKPOINT_VERSION: u32 = 1;
/// f64 v + f64 omega, little-endian.
pub const COMMAND_PAYLOAD_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum CodecError {
    BadMagic(&'static str),
    UnsupportedVersion(u32),
    Truncated(&'static str),
    Malformed(String),
}

impl core::fmt::Display for CodecError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CodecError::BadMagic(what) => write!(f, "bad {what} magic"),
            CodecError::UnsupportedVersion(v) => write!(f, "unsupported checkpoint version {v}"),
            CodecError::Truncated(what) => write!(f, "truncated {what}"),
            CodecError::Malformed(why) => write!(f, "malformed data: {why}"),
        }
    }
}

impl core::error::Error for CodecError {}

// ---------------------------------------------------------------------------
// ADIM image encoding
// ---------------------------------------------------------------------------

/// `"ADIM"` + u16 height + u16 width + u8 channels, then raw little-endian
/// f32 pixels in row-major channel-last order.
pub fn encode_image(img: &ImageTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + img.data.len() * 4);
    out.extend_from_slice(&IMAGE_MAGIC);
    out.extend_from_slice(&(img.height as u16).to_le_bytes());
    out.extend_from_slice(&(img.width as u16).to_le_bytes());
    out.push(3);
    for &v in &img.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Decodes an ADIM block from the front of `bytes`, returning the image and
/// bytes consumed.
pub fn decode_image(bytes: &[u8]) -> Result<(ImageTensor, usize), CodecError> {
    if bytes.len() < 9 {
        return Err(CodecError::Truncated("image header"));
    }
    if bytes[..4] != IMAGE_MAGIC {
        return Err(CodecError::BadMagic("image"));
    }
    let height = u16::from_le_bytes(bytes[4..6].try_into().unwrap()) as usize;
    let width = u16::from_le_bytes(bytes[6..8].try_into().unwrap()) as usize;
    let channels = bytes[8] as usize;
    if channels != 3 {
        return Err(CodecError::Malformed(format!("expected 3 channels, got {channels}")));
    }
    let n = height * width * 3;
    let total = 9 + n * 4;
    if bytes.len() < total {
        return Err(CodecError::Truncated("image pixels"));
    }
    let mut img = ImageTensor::zeros(height, width);
    for (i, v) in img.data.iter_mut().enumerate() {
        let off = 9 + i * 4;
        *v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    }
    Ok((img, total))
}

// ---------------------------------------------------------------------------
// label text encoding
// ---------------------------------------------------------------------------

/// One line per object: `class_id cx cy w h`, space-separated, 6 decimals.
pub fn encode_labels_text(labels: &LabelSet) -> String {
    let mut out = String::new();
    for (b, &class) in labels.boxes.iter().zip(&labels.classes) {
        out.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            class.class_id(),
            b.cx,
            b.cy,
            b.w,
            b.h
        ));
    }
    out
}

pub fn parse_labels_text(text: &str) -> Result<LabelSet, CodecError> {
    let mut labels = LabelSet::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_ascii_whitespace();
        let mut next = |what: &str| -> Result<f64, CodecError> {
            it.next()
                .ok_or_else(|| CodecError::Malformed(format!("label line {lineno}: missing {what}")))?
                .parse::<f64>()
                .map_err(|_| CodecError::Malformed(format!("label line {lineno}: bad {what}")))
        };
        let class_id = next("class id")? as usize;
        let class = ObjectKind::from_class_id(class_id)
            .ok_or_else(|| CodecError::Malformed(format!("label line {lineno}: class {class_id}")))?;
        let (cx, cy, w, h) = (next("cx")?, next("cy")?, next("w")?, next("h")?);
        labels.boxes.push(BBox::new(cx, cy, w, h));
        labels.classes.push(class);
    }
    Ok(labels)
}

// ---------------------------------------------------------------------------
// wire payloads
// ---------------------------------------------------------------------------

/// Frame payload: ADIM image followed by a label section
/// (u16 count, then per label: u8 class + 4 x f64 LE box fields).
/// The labels ride along as testbed instrumentation for the white-box
/// attacker, not as part of a deployable protocol.
pub fn encode_frame_payload(img: &ImageTensor, labels: &LabelSet) -> Vec<u8> {
    let mut out = encode_image(img);
    out.extend_from_slice(&(labels.len() as u16).to_le_bytes());
    for (b, &class) in labels.boxes.iter().zip(&labels.classes) {
        out.push(class.class_id() as u8);
        for v in [b.cx, b.cy, b.w, b.h] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_frame_payload(bytes: &[u8]) -> Result<(ImageTensor, LabelSet), CodecError> {
    let (img, consumed) = decode_image(bytes)?;
    let rest = &bytes[consumed..];
    if rest.len() < 2 {
        return Err(CodecError::Truncated("label section"));
    }
    let n = u16::from_le_bytes(rest[..2].try_into().unwrap()) as usize;
    let mut labels = LabelSet::default();
    let mut off = 2;
    for _ in 0..n {
        if rest.len() < off + 1 + 32 {
            return Err(CodecError::Truncated("label entry"));
        }
        let class = ObjectKind::from_class_id(rest[off] as usize)
            .ok_or_else(|| CodecError::Malformed(format!("label class {}", rest[off])))?;
        off += 1;
        let mut f = [0.0f64; 4];
        for fv in f.iter_mut() {
            *fv = f64::from_le_bytes(rest[off..off + 8].try_into().unwrap());
            off += 8;
        }
        labels.boxes.push(BBox::new(f[0], f[1], f[2], f[3]));
        labels.classes.push(class);
    }
    Ok((img, labels))
}

/// Command payload: f64 v then f64 omega, little-endian.
pub fn encode_command_payload(cmd: &ControlCommand) -> Vec<u8> {
    let mut out = Vec::with_capacity(COMMAND_PAYLOAD_LEN);
    out.extend_from_slice(&cmd.v.to_le_bytes());
    out.extend_from_slice(&cmd.omega.to_le_bytes());
    out
}

pub fn decode_command_payload(bytes: &[u8]) -> Result<(f64, f64), CodecError> {
    if bytes.len() != COMMAND_PAYLOAD_LEN {
        return Err(CodecError::Truncated("command payload"));
    }
    Ok((
        f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        f64::from_le_bytes(bytes[8..16].try_into().unwrap()),
    ))
}

// ---------------------------------------------------------------------------
// ADNN checkpoint
// ---------------------------------------------------------------------------

/// `"ADNN"` + u32 version + config block (u16 image_size, u8 grid,
/// u8 conv1_out, u8 conv2_out) + raw little-endian f64 parameters in the
/// canonical tensor order of [`ModelParams::tensors`].
pub fn encode_checkpoint(theta: &ModelParams) -> Vec<u8> {
    let flat = theta.to_flat();
    let mut out = Vec::with_capacity(13 + flat.len() * 8);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(theta.config.image_size as u16).to_le_bytes());
    out.push(theta.config.grid as u8);
    out.push(theta.config.conv1_out as u8);
    out.push(theta.config.conv2_out as u8);
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams, CodecError> {
    if bytes.len() < 13 {
        return Err(CodecError::Truncated("checkpoint header"));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CodecError::BadMagic("checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let config = DetectorConfig {
        image_size: u16::from_le_bytes(bytes[8..10].try_into().unwrap()) as usize,
        grid: bytes[10] as usize,
        conv1_out: bytes[11] as usize,
        conv2_out: bytes[12] as usize,
    };
    let body = &bytes[13..];
    if body.len() % 8 != 0 {
        return Err(CodecError::Truncated("checkpoint parameters"));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ModelParams::from_flat(config, &flat).map_err(|e| match e {
        PerceptionError::ShapeMismatch(why) | PerceptionError::BadConfig(why) => {
            CodecError::Malformed(why)
        }
        other => CodecError::Malformed(format!("{other}")),
    })
}
