//! Binary checkpoint format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic  "SKGRPCKP"
//! u32    format version
//! hyper  u64 × 6 sizes, f64 × 4 (margin, λa, λg, λr), u64 triplets (u64::MAX = default),
//!        u8 exhaustive, u8 z_every_step
//! config f64 × 5 (lr0, decay, β1, β2, ε), u64 × 4 (iters, batch, seed, checkpoint_every),
//!        u8 + f64 clip norm, f64 weight decay, u64 log interval, u8 + f64 × 2 augmentation
//! u64    optimizer step
//! u32    array count, then per array: u16 name length, name, u8 rank, u64 dims, f64 data
//! [u8;32] SHA-256 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::TrainConfig;
use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::model::{GrouperParams, HyperParams, PARAM_NAMES};
use crate::stroke::AugmentParams;

const MAGIC: &[u8; 8] = b"SKGRPCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: GrouperParams,
    pub hyper: HyperParams,
    pub optimizer: AdamState,
    pub config: TrainConfig,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn array(&mut self, name: &str, a: &Array) {
        self.u16(name.len() as u16);
        self.0.extend_from_slice(name.as_bytes());
        self.u8(a.shape().len() as u8);
        a.shape().iter().for_each(|&d| self.u64(d as u64));
        a.data().iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::Integrity(format!(
                "unexpected end of data at byte {}",
                self.pos
            )));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
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
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?)
            .map_err(|_| Error::Integrity("size does not fit in memory".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Integrity(format!("invalid flag byte {b}"))),
        }
    }
    fn array(&mut self) -> Result<(String, Array)> {
        let len = self.u16()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Integrity("array name is not UTF-8".into()))?;
        let rank = self.u8()? as usize;
        let shape = (0..rank)
            .map(|_| self.usize())
            .collect::<Result<Vec<_>>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&c| c <= self.buf.len() / 8)
            .ok_or_else(|| Error::Integrity(format!("{name}: implausible shape {shape:?}")))?;
        let data = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok((name, Array::new(&shape, data)?))
    }
}

fn write_hyper(w: &mut Writer, h: &HyperParams) {
    for v in [
        h.enc_hidden,
        h.dec_hidden,
        h.latent_dim,
        h.feat_dim,
        h.mixtures,
        h.max_segments,
    ] {
        w.u64(v as u64);
    }
    for v in [h.margin, h.lambda_a, h.lambda_g, h.lambda_r] {
        w.f64(v);
    }
    w.u64(h.triplets_per_sketch.map_or(u64::MAX, |t| t as u64));
    w.u8(h.exhaustive_triplets as u8);
    w.u8(h.z_every_step as u8);
}

fn read_hyper(r: &mut Reader) -> Result<HyperParams> {
    let mut sizes = [0usize; 6];
    for s in &mut sizes {
        *s = r.usize()?;
    }
    let [margin, lambda_a, lambda_g, lambda_r] = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
    let triplets = r.u64()?;
    let hyper = HyperParams {
        enc_hidden: sizes[0],
        dec_hidden: sizes[1],
        latent_dim: sizes[2],
        feat_dim: sizes[3],
        mixtures: sizes[4],
        max_segments: sizes[5],
        margin,
        lambda_a,
        lambda_g,
        lambda_r,
        triplets_per_sketch: (triplets != u64::MAX).then_some(triplets as usize),
        exhaustive_triplets: r.bool()?,
        z_every_step: r.bool()?,
    };
    hyper
        .validate()
        .map_err(|e| Error::Integrity(format!("stored hyperparameters invalid: {e}")))?;
    Ok(hyper)
}

fn write_config(w: &mut Writer, c: &TrainConfig) {
    for v in [c.lr0, c.decay, c.beta1, c.beta2, c.epsilon] {
        w.f64(v);
    }
    for v in [c.iters, c.batch as u64, c.seed, c.checkpoint_every] {
        w.u64(v);
    }
    w.u8(c.clip_norm.is_some() as u8);
    w.f64(c.clip_norm.unwrap_or(0.0));
    w.f64(c.weight_decay);
    w.u64(c.log_every);
    w.u8(c.augment.is_some() as u8);
    let aug = c.augment.unwrap_or(AugmentParams {
        removal_prob: 0.0,
        distort_scale: 0.0,
    });
    w.f64(aug.removal_prob);
    w.f64(aug.distort_scale);
}

fn read_config(r: &mut Reader) -> Result<TrainConfig> {
    let [lr0, decay, beta1, beta2, epsilon] = [r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?];
    let iters = r.u64()?;
    let batch = r.usize()?;
    let seed = r.u64()?;
    let checkpoint_every = r.u64()?;
    let has_clip = r.bool()?;
    let clip = r.f64()?;
    let weight_decay = r.f64()?;
    let log_every = r.u64()?;
    let has_aug = r.bool()?;
    let aug = AugmentParams {
        removal_prob: r.f64()?,
        distort_scale: r.f64()?,
    };
    Ok(TrainConfig {
        lr0,
        decay,
        beta1,
        beta2,
        epsilon,
        iters,
        batch,
        seed,
        checkpoint_every,
        clip_norm: has_clip.then_some(clip),
        weight_decay,
        log_every,
        augment: has_aug.then_some(aug),
    })
}

/// Serialize a checkpoint to bytes.
pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    encode_with_version(c, FORMAT_VERSION)
}

fn encode_with_version(c: &Checkpoint, version: u32) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(version);
    write_hyper(&mut w, &c.hyper);
    write_config(&mut w, &c.config);
    w.u64(c.optimizer.step);
    let tensors = c.params.tensors();
    w.u32((3 * tensors.len()) as u32);
    for (name, t) in PARAM_NAMES.iter().zip(tensors) {
        w.array(name, t);
    }
    for (name, t) in PARAM_NAMES.iter().zip(&c.optimizer.m) {
        w.array(&format!("adam.m/{name}"), t);
    }
    for (name, t) in PARAM_NAMES.iter().zip(&c.optimizer.v) {
        w.array(&format!("adam.v/{name}"), t);
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    w.0
}

/// Parse bytes produced by [`encode_checkpoint`].
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Integrity("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Incompatible(format!(
            "format version {version}, this build reads version {FORMAT_VERSION}"
        )));
    }
    if bytes.len() < 12 + 32 {
        return Err(Error::Integrity("file truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Integrity(
            "checksum mismatch (truncated or corrupted file)".into(),
        ));
    }
    let mut r = Reader { buf: body, pos: 12 };
    let hyper = read_hyper(&mut r)?;
    let config = read_config(&mut r)?;
    let step = r.u64()?;
    let count = r.u32()? as usize;
    let k = PARAM_NAMES.len();
    if count != 3 * k {
        return Err(Error::Integrity(format!(
            "expected {} arrays, found {count}",
            3 * k
        )));
    }
    let mut groups: [Vec<Array>; 3] = Default::default();
    for (i, prefix) in ["", "adam.m/", "adam.v/"].iter().enumerate() {
        for name in PARAM_NAMES {
            let (got, a) = r.array()?;
            if got != format!("{prefix}{name}") {
                return Err(Error::Integrity(format!(
                    "expected array {prefix}{name}, found {got}"
                )));
            }
            groups[i].push(a);
        }
    }
    if r.pos != body.len() {
        return Err(Error::Integrity("trailing bytes after arrays".into()));
    }
    let [p, m, v] = groups;
    let params =
        GrouperParams::from_tensors(&hyper, p).map_err(|e| Error::Integrity(e.to_string()))?;
    let same_shapes = |xs: &[Array]| {
        xs.iter()
            .zip(params.tensors())
            .all(|(a, b)| a.shape() == b.shape())
    };
    if !same_shapes(&m) || !same_shapes(&v) {
        return Err(Error::Integrity(
            "optimizer moments do not match parameter shapes".into(),
        ));
    }
    Ok(Checkpoint {
        params,
        hyper,
        optimizer: AdamState { m, v, step },
        config,
    })
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &encode_checkpoint(c))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
pub(crate) fn encode_as_version(c: &Checkpoint, version: u32) -> Vec<u8> {
    encode_with_version(c, version)
}
