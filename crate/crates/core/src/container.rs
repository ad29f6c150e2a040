//! The bit-exact sketch container format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  "TSK1"                          4 bytes
//! version u16                            (currently 1)
//! config  model, recovery               u64 each (0/1 codes)
//!         k                             u64
//!         delta                         f64
//!         epsilon                       f64 (0.0 when absent)
//!         m, r, n_max                   u64
//!         lambda, alpha                 f64
//!         M, seed                       u64
//! derived k~, levels, t_lvl, arrays,
//!         bins_per_array, t_array, q,
//!         l0 instances/depths/cells/q   u64 each (cross-checked on load)
//! levels  per level, row-major cells; each counter is a 16-byte
//!         little-endian two's-complement integer:
//!           FRS cells:               X Y Z W
//!           eFRS strict cells:       X Y Z W
//!           eFRS non-strict cells:   X Y Z W T
//! l0      instances x depths x cells, each X Y Z W T
//! crc     CRC-32 (IEEE) of all preceding bytes, u32
//! ```
//!
//! Hash functions are not stored; they are re-derived from the master seed,
//! which is what makes containers merge-compatible across processes.

use std::path::Path;
use std::sync::OnceLock;

use crate::bin_sketch::{NonStrictBinSketch, StrictBinSketch};
use crate::efrs::EfrsBins;
use crate::error::ContainerError;
use crate::sampler::{LevelStructure, SamplerConfig, SamplerSketch};
use crate::{Model, RecoveryKind};

const MAGIC: [u8; 4] = *b"TSK1";
const VERSION: u16 = 1;

fn crc32(bytes: &[u8]) -> u32 {
    static TABLE: OnceLock<[u32; 256]> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 == 1 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *slot = c;
        }
        t
    });
    let crc = bytes.iter().fold(0xFFFF_FFFFu32, |crc, &b| {
        (crc >> 8) ^ table[((crc ^ b as u32) & 0xFF) as usize]
    });
    crc ^ 0xFFFF_FFFF
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn i128(&mut self, v: i128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn strict_cell(&mut self, c: &StrictBinSketch) {
        self.i128(c.x);
        self.i128(c.y);
        self.i128(c.z);
        self.i128(c.w);
    }
    fn non_strict_cell(&mut self, c: &NonStrictBinSketch) {
        self.strict_cell(&c.base);
        self.i128(c.t);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.pos + n > self.bytes.len() {
            return Err(ContainerError::Truncated);
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ContainerError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn i128(&mut self) -> Result<i128, ContainerError> {
        Ok(i128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn strict_cell(&mut self) -> Result<StrictBinSketch, ContainerError> {
        Ok(StrictBinSketch {
            x: self.i128()?,
            y: self.i128()?,
            z: self.i128()?,
            w: self.i128()?,
        })
    }
    fn non_strict_cell(&mut self) -> Result<NonStrictBinSketch, ContainerError> {
        Ok(NonStrictBinSketch {
            base: self.strict_cell()?,
            t: self.i128()?,
        })
    }
}

fn derived_params(config: &SamplerConfig) -> [(&'static str, u64); 11] {
    let (arrays, bins, t_array, q) = match config.recovery {
        RecoveryKind::Frs => {
            let c = config.frs_config();
            (c.arrays as u64, c.bins_per_array, 2, 0)
        }
        RecoveryKind::Efrs => {
            let c = config.efrs_config();
            (2, c.bins_per_array, c.t, c.q)
        }
    };
    let l0 = config.l0_params();
    [
        ("k_tilde", config.k_tilde()),
        ("levels", levels_of(config)),
        ("t_lvl", config.t_lvl()),
        ("arrays", arrays),
        ("bins_per_array", bins),
        ("t_array", t_array),
        ("q", q),
        ("l0_instances", l0.instances as u64),
        ("l0_depths", l0.depths as u64),
        ("l0_cells", l0.cells() as u64),
        ("l0_guard_range", l0.guard_range()),
    ]
}

fn levels_of(config: &SamplerConfig) -> u64 {
    crate::level_map::LevelConfig::new(config.lambda, config.alpha, config.big_m)
        .map(|c| c.level_count() as u64)
        .unwrap_or(0)
}

/// Serializes a sketch (flushing it first). Identical stream multisets yield
/// identical bytes regardless of update order.
pub fn save(sketch: &mut SamplerSketch) -> Vec<u8> {
    sketch.flush();
    let config = sketch.config().clone();
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&MAGIC);
    w.u16(VERSION);
    w.u64(match config.model {
        Model::Strict => 0,
        Model::NonStrict => 1,
    });
    w.u64(match config.recovery {
        RecoveryKind::Frs => 0,
        RecoveryKind::Efrs => 1,
    });
    w.u64(config.k);
    w.f64(config.delta);
    w.f64(config.epsilon.unwrap_or(0.0));
    w.u64(config.m);
    w.u64(config.r);
    w.u64(config.n_max);
    w.f64(config.lambda);
    w.f64(config.alpha);
    w.u64(config.big_m);
    w.u64(config.seed);
    for (_, v) in derived_params(&config) {
        w.u64(v);
    }
    for level in &sketch.levels {
        match level {
            LevelStructure::Frs(frs) => {
                for cell in &frs.bins {
                    w.strict_cell(cell);
                }
            }
            LevelStructure::Efrs(efrs) => match &efrs.bins {
                EfrsBins::Strict(cells) => {
                    for cell in cells {
                        w.strict_cell(cell);
                    }
                }
                EfrsBins::NonStrict(cells) => {
                    for cell in cells {
                        w.non_strict_cell(cell);
                    }
                }
            },
        }
    }
    for cell in &sketch.l0.cells {
        w.non_strict_cell(cell);
    }
    let crc = crc32(&w.buf);
    let mut out = w.buf;
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parses and validates a container: magic, version, CRC, configuration, and
/// the stored derived parameters against recomputed ones.
pub fn load(bytes: &[u8]) -> Result<SamplerSketch, ContainerError> {
    if bytes.len() < MAGIC.len() + 2 + 4 || bytes[..4] != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let body = &bytes[..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32(body) != stored_crc {
        return Err(ContainerError::CrcMismatch);
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let model = match r.u64()? {
        0 => Model::Strict,
        1 => Model::NonStrict,
        _ => return Err(ContainerError::Truncated),
    };
    let recovery = match r.u64()? {
        0 => RecoveryKind::Frs,
        1 => RecoveryKind::Efrs,
        _ => return Err(ContainerError::Truncated),
    };
    let k = r.u64()?;
    let delta = r.f64()?;
    let epsilon = r.f64()?;
    let m = r.u64()?;
    let rr = r.u64()?;
    let n_max = r.u64()?;
    let lambda = r.f64()?;
    let alpha = r.f64()?;
    let big_m = r.u64()?;
    let seed = r.u64()?;
    let config = SamplerConfig {
        model,
        recovery,
        k,
        delta,
        epsilon: match recovery {
            RecoveryKind::Efrs => Some(epsilon),
            RecoveryKind::Frs => None,
        },
        m,
        r: rr,
        n_max,
        lambda,
        alpha,
        big_m,
        seed,
    };
    for (name, computed) in derived_params(&config) {
        let stored = r.u64()?;
        if stored != computed {
            return Err(ContainerError::DerivedMismatch {
                name,
                stored,
                computed,
            });
        }
    }
    let mut sketch = SamplerSketch::new(config)?;
    for level in sketch.levels.iter_mut() {
        match level {
            LevelStructure::Frs(frs) => {
                for cell in frs.bins.iter_mut() {
                    *cell = r.strict_cell()?;
                }
            }
            LevelStructure::Efrs(efrs) => match &mut efrs.bins {
                EfrsBins::Strict(cells) => {
                    for cell in cells.iter_mut() {
                        *cell = r.strict_cell()?;
                    }
                }
                EfrsBins::NonStrict(cells) => {
                    for cell in cells.iter_mut() {
                        *cell = r.non_strict_cell()?;
                    }
                }
            },
        }
    }
    for cell in sketch.l0.cells.iter_mut() {
        *cell = r.non_strict_cell()?;
    }
    if r.pos != body.len() {
        return Err(ContainerError::Truncated);
    }
    Ok(sketch)
}

pub fn save_to_path(sketch: &mut SamplerSketch, path: &Path) -> Result<(), ContainerError> {
    Ok(std::fs::write(path, save(sketch))?)
}

pub fn load_from_path(path: &Path) -> Result<SamplerSketch, ContainerError> {
    load(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sketch(recovery: RecoveryKind, model: Model) -> SamplerSketch {
        let mut config = SamplerConfig::new(model, recovery, 8, 0.1)
            .with_universe(1 << 12, 1 << 10, 1 << 16)
            .with_seed(3141);
        if recovery == RecoveryKind::Efrs {
            config = config.with_epsilon(0.5);
        }
        let mut s = SamplerSketch::new(config).unwrap();
        for k in 1..300u64 {
            s.update(k * 3 % ((1 << 12) - 1) + 1, (k % 7) as i64 - 3).unwrap();
        }
        s
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for recovery in [RecoveryKind::Frs, RecoveryKind::Efrs] {
            for model in [Model::Strict, Model::NonStrict] {
                let mut s = sketch(recovery, model);
                let bytes = save(&mut s);
                let mut loaded = load(&bytes).unwrap();
                assert_eq!(save(&mut loaded), bytes, "{recovery:?}/{model:?}");
            }
        }
    }

    #[test]
    fn loaded_sketch_extracts_like_the_original() {
        let mut s = sketch(RecoveryKind::Frs, Model::NonStrict);
        let bytes = save(&mut s);
        let mut loaded = load(&bytes).unwrap();
        assert_eq!(loaded.extract().unwrap(), s.extract().unwrap());
    }

    #[test]
    fn corruption_is_detected() {
        let mut s = sketch(RecoveryKind::Frs, Model::Strict);
        let mut bytes = save(&mut s);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        assert!(matches!(load(&bytes), Err(ContainerError::CrcMismatch)));
        assert!(matches!(load(b"nope"), Err(ContainerError::BadMagic)));
        let mut truncated = save(&mut s);
        truncated.truncate(truncated.len() - 40);
        assert!(!matches!(load(&truncated), Ok(_)));
    }
}
