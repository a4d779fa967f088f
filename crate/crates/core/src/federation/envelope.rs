//! Parameter transport.
//!
//! Wire layout, little-endian:
//!
//! ```text
//! "FENV"  u16 version (1)
//! u32 sender   u64 round   u8 payload kind   u32 tensor count
//! per tensor:  u32 layer count, per layer (u32 in, u32 out, u8 activation),
//!              u64 value count, value count × f64
//! u32 CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::approximator::{Activation, ApproximatorParams, LayerSpec};
use crate::env_suite::io::Reader;
use crate::error::{Error, Result};

pub const ENVELOPE_MAGIC: &[u8; 4] = b"FENV";
pub const ENVELOPE_VERSION: u16 = 1;

/// Sender id used by the server.
pub const SERVER_ID: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    /// Device upload: `[q1, q2, q1_target, q2_target]`.
    CriticPair,
    /// `[actor]`, optionally followed by a state-independent log-std head.
    GlobalActor,
    /// Server critics: heads followed by their targets.
    GlobalCritic,
    /// Device actor upload, used by the parameter-averaging baselines.
    LocalActor,
}

impl PayloadKind {
    pub fn code(self) -> u8 {
        match self {
            PayloadKind::CriticPair => 0,
            PayloadKind::GlobalActor => 1,
            PayloadKind::GlobalCritic => 2,
            PayloadKind::LocalActor => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => PayloadKind::CriticPair,
            1 => PayloadKind::GlobalActor,
            2 => PayloadKind::GlobalCritic,
            3 => PayloadKind::LocalActor,
            other => {
                return Err(Error::Format {
                    what: "envelope",
                    reason: format!("unknown payload kind {other}"),
                })
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEnvelope {
    pub sender_id: u32,
    pub round: u64,
    pub kind: PayloadKind,
    pub params: Vec<ApproximatorParams>,
}

impl ParamEnvelope {
    pub fn new(sender_id: u32, round: u64, kind: PayloadKind, params: Vec<ApproximatorParams>) -> Self {
        Self {
            sender_id,
            round,
            kind,
            params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ENVELOPE_MAGIC);
        out.extend_from_slice(&ENVELOPE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.sender_id.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.layers().len() as u32).to_le_bytes());
            for l in p.layers() {
                out.extend_from_slice(&(l.input_dim as u32).to_le_bytes());
                out.extend_from_slice(&(l.output_dim as u32).to_le_bytes());
                out.push(l.activation.code());
            }
            out.extend_from_slice(&(p.len() as u64).to_le_bytes());
            for v in p.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Format {
                what: "envelope",
                reason: "shorter than its checksum".into(),
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader::new(body, "envelope");
        if r.take(4)? != ENVELOPE_MAGIC {
            return Err(r.fail("bad magic"));
        }
        let version = r.u16()?;
        if version != ENVELOPE_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let sender_id = r.u32()?;
        let round = r.u64()?;
        let kind = PayloadKind::from_code(r.u8()?)?;
        let n_tensors = r.u32()? as usize;
        let mut params = Vec::with_capacity(n_tensors.min(1024));
        for _ in 0..n_tensors {
            let n_layers = r.u32()? as usize;
            let mut layers = Vec::with_capacity(n_layers.min(1024));
            for _ in 0..n_layers {
                let input_dim = r.u32()? as usize;
                let output_dim = r.u32()? as usize;
                let activation = Activation::from_code(r.u8()?)?;
                layers.push(LayerSpec::new(input_dim, output_dim, activation));
            }
            let n_values = r.u64()? as usize;
            if n_values > body.len() / 8 {
                return Err(r.fail("value count exceeds payload"));
            }
            let values = (0..n_values).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            params.push(ApproximatorParams::from_values(layers, values)?);
        }
        r.finish()?;
        Ok(Self {
            sender_id,
            round,
            kind,
            params,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::mlp_layers;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64) -> ParamEnvelope {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = ApproximatorParams::init(mlp_layers(6, &[8, 8], 1, Activation::Tanh, Activation::Identity), &mut rng).unwrap();
        let b = ApproximatorParams::init(mlp_layers(4, &[5], 2, Activation::Relu, Activation::Tanh), &mut rng).unwrap();
        ParamEnvelope::new(3, 17, PayloadKind::CriticPair, vec![a, b])
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample(0).to_bytes();
        bytes[40] ^= 0x10;
        assert!(matches!(ParamEnvelope::from_bytes(&bytes), Err(Error::Checksum { .. })));
        assert!(ParamEnvelope::from_bytes(&bytes[..3]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.fenv");
        let env = sample(1);
        env.write(&path).unwrap();
        assert_eq!(ParamEnvelope::read(&path).unwrap(), env);
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise_identity(seed in 0u64..10_000, round in 0u64..1000, kind in 0u8..4) {
            let mut env = sample(seed);
            env.round = round;
            env.kind = PayloadKind::from_code(kind).unwrap();
            let bytes = env.to_bytes();
            let back = ParamEnvelope::from_bytes(&bytes).unwrap();
            for (a, b) in env.params.iter().zip(&back.params) {
                prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back, env);
        }
    }
}
