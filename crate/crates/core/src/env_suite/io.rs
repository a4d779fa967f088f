//! Dataset persistence.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! "FORD"                      magic, 4 bytes
//! u16                         format version (1)
//! u16 + bytes                 env id, UTF-8, length-prefixed
//! u8                          quality code
//! f64                         behavior epsilon
//! u64                         generation seed
//! u64                         transition count N
//! u32 u32                     state dim S, action dim A
//! u64 + u64 * E               episode count E and episode start offsets
//! N rows of (2S + A + 2) f64  state, action, reward, next state, terminal (0/1)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::dataset::{OfflineDataset, Quality, Transition};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"FORD";
pub const DATASET_VERSION: u16 = 1;

pub fn dataset_to_bytes(ds: &OfflineDataset) -> Vec<u8> {
    let first = &ds.transitions()[0];
    let (s_dim, a_dim) = (first.state.len(), first.action.len());
    let row = 2 * s_dim + a_dim + 2;
    let mut out = Vec::with_capacity(64 + ds.len() * row * 8);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.env_id().len() as u16).to_le_bytes());
    out.extend_from_slice(ds.env_id().as_bytes());
    out.push(ds.quality().code());
    out.extend_from_slice(&ds.behavior_epsilon().to_le_bytes());
    out.extend_from_slice(&ds.seed().to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&(s_dim as u32).to_le_bytes());
    out.extend_from_slice(&(a_dim as u32).to_le_bytes());
    out.extend_from_slice(&(ds.episode_starts().len() as u64).to_le_bytes());
    for s in ds.episode_starts() {
        out.extend_from_slice(&(*s as u64).to_le_bytes());
    }
    for t in ds.transitions() {
        let terminal = if t.terminal { 1.0f64 } else { 0.0 };
        let values = t
            .state
            .iter()
            .chain(&t.action)
            .chain(std::iter::once(&t.reward))
            .chain(&t.next_state)
            .chain(std::iter::once(&terminal));
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or(Error::Format {
            what: self.what,
            reason: format!("truncated at byte {}", self.pos),
        })?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Format {
                what: self.what,
                reason: format!("{} trailing bytes", self.buf.len() - self.pos),
            })
        }
    }

    pub(crate) fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            what: self.what,
            reason: reason.into(),
        }
    }
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<OfflineDataset> {
    let mut r = Reader::new(bytes, "dataset file");
    if r.take(4)? != DATASET_MAGIC {
        return Err(r.fail("bad magic"));
    }
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let id_len = r.u16()? as usize;
    let env_id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|_| r.fail("env id is not UTF-8"))?
        .to_string();
    let quality = Quality::from_code(r.u8()?)?;
    let behavior_epsilon = r.f64()?;
    let seed = r.u64()?;
    let n = r.u64()? as usize;
    let s_dim = r.u32()? as usize;
    let a_dim = r.u32()? as usize;
    let n_episodes = r.u64()? as usize;
    if n_episodes > n {
        return Err(r.fail("more episodes than transitions"));
    }
    let starts = (0..n_episodes).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let row_len = 2 * s_dim + a_dim + 2;
    if (bytes.len() - r.position()) != n * row_len * 8 {
        return Err(r.fail("row data length does not match header counts"));
    }
    let mut transitions = Vec::with_capacity(n);
    let mut row = vec![0.0; row_len];
    for _ in 0..n {
        for v in row.iter_mut() {
            *v = r.f64()?;
        }
        transitions.push(Transition {
            state: row[..s_dim].to_vec(),
            action: row[s_dim..s_dim + a_dim].to_vec(),
            reward: row[s_dim + a_dim],
            next_state: row[s_dim + a_dim + 1..2 * s_dim + a_dim + 1].to_vec(),
            terminal: row[row_len - 1] != 0.0,
        });
    }
    r.finish()?;
    OfflineDataset::new(transitions, quality, behavior_epsilon, &env_id, seed, starts)
}

pub fn write_dataset(path: &Path, ds: &OfflineDataset) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&dataset_to_bytes(ds))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<OfflineDataset> {
    dataset_from_bytes(&fs::read(path)?)
}

/// Canonical file name `{env}-{quality}-{seed}.ford`.
pub fn dataset_file_name(env_id: &str, quality: Quality, seed: u64) -> String {
    format!("{env_id}-{quality}-{seed}.ford")
}

/// Flat CSV with one column per state/action component.
pub fn write_dataset_csv(path: &Path, ds: &OfflineDataset) -> Result<()> {
    let first = &ds.transitions()[0];
    let (s_dim, a_dim) = (first.state.len(), first.action.len());
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..s_dim).map(|i| format!("s{i}")).collect();
    header.extend((0..a_dim).map(|i| format!("a{i}")));
    header.push("reward".into());
    header.extend((0..s_dim).map(|i| format!("next_s{i}")));
    header.push("terminal".into());
    writer.write_record(&header)?;
    for t in ds.transitions() {
        let mut record: Vec<String> = t.state.iter().chain(&t.action).map(|v| v.to_string()).collect();
        record.push(t.reward.to_string());
        record.extend(t.next_state.iter().map(|v| v.to_string()));
        record.push(u8::from(t.terminal).to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
