//! Binary window store, so training never re-parses raw text.
//!
//! Layout (little endian):
//!
//! ```text
//! magic      8 bytes  "SAAEWIN\0"
//! version    u32
//! window_len u32
//! channels   u32
//! classes    u32
//! count      u64
//! name_len   u32, then name_len bytes of UTF-8
//! count x { subject u32, label u32, window_len * channels f32 (time-major) }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::SignalWindow;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"SAAEWIN\0";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowCache {
    pub name: String,
    pub window_len: usize,
    pub channels: usize,
    pub classes: usize,
    pub windows: Vec<SignalWindow>,
}

impl WindowCache {
    pub fn new(name: impl Into<String>, classes: usize, windows: Vec<SignalWindow>) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Data("refusing to cache an empty window set".into()))?;
        let (len, ch) = (first.len, first.channels);
        for w in &windows {
            if w.len != len || w.channels != ch {
                return Err(Error::Shape("cached windows must share one shape".into()));
            }
            if w.label == 0 || w.label as usize > classes {
                return Err(Error::Data(format!("label {} outside 1..={classes}", w.label)));
            }
        }
        Ok(WindowCache {
            name: name.into(),
            window_len: len,
            channels: ch,
            classes,
            windows,
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CACHE_MAGIC)?;
        out.write_u32::<LittleEndian>(CACHE_VERSION)?;
        out.write_u32::<LittleEndian>(self.window_len as u32)?;
        out.write_u32::<LittleEndian>(self.channels as u32)?;
        out.write_u32::<LittleEndian>(self.classes as u32)?;
        out.write_u64::<LittleEndian>(self.windows.len() as u64)?;
        out.write_u32::<LittleEndian>(self.name.len() as u32)?;
        out.write_all(self.name.as_bytes())?;
        for w in &self.windows {
            out.write_u32::<LittleEndian>(w.subject)?;
            out.write_u32::<LittleEndian>(w.label)?;
            for &v in &w.data {
                out.write_f32::<LittleEndian>(v as f32)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input
            .read_exact(&mut magic)
            .map_err(|_| Error::Format("window cache is truncated".into()))?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format("not a window cache (bad magic)".into()));
        }
        let version = input.read_u32::<LittleEndian>()?;
        if version != CACHE_VERSION {
            return Err(Error::Format(format!(
                "window cache version {version}, this build reads {CACHE_VERSION}"
            )));
        }
        let window_len = input.read_u32::<LittleEndian>()? as usize;
        let channels = input.read_u32::<LittleEndian>()? as usize;
        let classes = input.read_u32::<LittleEndian>()? as usize;
        let count = input.read_u64::<LittleEndian>()? as usize;
        let name_len = input.read_u32::<LittleEndian>()? as usize;
        if name_len > 4096 || window_len == 0 || channels == 0 {
            return Err(Error::Format("window cache header is corrupt".into()));
        }
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("cache name is not UTF-8".into()))?;
        let per = window_len * channels;
        let mut windows = Vec::with_capacity(count.min(1 << 20));
        let mut buf = vec![0f32; per];
        for i in 0..count {
            let subject = input.read_u32::<LittleEndian>();
            let subject = subject.map_err(|_| Error::Format(format!("window cache truncated at window {i} of {count}")))?;
            let label = input.read_u32::<LittleEndian>()?;
            input
                .read_f32_into::<LittleEndian>(&mut buf)
                .map_err(|_| Error::Format(format!("window cache truncated at window {i} of {count}")))?;
            let data = buf.iter().map(|&v| v as f64).collect();
            windows.push(SignalWindow::new(data, window_len, channels, subject, label)?);
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after window cache", rest.len())));
        }
        Self::new(name, classes, windows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(fs::File::open(path)?))
    }

    /// Hex SHA-256 of the serialized cache.
    pub fn digest(&self) -> String {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes).expect("writing to memory");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Window counts keyed by subject, then by class.
    pub fn counts(&self) -> std::collections::BTreeMap<u32, std::collections::BTreeMap<u32, usize>> {
        let mut out: std::collections::BTreeMap<u32, std::collections::BTreeMap<u32, usize>> = Default::default();
        for w in &self.windows {
            *out.entry(w.subject).or_default().entry(w.label).or_default() += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WindowCache {
        let ws = (0..5)
            .map(|i| SignalWindow::new(vec![i as f64 * 0.5; 6], 3, 2, i % 2 + 1, i % 3 + 1).unwrap())
            .collect();
        WindowCache::new("toy", 3, ws).unwrap()
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], CACHE_MAGIC);
        assert_eq!(WindowCache::read_from(&buf[..]).unwrap(), c);
        assert_eq!(c.digest(), WindowCache::read_from(&buf[..]).unwrap().digest());
    }

    #[test]
    fn corruption_is_detected() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert!(WindowCache::read_from(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(WindowCache::read_from(&bad[..]), Err(Error::Format(_))));
        let mut bad = buf;
        bad[8] = 9;
        assert!(WindowCache::read_from(&bad[..]).is_err());
    }
}
