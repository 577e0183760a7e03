use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

const MAGIC: &[u8; 4] = b"FDCT";
const VERSION: u8 = 1;

/// Unique chunks packed in arrival order. Immutable once written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub id: u64,
    pub entries: Vec<(Fingerprint, u32)>,
}

impl Container {
    pub fn payload_bytes(&self) -> u64 {
        self.entries.iter().map(|(_, s)| *s as u64).sum()
    }

    pub fn file_name(id: u64) -> String {
        format!("{id:010}.ctr")
    }

    pub fn path_in(dir: &Path, id: u64) -> PathBuf {
        dir.join(Self::file_name(id))
    }

    /// Layout: magic, version, id (u64 LE), entry count (u32 LE), then per
    /// entry a width byte, the fingerprint bytes and the size (u32 LE).
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = Self::path_in(dir, self.id);
        let mut out = BufWriter::new(File::create(&path).map_err(Error::io_at(&path))?);
        out.write_all(MAGIC)?;
        out.write_all(&[VERSION])?;
        out.write_all(&self.id.to_le_bytes())?;
        out.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (fp, size) in &self.entries {
            out.write_all(&[fp.width() as u8])?;
            out.write_all(fp.as_bytes())?;
            out.write_all(&size.to_le_bytes())?;
        }
        out.flush()?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let corrupt = |msg: &str| Error::Corrupt {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        let mut r = BufReader::new(File::open(path).map_err(Error::io_at(path))?);
        let mut head = [0u8; 17];
        r.read_exact(&mut head).map_err(|_| corrupt("truncated header"))?;
        if &head[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if head[4] != VERSION {
            return Err(corrupt("unsupported version"));
        }
        let id = u64::from_le_bytes(head[5..13].try_into().expect("8 bytes"));
        let n = u32::from_le_bytes(head[13..17].try_into().expect("4 bytes")) as usize;
        let mut entries = Vec::with_capacity(n);
        let mut buf = [0u8; 32];
        for _ in 0..n {
            let mut w = [0u8; 1];
            r.read_exact(&mut w).map_err(|_| corrupt("truncated entry"))?;
            let w = w[0] as usize;
            if w > buf.len() {
                return Err(corrupt("fingerprint width out of range"));
            }
            r.read_exact(&mut buf[..w]).map_err(|_| corrupt("truncated entry"))?;
            let fp = Fingerprint::from_bytes(&buf[..w]).map_err(|_| corrupt("bad fingerprint"))?;
            let mut s = [0u8; 4];
            r.read_exact(&mut s).map_err(|_| corrupt("truncated entry"))?;
            entries.push((fp, u32::from_le_bytes(s)));
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Container { id, entries })
    }

    /// Ids of all container files in `dir`, ascending.
    pub fn list(dir: &Path) -> Result<Vec<u64>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(dir).map_err(Error::io_at(dir))? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name.strip_suffix(".ctr").and_then(|s| s.parse().ok()) {
                ids.push(id);
            }
        }
        ids.sort_unstable();
        Ok(ids)
    }
}
