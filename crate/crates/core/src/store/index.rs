use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

const SORTED: &str = "sorted.idx";
const LOG: &str = "log.idx";

/// Log entries beyond which [`FingerprintIndex::maybe_compact`] rewrites the sorted file.
pub const COMPACT_THRESHOLD: usize = 1 << 16;

/// Persistent fingerprint to container map: a sorted base file plus an
/// append-only log of batched updates, mirrored in memory.
pub struct FingerprintIndex {
    dir: PathBuf,
    map: HashMap<Fingerprint, u64>,
    log_entries: usize,
}

fn write_record<W: Write>(out: &mut W, fp: &Fingerprint, id: u64) -> Result<()> {
    out.write_all(&[fp.width() as u8])?;
    out.write_all(fp.as_bytes())?;
    out.write_all(&id.to_le_bytes())?;
    Ok(())
}

fn read_records(path: &Path, mut f: impl FnMut(Fingerprint, u64)) -> Result<usize> {
    let file = match File::open(path) {
        Ok(file) => file,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(Error::io_at(path)(e)),
    };
    let corrupt = |msg: &str| Error::Corrupt {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut r = BufReader::new(file);
    let mut n = 0;
    let mut buf = [0u8; 32];
    loop {
        let mut w = [0u8; 1];
        match r.read_exact(&mut w) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(n),
            Err(e) => return Err(e.into()),
        }
        let w = w[0] as usize;
        if w > buf.len() {
            return Err(corrupt("fingerprint width out of range"));
        }
        r.read_exact(&mut buf[..w]).map_err(|_| corrupt("truncated record"))?;
        let mut id = [0u8; 8];
        r.read_exact(&mut id).map_err(|_| corrupt("truncated record"))?;
        let fp = Fingerprint::from_bytes(&buf[..w]).map_err(|_| corrupt("bad fingerprint"))?;
        f(fp, u64::from_le_bytes(id));
        n += 1;
    }
}

impl FingerprintIndex {
    /// Opens (or creates) the index stored in `dir`.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(Error::io_at(dir))?;
        let mut map = HashMap::new();
        read_records(&dir.join(SORTED), |fp, id| {
            map.insert(fp, id);
        })?;
        let log_entries = read_records(&dir.join(LOG), |fp, id| {
            map.insert(fp, id);
        })?;
        Ok(FingerprintIndex {
            dir: dir.to_path_buf(),
            map,
            log_entries,
        })
    }

    pub fn get(&self, fp: &Fingerprint) -> Option<u64> {
        self.map.get(fp).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn fingerprints(&self) -> impl Iterator<Item = &Fingerprint> {
        self.map.keys()
    }

    /// Appends one flushed container's entries to the log.
    pub fn insert_batch<'a>(
        &mut self,
        container: u64,
        fps: impl IntoIterator<Item = &'a Fingerprint>,
    ) -> Result<()> {
        let path = self.dir.join(LOG);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(Error::io_at(&path))?;
        let mut out = BufWriter::new(file);
        for fp in fps {
            write_record(&mut out, fp, container)?;
            self.map.insert(*fp, container);
            self.log_entries += 1;
        }
        out.flush()?;
        Ok(())
    }

    /// Merges the log into the sorted file.
    pub fn compact(&mut self) -> Result<()> {
        let mut all: Vec<_> = self.map.iter().collect();
        all.sort_unstable();
        let tmp = self.dir.join("sorted.idx.tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp).map_err(Error::io_at(&tmp))?);
            for (fp, id) in all {
                write_record(&mut out, fp, *id)?;
            }
            out.flush()?;
        }
        let sorted = self.dir.join(SORTED);
        fs::rename(&tmp, &sorted).map_err(Error::io_at(&sorted))?;
        let log = self.dir.join(LOG);
        match fs::remove_file(&log) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io_at(&log)(e)),
        }
        self.log_entries = 0;
        Ok(())
    }

    pub fn maybe_compact(&mut self) -> Result<()> {
        if self.log_entries >= COMPACT_THRESHOLD {
            self.compact()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(n: u64) -> Fingerprint {
        Fingerprint::from_u64(n, 8).unwrap()
    }

    #[test]
    fn survives_reopen_before_and_after_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let mut idx = FingerprintIndex::open(dir.path()).unwrap();
        idx.insert_batch(0, &[fp(1), fp(2)]).unwrap();
        idx.insert_batch(1, &[fp(3)]).unwrap();
        let back = FingerprintIndex::open(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.get(&fp(3)), Some(1));

        idx.compact().unwrap();
        idx.insert_batch(2, &[fp(4)]).unwrap();
        let back = FingerprintIndex::open(dir.path()).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back.get(&fp(1)), Some(0));
        assert_eq!(back.get(&fp(4)), Some(2));
        assert_eq!(back.get(&fp(5)), None);
    }
}
