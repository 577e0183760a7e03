use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Narrowest fingerprint accepted by traces.
pub const MIN_WIDTH: usize = 4;
/// Widest fingerprint accepted by traces.
pub const MAX_WIDTH: usize = 32;

/// Fixed-width opaque chunk identifier.
///
/// Stored inline so it is `Copy`; ordering is bytewise, which for equal
/// widths coincides with big-endian integer order.
#[derive(Clone, Copy)]
pub struct Fingerprint {
    len: u8,
    bytes: [u8; MAX_WIDTH],
}

impl Fingerprint {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !(MIN_WIDTH..=MAX_WIDTH).contains(&bytes.len()) {
            return Err(Error::Fingerprint(format!(
                "width {} outside [{MIN_WIDTH}, {MAX_WIDTH}]",
                bytes.len()
            )));
        }
        let mut buf = [0u8; MAX_WIDTH];
        buf[..bytes.len()].copy_from_slice(bytes);
        Ok(Fingerprint {
            len: bytes.len() as u8,
            bytes: buf,
        })
    }

    /// Truncated SHA-256 of `data`.
    pub fn digest(data: &[u8], width: usize) -> Result<Self> {
        let hash = Sha256::digest(data);
        Self::from_bytes(&hash[..width.min(MAX_WIDTH)])
    }

    /// Big-endian encoding of `value` over `width` bytes (low bytes kept).
    pub fn from_u64(value: u64, width: usize) -> Result<Self> {
        let mut buf = [0u8; MAX_WIDTH];
        let be = value.to_be_bytes();
        let n = width.min(8);
        buf[width - n..width].copy_from_slice(&be[8 - n..]);
        Self::from_bytes(&buf[..width])
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Fingerprint(format!("{s:?}: {e}")))?;
        Self::from_bytes(&bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    pub fn width(&self) -> usize {
        self.len as usize
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.as_bytes())
    }

    /// Remainder of the fingerprint, read as a big-endian integer, modulo `divisor`.
    pub fn mod_u64(&self, divisor: u64) -> u64 {
        assert!(divisor > 0, "divisor must be positive");
        let d = divisor as u128;
        self.as_bytes()
            .iter()
            .fold(0u128, |acc, &b| ((acc << 8) | b as u128) % d) as u64
    }

    /// Leading eight bytes as an integer, zero-padded for narrow fingerprints.
    pub fn prefix_u64(&self) -> u64 {
        let mut buf = [0u8; 8];
        let n = self.width().min(8);
        buf[..n].copy_from_slice(&self.bytes[..n]);
        u64::from_be_bytes(buf)
    }
}

impl PartialEq for Fingerprint {
    fn eq(&self, other: &Self) -> bool {
        self.as_bytes() == other.as_bytes()
    }
}

impl Eq for Fingerprint {}

impl Hash for Fingerprint {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.as_bytes().hash(state)
    }
}

impl PartialOrd for Fingerprint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fingerprint {
    fn cmp(&self, other: &Self) -> Ordering {
        self.as_bytes().cmp(other.as_bytes())
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.to_hex())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Fingerprint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_hex(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_bounds() {
        assert!(Fingerprint::from_bytes(&[1, 2, 3]).is_err());
        assert!(Fingerprint::from_bytes(&[0; 33]).is_err());
        assert_eq!(Fingerprint::from_bytes(&[0; 4]).unwrap().width(), 4);
        assert_eq!(Fingerprint::from_bytes(&[0; 32]).unwrap().width(), 32);
    }

    #[test]
    fn hex_round_trip_and_case() {
        let fp = Fingerprint::from_hex("0A0B0C0D0E0F").unwrap();
        assert_eq!(fp.to_hex(), "0a0b0c0d0e0f");
        assert_eq!(fp.width(), 6);
        assert!(Fingerprint::from_hex("0a0b0c0d0e0").is_err());
        assert!(Fingerprint::from_hex("zz0b0c0d").is_err());
    }

    #[test]
    fn ordering_is_bytewise() {
        let a = Fingerprint::from_hex("00ff0000").unwrap();
        let b = Fingerprint::from_hex("01000000").unwrap();
        assert!(a < b);
    }

    #[test]
    fn modulo_matches_integer_arithmetic() {
        let fp = Fingerprint::from_u64(0x0123_4567_89ab, 6).unwrap();
        assert_eq!(fp.to_hex(), "0123456789ab");
        for d in [1u64, 2, 63, 64, 1000, 65537] {
            assert_eq!(fp.mod_u64(d), 0x0123_4567_89ab % d);
        }
        // wider than 64 bits: compare against u128 arithmetic
        let wide = Fingerprint::from_hex("0102030405060708090a0b0c").unwrap();
        let v = u128::from_be_bytes([0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]);
        assert_eq!(wide.mod_u64(64), (v % 64) as u64);
        assert_eq!(wide.mod_u64(999_983), (v % 999_983) as u64);
    }
}
