use crate::fingerprint::Fingerprint;

/// Bit-array Bloom filter over fingerprints using double hashing.
#[derive(Debug, Clone)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m: u64,
    k: u32,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn base_hashes(fp: &Fingerprint) -> (u64, u64) {
    let mut h = fp.width() as u64;
    for word in fp.as_bytes().chunks(8) {
        let mut buf = [0u8; 8];
        buf[..word.len()].copy_from_slice(word);
        h = splitmix64(h ^ u64::from_le_bytes(buf));
    }
    (h, splitmix64(h ^ 0x5851_F42D_4C95_7F2D) | 1)
}

impl BloomFilter {
    /// Sized for `n` expected items at false-positive rate `p`:
    /// m = ceil(-n ln p / (ln 2)^2) bits.
    pub fn with_rate(n: u64, p: f64, k: u32) -> Self {
        let n = n.max(1) as f64;
        let m = (-n * p.ln() / std::f64::consts::LN_2.powi(2)).ceil().max(64.0) as u64;
        Self::with_bits(m, k)
    }

    pub fn with_bits(m: u64, k: u32) -> Self {
        let m = m.max(1);
        BloomFilter {
            bits: vec![0; m.div_ceil(64) as usize],
            m,
            k: k.max(1),
        }
    }

    pub fn bit_count(&self) -> u64 {
        self.m
    }

    pub fn hash_count(&self) -> u32 {
        self.k
    }

    fn positions(&self, fp: &Fingerprint) -> impl Iterator<Item = u64> + '_ {
        let (h1, h2) = base_hashes(fp);
        (0..self.k as u64).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % self.m)
    }

    pub fn insert(&mut self, fp: &Fingerprint) {
        let pos: Vec<u64> = self.positions(fp).collect();
        for p in pos {
            self.bits[(p / 64) as usize] |= 1 << (p % 64);
        }
    }

    pub fn query(&self, fp: &Fingerprint) -> bool {
        self.positions(fp)
            .all(|p| self.bits[(p / 64) as usize] & (1 << (p % 64)) != 0)
    }
}
