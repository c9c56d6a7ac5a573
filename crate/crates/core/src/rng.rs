//! Counter-based normal variates.
//!
//! Every draw is a pure function of `(path key, step, block)`: Philox4x32-10
//! maps a 128-bit counter and a 64-bit key to four 32-bit words, which
//! Box–Muller turns into two standard normals. Paths can therefore be
//! generated in any order, on any number of workers, with identical results.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 bijection with ten rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finaliser, used to derive per-path keys from a run seed.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of path `index` under run seed `seed`.
pub fn path_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Seed of an independent stream derived from `seed` and a tag.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    tag.bytes()
        .fold(splitmix64(seed), |h, b| splitmix64(h ^ b as u64))
}

#[inline]
fn to_open_unit(hi: u32, lo: u32) -> f64 {
    let bits = ((hi as u64) << 32 | lo as u64) >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Stream of normals for one path.
#[derive(Debug, Clone, Copy)]
pub struct PathRng {
    key: [u32; 2],
}

impl PathRng {
    pub fn new(path_seed: u64) -> Self {
        Self {
            key: [path_seed as u32, (path_seed >> 32) as u32],
        }
    }

    /// Fills `out` with the standard normals of step `step`.
    #[inline]
    pub fn normals(&self, step: u64, out: &mut [f64]) {
        let mut block = 0u32;
        for pair in out.chunks_mut(2) {
            let w = philox4x32([block, step as u32, (step >> 32) as u32, 0], self.key);
            let u1 = to_open_unit(w[0], w[1]);
            let u2 = to_open_unit(w[2], w[3]);
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            pair[0] = r * c;
            if pair.len() > 1 {
                pair[1] = r * s;
            }
            block += 1;
        }
    }
}
