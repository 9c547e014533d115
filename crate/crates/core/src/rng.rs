//! Counter-based random streams.
//!
//! Every random number in the crate is a pure function of
//! `(seed, domain, a, b, draw index)`. A stream hashes its key once into a
//! SplitMix64 state and draw `i` is the SplitMix64 output at position `i`,
//! so nothing is carried between draws and a path or particle produces the
//! same numbers no matter which worker runs it or in which order.

use statrs::function::erf::erfc_inv;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream domains keep the counters of unrelated consumers disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    Scenario = 1,
    Init = 2,
    Particle = 3,
    Resample = 4,
    Bridge = 5,
    InnerPath = 6,
    Oracle = 7,
}

/// SplitMix64 finalizer, used to derive child seeds.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a nested computation.
pub fn derive_seed(seed: u64, tag: u64, i: u64, j: u64) -> u64 {
    mix64(mix64(mix64(seed ^ tag.rotate_left(17)) ^ i) ^ j.rotate_left(31))
}

#[inline(always)]
fn to_open_unit(r: u64) -> f64 {
    ((r >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Inverse standard normal CDF.
#[inline]
pub fn norm_inv(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// A keyed stream: fixed `(seed, domain, a, b)`, indexed by the draw counter.
#[derive(Debug, Clone, Copy)]
pub struct Stream {
    state: u64,
}

impl Stream {
    /// `b` must be below 2^24 (particle indices, inner path indices).
    pub fn new(seed: u64, domain: Domain, a: u32, b: u32) -> Self {
        debug_assert!(b < (1 << 24));
        let tag = ((domain as u64) << 56) | ((a as u64) << 24) | u64::from(b & 0x00FF_FFFF);
        Stream {
            state: mix64(mix64(seed) ^ tag),
        }
    }

    /// Two independent uniforms on the open interval (0, 1).
    #[inline]
    pub fn uniforms(&self, draw: u64) -> [f64; 2] {
        let c = self.state.wrapping_add(draw.wrapping_mul(GAMMA.wrapping_mul(2)));
        [to_open_unit(mix64(c)), to_open_unit(mix64(c.wrapping_add(GAMMA)))]
    }

    #[inline]
    pub fn uniform(&self, draw: u64) -> f64 {
        self.uniforms(draw)[0]
    }

    /// Two independent standard normals by inverse-CDF transform.
    #[inline]
    pub fn normals(&self, draw: u64) -> [f64; 2] {
        let [u0, u1] = self.uniforms(draw);
        [norm_inv(u0), norm_inv(u1)]
    }
}
