//! Counter-addressable pseudo-random numbers.
//!
//! Activation sampling must be a pure function of `(seed, step_index)` so
//! that trajectories replay bitwise and reimplementations in other languages
//! can reproduce the exact activation sequence. We therefore fix the
//! generator: a xoshiro256++ state is derived for every `(seed, step)` pair
//! by running splitmix64 from the state `seed + step * GOLDEN_GAMMA`.

/// splitmix64 increment (Steele, Lea, Flood).
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256++ (Blackman, Vigna).
#[derive(Clone, Debug)]
pub struct Xoshiro256pp {
    s: [u64; 4],
}

impl Xoshiro256pp {
    /// Seeds all four words from a splitmix64 stream, the recommended
    /// initialization for the xoshiro family.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        Self {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
        }
    }

    /// Generator for one activation step: state is derived from
    /// `seed + step * GOLDEN_GAMMA`, so each step owns an independent stream.
    pub fn for_step(seed: u64, step: u64) -> Self {
        Self::from_seed(seed.wrapping_add(step.wrapping_mul(GOLDEN_GAMMA)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller (two uniforms per pair of calls).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in [0, bound) by rejection-free mapping (bias is
    /// negligible for the small bounds used here).
    pub fn next_index(&mut self, bound: usize) -> usize {
        (self.next_f64() * bound as f64).min(bound as f64 - 1.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_step_streams_are_replayable() {
        let mut a = Xoshiro256pp::for_step(42, 7);
        let mut b = Xoshiro256pp::for_step(42, 7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_steps_give_different_streams() {
        let mut a = Xoshiro256pp::for_step(42, 7);
        let mut b = Xoshiro256pp::for_step(42, 8);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_is_in_unit_interval() {
        let mut rng = Xoshiro256pp::from_seed(1);
        for _ in 0..1000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
