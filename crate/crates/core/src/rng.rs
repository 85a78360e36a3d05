//! Seedable random streams.
//!
//! Every episode owns one [`RngStream`] derived from `(master_seed, episode_index)`.
//! The derivation is fixed so datasets are bit-reproducible across platforms:
//!
//! 1. `seed = master_seed ^ episode_index.wrapping_mul(0x9E3779B97F4A7C15)`
//! 2. four consecutive SplitMix64 outputs from `seed` form the xoshiro256** state
//! 3. an all-zero state is replaced by [`ZERO_STATE_REPLACEMENT`]
//!
//! Gaussian draws use Box–Muller on two uniforms; the second variate of each
//! pair is cached in the stream and returned by the next gaussian call.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Used when the derived xoshiro state is all zeros (the generator would be stuck).
pub const ZERO_STATE_REPLACEMENT: [u64; 4] = [
    0x6A09_E667_F3BC_C909,
    0xBB67_AE85_84CA_A73B,
    0x3C6E_F372_FE94_F82B,
    0xA54F_F53A_5F1D_36F1,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// xoshiro256** stream with its derivation recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct RngStream {
    state: [u64; 4],
    master_seed: u64,
    episode_index: u64,
    cached_normal: Option<f64>,
}

/// Derives the stream for one episode (or any other indexed consumer).
pub fn derive_stream(master_seed: u64, episode_index: u64) -> RngStream {
    let mut sm = SplitMix64::new(master_seed ^ episode_index.wrapping_mul(GOLDEN_GAMMA));
    let mut state = [0u64; 4];
    for word in &mut state {
        *word = sm.next_u64();
    }
    RngStream::from_state(state, master_seed, episode_index)
}

impl RngStream {
    pub fn from_state(state: [u64; 4], master_seed: u64, episode_index: u64) -> Self {
        let state = if state == [0; 4] {
            ZERO_STATE_REPLACEMENT
        } else {
            state
        };
        Self {
            state,
            master_seed,
            episode_index,
            cached_normal: None,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn episode_index(&self) -> u64 {
        self.episode_index
    }

    pub fn state(&self) -> [u64; 4] {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..n` (`n > 0`), via Lemire's multiply-shift with rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal variate (Box–Muller, pairwise cached).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // 1 - u lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Child stream for a sub-consumer (e.g. one training epoch), derived from
    /// this stream's seed material without advancing it.
    pub fn fork(&self, index: u64) -> RngStream {
        let mixed = self.state[0] ^ self.state[2].rotate_left(17) ^ index.wrapping_mul(GOLDEN_GAMMA);
        let mut sm = SplitMix64::new(mixed);
        let mut state = [0u64; 4];
        for word in &mut state {
            *word = sm.next_u64();
        }
        RngStream::from_state(state, self.master_seed, index)
    }
}
