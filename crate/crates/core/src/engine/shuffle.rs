//! Seeded permutations for the aggregator shuffle.
//!
//! The generator is SplitMix64 and the shuffle is a descending Fisher–Yates
//! that draws `j = next() % (i + 1)`. Both are fixed so a recorded seed
//! reproduces its permutation on any platform.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const ROUND_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone)]
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

/// Shuffle seed for one round of a debate.
pub fn round_seed(debate_seed: u64, round: usize) -> u64 {
    SplitMix64::new(debate_seed ^ (round as u64).wrapping_mul(ROUND_SALT)).next_u64()
}

/// Debate seed for one instance of a corpus run (FNV-1a over the id, xored in).
pub fn instance_seed(corpus_seed: u64, instance_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in instance_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    SplitMix64::new(corpus_seed ^ h).next_u64()
}

/// A uniformly random permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    perm
}
