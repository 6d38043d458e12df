//! Counter-based random streams for reproducible parallel ensembles.
//!
//! Every integrator (sub)step of every path owns an independent SplitMix64
//! stream whose starting state is a hash of `(seed, path, step, substep)`.
//! Draws therefore never depend on scheduling or on how many paths run
//! concurrently. Within a step, edges draw in canonical edge order.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key for one sample path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathKey(u64);

impl PathKey {
    pub fn new(seed: u64, path: u64) -> Self {
        PathKey(mix64(
            mix64(seed ^ 0x005E_ED0F_C075_E715) ^ path.wrapping_mul(GOLDEN_GAMMA),
        ))
    }

    /// Stream for integrator step `step`; `substep` is 1 only for the second
    /// half of a step split at a topology switch.
    #[inline]
    pub fn stream(self, step: u64, substep: u64) -> StepStream {
        let counter = (step << 1) | (substep & 1);
        StepStream {
            state: mix64(self.0 ^ mix64(counter.wrapping_add(GOLDEN_GAMMA))),
        }
    }
}

/// SplitMix64 sequence; cheap to create, used for a handful of draws.
#[derive(Debug, Clone)]
pub struct StepStream {
    state: u64,
}

impl StepStream {
    #[inline(always)]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for StepStream {
    #[inline(always)]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
