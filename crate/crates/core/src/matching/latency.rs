use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyMode {
    Fixed,
    UniformJitter,
}

/// Order-path delay. `uniform_jitter` draws from `base_ms + U{0..=jitter_ms}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    pub mode: LatencyMode,
    #[serde(default)]
    pub base_ms: u64,
    #[serde(default)]
    pub jitter_ms: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::fixed(0)
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl LatencyModel {
    pub fn fixed(base_ms: u64) -> Self {
        LatencyModel {
            mode: LatencyMode::Fixed,
            base_ms,
            jitter_ms: 0,
            seed: 0,
        }
    }

    pub fn uniform_jitter(base_ms: u64, jitter_ms: u64, seed: u64) -> Self {
        LatencyModel {
            mode: LatencyMode::UniformJitter,
            base_ms,
            jitter_ms,
            seed,
        }
    }

    /// Delay for the `seq`-th order of `agent`. Each draw has its own stream so
    /// the result does not depend on how many other agents submitted first.
    pub fn delay_ms(&self, agent: &AgentId, seq: u64) -> u64 {
        match self.mode {
            LatencyMode::Fixed => self.base_ms,
            LatencyMode::UniformJitter => {
                let stream = self.seed
                    ^ fnv1a(agent.as_str().as_bytes()).rotate_left(17)
                    ^ seq.wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let mut rng = ChaCha8Rng::seed_from_u64(stream);
                self.base_ms + rng.gen_range(0..=self.jitter_ms)
            }
        }
    }
}

/// Arrival time at the matcher for an order submitted at `submit_time`.
pub fn apply_latency(submit_time: SimTime, agent: &AgentId, seq: u64, model: &LatencyModel) -> SimTime {
    submit_time + model.delay_ms(agent, seq)
}
