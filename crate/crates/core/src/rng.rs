//! Per-replication random streams.
//!
//! Every replication owns one ChaCha8 key derived from
//! `(master_seed, cell_id, replication)`. Five streams of that key feed the
//! five kinds of draw, so turning one kind of draw on or off (imputation,
//! perturbation) never shifts the others:
//!
//! | stream | draws |
//! |---|---|
//! | 0 | randomized allocation and tie-breaks |
//! | 1 | outcome `u`, success iff `u < p` |
//! | 2 | missingness `u`, missing iff `u < p_missing` |
//! | 3 | index perturbations (RandUCB, RBI, RGI) |
//! | 4 | imputed outcomes |
//!
//! Within a patient the order is: allocation, missingness, outcome,
//! imputation. The outcome is drawn even when the response goes missing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DOMAIN: [u8; 8] = *b"missband";

/// The five random streams of one replication.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    /// Randomized allocation draws and index tie-breaks.
    pub allocation: ChaCha8Rng,
    /// Outcome uniforms.
    pub outcome: ChaCha8Rng,
    /// Missingness uniforms.
    pub missingness: ChaCha8Rng,
    /// Perturbations of semi-randomized indices.
    pub perturbation: ChaCha8Rng,
    /// Imputed outcome uniforms.
    pub imputation: ChaCha8Rng,
}

impl TrialStreams {
    /// Streams for `replication` of cell `cell_id` under `master_seed`.
    pub fn new(master_seed: u64, cell_id: u64, replication: u64) -> TrialStreams {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&cell_id.to_le_bytes());
        key[16..24].copy_from_slice(&replication.to_le_bytes());
        key[24..].copy_from_slice(&DOMAIN);
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::from_seed(key);
            rng.set_stream(id);
            rng
        };
        TrialStreams {
            allocation: stream(0),
            outcome: stream(1),
            missingness: stream(2),
            perturbation: stream(3),
            imputation: stream(4),
        }
    }
}

/// Uniform draw on `[0, 1)`.
pub(crate) fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = TrialStreams::new(1, 2, 3);
        let mut b = TrialStreams::new(1, 2, 3);
        assert_eq!(uniform(&mut a.outcome), uniform(&mut b.outcome));
        let mut c = TrialStreams::new(1, 2, 3);
        let x = [
            uniform(&mut c.allocation),
            uniform(&mut c.outcome),
            uniform(&mut c.missingness),
            uniform(&mut c.perturbation),
            uniform(&mut c.imputation),
        ];
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                assert_ne!(x[i], x[j]);
            }
        }
        let mut d = TrialStreams::new(1, 2, 4);
        let mut e = TrialStreams::new(1, 3, 3);
        let first = uniform(&mut TrialStreams::new(1, 2, 3).outcome);
        assert_ne!(first, uniform(&mut d.outcome));
        assert_ne!(first, uniform(&mut e.outcome));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = TrialStreams::new(0, 0, 0);
        for _ in 0..10_000 {
            let u = uniform(&mut s.allocation);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
