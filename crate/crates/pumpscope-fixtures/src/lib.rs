//! Deterministic synthetic pump-cohort fixtures.
//!
//! `generate` writes a complete pipeline input tree — channel registry,
//! announcement pattern file, per-channel message logs, a replay manifest
//! with OHLCV fixture files, a market-cap table, and a pipeline config —
//! and returns ground-truth statistics computed directly from the
//! synthesized data with plain arithmetic. The ground truth shares no code
//! with the pipeline under test: every statistic is recomputed here from
//! its definition, so agreement between the two is evidence, not tautology.
//!
//! Everything is a pure function of the seed. The same seed produces byte-
//! identical files and bit-identical ground truth on every run.

mod market;
mod scenario;
mod truth;
mod write;

use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use scenario::{quote_of, EventSpec, Fate, Scenario};
pub use write::replay_data_file;
pub use truth::{
    GroundTruth, TruthBin, TruthChannel, TruthCoinBin, TruthEvent, TruthGroupMeans, TruthNth,
    TruthRow, TruthScatter, TruthSplit, TruthWeek,
};

/// A generated fixture tree plus the ground truth for its contents.
pub struct Fixture {
    pub root: PathBuf,
    /// The pipeline config, entry point for every stage.
    pub config: PathBuf,
    pub truth: GroundTruth,
}

/// Synthesizes the scenario for `seed` and writes the full input tree under
/// `root` (created if needed).
pub fn generate(root: &Path, seed: u64) -> io::Result<Fixture> {
    let scenario = scenario::build(seed);
    let world = market::synthesize(&scenario);
    let truth = truth::compute(&scenario, &world);
    write::emit(root, &scenario, &world, &truth)?;
    Ok(Fixture { root: root.to_path_buf(), config: root.join("config.json"), truth })
}

/// An independent rng stream per purpose: consumption in one part of the
/// generator can never shift the draws of another.
pub(crate) fn sub_rng(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(tag.as_bytes()))
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
