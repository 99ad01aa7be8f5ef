use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible stream for `(seed, stream)`.
pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream ids keep the consumers of one seed from sharing random draws.
pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_HEAD: u64 = 2;
pub(crate) const STREAM_SYNTH: u64 = 3;
pub(crate) const STREAM_UNDERSAMPLE: u64 = 4;
pub(crate) const STREAM_PROBE: u64 = 5;
pub(crate) const STREAM_EPOCH_BASE: u64 = 1 << 32;
