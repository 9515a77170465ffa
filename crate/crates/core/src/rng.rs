use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible random stream for `(seed, stream)`.
pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const RMAT_EDGES: u64 = 1;
    pub const RMAT_FEATURES: u64 = 2;
    pub const RMAT_LABELS: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const MODEL_INIT: u64 = 5;
    pub const PARTITION: u64 = 6;
    pub const BASELINE: u64 = 7;
    pub const MEASUREMENT: u64 = 8;
    pub const DEVICE_JITTER: u64 = 9;
    pub const EXEC_NOISE: u64 = 10;
}
