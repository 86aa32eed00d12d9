//! Per-path random streams: one ChaCha stream per sample index, so a path's
//! normals do not depend on the path count or the thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub(crate) struct PathRng(ChaCha8Rng);

impl PathRng {
    pub(crate) fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    /// Three independent standard normals.
    #[inline]
    pub(crate) fn normals(&mut self) -> [f64; 3] {
        [
            StandardNormal.sample(&mut self.0),
            StandardNormal.sample(&mut self.0),
            StandardNormal.sample(&mut self.0),
        ]
    }
}
