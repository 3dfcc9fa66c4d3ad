use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Counter-addressed random stream backed by ChaCha8.
///
/// A stream is identified by `(seed, stream)`; `counter` is the position in
/// 32-bit words. Child streams from [`RngStream::split`] share the key but use
/// a different ChaCha stream id, so their outputs never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, 0, 0)
    }

    /// Reconstructs a stream at an exact position.
    pub fn at(seed: u64, stream: u64, counter: u128) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        inner.set_word_pos(counter);
        RngStream { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Independent child stream labelled `label`. Does not advance `self`.
    pub fn split(&self, label: u64) -> RngStream {
        let stream = mix(self.stream ^ mix(label.wrapping_add(0x5851_F42D_4C95_7F2D)));
        RngStream::at(self.seed, stream, 0)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.gen::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

/// Element-wise `mean + std · z` with `z` standard normal drawn from `rng`.
/// `std == 0` returns `mean` exactly and consumes no randomness.
pub fn sample_gaussian(rng: &mut RngStream, mean: &[f64], std: f64) -> Vec<f64> {
    assert!(std >= 0.0, "std must be non-negative");
    if std == 0.0 {
        return mean.to_vec();
    }
    mean.iter().map(|&m| m + std * rng.normal()).collect()
}
