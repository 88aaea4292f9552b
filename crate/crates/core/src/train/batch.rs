use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sampling seed for one example at one step; fixed by the triple alone.
pub fn example_seed(seed: u64, step: u64, example: usize) -> u64 {
    mix(mix(mix(seed) ^ step) ^ example as u64)
}

/// Epoch-wise shuffled example indices.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    len: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        assert!(len > 0, "cannot sample from an empty corpus");
        let mut s = BatchSampler {
            len,
            seed,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.len).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed ^ mix(self.epoch)));
        self.order.shuffle(&mut rng);
        self.pos = 0;
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.len {
                self.epoch += 1;
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}
