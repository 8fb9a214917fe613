//! Counter-based splittable random streams.
//!
//! A stream is addressed by a root seed and a path of integers. The path is
//! folded into a 256-bit ChaCha key, so every `(root, path)` pair names an
//! independent keystream and replaying it reproduces the draws bit for bit.
//! Ensembles key one child per replicate; draws inside a replicate are read
//! from the keystream in cell order, so the draw for `(replicate, cell)`
//! never depends on how replicates are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    root: u64,
    path: Vec<u64>,
}

impl SeededStream {
    pub fn new(root: u64) -> Self {
        Self { root, path: Vec::new() }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Sub-stream `index` of this stream.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self { root: self.root, path }
    }

    /// Sub-stream addressed by a string tag, for naming experiment phases.
    pub fn named(&self, tag: &str) -> Self {
        let h = tag.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        self.child(h)
    }

    fn key(&self) -> [u8; 32] {
        let mut k = splitmix(self.root);
        for (depth, &p) in self.path.iter().enumerate() {
            k = splitmix(k ^ splitmix(p.wrapping_add((depth as u64 + 1).wrapping_mul(GOLDEN))));
        }
        let mut seed = [0u8; 32];
        for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
            k = splitmix(k.wrapping_add(i as u64));
            chunk.copy_from_slice(&k.to_le_bytes());
        }
        seed
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng(ChaCha8Rng::from_seed(self.key()))
    }
}

/// Generator bound to one stream.
#[derive(Debug, Clone)]
pub struct StreamRng(ChaCha8Rng);

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
