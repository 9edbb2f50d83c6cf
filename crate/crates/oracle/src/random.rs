//! Seeded random fixtures shared by oracle tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::captions::Sentence;

const VOCAB: [&str; 9] = [
    "forest", "loss", "the", "in", "north", "small", "patch", "of", "cleared",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sentence(rng: &mut ChaCha8Rng, max_len: usize) -> Sentence {
    let len = rng.random_range(1..=max_len);
    (0..len)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string())
        .collect()
}

/// Up to 10 pairs, sentences of 1 to 12 tokens, 1 to 3 references per pair.
pub fn caption_corpus(seed: u64) -> (Vec<Sentence>, Vec<Vec<Sentence>>) {
    let mut rng = rng(seed);
    let pairs = rng.random_range(1..=10);
    let mut cands = Vec::with_capacity(pairs);
    let mut refs = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        cands.push(sentence(&mut rng, 12));
        let k = rng.random_range(1..=3);
        refs.push((0..k).map(|_| sentence(&mut rng, 12)).collect());
    }
    (cands, refs)
}

/// A binary grid with roughly `density` ones.
pub fn binary_grid(seed: u64, w: usize, h: usize, density: f64) -> Vec<u8> {
    let mut rng = rng(seed);
    (0..w * h).map(|_| u8::from(rng.random_bool(density))).collect()
}

/// A histogram with `bins` bins whose two end bins are nonempty.
pub fn histogram(seed: u64, bins: usize) -> Vec<u64> {
    let mut rng = rng(seed);
    let sparse = rng.random_bool(0.3);
    let mut h: Vec<u64> = (0..bins)
        .map(|_| {
            if sparse && rng.random_bool(0.8) {
                0
            } else {
                rng.random_range(0..500)
            }
        })
        .collect();
    h[0] += 1;
    h[bins - 1] += 1;
    h
}
