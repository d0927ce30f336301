//! Shared inputs for the benchmarks.

use wlingam::synth::{self, Generated, GeneratorSpec};

/// Check-up-shaped synthetic panel of `n` subjects.
pub fn paper_panel(n: usize, seed: u64) -> (GeneratorSpec, Generated) {
    let spec = synth::paper_shaped(n, seed).expect("paper-shaped spec");
    let data = synth::generate(&spec).expect("generation");
    (spec, data)
}
