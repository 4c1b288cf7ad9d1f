//! Quasi-posterior samplers, analytic oracles, and synthetic data
//! generators behind the experiments.

pub mod generate;
pub mod location;
pub mod logistic;
pub mod metropolis;
pub mod peruggia;

/// Derives a per-stream seed from a base seed, for independent replications
/// and chains. SplitMix64 finalizer over the combined words.
pub fn derived_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
