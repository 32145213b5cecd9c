//! Deterministic seed derivation. Every random stream in the workspace is
//! keyed by a path of integers under one master seed (master -> run ->
//! generation -> slot -> episode -> purpose), so reruns are bit-identical
//! regardless of thread scheduling.

/// Stream labels, kept distinct so sibling derivations never collide.
pub mod tag {
    pub const RUN: u64 = 1;
    pub const GENERATION: u64 = 2;
    pub const SLOT: u64 = 3;
    pub const EPISODE: u64 = 4;
    pub const Q_INIT: u64 = 5;
    pub const POLICY: u64 = 6;
    pub const SIM: u64 = 7;
    pub const GENOTYPE_INIT: u64 = 8;
    pub const EVOLUTION_OPS: u64 = 9;
}

/// Derives a child seed from a parent seed and an index (SplitMix64 finalizer).
pub fn derive(parent: u64, index: u64) -> u64 {
    let mut z = parent
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed under a tagged namespace, e.g. `(seed, EPISODE, 3)`.
pub fn derive_tagged(parent: u64, tag: u64, index: u64) -> u64 {
    derive(derive(parent, tag), index)
}
