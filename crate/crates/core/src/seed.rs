/// Independent stream seed for item `index` of a run seeded with `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a named stream, such as a scene id.
pub fn derive_named(master: u64, name: &str) -> u64 {
    name.bytes().fold(derive_seed(master, u64::MAX), |acc, b| derive_seed(acc, b as u64))
}
