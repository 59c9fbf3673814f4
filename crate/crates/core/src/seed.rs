//! Independent seed streams derived from one base seed.

/// SplitMix64 finaliser over `base`, a stream tag and an index.
pub fn derive(base: u64, stream: &str, index: u64) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for b in stream.bytes().chain(index.to_le_bytes()) {
        h = mix(h ^ u64::from(b));
    }
    h
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
