//! Seed derivation for independent random streams.

/// Mixes `base` with a path of indices (epoch, batch, datum, ...) into a new
/// 64-bit seed using the splitmix64 finalizer.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut s = splitmix(base);
    for &p in path {
        s = splitmix(s ^ splitmix(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    s
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
