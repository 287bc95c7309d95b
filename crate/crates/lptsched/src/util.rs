//! Seed mixing. FNV-1a keeps derived RNG streams stable across platforms
//! and releases, which the byte-identical-rerun guarantee depends on.

pub(crate) const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

pub(crate) fn mix_u64(mut h: u64, v: u64) -> u64 {
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub(crate) fn mix_bytes(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive an independent stream seed from a base seed and up to three
/// context words (a tag plus identifiers).
pub(crate) fn stream_seed(base: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut h = mix_u64(FNV_OFFSET, base);
    h = mix_u64(h, tag);
    h = mix_u64(h, a);
    mix_u64(h, b)
}
