//! Seed fan-out and hashing helpers shared across the toolkit.
//!
//! Every run derives all of its randomness from a single root seed. Sub-seeds
//! are produced by hashing the root together with a short label (corpus, init,
//! train, ...) so that adding a consumer never shifts the streams of the
//! existing ones.

use sha2::{Digest, Sha256};

/// One round of the splitmix64 mixer. Used for cheap deterministic seed
/// derivation; the constants are the standard ones from Steele et al.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a labeled sub-seed from a root seed. Stable across runs and
/// platforms: the label bytes are folded in with FNV-1a before mixing.
pub fn sub_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(root ^ h)
}

/// Deterministic coin flip for a labeled decision, e.g. breaking a 50/50
/// matrix-language tie for one utterance.
pub fn seeded_coin(seed: u64) -> bool {
    splitmix64(seed) & 1 == 1
}

/// Hex SHA-256 of a byte slice. Used to freeze golden tensors and to compare
/// parameter states for bitwise equality.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Hex SHA-256 of a stream of f64 values in little-endian byte order.
pub fn hash_f64s<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> String {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seed_depends_on_label() {
        assert_ne!(sub_seed(7, "corpus"), sub_seed(7, "train"));
        assert_eq!(sub_seed(7, "corpus"), sub_seed(7, "corpus"));
        assert_ne!(sub_seed(7, "corpus"), sub_seed(8, "corpus"));
    }

    #[test]
    fn sha256_known_vector() {
        // Empty-input digest from FIPS 180-4.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn f64_hash_is_order_sensitive() {
        let a = [1.0f64, 2.0];
        let b = [2.0f64, 1.0];
        assert_ne!(hash_f64s(a.iter()), hash_f64s(b.iter()));
    }
}
