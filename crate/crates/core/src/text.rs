//! Text normalization, tokenization and content hashing shared by every stage.

use sha2::{Digest, Sha256};

/// Collapses whitespace runs to single spaces and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercases, removes every non-alphanumeric character and splits on whitespace.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Number of whitespace-separated tokens.
pub fn whitespace_len(text: &str) -> usize {
    text.split_whitespace().count()
}

fn digest(parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part.as_bytes());
    }
    hasher.finalize().into()
}

/// Hex digest (first 16 hex chars) of the unit-separator joined parts.
pub fn content_id(parts: &[&str]) -> String {
    digest(parts)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Full 64-char hex digest.
pub fn full_hash(parts: &[&str]) -> String {
    digest(parts).iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable 64-bit hash used to derive seeds.
pub fn hash_u64(parts: &[&str]) -> u64 {
    let d = digest(parts);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Mixes a global seed with a stream label into a sub-seed.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let seed = seed.to_string();
    let mut all = Vec::with_capacity(parts.len() + 1);
    all.push(seed.as_str());
    all.extend_from_slice(parts);
    hash_u64(&all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_strip_punctuation_and_case() {
        assert_eq!(
            word_tokens("What's a Sub-poena?  (Really!)"),
            vec!["whats", "a", "subpoena", "really"]
        );
        assert!(word_tokens(" -- ?? ").is_empty());
    }

    #[test]
    fn unicode_lowercase() {
        assert_eq!(word_tokens("ÉTAT Straße"), vec!["état", "straße"]);
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_whitespace("  a\t\tb \n c  "), "a b c");
    }

    #[test]
    fn ids_are_stable_and_separator_aware() {
        assert_eq!(content_id(&["d1", "0"]), content_id(&["d1", "0"]));
        assert_ne!(content_id(&["d1", "0"]), content_id(&["d10", ""]));
        assert_eq!(content_id(&["x"]).len(), 16);
    }
}
