//! Symmetric sealing and password-based key derivation.
//!
//! The sealing construction is a SHA-256 counter-mode keystream with a
//! truncated SHA-256 tag. It is deterministic and bit-exact, which is what a
//! reproducible simulator needs, but it is NOT production cryptography: the
//! tag is a plain hash rather than a MAC, and nothing here is constant-time.
//! [`seal`] / [`open`] are the only entry points the protocol uses, so a
//! vetted AEAD can be dropped in behind them.

use std::fmt;

use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::ErrorKind;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 16;
pub const TAG_LEN: usize = 16;

const KDF_LABEL: &[u8] = b"kdf-v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("integrity check failed")]
    IntegrityFailure,
}

impl CryptoError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CryptoError::InvalidInput(_) => ErrorKind::InvalidInput,
            CryptoError::IntegrityFailure => ErrorKind::IntegrityFailure,
        }
    }
}

/// A 256-bit symmetric key tagged with the registry id it was issued under.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SecretKey {
    key_id: u32,
    bytes: [u8; KEY_LEN],
}

impl SecretKey {
    pub fn new(key_id: u32, bytes: [u8; KEY_LEN]) -> Self {
        SecretKey { key_id, bytes }
    }

    pub fn key_id(&self) -> u32 {
        self.key_id
    }

    pub fn bytes(&self) -> &[u8; KEY_LEN] {
        &self.bytes
    }

    /// Same key material under a different registry id.
    pub fn with_key_id(mut self, key_id: u32) -> Self {
        self.key_id = key_id;
        self
    }
}

// Key material never ends up in logs.
impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey")
            .field("key_id", &self.key_id)
            .field("bytes", &"<redacted>")
            .finish()
    }
}

pub type Nonce = [u8; NONCE_LEN];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SealedBlob {
    pub key_id: u32,
    pub nonce: Nonce,
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

fn len_prefixed(hasher: &mut Sha256, bytes: &[u8]) {
    let len = u32::try_from(bytes.len()).expect("kdf input longer than u32::MAX");
    hasher.update(len.to_be_bytes());
    hasher.update(bytes);
}

/// Derives a user's long-term key from their password.
///
/// The returned key carries `key_id` 0; registries assign real ids.
pub fn derive_key(
    password: &str,
    principal_name: &str,
    realm: &str,
) -> Result<SecretKey, CryptoError> {
    if password.is_empty() {
        return Err(CryptoError::InvalidInput("password must not be empty"));
    }
    let mut hasher = Sha256::new();
    hasher.update(KDF_LABEL);
    len_prefixed(&mut hasher, realm.as_bytes());
    len_prefixed(&mut hasher, principal_name.as_bytes());
    len_prefixed(&mut hasher, password.as_bytes());
    Ok(SecretKey::new(0, hasher.finalize().into()))
}

fn xor_keystream(key: &SecretKey, nonce: &Nonce, data: &mut [u8]) {
    for (block_index, chunk) in data.chunks_mut(32).enumerate() {
        let mut hasher = Sha256::new();
        hasher.update(key.bytes);
        hasher.update(nonce);
        hasher.update((block_index as u64).to_be_bytes());
        let block: [u8; 32] = hasher.finalize().into();
        for (byte, ks) in chunk.iter_mut().zip(block.iter()) {
            *byte ^= ks;
        }
    }
}

fn compute_tag(key: &SecretKey, nonce: &Nonce, ciphertext: &[u8]) -> [u8; TAG_LEN] {
    let mut hasher = Sha256::new();
    hasher.update(key.bytes);
    hasher.update(nonce);
    hasher.update(ciphertext);
    let digest: [u8; 32] = hasher.finalize().into();
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&digest[..TAG_LEN]);
    tag
}

pub fn seal(plaintext: &[u8], key: &SecretKey, nonce: &Nonce) -> SealedBlob {
    let mut ciphertext = plaintext.to_vec();
    xor_keystream(key, nonce, &mut ciphertext);
    let tag = compute_tag(key, nonce, &ciphertext);
    SealedBlob {
        key_id: key.key_id,
        nonce: *nonce,
        ciphertext,
        tag,
    }
}

/// Opens a blob sealed by [`seal`].
///
/// Fails with `IntegrityFailure` when the tag does not verify under `key`,
/// or when the blob names a different key id.
pub fn open(blob: &SealedBlob, key: &SecretKey) -> Result<Vec<u8>, CryptoError> {
    if blob.key_id != key.key_id {
        return Err(CryptoError::IntegrityFailure);
    }
    let expected = compute_tag(key, &blob.nonce, &blob.ciphertext);
    // Constant-time comparison is a non-goal for this construction.
    if expected != blob.tag {
        return Err(CryptoError::IntegrityFailure);
    }
    let mut plaintext = blob.ciphertext.clone();
    xor_keystream(key, &blob.nonce, &mut plaintext);
    Ok(plaintext)
}

/// Draws a fresh 32-byte session key. Session keys are not registered and
/// carry `key_id` 0.
pub fn random_session_key<R: RngCore + ?Sized>(rng: &mut R) -> SecretKey {
    let mut bytes = [0u8; KEY_LEN];
    rng.fill_bytes(&mut bytes);
    SecretKey::new(0, bytes)
}

pub fn random_nonce<R: RngCore + ?Sized>(rng: &mut R) -> Nonce {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    nonce
}

/// Hands out unique key ids within one registry.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    next_id: u32,
}

impl KeyRegistry {
    pub fn new() -> Self {
        // 0 is reserved for unregistered (session) keys.
        KeyRegistry { next_id: 1 }
    }

    fn allocate(&mut self) -> u32 {
        let id = self.next_id;
        self.next_id = self.next_id.checked_add(1).expect("key id space exhausted");
        id
    }

    pub fn derive(
        &mut self,
        password: &str,
        principal_name: &str,
        realm: &str,
    ) -> Result<SecretKey, CryptoError> {
        let key = derive_key(password, principal_name, realm)?;
        Ok(key.with_key_id(self.allocate()))
    }

    pub fn generate<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> SecretKey {
        random_session_key(rng).with_key_id(self.allocate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn key(id: u32, fill: u8) -> SecretKey {
        SecretKey::new(id, [fill; KEY_LEN])
    }

    #[test]
    fn derive_is_deterministic() {
        let a = derive_key("pw", "alice", "WSN").unwrap();
        let b = derive_key("pw", "alice", "WSN").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn derive_separates_principals() {
        let a = derive_key("pw", "alice", "WSN").unwrap();
        let b = derive_key("pw", "bob", "WSN").unwrap();
        assert_ne!(a.bytes(), b.bytes());
    }

    #[test]
    fn derive_rejects_empty_password() {
        assert_eq!(
            derive_key("", "alice", "WSN").unwrap_err().kind(),
            ErrorKind::InvalidInput
        );
    }

    #[test]
    fn length_prefix_prevents_field_shifting() {
        // "ab"+"c" and "a"+"bc" would collide without length prefixes.
        let a = derive_key("pw", "ab", "c").unwrap();
        let b = derive_key("pw", "a", "bc").unwrap();
        assert_ne!(a.bytes(), b.bytes());
    }

    #[test]
    fn empty_plaintext_still_tagged() {
        let k = key(3, 7);
        let blob = seal(b"", &k, &[9; NONCE_LEN]);
        assert!(blob.ciphertext.is_empty());
        assert_eq!(open(&blob, &k).unwrap(), Vec::<u8>::new());
        let mut bad = blob.clone();
        bad.tag[0] ^= 1;
        assert_eq!(open(&bad, &k), Err(CryptoError::IntegrityFailure));
    }

    #[test]
    fn flipped_ciphertext_byte_fails() {
        let k = key(1, 1);
        let mut blob = seal(b"service ticket", &k, &[0; NONCE_LEN]);
        blob.ciphertext[4] ^= 0x80;
        assert_eq!(open(&blob, &k), Err(CryptoError::IntegrityFailure));
    }

    #[test]
    fn key_id_mismatch_fails() {
        let k = key(1, 1);
        let blob = seal(b"x", &k, &[0; NONCE_LEN]);
        assert_eq!(
            open(&blob, &k.clone().with_key_id(2)),
            Err(CryptoError::IntegrityFailure)
        );
    }

    #[test]
    fn session_keys_deterministic_per_seed() {
        let a = random_session_key(&mut ChaCha20Rng::seed_from_u64(42));
        let b = random_session_key(&mut ChaCha20Rng::seed_from_u64(42));
        let c = random_session_key(&mut ChaCha20Rng::seed_from_u64(43));
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let first = random_session_key(&mut rng);
        let second = random_session_key(&mut rng);
        assert_ne!(first, second);
    }

    #[test]
    fn registry_ids_are_unique() {
        let mut reg = KeyRegistry::new();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = reg.derive("pw", "alice", "WSN").unwrap();
        let b = reg.generate(&mut rng);
        let c = reg.generate(&mut rng);
        assert!(a.key_id() != b.key_id() && b.key_id() != c.key_id() && a.key_id() != 0);
    }

    #[test]
    fn debug_redacts_key_material() {
        let text = format!("{:?}", key(5, 0xaa));
        assert!(!text.contains("170") && !text.contains("aa"));
    }

    #[test]
    fn distinct_triples_give_distinct_keys() {
        use rand::Rng;
        use std::collections::{HashMap, HashSet};
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut seen: HashMap<[u8; KEY_LEN], (String, String, String)> = HashMap::new();
        let mut triples = HashSet::new();
        let word = |rng: &mut ChaCha20Rng| -> String {
            let len = rng.random_range(1..6);
            (0..len)
                .map(|_| rng.random_range(b'a'..=b'e') as char)
                .collect()
        };
        while triples.len() < 1500 {
            let t = (word(&mut rng), word(&mut rng), word(&mut rng));
            if !triples.insert(t.clone()) {
                continue;
            }
            let k = derive_key(&t.0, &t.1, &t.2).unwrap();
            if let Some(prev) = seen.insert(*k.bytes(), t.clone()) {
                panic!("{prev:?} and {t:?} derive the same key");
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip(m in proptest::collection::vec(any::<u8>(), 0..300),
                      k in any::<[u8; 32]>(), n in any::<[u8; 16]>()) {
            let k = SecretKey::new(1, k);
            let blob = seal(&m, &k, &n);
            prop_assert_eq!(blob.ciphertext.len(), m.len());
            prop_assert_eq!(open(&blob, &k).unwrap(), m);
        }

        #[test]
        fn wrong_key_fails(m in proptest::collection::vec(any::<u8>(), 0..64),
                           k1 in any::<[u8; 32]>(), k2 in any::<[u8; 32]>(), n in any::<[u8; 16]>()) {
            prop_assume!(k1 != k2);
            let blob = seal(&m, &SecretKey::new(1, k1), &n);
            prop_assert_eq!(open(&blob, &SecretKey::new(1, k2)), Err(CryptoError::IntegrityFailure));
        }

        #[test]
        fn any_single_byte_mutation_fails(m in proptest::collection::vec(any::<u8>(), 1..64),
                                         k in any::<[u8; 32]>(), n in any::<[u8; 16]>(),
                                         pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
            let k = SecretKey::new(9, k);
            let blob = seal(&m, &k, &n);
            // nonce ‖ ciphertext ‖ tag ‖ key_id, addressed as one byte string
            let total = NONCE_LEN + blob.ciphertext.len() + TAG_LEN + 4;
            let at = pos.index(total);
            let mut bad = blob.clone();
            if at < NONCE_LEN {
                bad.nonce[at] ^= flip;
            } else if at < NONCE_LEN + bad.ciphertext.len() {
                bad.ciphertext[at - NONCE_LEN] ^= flip;
            } else if at < NONCE_LEN + bad.ciphertext.len() + TAG_LEN {
                bad.tag[at - NONCE_LEN - bad.ciphertext.len()] ^= flip;
            } else {
                let shift = 8 * (at - NONCE_LEN - bad.ciphertext.len() - TAG_LEN);
                bad.key_id ^= u32::from(flip) << shift;
            }
            prop_assert_eq!(open(&bad, &k), Err(CryptoError::IntegrityFailure));
        }
    }
}
