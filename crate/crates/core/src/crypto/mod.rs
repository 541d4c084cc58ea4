//! Pairing-based primitives over BLS12-381.
//!
//! Three constructions share one curve:
//!
//! * [`hom`]: additively homomorphic public-key encryption in the exponent.
//!   A second-level ciphertext is `(pk1^k, g1^(m+k))` in G1; adding
//!   ciphertexts adds plaintexts. Decryption recovers `g1^m` and finishes
//!   with a baby-step giant-step search, so plaintexts must stay under a
//!   caller-chosen bound.
//! * [`pre`]: unidirectional single-hop proxy re-encryption on top of
//!   [`hom`]. A token `g2^(b/a)` turns a second-level ciphertext under
//!   owner `a` into a first-level ciphertext in the pairing target group
//!   that only receiver `b` can open. First-level ciphertexts live in GT,
//!   where no further token can act: re-encryption is structurally
//!   single-hop, which is what rules out transitive delegation.
//! * [`peks`]: multi-user searchable encryption. A keyword set encrypted
//!   for `n` users under `l` keywords yields `n + l + 1` group components;
//!   a per-keyword trapdoor `H1(w)^(1/x)` lets exactly the listed users
//!   test membership without seeing the keywords.
//!
//! All objects serialize through versioned, type-tagged byte encodings
//! (and base64 via [`encode_b64`]/[`decode_b64`]) so they can live in
//! object bodies and metadata entries.

pub mod bsgs;
mod hom;
mod peks;
mod pre;

pub use hom::{
    hom_add, hom_decrypt, hom_encrypt, hom_keygen, CiphertextLevel, HomCiphertext, HomKeyPair,
    HomPublicKey, HomSecretKey, DEFAULT_PLAINTEXT_BOUND,
};
pub use peks::{
    peks_encrypt, peks_keygen, peks_test, peks_trapdoor, PeksKeyPair, PeksPublicKey,
    PeksSecretKey, SearchCiphertext, Trapdoor,
};
pub use pre::{pre_decrypt, pre_reencrypt, pre_token, ReEncToken};

use ark_bls12_381::Bls12_381;
use ark_ec::pairing::PairingOutput;
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use base64::Engine;
use thiserror::Error;

pub(crate) type Gt = PairingOutput<Bls12_381>;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("plaintext {0} is outside the encryptable range")]
    PlaintextOutOfRange(u64),
    #[error("ciphertext level does not fit this operation")]
    LevelMismatch,
    #[error("discrete log not found below bound {0}")]
    DiscreteLogNotFound(u64),
    #[error("malformed encoding: {0}")]
    MalformedCiphertext(String),
}

/// Byte-encoding type tags. Every serialized object starts with
/// `[ENCODING_VERSION, tag]` so decoders can reject foreign bytes early.
pub(crate) mod tags {
    pub const HOM_PUBLIC: u8 = 1;
    pub const HOM_SECRET: u8 = 2;
    pub const CIPHER_SECOND: u8 = 3;
    pub const CIPHER_FIRST: u8 = 4;
    pub const REENC_TOKEN: u8 = 5;
    pub const PEKS_PUBLIC: u8 = 6;
    pub const PEKS_SECRET: u8 = 7;
    pub const SEARCH_CIPHER: u8 = 8;
    pub const TRAPDOOR: u8 = 9;
}

pub(crate) const ENCODING_VERSION: u8 = 1;

pub(crate) fn write_header(out: &mut Vec<u8>, tag: u8) {
    out.push(ENCODING_VERSION);
    out.push(tag);
}

pub(crate) fn check_header(bytes: &[u8], tag: u8) -> Result<&[u8], CryptoError> {
    if bytes.len() < 2 {
        return Err(CryptoError::MalformedCiphertext("truncated header".into()));
    }
    if bytes[0] != ENCODING_VERSION {
        return Err(CryptoError::MalformedCiphertext(format!(
            "unsupported encoding version {}",
            bytes[0]
        )));
    }
    if bytes[1] != tag {
        return Err(CryptoError::MalformedCiphertext(format!(
            "type tag {} where {} was expected",
            bytes[1], tag
        )));
    }
    Ok(&bytes[2..])
}

pub(crate) fn put_element<T: CanonicalSerialize>(out: &mut Vec<u8>, element: &T) {
    element
        .serialize_compressed(&mut *out)
        .expect("group element serializes");
}

pub(crate) fn get_element<T: CanonicalDeserialize>(
    bytes: &mut &[u8],
) -> Result<T, CryptoError> {
    T::deserialize_compressed(bytes)
        .map_err(|e| CryptoError::MalformedCiphertext(format!("bad group element: {e}")))
}

pub(crate) fn put_u32(out: &mut Vec<u8>, n: u32) {
    out.extend_from_slice(&n.to_le_bytes());
}

pub(crate) fn get_u32(bytes: &mut &[u8]) -> Result<u32, CryptoError> {
    if bytes.len() < 4 {
        return Err(CryptoError::MalformedCiphertext("truncated length".into()));
    }
    let n = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    *bytes = &bytes[4..];
    Ok(n)
}

pub(crate) fn expect_consumed(bytes: &[u8]) -> Result<(), CryptoError> {
    if bytes.is_empty() {
        Ok(())
    } else {
        Err(CryptoError::MalformedCiphertext(format!(
            "{} trailing bytes",
            bytes.len()
        )))
    }
}

/// Standard-alphabet base64 of an encoded object.
pub fn encode_b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_b64(text: &str) -> Result<Vec<u8>, CryptoError> {
    base64::engine::general_purpose::STANDARD
        .decode(text.trim())
        .map_err(|e| CryptoError::MalformedCiphertext(format!("bad base64: {e}")))
}
