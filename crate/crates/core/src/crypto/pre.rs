//! Single-hop proxy re-encryption on top of the homomorphic scheme.
//!
//! A token from owner `a` to receiver `b` is `g2^(b/a)`. Applying it to a
//! second-level ciphertext `(g1^(ak), g1^(m+k))` pairs both halves into GT:
//! `(e(g1,g2)^(bk), e(g1,g2)^(m+k))`, a first-level ciphertext only `b` can
//! open. First-level ciphertexts live in GT where no further token can be
//! applied, so re-encryption cannot be chained past one hop.

use ark_ec::pairing::Pairing;
use ark_ec::AffineRepr;
use ark_bls12_381::{Bls12_381, G2Affine};
use ark_ff::Field;

use super::hom::{HomCiphertext, HomPublicKey, HomSecretKey};
use super::{
    check_header, expect_consumed, get_element, put_element, tags, write_header, CryptoError,
};

/// Delegation token from one key pair to another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReEncToken {
    pub(crate) value: G2Affine,
}

impl ReEncToken {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(&mut out, tags::REENC_TOKEN);
        put_element(&mut out, &self.value);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut rest = check_header(bytes, tags::REENC_TOKEN)?;
        let value = get_element(&mut rest)?;
        expect_consumed(rest)?;
        Ok(ReEncToken { value })
    }
}

/// Builds the token `g2^(b/a)` that lets holders of `receiver`'s secret key
/// read ciphertexts encrypted to `owner`.
pub fn pre_token(
    owner: &HomSecretKey,
    receiver: &HomPublicKey,
) -> Result<ReEncToken, CryptoError> {
    let a_inv = owner
        .a
        .inverse()
        .ok_or_else(|| CryptoError::MalformedCiphertext("zero secret key".into()))?;
    Ok(ReEncToken {
        value: (receiver.g2 * a_inv).into(),
    })
}

/// Translates a second-level ciphertext into a first-level one for the
/// token's receiver. First-level inputs are rejected: the scheme is
/// single-hop by construction.
pub fn pre_reencrypt(token: &ReEncToken, ct: &HomCiphertext) -> Result<HomCiphertext, CryptoError> {
    match ct {
        HomCiphertext::Second { c1, c2 } => Ok(HomCiphertext::First {
            c1: Bls12_381::pairing(*c1, token.value),
            c2: Bls12_381::pairing(*c2, G2Affine::generator()),
        }),
        HomCiphertext::First { .. } => Err(CryptoError::LevelMismatch),
    }
}

/// Decrypts a first-level ciphertext with the receiver's key. Second-level
/// ciphertexts belong to their owner; use [`hom_decrypt`] directly for those.
///
/// [`hom_decrypt`]: super::hom::hom_decrypt
pub fn pre_decrypt(
    sk: &HomSecretKey,
    ct: &HomCiphertext,
    bound: u64,
) -> Result<u64, CryptoError> {
    match ct {
        HomCiphertext::First { .. } => super::hom::hom_decrypt(sk, ct, bound),
        HomCiphertext::Second { .. } => Err(CryptoError::LevelMismatch),
    }
}
