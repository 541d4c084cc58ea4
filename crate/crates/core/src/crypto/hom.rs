//! Additively homomorphic encryption in the exponent.
//!
//! Keys are `sk = a`, `pk = (g1^a, g2^a)`; the G2 half exists so owners can
//! be re-encryption targets. A second-level ciphertext of `m` is
//! `(pk1^k, g1^(m+k))` for fresh `k`. Componentwise addition adds
//! plaintexts; ciphertexts must be under the same key and at the same
//! level for a sum to mean anything, and mixing levels is rejected.
//! Decryption strips `g1^k` and finds `m` by bounded discrete-log search.

use ark_bls12_381::{Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::{AffineRepr, CurveGroup, PrimeGroup};
use ark_ff::Field;
use ark_std::UniformRand;
use rand::{CryptoRng, RngCore};

use super::{
    bsgs, check_header, expect_consumed, get_element, put_element, tags, write_header,
    CryptoError, Gt,
};

/// Default exclusive upper bound for encryptable integers.
pub const DEFAULT_PLAINTEXT_BOUND: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomSecretKey {
    pub(crate) a: Fr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomPublicKey {
    pub(crate) g1: G1Affine,
    pub(crate) g2: G2Affine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomKeyPair {
    pub sk: HomSecretKey,
    pub pk: HomPublicKey,
}

/// Which decryption key a ciphertext answers to: `Second` is the owner's
/// original form, `First` is the re-encrypted form for one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiphertextLevel {
    Second,
    First,
}

impl std::fmt::Display for CiphertextLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CiphertextLevel::Second => write!(f, "second"),
            CiphertextLevel::First => write!(f, "first"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum HomCiphertext {
    Second { c1: G1Affine, c2: G1Affine },
    First { c1: Gt, c2: Gt },
}

impl HomCiphertext {
    pub fn level(&self) -> CiphertextLevel {
        match self {
            HomCiphertext::Second { .. } => CiphertextLevel::Second,
            HomCiphertext::First { .. } => CiphertextLevel::First,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            HomCiphertext::Second { c1, c2 } => {
                write_header(&mut out, tags::CIPHER_SECOND);
                put_element(&mut out, c1);
                put_element(&mut out, c2);
            }
            HomCiphertext::First { c1, c2 } => {
                write_header(&mut out, tags::CIPHER_FIRST);
                put_element(&mut out, c1);
                put_element(&mut out, c2);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < 2 {
            return Err(CryptoError::MalformedCiphertext("truncated header".into()));
        }
        match bytes[1] {
            tags::CIPHER_SECOND => {
                let mut rest = check_header(bytes, tags::CIPHER_SECOND)?;
                let c1 = get_element(&mut rest)?;
                let c2 = get_element(&mut rest)?;
                expect_consumed(rest)?;
                Ok(HomCiphertext::Second { c1, c2 })
            }
            tags::CIPHER_FIRST => {
                let mut rest = check_header(bytes, tags::CIPHER_FIRST)?;
                let c1 = get_element(&mut rest)?;
                let c2 = get_element(&mut rest)?;
                expect_consumed(rest)?;
                Ok(HomCiphertext::First { c1, c2 })
            }
            other => Err(CryptoError::MalformedCiphertext(format!(
                "unknown ciphertext tag {other}"
            ))),
        }
    }
}

impl HomPublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(&mut out, tags::HOM_PUBLIC);
        put_element(&mut out, &self.g1);
        put_element(&mut out, &self.g2);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut rest = check_header(bytes, tags::HOM_PUBLIC)?;
        let g1: G1Affine = get_element(&mut rest)?;
        let g2: G2Affine = get_element(&mut rest)?;
        expect_consumed(rest)?;
        Ok(HomPublicKey { g1, g2 })
    }
}

impl HomSecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(&mut out, tags::HOM_SECRET);
        put_element(&mut out, &self.a);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut rest = check_header(bytes, tags::HOM_SECRET)?;
        let a: Fr = get_element(&mut rest)?;
        expect_consumed(rest)?;
        if a.inverse().is_none() {
            return Err(CryptoError::MalformedCiphertext("zero secret key".into()));
        }
        Ok(HomSecretKey { a })
    }

    /// Recomputes the matching public key.
    pub fn public_key(&self) -> HomPublicKey {
        HomPublicKey {
            g1: (G1Projective::generator() * self.a).into_affine(),
            g2: (G2Projective::generator() * self.a).into_affine(),
        }
    }
}

pub fn hom_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> HomKeyPair {
    let a = loop {
        let candidate = Fr::rand(rng);
        if candidate.inverse().is_some() {
            break candidate;
        }
    };
    let sk = HomSecretKey { a };
    let pk = sk.public_key();
    HomKeyPair { sk, pk }
}

/// Encrypts `m < bound` to a second-level ciphertext under `pk`.
pub fn hom_encrypt<R: RngCore + CryptoRng>(
    pk: &HomPublicKey,
    m: u64,
    bound: u64,
    rng: &mut R,
) -> Result<HomCiphertext, CryptoError> {
    if m >= bound {
        return Err(CryptoError::PlaintextOutOfRange(m));
    }
    let k = Fr::rand(rng);
    let c1 = pk.g1 * k;
    let c2 = G1Projective::generator() * (Fr::from(m) + k);
    Ok(HomCiphertext::Second {
        c1: c1.into_affine(),
        c2: c2.into_affine(),
    })
}

/// Adds two ciphertexts of the same level (and, for the result to decrypt,
/// the same key). Level mixing is rejected; key equality is not visible in
/// the ciphertexts themselves, so adding across keys yields a value no key
/// decrypts.
pub fn hom_add(a: &HomCiphertext, b: &HomCiphertext) -> Result<HomCiphertext, CryptoError> {
    match (a, b) {
        (
            HomCiphertext::Second { c1: a1, c2: a2 },
            HomCiphertext::Second { c1: b1, c2: b2 },
        ) => Ok(HomCiphertext::Second {
            c1: (*a1 + *b1).into_affine(),
            c2: (*a2 + *b2).into_affine(),
        }),
        (HomCiphertext::First { c1: a1, c2: a2 }, HomCiphertext::First { c1: b1, c2: b2 }) => {
            Ok(HomCiphertext::First {
                c1: *a1 + *b1,
                c2: *a2 + *b2,
            })
        }
        _ => Err(CryptoError::LevelMismatch),
    }
}

/// Decrypts either level with the key it answers to: the owner's key for
/// second-level ciphertexts, the receiver's for first-level ones. The
/// plaintext must be below `bound`.
pub fn hom_decrypt(
    sk: &HomSecretKey,
    ct: &HomCiphertext,
    bound: u64,
) -> Result<u64, CryptoError> {
    let a_inv = sk
        .a
        .inverse()
        .ok_or_else(|| CryptoError::MalformedCiphertext("zero secret key".into()))?;
    match ct {
        HomCiphertext::Second { c1, c2 } => {
            let shared = c1.into_group() * a_inv;
            let target = c2.into_group() - shared;
            bsgs::solve_g1(&target, bound)
        }
        HomCiphertext::First { c1, c2 } => {
            let shared = *c1 * a_inv;
            let target = *c2 - shared;
            bsgs::solve_gt(&target, bound)
        }
    }
}
