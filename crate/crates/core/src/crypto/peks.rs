//! Public-key searchable encryption with multiple readers per ciphertext.
//!
//! A reader's key pair is `sk = x`, `pk = g2^x`. Encrypting keywords
//! `w_1..w_l` for readers `pk_1..pk_n` samples one secret `s` and publishes
//!
//! * `a = g1^s`,
//! * per reader: a fingerprint of `pk_i` plus `b_i = pk_i^s`,
//! * per keyword: a hash tag of `e(H1(w_j), g2)^s`,
//!
//! so the whole ciphertext has `n + l + 1` components. A trapdoor for `w`
//! is `H1(w)^(1/x)`; pairing it with the holder's `b_i` reproduces
//! `e(H1(w), g2)^s`, and the test reduces to tag membership. Keyword tags
//! are sorted and deduplicated, so the ciphertext leaks neither keyword
//! order nor anything about non-queried keywords beyond their count.

use ark_bls12_381::{g1::Config as G1Config, Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::hashing::{
    curve_maps::wb::WBMap, map_to_curve_hasher::MapToCurveBasedHasher, HashToCurve,
};
use ark_ec::pairing::Pairing;
use ark_ec::{AffineRepr, CurveGroup, PrimeGroup};
use ark_ff::field_hashers::DefaultFieldHasher;
use ark_ff::Field;
use ark_serialize::CanonicalSerialize;
use ark_std::UniformRand;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::{
    check_header, expect_consumed, get_element, get_u32, put_element, put_u32, tags,
    write_header, CryptoError, Gt,
};

const DOMAIN_H1: &[u8] = b"objectlens-peks-h1-v1";
const DOMAIN_TAG: &[u8] = b"objectlens-peks-tag-v1";
const DOMAIN_FP: &[u8] = b"objectlens-peks-fp-v1";

type Fingerprint = [u8; 32];
type KeywordTag = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeksSecretKey {
    pub(crate) x: Fr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeksPublicKey {
    pub(crate) g2x: G2Affine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeksKeyPair {
    pub sk: PeksSecretKey,
    pub pk: PeksPublicKey,
}

/// Searchable ciphertext covering one keyword set for a set of readers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchCiphertext {
    pub(crate) a: G1Affine,
    pub(crate) users: Vec<(Fingerprint, G2Affine)>,
    pub(crate) tags: Vec<KeywordTag>,
}

/// Search capability for one keyword, bound to one reader's key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trapdoor {
    pub(crate) fp: Fingerprint,
    pub(crate) t: G1Affine,
}

fn hash_to_g1(keyword: &str) -> Result<G1Affine, CryptoError> {
    let hasher = MapToCurveBasedHasher::<
        G1Projective,
        DefaultFieldHasher<Sha256, 128>,
        WBMap<G1Config>,
    >::new(DOMAIN_H1)
    .map_err(|e| CryptoError::MalformedCiphertext(format!("hash-to-curve setup: {e}")))?;
    hasher
        .hash(keyword.as_bytes())
        .map_err(|e| CryptoError::MalformedCiphertext(format!("hash-to-curve: {e}")))
}

fn fingerprint(pk: &PeksPublicKey) -> Fingerprint {
    let mut bytes = Vec::new();
    pk.g2x
        .serialize_compressed(&mut bytes)
        .expect("serialization into Vec cannot fail");
    let mut h = Sha256::new();
    h.update(DOMAIN_FP);
    h.update(&bytes);
    h.finalize().into()
}

fn keyword_tag(shared: &Gt) -> KeywordTag {
    let mut bytes = Vec::new();
    shared
        .serialize_compressed(&mut bytes)
        .expect("serialization into Vec cannot fail");
    let mut h = Sha256::new();
    h.update(DOMAIN_TAG);
    h.update(&bytes);
    h.finalize().into()
}

impl PeksSecretKey {
    pub fn public_key(&self) -> PeksPublicKey {
        PeksPublicKey {
            g2x: (G2Projective::generator() * self.x).into_affine(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(&mut out, tags::PEKS_SECRET);
        put_element(&mut out, &self.x);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut rest = check_header(bytes, tags::PEKS_SECRET)?;
        let x: Fr = get_element(&mut rest)?;
        expect_consumed(rest)?;
        if x.inverse().is_none() {
            return Err(CryptoError::MalformedCiphertext("zero secret key".into()));
        }
        Ok(PeksSecretKey { x })
    }
}

impl PeksPublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(&mut out, tags::PEKS_PUBLIC);
        put_element(&mut out, &self.g2x);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut rest = check_header(bytes, tags::PEKS_PUBLIC)?;
        let g2x = get_element(&mut rest)?;
        expect_consumed(rest)?;
        Ok(PeksPublicKey { g2x })
    }
}

impl SearchCiphertext {
    pub fn reader_count(&self) -> usize {
        self.users.len()
    }

    pub fn keyword_count(&self) -> usize {
        self.tags.len()
    }

    /// Total component count: one shared element, one per reader, one per
    /// distinct keyword.
    pub fn component_count(&self) -> usize {
        1 + self.users.len() + self.tags.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(&mut out, tags::SEARCH_CIPHER);
        put_element(&mut out, &self.a);
        put_u32(&mut out, self.users.len() as u32);
        for (fp, b) in &self.users {
            out.extend_from_slice(fp);
            put_element(&mut out, b);
        }
        put_u32(&mut out, self.tags.len() as u32);
        for tag in &self.tags {
            out.extend_from_slice(tag);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut rest = check_header(bytes, tags::SEARCH_CIPHER)?;
        let a = get_element(&mut rest)?;
        let n = get_u32(&mut rest)? as usize;
        let mut users = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let fp = take_hash(&mut rest)?;
            let b = get_element(&mut rest)?;
            users.push((fp, b));
        }
        let l = get_u32(&mut rest)? as usize;
        let mut tags_list = Vec::with_capacity(l.min(1024));
        for _ in 0..l {
            tags_list.push(take_hash(&mut rest)?);
        }
        expect_consumed(rest)?;
        Ok(SearchCiphertext {
            a,
            users,
            tags: tags_list,
        })
    }
}

impl Trapdoor {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_header(&mut out, tags::TRAPDOOR);
        out.extend_from_slice(&self.fp);
        put_element(&mut out, &self.t);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut rest = check_header(bytes, tags::TRAPDOOR)?;
        let fp = take_hash(&mut rest)?;
        let t = get_element(&mut rest)?;
        expect_consumed(rest)?;
        Ok(Trapdoor { fp, t })
    }
}

fn take_hash(bytes: &mut &[u8]) -> Result<[u8; 32], CryptoError> {
    if bytes.len() < 32 {
        return Err(CryptoError::MalformedCiphertext("truncated hash".into()));
    }
    let mut out = [0u8; 32];
    out.copy_from_slice(&bytes[..32]);
    *bytes = &bytes[32..];
    Ok(out)
}

pub fn peks_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> PeksKeyPair {
    let x = loop {
        let candidate = Fr::rand(rng);
        if candidate.inverse().is_some() {
            break candidate;
        }
    };
    let sk = PeksSecretKey { x };
    let pk = sk.public_key();
    PeksKeyPair { sk, pk }
}

/// Encrypts a keyword set so that every listed reader can test for any of
/// the keywords with a trapdoor of their own.
pub fn peks_encrypt<R: RngCore + CryptoRng>(
    readers: &[PeksPublicKey],
    keywords: &[String],
    rng: &mut R,
) -> Result<SearchCiphertext, CryptoError> {
    let s = loop {
        let candidate = Fr::rand(rng);
        if candidate.inverse().is_some() {
            break candidate;
        }
    };
    let a = (G1Projective::generator() * s).into_affine();
    let g2 = G2Affine::generator();

    let mut users = Vec::with_capacity(readers.len());
    for pk in readers {
        users.push((fingerprint(pk), (pk.g2x * s).into_affine()));
    }

    let mut tags_list = Vec::with_capacity(keywords.len());
    for w in keywords {
        let h = hash_to_g1(w)?;
        let shared = Bls12_381::pairing((h * s).into_affine(), g2);
        tags_list.push(keyword_tag(&shared));
    }
    tags_list.sort_unstable();
    tags_list.dedup();

    Ok(SearchCiphertext {
        a,
        users,
        tags: tags_list,
    })
}

/// Derives the holder's search capability for one keyword.
pub fn peks_trapdoor(sk: &PeksSecretKey, keyword: &str) -> Result<Trapdoor, CryptoError> {
    let x_inv = sk
        .x
        .inverse()
        .ok_or_else(|| CryptoError::MalformedCiphertext("zero secret key".into()))?;
    let h = hash_to_g1(keyword)?;
    Ok(Trapdoor {
        fp: fingerprint(&sk.public_key()),
        t: (h * x_inv).into_affine(),
    })
}

/// Tests whether the trapdoor's keyword is in the ciphertext's keyword set.
/// Returns `false` when the trapdoor holder is not a listed reader.
pub fn peks_test(ct: &SearchCiphertext, td: &Trapdoor) -> Result<bool, CryptoError> {
    let Some((_, b)) = ct.users.iter().find(|(fp, _)| *fp == td.fp) else {
        return Ok(false);
    };
    let shared = Bls12_381::pairing(td.t, *b);
    let tag = keyword_tag(&shared);
    Ok(ct.tags.binary_search(&tag).is_ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn keywords(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn every_reader_matches_every_keyword() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for n in [1usize, 3] {
            for words in [vec!["alpha"], vec!["alpha", "beta", "x y", "émile"]] {
                let pairs: Vec<_> = (0..n).map(|_| peks_keygen(&mut rng)).collect();
                let pks: Vec<_> = pairs.iter().map(|p| p.pk.clone()).collect();
                let ct = peks_encrypt(&pks, &keywords(&words), &mut rng).unwrap();
                assert_eq!(ct.component_count(), n + words.len() + 1);
                for pair in &pairs {
                    for w in &words {
                        let td = peks_trapdoor(&pair.sk, w).unwrap();
                        assert!(peks_test(&ct, &td).unwrap(), "{w} should match");
                    }
                    let td = peks_trapdoor(&pair.sk, "absent").unwrap();
                    assert!(!peks_test(&ct, &td).unwrap());
                }
            }
        }
    }

    #[test]
    fn unlisted_reader_never_matches() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let listed = peks_keygen(&mut rng);
        let outsider = peks_keygen(&mut rng);
        let ct = peks_encrypt(
            &[listed.pk.clone()],
            &keywords(&["alpha", "beta"]),
            &mut rng,
        )
        .unwrap();
        for w in ["alpha", "beta", "gamma"] {
            let td = peks_trapdoor(&outsider.sk, w).unwrap();
            assert!(!peks_test(&ct, &td).unwrap());
        }
    }

    #[test]
    fn duplicate_keywords_collapse() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let pair = peks_keygen(&mut rng);
        let ct = peks_encrypt(
            &[pair.pk.clone()],
            &keywords(&["dup", "dup", "other"]),
            &mut rng,
        )
        .unwrap();
        assert_eq!(ct.keyword_count(), 2);
        let td = peks_trapdoor(&pair.sk, "dup").unwrap();
        assert!(peks_test(&ct, &td).unwrap());
    }

    #[test]
    fn empty_sets_are_harmless() {
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        let pair = peks_keygen(&mut rng);
        let ct = peks_encrypt(&[], &keywords(&["w"]), &mut rng).unwrap();
        let td = peks_trapdoor(&pair.sk, "w").unwrap();
        assert!(!peks_test(&ct, &td).unwrap());

        let ct = peks_encrypt(&[pair.pk.clone()], &[], &mut rng).unwrap();
        let td = peks_trapdoor(&pair.sk, "w").unwrap();
        assert!(!peks_test(&ct, &td).unwrap());
    }

    #[test]
    fn serialization_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(25);
        let pair = peks_keygen(&mut rng);
        let other = peks_keygen(&mut rng);

        let pk2 = PeksPublicKey::from_bytes(&pair.pk.to_bytes()).unwrap();
        assert_eq!(pair.pk, pk2);
        let sk2 = PeksSecretKey::from_bytes(&pair.sk.to_bytes()).unwrap();
        assert_eq!(pair.sk, sk2);

        let ct = peks_encrypt(
            &[pair.pk.clone(), other.pk.clone()],
            &keywords(&["k1", "k2", "k3"]),
            &mut rng,
        )
        .unwrap();
        let ct2 = SearchCiphertext::from_bytes(&ct.to_bytes()).unwrap();
        assert_eq!(ct, ct2);

        let td = peks_trapdoor(&sk2, "k2").unwrap();
        let td2 = Trapdoor::from_bytes(&td.to_bytes()).unwrap();
        assert_eq!(td, td2);
        assert!(peks_test(&ct2, &td2).unwrap());
    }

    #[test]
    fn malformed_bytes_are_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(26);
        let pair = peks_keygen(&mut rng);
        let ct = peks_encrypt(&[pair.pk.clone()], &keywords(&["w"]), &mut rng).unwrap();
        let bytes = ct.to_bytes();
        assert!(SearchCiphertext::from_bytes(&bytes[..bytes.len() - 5]).is_err());
        assert!(SearchCiphertext::from_bytes(&pair.pk.to_bytes()).is_err());
        let mut extra = bytes.clone();
        extra.push(1);
        assert!(SearchCiphertext::from_bytes(&extra).is_err());
        assert!(Trapdoor::from_bytes(&bytes).is_err());
    }
}
