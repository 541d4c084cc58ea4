//! Baby-step giant-step discrete logarithm over the groups the scheme
//! decrypts in: G1 for second-level ciphertexts, GT for first-level ones.
//!
//! The baby table holds `2^16` multiples of the group generator keyed by a
//! 64-bit hash of their compressed encoding, sized to the square root of
//! the default `2^32` plaintext bound. Each group's table is built lazily
//! on first use and then shared read-only, so code paths that never
//! decrypt allocate nothing. Giant steps in G1 are batch-normalized to
//! amortize the per-point field inversion; candidate hits are confirmed by
//! recomputing the scalar multiple, which makes hash collisions harmless.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::OnceLock;

use ark_bls12_381::{Bls12_381, Fr, G1Affine, G1Projective, G2Affine};
use ark_ec::pairing::Pairing;
use ark_ec::{AffineRepr, CurveGroup, PrimeGroup};
use ark_ff::Zero;
use ark_serialize::CanonicalSerialize;

use super::{CryptoError, Gt};

/// The first-level base `e(g1, g2)` that first-level ciphertexts encode
/// plaintexts against.
pub(crate) fn gt_base() -> Gt {
    Bls12_381::pairing(G1Affine::generator(), G2Affine::generator())
}

/// Baby-table size: sqrt of the default plaintext bound.
pub const TABLE_SIZE: u64 = 1 << 16;

const BATCH: usize = 256;

fn key_of(bytes: &[u8]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

fn compress<T: CanonicalSerialize>(element: &T) -> Vec<u8> {
    let mut buf = Vec::with_capacity(element.compressed_size());
    element
        .serialize_compressed(&mut buf)
        .expect("group element serializes");
    buf
}

pub struct G1Table {
    m: u64,
    baby: HashMap<u64, u32>,
    /// `-(m) * g`, added once per giant step.
    giant: G1Projective,
}

impl G1Table {
    pub fn build(m: u64) -> Self {
        let g = G1Projective::generator();
        let mut baby = HashMap::with_capacity(m as usize);
        let mut points = Vec::with_capacity(BATCH);
        let mut cur = G1Projective::zero();
        let mut j = 0u64;
        while j < m {
            points.clear();
            let take = BATCH.min((m - j) as usize);
            for _ in 0..take {
                points.push(cur);
                cur += g;
            }
            let affine = G1Projective::normalize_batch(&points);
            for (off, p) in affine.iter().enumerate() {
                baby.insert(key_of(&compress(p)), (j + off as u64) as u32);
            }
            j += take as u64;
        }
        let giant = -(g * Fr::from(m));
        G1Table { m, baby, giant }
    }

    /// Finds `x < bound` with `x * g == target`.
    pub fn solve(&self, target: &G1Projective, bound: u64) -> Result<u64, CryptoError> {
        let g = G1Projective::generator();
        let giant_limit = bound.div_ceil(self.m);
        let mut cur = *target;
        let mut i = 0u64;
        let mut batch = Vec::with_capacity(BATCH);
        while i < giant_limit {
            batch.clear();
            let take = BATCH.min((giant_limit - i) as usize);
            let mut walker = cur;
            for _ in 0..take {
                batch.push(walker);
                walker += self.giant;
            }
            let affine = G1Projective::normalize_batch(&batch);
            for (off, p) in affine.iter().enumerate() {
                if let Some(&j) = self.baby.get(&key_of(&compress(p))) {
                    let x = (i + off as u64) * self.m + j as u64;
                    if x < bound && g * Fr::from(x) == *target {
                        return Ok(x);
                    }
                }
            }
            cur = walker;
            i += take as u64;
        }
        Err(CryptoError::DiscreteLogNotFound(bound))
    }
}

pub struct GtTable {
    m: u64,
    baby: HashMap<u64, u32>,
    base: Gt,
    giant: Gt,
}

impl GtTable {
    pub fn build(m: u64) -> Self {
        let base = gt_base();
        let mut baby = HashMap::with_capacity(m as usize);
        let mut cur = Gt::zero();
        for j in 0..m {
            baby.insert(key_of(&compress(&cur)), j as u32);
            cur += base;
        }
        let giant = -(base * Fr::from(m));
        GtTable {
            m,
            baby,
            base,
            giant,
        }
    }

    /// Finds `x < bound` with `base^x == target`.
    pub fn solve(&self, target: &Gt, bound: u64) -> Result<u64, CryptoError> {
        let giant_limit = bound.div_ceil(self.m);
        let mut cur = *target;
        let mut i = 0u64;
        while i < giant_limit {
            if let Some(&j) = self.baby.get(&key_of(&compress(&cur))) {
                let x = i * self.m + j as u64;
                if x < bound && self.base * Fr::from(x) == *target {
                    return Ok(x);
                }
            }
            cur += self.giant;
            i += 1;
        }
        Err(CryptoError::DiscreteLogNotFound(bound))
    }
}

static G1_TABLE: OnceLock<G1Table> = OnceLock::new();
static GT_TABLE: OnceLock<GtTable> = OnceLock::new();

/// Solves in G1 using the shared lazily-built table.
pub fn solve_g1(target: &G1Projective, bound: u64) -> Result<u64, CryptoError> {
    G1_TABLE
        .get_or_init(|| G1Table::build(TABLE_SIZE))
        .solve(target, bound)
}

/// Solves in GT using the shared lazily-built table.
pub fn solve_gt(target: &Gt, bound: u64) -> Result<u64, CryptoError> {
    GT_TABLE
        .get_or_init(|| GtTable::build(TABLE_SIZE))
        .solve(target, bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_table_round_trips_g1() {
        let table = G1Table::build(16);
        let g = G1Projective::generator();
        for x in [0u64, 1, 15, 16, 17, 100, 255] {
            let target = g * Fr::from(x);
            assert_eq!(table.solve(&target, 256).unwrap(), x);
        }
        let out = g * Fr::from(256u64);
        assert!(matches!(
            table.solve(&out, 256),
            Err(CryptoError::DiscreteLogNotFound(256))
        ));
    }

    #[test]
    fn small_table_round_trips_gt() {
        let table = GtTable::build(8);
        let base = gt_base();
        for x in [0u64, 1, 7, 8, 9, 63] {
            let target = base * Fr::from(x);
            assert_eq!(table.solve(&target, 64).unwrap(), x);
        }
        let out = base * Fr::from(64u64);
        assert!(matches!(
            table.solve(&out, 64),
            Err(CryptoError::DiscreteLogNotFound(64))
        ));
    }

    #[test]
    fn bound_is_exclusive_and_tight() {
        let table = G1Table::build(4);
        let g = G1Projective::generator();
        let target = g * Fr::from(11u64);
        assert_eq!(table.solve(&target, 12).unwrap(), 11);
        assert!(table.solve(&target, 11).is_err());
    }
}
