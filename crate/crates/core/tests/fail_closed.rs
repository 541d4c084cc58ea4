//! Randomized fault injection across the enforcement path: whatever breaks,
//! the raw object never escapes while a policy binds it.

use objectlens_core::testkit::trials::fault_injection_trial;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[test]
fn thousand_fault_injections_never_leak() {
    let mut rng = ChaCha20Rng::seed_from_u64(171);
    for i in 0..1000 {
        if let Err(e) = fault_injection_trial(&mut rng) {
            panic!("injection {i}: {e}");
        }
    }
}
