//! LOBPCG against the dense symmetric eigensolver.

mod common;

use hisd::eigen::{dense_eigs, lobpcg_smallest, LobpcgOptions};
use hisd::linalg::random_orthonormal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::test_matrix;

#[test]
fn smallest_eigenvalues_agree_on_twenty_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = LobpcgOptions {
        tol: 1e-12,
        max_iter: 500,
    };
    for case in 0..20 {
        let d = rng.random_range(6..=30);
        let k = rng.random_range(1..=d / 3);
        let h = test_matrix(&mut rng, d);
        let dense = dense_eigs(&h).unwrap();
        let v0 = random_orthonormal(&mut rng, d, k);
        let it = lobpcg_smallest(|x| &h * x, &v0, &opts).unwrap();
        assert!(
            it.converged,
            "case {case}: d = {d}, k = {k} did not converge"
        );
        for i in 0..k {
            let (a, b) = (it.eigenvalues[i], dense.eigenvalues[i]);
            assert!(
                (a - b).abs() <= 1e-8 * b.abs(),
                "case {case}: eigenvalue {i}: {a} vs {b}"
            );
        }
    }
}
