use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded uniform(-1, 1) matrix.
pub fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0))
}

/// `‖(zI − G)X − R‖_F / ‖R‖_F`.
pub fn complex_rel_residual(g: &DMatrix<f64>, z: Complex64, x: &DMatrix<Complex64>, rhs: &DMatrix<Complex64>) -> f64 {
    let gc = g.map(|v| Complex64::new(v, 0.0));
    let r = x * z - gc * x - rhs;
    r.norm() / rhs.norm()
}
