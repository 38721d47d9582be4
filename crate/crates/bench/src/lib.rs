//! Fixtures shared by the criterion benches.

use microstein::{FiniteNLaw, Sample};

/// Null sample of size `n` for particle number `n_particles`, fixed seed.
pub fn null_fixture(n_particles: f64, n: usize) -> Sample {
    FiniteNLaw::new(n_particles)
        .and_then(|law| law.sample(n, 0xBE7C))
        .expect("valid fixture parameters")
}
