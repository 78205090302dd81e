//! Builds and caches the coefficient tables used by the heavy experiments.

use kloosterlab_core::hecke;

fn main() {
    for (weight, n_max) in [(12u32, 1_000_000usize), (16, 400_000)] {
        let t0 = std::time::Instant::now();
        let f = hecke::load_or_compute(weight, n_max).expect("table build");
        println!(
            "weight {weight}: {} coefficients in {:?} (λ({}) = {:.6})",
            f.n_max,
            t0.elapsed(),
            n_max,
            f.lambda[n_max]
        );
    }
}
