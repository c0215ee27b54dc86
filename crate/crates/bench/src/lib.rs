//! Inputs shared by the benchmarks.

use cfhf_core::fitting::TransitionDataset;
use cfhf_core::spectra::TransitionLine;
use cfhf_core::HalfInt;

/// Measured hyperfine ladders of the three lowest levels.
pub fn measured_ladders() -> TransitionDataset {
    let ladders: [((usize, usize), f64, [f64; 8]); 3] = [
        ((1, 2), 0.01, [7.33, 7.21, 7.08, 6.94, 6.80, 6.64, 6.48, 6.31]),
        ((1, 3), 0.001, [23.815, 23.671, 23.527, 23.381, 23.235, 23.088, 22.941, 22.794]),
        ((2, 3), 0.003, [16.489, 16.467, 16.455, 16.450, 16.450, 16.455, 16.467, 16.489]),
    ];
    let mut rows = Vec::new();
    for ((i, f), sigma, energies) in ladders {
        for (k, e) in energies.into_iter().enumerate() {
            let m = HalfInt::from_twice(2 * k as i32 - 7);
            rows.push(TransitionLine::new(i, f, Some(m), e).with_uncertainty(sigma));
        }
    }
    TransitionDataset::new(rows)
}
