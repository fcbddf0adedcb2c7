//! Seeded parameter initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::matrix::Matrix;
use super::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Uniform on `[-a, a]`.
    Uniform(f64),
    /// Zero-mean normal with standard deviation `sqrt(2 / fan_in)`, where
    /// `fan_in` is the row count.
    HeNormal,
}

pub fn init_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scheme: InitScheme, rng: &mut R) -> Matrix {
    let values = match scheme {
        InitScheme::Uniform(a) => (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect(),
        InitScheme::HeNormal => {
            let std = (2.0 / rows.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            (0..rows * cols).map(|_| normal.sample(rng)).collect()
        }
    };
    Matrix::from_vec(rows, cols, values).expect("length matches shape")
}

pub fn seeded_init(rows: usize, cols: usize, scheme: InitScheme, seed: u64) -> Matrix {
    init_matrix(rows, cols, scheme, &mut rng_from_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_matrix() {
        for scheme in [InitScheme::Uniform(0.1), InitScheme::HeNormal] {
            assert_eq!(seeded_init(4, 7, scheme, 42), seeded_init(4, 7, scheme, 42));
            assert_ne!(seeded_init(4, 7, scheme, 42), seeded_init(4, 7, scheme, 43));
        }
    }

    #[test]
    fn uniform_stays_in_range() {
        let m = seeded_init(50, 50, InitScheme::Uniform(0.3), 5);
        assert!(m.as_slice().iter().all(|v| (-0.3..=0.3).contains(v)));
    }

    #[test]
    fn he_normal_mean_is_within_three_standard_errors() {
        // 100_000 draws with fan_in 8: std = 0.5, standard error = 0.5 / sqrt(1e5).
        let m = seeded_init(8, 12_500, InitScheme::HeNormal, 11);
        let n = m.as_slice().len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / n;
        let std = (2.0f64 / 8.0).sqrt();
        assert!(mean.abs() < 3.0 * std / n.sqrt(), "mean {mean}");
        let var = m.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var - std * std).abs() < 0.01);
    }
}
