use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Uniform random labeler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomModel {
    pub seed: u64,
    pub num_classes: usize,
}

/// `n` i.i.d. class indices drawn uniformly from `0..num_classes`.
pub fn predict_random(model: &RandomModel, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    (0..n).map(|_| rng.random_range(0..model.num_classes)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let m = RandomModel {
            seed: 5,
            num_classes: 9,
        };
        assert_eq!(predict_random(&m, 100), predict_random(&m, 100));
        assert_ne!(
            predict_random(&m, 100),
            predict_random(&RandomModel { seed: 6, ..m }, 100)
        );
    }

    #[test]
    fn frequencies_within_three_sigma() {
        let n = 90_000;
        let m = RandomModel {
            seed: 1,
            num_classes: 9,
        };
        let mut counts = [0usize; 9];
        for c in predict_random(&m, n) {
            counts[c] += 1;
        }
        let p = 1.0 / 9.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }
}
