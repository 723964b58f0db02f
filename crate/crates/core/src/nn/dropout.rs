use rand::Rng;

use super::Matrix;

/// Scale factors applied by one dropout call: `0` for dropped units and
/// `1 / (1 - rate)` for survivors. `None` means the call was an identity.
#[derive(Clone, Debug, Default)]
pub struct DropoutMask(Option<Matrix>);

impl DropoutMask {
    pub fn is_identity(&self) -> bool {
        self.0.is_none()
    }

    pub fn backward(&self, dy: &Matrix) -> Matrix {
        match &self.0 {
            Some(mask) => dy.zip_map(mask, |g, m| g * m),
            None => dy.clone(),
        }
    }
}

/// Inverted dropout. Identity when `training` is false or `rate` is zero.
pub fn dropout_apply<R: Rng + ?Sized>(
    x: &Matrix,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> (Matrix, DropoutMask) {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0, 1)");
    if !training || rate == 0.0 {
        return (x.clone(), DropoutMask(None));
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mask = Matrix::from_fn(x.rows(), x.cols(), |_, _| {
        if rng.gen::<f64>() < keep {
            scale
        } else {
            0.0
        }
    });
    (x.zip_map(&mask, |v, m| v * m), DropoutMask(Some(mask)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let (y, m) = dropout_apply(&x, 0.0, &mut rng, true);
        assert_eq!(y, x);
        assert!(m.is_identity());
        let (y, m) = dropout_apply(&x, 0.5, &mut rng, false);
        assert_eq!(y, x);
        assert!(m.is_identity());
    }

    #[test]
    fn drop_fraction_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Matrix::from_vec(1000, 1000, vec![1.0; 1_000_000]);
        let (y, _) = dropout_apply(&x, 0.5, &mut rng, true);
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        let mean = y.data().iter().sum::<f64>() / 1e6;
        assert!((zeros - 0.5).abs() < 0.002, "zero fraction {zeros}");
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
    }
}
