use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over all `N x C` elements and its gradient
/// with respect to the probabilities. Probabilities are clamped to
/// `[1e-7, 1 - 1e-7]` first; the gradient is taken at the clamped value.
pub fn bce_loss<T: Scalar>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if probs.shape() != targets.shape() {
        return Err(Error::shape(
            "bce_loss",
            format!("probabilities {:?} vs targets {:?}", probs.shape(), targets.shape()),
        ));
    }
    if probs.is_empty() {
        return Err(Error::shape("bce_loss", "empty batch"));
    }
    let n = probs.len() as f64;
    let mut clamped = 0usize;
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &t) in probs.data().iter().zip(targets.data()) {
        let p = p.to_f64().unwrap_or(f64::NAN);
        let t = t.to_f64().unwrap_or(f64::NAN);
        if p.is_nan() {
            return Err(Error::NonFinite("bce_loss probabilities".into()));
        }
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        if pc != p {
            clamped += 1;
        }
        total -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        grad.push(T::lit((pc - t) / (pc * (1.0 - pc)) / n));
    }
    if clamped > 0 {
        log::debug!("bce_loss clamped {clamped} probabilities");
    }
    Ok((total / n, Tensor::new(probs.shape().to_vec(), grad)?))
}

/// `N x num_classes` one-hot targets.
pub fn one_hot<T: Scalar>(labels: &[usize], num_classes: usize) -> Result<Tensor<T>> {
    let mut data = vec![T::zero(); labels.len() * num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::InvalidArgument(format!("label {l} outside 0..{num_classes}")));
        }
        data[i * num_classes + l] = T::one();
    }
    Tensor::new(vec![labels.len(), num_classes], data)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn half_probabilities_give_ln2() {
        let p = Tensor::full(&[4, 16], 0.5f32);
        let t = one_hot::<f32>(&[0, 3, 8, 15], 16).unwrap();
        let (l, _) = bce_loss(&p, &t).unwrap();
        assert_relative_eq!(l, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn single_element() {
        let (l, g) = bce_loss(&Tensor::full(&[1, 1], 0.9f64), &Tensor::full(&[1, 1], 1.0)).unwrap();
        assert_relative_eq!(l, 0.105360515657826, epsilon = 1e-12);
        assert_relative_eq!(g.data()[0], -1.0 / 0.9, epsilon = 1e-12);
    }

    #[test]
    fn perfect_prediction_is_tiny() {
        let t = one_hot::<f64>(&[2, 5], 16).unwrap();
        let (l, g) = bce_loss(&t, &t).unwrap();
        assert!(l > 0.0 && l < 2e-7, "{l}");
        assert!(g.all_finite());
    }

    #[test]
    fn gradient_matches_difference() {
        let t = Tensor::new(vec![1, 3], vec![1.0, 0.0, 0.0]).unwrap();
        let p = Tensor::new(vec![1, 3], vec![0.3, 0.6, 0.1]).unwrap();
        let (_, g) = bce_loss(&p, &t).unwrap();
        for i in 0..3 {
            let f = |h: f64| {
                let mut q = p.clone();
                q.data_mut()[i] += h;
                bce_loss(&q, &t).unwrap().0
            };
            let num = (f(1e-6) - f(-1e-6)) / 2e-6;
            assert_relative_eq!(g.data()[i], num, max_relative = 1e-7);
        }
    }

    #[test]
    fn rejects_mismatch_and_bad_labels() {
        assert!(bce_loss(&Tensor::full(&[1, 2], 0.5f32), &Tensor::full(&[2, 1], 0.0)).is_err());
        assert!(one_hot::<f32>(&[16], 16).is_err());
    }
}
