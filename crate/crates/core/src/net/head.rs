use crate::error::{Error, Result};
use crate::net::tensor::{Scalar, Tensor};

/// Per-subject argmax frame for every class of a temporal max reduction.
#[derive(Debug, Clone)]
pub struct HeadCache {
    argmax: Vec<usize>,
    frames: usize,
}

/// Max over the frame axis of `(T, subjects, classes)` logits. Absent
/// `(frame, subject)` slots carry `-inf`; ties go to the earliest frame.
pub fn temporal_head_forward<T: Scalar>(logits: &Tensor<T>) -> Result<(Tensor<T>, HeadCache)> {
    let &[frames, subjects, classes] = logits.shape() else {
        return Err(Error::Shape(format!(
            "temporal head expects (T, S, C), got {:?}",
            logits.shape()
        )));
    };
    let mut out = Tensor::filled(&[subjects, classes], T::neg_infinity());
    let mut argmax = vec![0; subjects * classes];
    let x = logits.data();
    for t in 0..frames {
        for j in 0..subjects * classes {
            let v = x[t * subjects * classes + j];
            if v > out.data()[j] {
                out.data_mut()[j] = v;
                argmax[j] = t;
            }
        }
    }
    for s in 0..subjects {
        if out.data()[s * classes..(s + 1) * classes]
            .iter()
            .any(|v| *v == T::neg_infinity())
        {
            return Err(Error::Shape(format!(
                "subject {s} is absent from every frame"
            )));
        }
    }
    Ok((out, HeadCache { argmax, frames }))
}

pub fn temporal_head_backward<T: Scalar>(cache: &HeadCache, grad_out: &Tensor<T>) -> Tensor<T> {
    let sc = cache.argmax.len();
    let mut grad = Tensor::zeros(&[cache.frames, grad_out.dim(0), grad_out.dim(1)]);
    for (j, (&t, &g)) in cache.argmax.iter().zip(grad_out.data()).enumerate() {
        grad.data_mut()[t * sc + j] += g;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::testutil::{check_close, numeric_grad, random_tensor};

    #[test]
    fn constant_over_time_reduces_to_one_frame() {
        let frame = [0.3, -1.2, 2.0, 0.1];
        let logits = Tensor::from_vec(&[3, 2, 2], frame.repeat(3));
        let (out, _) = temporal_head_forward(&logits).unwrap();
        assert_eq!(out.data(), &frame);
    }

    #[test]
    fn routes_to_max_frame() {
        let logits = Tensor::from_vec(&[3, 1, 1], vec![-1.0, 3.0, 2.0]);
        let (out, cache) = temporal_head_forward(&logits).unwrap();
        assert_eq!(out.data(), &[3.0]);
        let g = temporal_head_backward(&cache, &Tensor::from_vec(&[1, 1], vec![1.0]));
        assert_eq!(g.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn absent_slots_are_skipped_and_fully_absent_subject_errors() {
        let ninf = f64::NEG_INFINITY;
        let logits = Tensor::from_vec(&[2, 2, 1], vec![ninf, 1.0, 4.0, ninf]);
        let (out, _) = temporal_head_forward(&logits).unwrap();
        assert_eq!(out.data(), &[4.0, 1.0]);
        let gone = Tensor::from_vec(&[2, 2, 1], vec![ninf, 1.0, ninf, 2.0]);
        assert!(temporal_head_forward(&gone).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let logits = random_tensor::<f64>(&[5, 3, 4], 21);
        let probe = random_tensor::<f64>(&[3, 4], 22);
        let (_, cache) = temporal_head_forward(&logits).unwrap();
        let analytic = temporal_head_backward(&cache, &probe);
        let numeric = numeric_grad(&logits, |x| temporal_head_forward(x).unwrap().0.dot(&probe));
        check_close(&analytic, &numeric, 1e-4);
    }
}
