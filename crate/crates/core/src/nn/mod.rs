//! Layers, losses and optimizers for the fixed TCN architectures.
//!
//! The free functions here are gradient-free conveniences over the same
//! tape primitives the training code records.

mod layers;
mod optim;

pub use layers::{infer, Activation, Binding, Block, BoundParams, Conv1dLayer, Network, TcnStack};
pub use optim::{Adam, LrScheduler};

use crate::error::{Error, Result};
use crate::tensor::{Float, Tape, Tensor};

fn eval<T: Float>(
    x: &Tensor<T>,
    f: impl for<'t> FnOnce(&'t Tape<T>, crate::tensor::Var<'t, T>) -> Result<crate::tensor::Var<'t, T>>,
) -> Result<Tensor<T>> {
    let tape = Tape::new();
    let v = tape.constant(x);
    let y = f(&tape, v)?;
    Tensor::from_vec(y.shape(), y.to_vec())
}

/// Applies a single conv layer (with its activation) to `[C_in, L]`.
pub fn conv1d<T: Float>(x: &Tensor<T>, layer: &Conv1dLayer<T>) -> Result<Tensor<T>> {
    eval(x, |tape, v| layer.forward(v, tape.constant(&layer.weight), tape.constant(&layer.bias)))
}

pub fn upsample1d<T: Float>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    eval(x, |_, v| v.upsample1d(factor))
}

pub fn avgpool1d<T: Float>(x: &Tensor<T>, window: usize) -> Result<Tensor<T>> {
    eval(x, |_, v| v.avgpool1d(window))
}

/// Mean squared error over all elements.
pub fn mse<T: Float>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "mse",
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyTensor { op: "mse" });
    }
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(s / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn upsample_examples() {
        assert_eq!(upsample1d(&t(&[1, 2], vec![1.0, 2.0]), 2).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
        let x = t(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(upsample1d(&x, 1).unwrap(), x);
        let long = Tensor::<f32>::zeros(&[9, 250]);
        assert_eq!(upsample1d(&long, 4).unwrap().shape(), &[9, 1000]);
    }

    #[test]
    fn avgpool_examples() {
        assert_eq!(avgpool1d(&t(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]), 2).unwrap().data(), &[1.5, 3.5]);
        assert_eq!(avgpool1d(&t(&[1, 6], vec![0.25; 6]), 3).unwrap().data(), &[0.25, 0.25]);
        let long = Tensor::<f32>::zeros(&[9, 1000]);
        assert_eq!(avgpool1d(&long, 5).unwrap().shape(), &[9, 200]);
        assert!(matches!(
            avgpool1d(&t(&[1, 5], vec![0.0; 5]), 2),
            Err(Error::InvalidLength { .. })
        ));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[0.0, 0.0], &[2.0, 0.0]).unwrap(), 2.0);
        assert_eq!(mse(&[1.5f32, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn pool_inverts_upsample(v in proptest::collection::vec(-100.0f64..100.0, 1..40), k in 1usize..7) {
            let x = t(&[1, v.len()], v);
            let y = avgpool1d(&upsample1d(&x, k).unwrap(), k).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn mse_nonnegative_and_symmetric(a in proptest::collection::vec(-10.0f64..10.0, 1..50), seed in 0u64..1000) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * ((seed + i as u64) % 7) as f64 - 1.0).collect();
            let ab = mse(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, mse(&b, &a).unwrap());
            prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
        }
    }
}
