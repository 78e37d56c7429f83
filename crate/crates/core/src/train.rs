//! Batching helpers shared by the synthesizer and autoencoder trainers.

use crate::error::Result;
use crate::nn::{Binding, Network};
use crate::tensor::Tape;

/// Items evaluated per forward pass when no gradient is needed.
pub(crate) const EVAL_CHUNK: usize = 16;

/// Concatenates equally shaped `[C, L]` items into a `[B, C, L]` buffer.
pub(crate) fn stack(items: &[&[f32]]) -> Vec<f32> {
    let mut out = Vec::with_capacity(items.iter().map(|i| i.len()).sum());
    for i in items {
        out.extend_from_slice(i);
    }
    out
}

/// Runs `net` on every `[c, l]` input, `EVAL_CHUNK` items at a time.
pub(crate) fn predict(net: &Network<f32>, inputs: &[&[f32]], c: usize, l: usize) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(EVAL_CHUNK) {
        let tape = Tape::new();
        let params = net.bind(&tape, Binding::Frozen);
        let x = tape.input(&[chunk.len(), c, l], stack(chunk), false)?;
        let y = net.forward(&params, x)?;
        let per = y.len() / chunk.len();
        out.extend(y.to_vec().chunks(per).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// Mean over items of the per-item MSE between predictions and targets.
pub(crate) fn mean_item_mse(pred: &[Vec<f32>], target: &[&[f32]]) -> Result<f64> {
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(target) {
        total += crate::nn::mse(p, t)?;
    }
    Ok(total / pred.len().max(1) as f64)
}

/// One supervised step: `mse(net(x), y)` backpropagated into `net`'s
/// parameter gradients. Returns the loss.
pub(crate) fn supervised_grads(
    net: &mut Network<f32>,
    x: &[&[f32]],
    x_shape: (usize, usize),
    y: &[&[f32]],
) -> Result<f64> {
    let tape = Tape::new();
    let params = net.bind(&tape, Binding::Trainable);
    let xv = tape.input(&[x.len(), x_shape.0, x_shape.1], stack(x), false)?;
    let out = net.forward(&params, xv)?;
    let target = tape.input(&out.shape(), stack(y), false)?;
    let loss = out.mse(target)?;
    let value = loss.item() as f64;
    if !value.is_finite() {
        return Err(crate::Error::NonFinite(format!("training loss {value}")));
    }
    tape.backward(loss)?;
    net.collect_grads(&params);
    Ok(value)
}

/// Deterministic mini-batch order for one epoch.
pub(crate) fn epoch_batches(n: usize, batch: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}
