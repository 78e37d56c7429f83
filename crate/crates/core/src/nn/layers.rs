use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Float, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

/// A "same"-padded dilated 1-D convolution followed by an activation.
#[derive(Clone, Debug)]
pub struct Conv1dLayer<T> {
    pub name: String,
    /// `[C_out, C_in, K]`
    pub weight: Tensor<T>,
    /// `[C_out]`
    pub bias: Tensor<T>,
    pub dilation: usize,
    pub activation: Activation,
}

impl<T: Float> Conv1dLayer<T> {
    /// Uniform init in `±1/sqrt(C_in·K)`, zero bias.
    pub fn new<R: Rng>(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        dilation: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(kernel == 1 || kernel == 3, "kernel must be 1 or 3");
        assert!(dilation >= 1);
        let bound = 1.0 / ((c_in * kernel) as f64).sqrt();
        let w = (0..c_out * c_in * kernel)
            .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
            .collect();
        Self {
            name: name.into(),
            weight: Tensor::from_vec(vec![c_out, c_in, kernel], w).unwrap().with_grad(),
            bias: Tensor::zeros(&[c_out]).with_grad(),
            dilation,
            activation,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn forward<'t>(&self, x: Var<'t, T>, w: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
        let y = x.conv1d(w, Some(b), self.dilation)?;
        Ok(match self.activation {
            Activation::Linear => y,
            Activation::Relu => y.relu(),
        })
    }
}

/// Dilated temporal convolution stack, channel count preserved.
#[derive(Clone, Debug)]
pub struct TcnStack<T> {
    pub layers: Vec<Conv1dLayer<T>>,
}

impl<T: Float> TcnStack<T> {
    pub fn new<R: Rng>(prefix: &str, channels: usize, kernel: usize, dilations: &[usize], rng: &mut R) -> Self {
        let layers = dilations
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                Conv1dLayer::new(format!("{prefix}.d{}", i + 1), channels, channels, kernel, d, Activation::Relu, rng)
            })
            .collect();
        Self { layers }
    }
}

#[derive(Clone, Debug)]
pub enum Block<T> {
    Conv(Conv1dLayer<T>),
    Tcn(TcnStack<T>),
    Upsample(usize),
    AvgPool(usize),
}

/// Whether a bound network contributes parameter gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binding {
    Trainable,
    /// Parameters are constants; gradients still flow to the input.
    Frozen,
}

/// Parameters of a [`Network`] recorded on one tape.
pub struct BoundParams<'t, T> {
    vars: Vec<Var<'t, T>>,
}

/// A feed-forward chain of conv layers, TCN stacks and resampling.
#[derive(Clone, Debug)]
pub struct Network<T> {
    pub blocks: Vec<Block<T>>,
}

impl<T: Float> Network<T> {
    pub fn new(blocks: Vec<Block<T>>) -> Self {
        Self { blocks }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Conv1dLayer<T>> {
        self.blocks.iter().flat_map(|b| -> Box<dyn Iterator<Item = &Conv1dLayer<T>>> {
            match b {
                Block::Conv(c) => Box::new(std::iter::once(c)),
                Block::Tcn(t) => Box::new(t.layers.iter()),
                _ => Box::new(std::iter::empty()),
            }
        })
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Conv1dLayer<T>> {
        self.blocks.iter_mut().flat_map(|b| -> Box<dyn Iterator<Item = &mut Conv1dLayer<T>>> {
            match b {
                Block::Conv(c) => Box::new(std::iter::once(c)),
                Block::Tcn(t) => Box::new(t.layers.iter_mut()),
                _ => Box::new(std::iter::empty()),
            }
        })
    }

    /// `(name, tensor)` pairs in canonical order: weight then bias per layer.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers()
            .flat_map(|l| [(format!("{}.weight", l.name), &l.weight), (format!("{}.bias", l.name), &l.bias)])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn in_channels(&self) -> usize {
        self.layers().next().map_or(0, |l| l.in_channels())
    }

    pub fn out_channels(&self) -> usize {
        self.layers().last().map_or(0, |l| l.out_channels())
    }

    /// Output length for an input of length `len`, or an error naming the
    /// first resampling block that cannot accept it.
    pub fn output_len(&self, len: usize) -> Result<usize> {
        let mut l = len;
        for b in &self.blocks {
            match *b {
                Block::Upsample(f) => l *= f,
                Block::AvgPool(w) => {
                    if l % w != 0 {
                        return Err(Error::InvalidLength {
                            op: "avgpool1d",
                            len: l,
                            reason: format!("not divisible by window {w}"),
                        });
                    }
                    l /= w;
                }
                _ => {}
            }
        }
        Ok(l)
    }

    pub fn bind<'t>(&self, tape: &'t Tape<T>, binding: Binding) -> BoundParams<'t, T> {
        let vars = self
            .named_params()
            .into_iter()
            .map(|(_, t)| match binding {
                Binding::Trainable => tape.leaf(t),
                Binding::Frozen => tape.constant(t),
            })
            .collect();
        BoundParams { vars }
    }

    pub fn forward<'t>(&self, params: &BoundParams<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = x;
        let mut p = params.vars.iter();
        let mut conv = |layer: &Conv1dLayer<T>, h: Var<'t, T>| {
            let w = *p.next().expect("bound params exhausted");
            let b = *p.next().expect("bound params exhausted");
            layer.forward(h, w, b)
        };
        for block in &self.blocks {
            h = match block {
                Block::Conv(c) => conv(c, h)?,
                Block::Tcn(t) => {
                    for l in &t.layers {
                        h = conv(l, h)?;
                    }
                    h
                }
                Block::Upsample(f) => h.upsample1d(*f)?,
                Block::AvgPool(w) => h.avgpool1d(*w)?,
            };
        }
        Ok(h)
    }

    /// Moves gradients from a backward pass into the parameter tensors.
    pub fn collect_grads(&mut self, params: &BoundParams<'_, T>) {
        for (t, v) in self.params_mut().into_iter().zip(&params.vars) {
            if let Some(g) = v.grad() {
                t.accumulate_grad(&g);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for t in self.params_mut() {
            t.zero_grad();
        }
    }

    /// Converts the whole network to another float type.
    pub fn cast<U: Float>(&self) -> Network<U> {
        let conv = |l: &Conv1dLayer<T>| Conv1dLayer {
            name: l.name.clone(),
            weight: l.weight.cast(),
            bias: l.bias.cast(),
            dilation: l.dilation,
            activation: l.activation,
        };
        Network {
            blocks: self
                .blocks
                .iter()
                .map(|b| match b {
                    Block::Conv(c) => Block::Conv(conv(c)),
                    Block::Tcn(t) => Block::Tcn(TcnStack {
                        layers: t.layers.iter().map(conv).collect(),
                    }),
                    Block::Upsample(f) => Block::Upsample(*f),
                    Block::AvgPool(w) => Block::AvgPool(*w),
                })
                .collect(),
        }
    }

    /// Overwrites parameters from flat buffers in [`Network::named_params`] order.
    pub fn load_params(&mut self, values: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
        let mut params = self.layers_mut().flat_map(|l| {
            let wname = format!("{}.weight", l.name);
            let bname = format!("{}.bias", l.name);
            [(wname, &mut l.weight), (bname, &mut l.bias)]
        });
        let mut count = 0;
        for (name, shape, data) in values {
            let (expect, t) = params
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
            if &expect != name || t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} {shape:?} does not match {expect} {:?}",
                    t.shape()
                )));
            }
            for (dst, &src) in t.data_mut().iter_mut().zip(data) {
                *dst = T::from_f64_lossy(src as f64);
            }
            count += 1;
        }
        if params.next().is_some() {
            return Err(Error::Checkpoint(format!("checkpoint has only {count} tensors")));
        }
        Ok(())
    }
}

/// Runs `net` on a single `[C, L]` input without recording gradients.
pub fn infer<T: Float>(net: &Network<T>, channels: usize, len: usize, data: Vec<T>) -> Result<(Vec<usize>, Vec<T>)> {
    let tape = Tape::new();
    let params = net.bind(&tape, Binding::Frozen);
    let x = tape.input(&[channels, len], data, false)?;
    let y = net.forward(&params, x)?;
    Ok((y.shape(), y.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn conv(w: Vec<f64>, shape: [usize; 3], dilation: usize) -> Conv1dLayer<f64> {
        Conv1dLayer {
            name: "c".into(),
            weight: Tensor::from_vec(shape.to_vec(), w).unwrap(),
            bias: Tensor::zeros(&[shape[0]]),
            dilation,
            activation: Activation::Linear,
        }
    }

    fn run(layer: Conv1dLayer<f64>, x: Vec<f64>, c: usize, l: usize) -> Vec<f64> {
        infer(&Network::new(vec![Block::Conv(layer)]), c, l, x).unwrap().1
    }

    #[test]
    fn identity_1x1() {
        let x: Vec<f64> = (0..10).map(|v| v as f64 - 3.0).collect();
        let y = run(conv(vec![1.0, 0.0, 0.0, 1.0], [2, 2, 1], 1), x.clone(), 2, 5);
        assert_eq!(y, x);
    }

    #[test]
    fn box_kernel_on_impulse() {
        let y = run(conv(vec![1.0, 1.0, 1.0], [1, 1, 3], 1), vec![0.0, 1.0, 0.0], 1, 3);
        assert_eq!(y, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn dilation_four_taps() {
        // y[t] = 1·x[t-4] + 10·x[t] + 100·x[t+4]
        let w = vec![1.0, 10.0, 100.0];
        for pos in 0..16 {
            let mut x = vec![0.0; 16];
            x[pos] = 1.0;
            let y = run(conv(w.clone(), [1, 1, 3], 4), x, 1, 16);
            for (t, &v) in y.iter().enumerate() {
                let expect = if t + 4 == pos {
                    100.0
                } else if t == pos {
                    10.0
                } else if t == pos + 4 {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(v, expect, "impulse at {pos}, t={t}");
            }
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let net = Network::new(vec![Block::Conv(conv(vec![1.0; 6], [1, 2, 3], 1))]);
        assert!(infer(&net, 3, 4, vec![0.0; 12]).is_err());
    }

    #[test]
    fn same_padding_preserves_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tcn = TcnStack::<f32>::new("t", 3, 3, &[1, 4, 16], &mut rng);
        let net = Network::new(vec![Block::Tcn(tcn)]);
        for len in [16, 17, 100, 333, 512] {
            let (shape, _) = infer(&net, 3, len, vec![0.5; 3 * len]).unwrap();
            assert_eq!(shape, vec![3, len]);
        }
    }

    #[test]
    fn init_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Conv1dLayer::<f64>::new("c", 16, 8, 3, 1, Activation::Relu, &mut rng);
        let bound = 1.0 / 48f64.sqrt();
        assert!(l.weight.data().iter().all(|w| w.abs() < bound));
        assert!(l.bias.data().iter().all(|&b| b == 0.0));
    }
}
