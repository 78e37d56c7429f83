use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub checked: usize,
    pub pass: bool,
}

/// Central-difference gradient checker for scalar functions of one tensor.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub h: f64,
    pub tol: f64,
    /// Relative errors are taken against `max(|analytic|, |numeric|, abs_floor)`.
    pub abs_floor: f64,
    /// Check a random subset of this many coordinates instead of all of them.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-8,
            max_coords: None,
            seed: 0,
        }
    }
}

impl GradCheck {
    pub fn new(h: f64, tol: f64) -> Self {
        Self {
            h,
            tol,
            ..Self::default()
        }
    }

    pub fn coords(mut self, n: usize, seed: u64) -> Self {
        self.max_coords = Some(n);
        self.seed = seed;
        self
    }

    pub fn run<F>(&self, x: &Tensor<f64>, f: F) -> Result<GradCheckReport>
    where
        F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
    {
        let eval = |data: Vec<f64>| -> Result<f64> {
            let tape = Tape::new();
            let v = tape.input(x.shape(), data, false)?;
            let y = f(&tape, v)?;
            if y.len() != 1 {
                return Err(Error::NonScalarLoss(y.shape()));
            }
            let out = y.item();
            if !out.is_finite() {
                return Err(Error::NonFinite("grad_check objective".into()));
            }
            Ok(out)
        };

        let tape = Tape::new();
        let v = tape.input(x.shape(), x.data().to_vec(), true)?;
        let y = f(&tape, v)?;
        tape.backward(y)?;
        let analytic = v.grad().unwrap_or_else(|| vec![0.0; x.len()]);
        if analytic.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("analytic gradient".into()));
        }

        let indices: Vec<usize> = match self.max_coords {
            Some(n) if n < x.len() => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut idx = sample(&mut rng, x.len(), n).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..x.len()).collect(),
        };

        let mut report = GradCheckReport {
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst_index: 0,
            checked: indices.len(),
            pass: true,
        };
        for &i in &indices {
            let mut plus = x.data().to_vec();
            plus[i] += self.h;
            let mut minus = x.data().to_vec();
            minus[i] -= self.h;
            let numeric = (eval(plus)? - eval(minus)?) / (2.0 * self.h);
            let a = analytic[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(self.abs_floor);
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_index = i;
            }
        }
        report.pass = report.max_rel_err < self.tol;
        Ok(report)
    }
}

/// Checks the full gradient of `f` at `x` with step `h` and relative
/// tolerance `tol`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    GradCheck::new(h, tol).run(x, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn mean_square_passes() {
        let x = random(&[7], 1);
        let r = grad_check(|_, x| x.mul(x)?.mean(), &x, 1e-5, 1e-4).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn conv_chain_passes() {
        for seed in 0..3 {
            let x = random(&[2, 3, 11], seed);
            let w = random(&[4, 3, 3], seed + 10);
            let b = random(&[4], seed + 20);
            let w2 = random(&[2, 4, 1], seed + 30);
            let r = grad_check(
                |tape, x| {
                    let h = x.conv1d(tape.constant(&w), Some(tape.constant(&b)), 2)?;
                    let h = h.map(|v| v.tanh(), |v| 1.0 - v.tanh().powi(2));
                    let y = h.conv1d(tape.constant(&w2), None, 1)?;
                    y.mul(y)?.mean()
                },
                &x,
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(r.pass, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn wrong_rule_is_caught() {
        let x = random(&[5], 3);
        // derivative of sin deliberately replaced by sin itself
        let r = grad_check(|_, x| x.map(f64::sin, f64::sin).mean(), &x, 1e-5, 1e-4).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn non_finite_is_an_error() {
        let x = Tensor::from_vec(vec![2], vec![0.0, 1.0]).unwrap();
        let r = grad_check(|_, x| x.map(|v| 1.0 / v, |v| -1.0 / (v * v)).mean(), &x, 1e-5, 1e-4);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
