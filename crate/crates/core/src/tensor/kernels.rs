//! Batched numeric kernels behind the tape primitives. Layouts are
//! `[batch, channels, length]`, row-major. Work is split per batch item
//! and always reduced in item order, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;

use super::Float;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl ConvGeom {
    fn offset(&self, k: usize) -> isize {
        (k as isize - (self.kernel / 2) as isize) * self.dilation as isize
    }
}

/// Unfolds one item `[c_in, len]` into `[c_in * kernel, len]` columns with
/// zero padding outside the signal.
fn im2col<T: Float>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let l = g.len as isize;
    for i in 0..g.c_in {
        let src = &x[i * g.len..(i + 1) * g.len];
        for k in 0..g.kernel {
            let off = g.offset(k);
            let row = &mut cols[(i * g.kernel + k) * g.len..(i * g.kernel + k + 1) * g.len];
            for (t, out) in row.iter_mut().enumerate() {
                let s = t as isize + off;
                *out = if s >= 0 && s < l { src[s as usize] } else { T::zero() };
            }
        }
    }
}

fn col2im_add<T: Float>(g: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let l = g.len as isize;
    for i in 0..g.c_in {
        let dst = &mut dx[i * g.len..(i + 1) * g.len];
        for k in 0..g.kernel {
            let off = g.offset(k);
            let row = &cols[(i * g.kernel + k) * g.len..(i * g.kernel + k + 1) * g.len];
            // valid t range: 0 <= t + off < l
            let t0 = (-off).max(0) as usize;
            let t1 = (l - off).min(l).max(0) as usize;
            for t in t0..t1 {
                dst[(t as isize + off) as usize] += row[t];
            }
        }
    }
}

pub(crate) fn conv1d_forward<T: Float>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    bias: Option<&[T]>,
) -> Vec<T> {
    let xin = g.c_in * g.len;
    let yout = g.c_out * g.len;
    let ck = g.c_in * g.kernel;
    let mut y = vec![T::zero(); g.batch * yout];
    y.par_chunks_mut(yout).enumerate().for_each(|(b, yb)| {
        let xb = &x[b * xin..(b + 1) * xin];
        if let Some(bias) = bias {
            for c in 0..g.c_out {
                yb[c * g.len..(c + 1) * g.len].fill(bias[c]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        let l = g.len as isize;
        if g.kernel == 1 {
            T::gemm(g.c_out, g.c_in, g.len, T::one(), w, (g.c_in as isize, 1), xb, (l, 1), beta, yb, (l, 1));
        } else {
            let mut cols = vec![T::zero(); ck * g.len];
            im2col(g, xb, &mut cols);
            T::gemm(g.c_out, ck, g.len, T::one(), w, (ck as isize, 1), &cols, (l, 1), beta, yb, (l, 1));
        }
    });
    y
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub(crate) fn conv1d_backward<T: Float>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    dy: &[T],
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let (need_x, need_w, need_b) = need;
    let xin = g.c_in * g.len;
    let yout = g.c_out * g.len;
    let ck = g.c_in * g.kernel;
    let l = g.len as isize;

    let per_item: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = (0..g.batch)
        .into_par_iter()
        .map(|b| {
            let xb = &x[b * xin..(b + 1) * xin];
            let dyb = &dy[b * yout..(b + 1) * yout];
            let cols = if g.kernel == 1 {
                None
            } else {
                let mut cols = vec![T::zero(); ck * g.len];
                im2col(g, xb, &mut cols);
                Some(cols)
            };
            let dw = need_w.then(|| {
                let mut dw = vec![T::zero(); g.c_out * ck];
                let src = cols.as_deref().unwrap_or(xb);
                // dW = dY · colsᵀ
                T::gemm(g.c_out, g.len, ck, T::one(), dyb, (l, 1), src, (1, l), T::zero(), &mut dw, (ck as isize, 1));
                dw
            });
            let dx = need_x.then(|| {
                // dcols = Wᵀ · dY
                let mut dcols = vec![T::zero(); ck * g.len];
                T::gemm(ck, g.c_out, g.len, T::one(), w, (1, ck as isize), dyb, (l, 1), T::zero(), &mut dcols, (l, 1));
                if g.kernel == 1 {
                    dcols
                } else {
                    let mut dx = vec![T::zero(); xin];
                    col2im_add(g, &dcols, &mut dx);
                    dx
                }
            });
            (dx, dw)
        })
        .collect();

    let mut dx_all = need_x.then(|| Vec::with_capacity(g.batch * xin));
    let mut dw_all = need_w.then(|| vec![T::zero(); g.c_out * ck]);
    for (dx, dw) in per_item {
        if let (Some(acc), Some(dx)) = (dx_all.as_mut(), dx) {
            acc.extend_from_slice(&dx);
        }
        if let (Some(acc), Some(dw)) = (dw_all.as_mut(), dw) {
            acc.iter_mut().zip(&dw).for_each(|(a, &v)| *a += v);
        }
    }
    let db = need_b.then(|| {
        let mut db = vec![T::zero(); g.c_out];
        for b in 0..g.batch {
            for (c, acc) in db.iter_mut().enumerate() {
                let row = &dy[b * yout + c * g.len..b * yout + (c + 1) * g.len];
                *acc += row.iter().copied().sum::<T>();
            }
        }
        db
    });
    ConvGrads {
        dx: dx_all,
        dw: dw_all,
        db,
    }
}

/// Nearest-neighbour repetition along the last axis.
pub(crate) fn upsample<T: Float>(x: &[T], rows: usize, len: usize, factor: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(rows * len * factor);
    for r in 0..rows {
        for &v in &x[r * len..(r + 1) * len] {
            y.extend(std::iter::repeat(v).take(factor));
        }
    }
    y
}

pub(crate) fn upsample_backward<T: Float>(dy: &[T], rows: usize, len: usize, factor: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); rows * len];
    for (i, chunk) in dy.chunks_exact(factor).enumerate() {
        dx[i] = chunk.iter().copied().sum();
    }
    debug_assert_eq!(dy.len(), rows * len * factor);
    dx
}

/// Non-overlapping mean over windows along the last axis. The mean is
/// taken relative to the window's first element so a constant window
/// reproduces its value exactly.
pub(crate) fn avgpool<T: Float>(x: &[T], window: usize) -> Vec<T> {
    let inv = T::one() / T::from_usize(window).unwrap();
    x.chunks_exact(window)
        .map(|w| w[0] + w[1..].iter().map(|&v| v - w[0]).sum::<T>() * inv)
        .collect()
}

pub(crate) fn avgpool_backward<T: Float>(dy: &[T], window: usize) -> Vec<T> {
    let inv = T::one() / T::from_usize(window).unwrap();
    dy.iter()
        .flat_map(|&g| std::iter::repeat(g * inv).take(window))
        .collect()
}
