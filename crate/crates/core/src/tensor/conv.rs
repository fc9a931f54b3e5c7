//! im2col convolution kernels (stride 1, zero "same" padding).
//!
//! Output rows are processed in chunks so the column buffer stays bounded
//! for large images; chunks are visited in a fixed order, which keeps the
//! weight-gradient reduction deterministic.

use super::{Real, Tensor};

/// Upper bound on column-buffer elements per chunk.
const CHUNK_ELEMS: usize = 1 << 22;

/// Unfolds rows `y0..y1` of one `c×h×w` image into a `(c·k·k) × ((y1-y0)·w)`
/// matrix.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Real>(
    img: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    (y0, y1): (usize, usize),
    cols: &mut [T],
) {
    let np = (y1 - y0) * w;
    debug_assert_eq!(cols.len(), c * k * k * np);
    for ch in 0..c {
        let plane = &img[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * np..][..np];
                for y in y0..y1 {
                    let dst = &mut row[(y - y0) * w..][..w];
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let shift = kx as isize - pad as isize;
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + shift;
                        *d = if sx < 0 || sx >= w as isize { T::zero() } else { src[sx as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into the image.
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Real>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    (y0, y1): (usize, usize),
    img: &mut [T],
) {
    let np = (y1 - y0) * w;
    for ch in 0..c {
        let plane = &mut img[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * np..][..np];
                for y in y0..y1 {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[(y - y0) * w..][..w];
                    let dst = &mut plane[sy as usize * w..][..w];
                    let shift = kx as isize - pad as isize;
                    for (x, &v) in src.iter().enumerate() {
                        let sx = x as isize + shift;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn rows_per_chunk(kdim: usize, h: usize, w: usize) -> usize {
    (CHUNK_ELEMS / (kdim * w).max(1)).clamp(1, h.max(1))
}

fn chunks(h: usize, step: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..h).step_by(step.max(1)).map(move |y0| (y0, (y0 + step).min(h)))
}

/// Forward convolution. Shapes are validated by the caller.
pub(crate) fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Tensor<T> {
    let [n, c, h, w] = input.shape();
    let [o, _, k, _] = weight.shape();
    let pad = (k - 1) / 2;
    let kdim = c * k * k;
    let hw = h * w;
    let mut out = Tensor::zeros([n, o, h, w]);
    let wdata = weight.data();
    let step = if k == 1 { h } else { rows_per_chunk(kdim, h, w) };
    let mut cols = Vec::new();
    for b in 0..n {
        let img = &input.data()[b * c * hw..(b + 1) * c * hw];
        let out_b = &mut out.data_mut()[b * o * hw..(b + 1) * o * hw];
        for (y0, y1) in chunks(h, step) {
            let np = (y1 - y0) * w;
            let (src, src_rs): (&[T], isize) = if k == 1 {
                (&img[y0 * w..], hw as isize)
            } else {
                cols.resize(kdim * np, T::zero());
                im2col(img, c, h, w, k, pad, (y0, y1), &mut cols);
                (&cols, np as isize)
            };
            T::gemm(
                o,
                kdim,
                np,
                wdata,
                (kdim as isize, 1),
                src,
                (src_rs, 1),
                T::zero(),
                &mut out_b[y0 * w..],
                (hw as isize, 1),
            );
        }
        if let Some(bias) = bias {
            for (oc, &bv) in bias.data().iter().enumerate() {
                out_b[oc * hw..(oc + 1) * hw].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

/// Backward convolution; only the requested gradients are computed.
pub(crate) fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let (need_in, need_w, need_b) = need;
    let [n, c, h, w] = input.shape();
    let [o, _, k, _] = weight.shape();
    let pad = (k - 1) / 2;
    let kdim = c * k * k;
    let hw = h * w;
    let mut d_in = need_in.then(|| Tensor::zeros(input.shape()));
    let mut d_w = need_w.then(|| Tensor::zeros(weight.shape()));
    let mut d_b = need_b.then(|| Tensor::zeros([o, 1, 1, 1]));
    let step = if k == 1 { h } else { rows_per_chunk(kdim, h, w) };
    let mut cols = Vec::new();
    let mut dcols = Vec::new();
    for b in 0..n {
        let img = &input.data()[b * c * hw..(b + 1) * c * hw];
        let g_b = &grad_out.data()[b * o * hw..(b + 1) * o * hw];
        for (y0, y1) in chunks(h, step) {
            let np = (y1 - y0) * w;
            let g_chunk = &g_b[y0 * w..];
            if let Some(d_w) = d_w.as_mut() {
                let (src, src_rs): (&[T], isize) = if k == 1 {
                    (&img[y0 * w..], hw as isize)
                } else {
                    cols.resize(kdim * np, T::zero());
                    im2col(img, c, h, w, k, pad, (y0, y1), &mut cols);
                    (&cols, np as isize)
                };
                // dW[o, kdim] += dOut[o, np] · colsᵀ[np, kdim]
                T::gemm(
                    o,
                    np,
                    kdim,
                    g_chunk,
                    (hw as isize, 1),
                    src,
                    (1, src_rs),
                    T::one(),
                    d_w.data_mut(),
                    (kdim as isize, 1),
                );
            }
            if let Some(d_in) = d_in.as_mut() {
                let d_img = &mut d_in.data_mut()[b * c * hw..(b + 1) * c * hw];
                if k == 1 {
                    // 1×1: the column matrix is the image itself.
                    T::gemm(
                        kdim,
                        o,
                        np,
                        weight.data(),
                        (1, kdim as isize),
                        g_chunk,
                        (hw as isize, 1),
                        T::zero(),
                        &mut d_img[y0 * w..],
                        (hw as isize, 1),
                    );
                } else {
                    dcols.resize(kdim * np, T::zero());
                    T::gemm(
                        kdim,
                        o,
                        np,
                        weight.data(),
                        (1, kdim as isize),
                        g_chunk,
                        (hw as isize, 1),
                        T::zero(),
                        &mut dcols,
                        (np as isize, 1),
                    );
                    col2im(&dcols, c, h, w, k, pad, (y0, y1), d_img);
                }
            }
        }
        if let Some(d_b) = d_b.as_mut() {
            for (oc, acc) in d_b.data_mut().iter_mut().enumerate() {
                *acc += g_b[oc * hw..(oc + 1) * hw].iter().copied().sum::<T>();
            }
        }
    }
    ConvGrads { input: d_in, weight: d_w, bias: d_b }
}
