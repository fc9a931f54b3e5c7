//! Separable bicubic resampling with antialiased downscaling.

use super::image::ImageRGB;
use crate::error::{config_err, shape_err, Result};
use crate::tensor::{Real, Tensor};

/// Cubic convolution parameter.
pub const CUBIC_A: f64 = -0.5;

/// Keys cubic kernel with `a = CUBIC_A`.
pub fn cubic(x: f64) -> f64 {
    let a = CUBIC_A;
    let t = x.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps of one output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Taps {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Taps for resampling a length-`src` axis to `dst` samples.
///
/// Sample centres are aligned (`u = (x + 0.5)/s - 0.5`); when shrinking the
/// kernel is stretched by `1/s`. Out-of-range taps are clamped to the edge.
pub fn axis_taps(src: usize, dst: usize) -> Vec<Taps> {
    let s = dst as f64 / src as f64;
    let (stretch, width) = if s < 1.0 { (s, 4.0 / s) } else { (1.0, 4.0) };
    let support = width.ceil() as isize + 2;
    (0..dst)
        .map(|x| {
            let u = (x as f64 + 0.5) / s - 0.5;
            let left = (u - width / 2.0).floor() as isize;
            let mut indices = Vec::with_capacity(support as usize);
            let mut weights = Vec::with_capacity(support as usize);
            for j in left..left + support {
                let w = stretch * cubic(stretch * (u - j as f64));
                if w == 0.0 {
                    continue;
                }
                indices.push(j.clamp(0, src as isize - 1) as usize);
                weights.push(w);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            Taps { indices, weights }
        })
        .collect()
}

/// Resizes a single `h × w` row-major plane. Rows are resampled first, then
/// columns.
pub fn resize_plane(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Result<Vec<f64>> {
    if out_w == 0 || out_h == 0 {
        return Err(config_err!("resize target must be positive, got {out_w}×{out_h}"));
    }
    if w == 0 || h == 0 || src.len() != w * h {
        return Err(shape_err!("plane of {} values is not {w}×{h}", src.len()));
    }
    let mut tmp = vec![0.0; out_h * w];
    if out_h == h {
        tmp.copy_from_slice(src);
    } else {
        for (y, taps) in axis_taps(h, out_h).iter().enumerate() {
            let row = &mut tmp[y * w..(y + 1) * w];
            for (&i, &wt) in taps.indices.iter().zip(&taps.weights) {
                for (o, &v) in row.iter_mut().zip(&src[i * w..(i + 1) * w]) {
                    *o += wt * v;
                }
            }
        }
    }
    if out_w == w {
        return Ok(tmp);
    }
    let taps = axis_taps(w, out_w);
    let mut out = vec![0.0; out_h * out_w];
    for y in 0..out_h {
        let row = &tmp[y * w..(y + 1) * w];
        for (x, t) in taps.iter().enumerate() {
            out[y * out_w + x] = t.indices.iter().zip(&t.weights).map(|(&i, &wt)| wt * row[i]).sum();
        }
    }
    Ok(out)
}

/// Bicubic resize in real arithmetic, quantised to 8 bits once at the end.
pub fn bicubic_resize(image: &ImageRGB, out_w: usize, out_h: usize) -> Result<ImageRGB> {
    let (w, h) = (image.width(), image.height());
    let planes = image.planes();
    let mut out: [Vec<f64>; 3] = Default::default();
    for (o, p) in out.iter_mut().zip(&planes) {
        *o = resize_plane(p, w, h, out_w, out_h)?;
    }
    Ok(ImageRGB::from_planes(out_w, out_h, &out))
}

/// Bicubic resize of every channel of every batch item, without rounding.
pub fn bicubic_resize_tensor<T: Real>(t: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = t.shape();
    let mut data = Vec::with_capacity(n * c * out_h * out_w);
    for plane in t.data().chunks(h * w) {
        let p: Vec<f64> = plane.iter().map(|v| v.as_f64()).collect();
        data.extend(resize_plane(&p, w, h, out_w, out_h)?.into_iter().map(T::lit));
    }
    Tensor::from_vec([n, c, out_h, out_w], data)
}

/// Bicubic degradation by `r`; dimensions must already be multiples of `r`.
pub fn make_lr(hr: &ImageRGB, r: usize) -> Result<ImageRGB> {
    if r == 0 || hr.width() % r != 0 || hr.height() % r != 0 {
        return Err(shape_err!(
            "{}×{} HR image is not divisible by scale {r}; modcrop first",
            hr.width(),
            hr.height()
        ));
    }
    bicubic_resize(hr, hr.width() / r, hr.height() / r)
}

/// Bicubic upscale by `r`.
pub fn bicubic_upscale(lr: &ImageRGB, r: usize) -> Result<ImageRGB> {
    bicubic_resize(lr, lr.width() * r, lr.height() * r)
}
