//! Luma conversion and full-reference quality metrics.

use crate::data::ImageRGB;
use crate::error::{config_err, shape_err, Result};
use crate::tensor::{Real, Tensor};

/// A single-channel real image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(shape_err!("{} values do not form a {width}×{height} plane", data.len()));
        }
        Ok(Plane { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Removes `border` pixels from every side.
    pub fn shave(&self, border: usize) -> Result<Plane> {
        if 2 * border >= self.width.min(self.height) {
            return Err(config_err!(
                "border crop {border} must be less than half of {}×{}",
                self.width,
                self.height
            ));
        }
        let (w, h) = (self.width - 2 * border, self.height - 2 * border);
        Ok(Plane::from_fn(w, h, |x, y| self.at(x + border, y + border)))
    }
}

/// ITU-R BT.601 luma in `[16, 235]` from `[0, 255]` RGB.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0
}

pub fn rgb_to_y(image: &ImageRGB) -> Plane {
    Plane::from_fn(image.width(), image.height(), |x, y| {
        let [r, g, b] = image.pixel(x, y);
        luma(r as f64, g as f64, b as f64)
    })
}

/// Luma of the first batch item of a 3-channel tensor, or its only channel
/// if single-channel. Values are not clamped.
pub fn tensor_to_y<T: Real>(t: &Tensor<T>) -> Result<Plane> {
    let [_, c, h, w] = t.shape();
    match c {
        1 => Ok(Plane::from_fn(w, h, |x, y| t.at([0, 0, y, x]).as_f64())),
        3 => Ok(Plane::from_fn(w, h, |x, y| {
            let v = |ch| t.at([0, ch, y, x]).as_f64();
            luma(v(0), v(1), v(2))
        })),
        _ => Err(shape_err!("expected 1 or 3 channels, got {c}")),
    }
}

/// Channels compared by the metrics: luma only, or R, G and B.
pub fn metric_planes(image: &ImageRGB, y_only: bool) -> Vec<Plane> {
    if y_only {
        return vec![rgb_to_y(image)];
    }
    let (w, h) = (image.width(), image.height());
    image.planes().into_iter().map(|data| Plane { width: w, height: h, data }).collect()
}

fn prepare(a: &ImageRGB, b: &ImageRGB, crop: usize, y_only: bool) -> Result<(Vec<Plane>, Vec<Plane>)> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(shape_err!(
            "image sizes differ: {}×{} vs {}×{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    let shave = |img| metric_planes(img, y_only).iter().map(|p| p.shave(crop)).collect::<Result<Vec<_>>>();
    Ok((shave(a)?, shave(b)?))
}

/// PSNR in dB with peak 255 over the cropped region; `+∞` when identical.
pub fn psnr(a: &ImageRGB, b: &ImageRGB, border_crop: usize, y_only: bool) -> Result<f64> {
    let (pa, pb) = prepare(a, b, border_crop, y_only)?;
    let mut se = 0.0;
    let mut n = 0usize;
    for (x, y) in pa.iter().zip(&pb) {
        se += x.data.iter().zip(&y.data).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
        n += x.data.len();
    }
    Ok(psnr_from_mse(se / n as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (255.0 / mse.sqrt()).log10()
    }
}

/// SSIM constants and window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, peak: 255.0 }
    }
}

/// Mean SSIM over all fully-contained Gaussian windows, averaged over the
/// compared channels.
pub fn ssim(a: &ImageRGB, b: &ImageRGB, border_crop: usize, y_only: bool) -> Result<f64> {
    let (pa, pb) = prepare(a, b, border_crop, y_only)?;
    let mut total = 0.0;
    for (x, y) in pa.iter().zip(&pb) {
        total += ssim_plane(x, y, &SsimParams::default())?;
    }
    Ok(total / pa.len() as f64)
}

pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with a normalised 1-D kernel in both axes.
fn filter_valid(p: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &p[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, &kv) in k.iter().enumerate() {
            let src = &rows[(y + i) * ow..(y + i + 1) * ow];
            for (o, &v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += kv * v;
            }
        }
    }
    out
}

pub fn ssim_plane(a: &Plane, b: &Plane, p: &SsimParams) -> Result<f64> {
    let (w, h) = (a.width, a.height);
    if (w, h) != (b.width, b.height) {
        return Err(shape_err!("plane sizes differ"));
    }
    if w < p.window || h < p.window {
        return Err(shape_err!("{w}×{h} image is smaller than the {0}×{0} SSIM window", p.window));
    }
    let k = gaussian_window(p.window, p.sigma);
    let c1 = (p.k1 * p.peak).powi(2);
    let c2 = (p.k2 * p.peak).powi(2);
    let prod = |f: fn(f64, f64) -> f64| a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
    let mu_a = filter_valid(&a.data, w, h, &k);
    let mu_b = filter_valid(&b.data, w, h, &k);
    let aa = filter_valid(&prod(|x, _| x * x), w, h, &k);
    let bb = filter_valid(&prod(|_, y| y * y), w, h, &k);
    let ab = filter_valid(&prod(|x, y| x * y), w, h, &k);
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(sum / mu_a.len() as f64)
}
