//! Centered 2-D magnitude spectra and band energy fractions.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use super::quality::Plane;
use crate::data::ImageRGB;

pub const DEFAULT_CUTOFF: f64 = 0.25;

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub width: usize,
    pub height: usize,
    /// `ln(1 + |F|)`, DC at `(width / 2, height / 2)`, row-major.
    #[serde(skip)]
    pub log_magnitude: Vec<f64>,
    /// Radial cutoff as a fraction of the Nyquist frequency.
    pub cutoff: f64,
    /// Share of non-DC energy strictly outside the cutoff radius.
    pub high_freq_fraction: f64,
    pub low_freq_fraction: f64,
}

fn fft2(p: &Plane) -> Vec<Complex<f64>> {
    let (w, h) = (p.width, p.height);
    let mut buf: Vec<Complex<f64>> = p.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let row = planner.plan_fft_forward(w);
    for r in buf.chunks_mut(w) {
        row.process(r);
    }
    let col = planner.plan_fft_forward(h);
    let mut tmp = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            tmp[y] = buf[y * w + x];
        }
        col.process(&mut tmp);
        for y in 0..h {
            buf[y * w + x] = tmp[y];
        }
    }
    buf
}

/// Signed frequency of DFT bin `k` in cycles per sample, in `[-0.5, 0.5]`.
fn freq(k: usize, n: usize) -> f64 {
    let s = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    s / n as f64
}

pub fn spectrum(p: &Plane, cutoff: f64) -> SpectrumReport {
    let (w, h) = (p.width, p.height);
    let f = fft2(p);
    let (mut high, mut low) = (0.0, 0.0);
    for v in 0..h {
        for u in 0..w {
            if u == 0 && v == 0 {
                continue;
            }
            let r = freq(u, w).hypot(freq(v, h)) / 0.5;
            let e = f[v * w + u].norm_sqr();
            if r > cutoff {
                high += e;
            } else {
                low += e;
            }
        }
    }
    let total = high + low;
    // Parseval: total spectral energy is n·Σx²; anything far below that is rounding noise.
    let scale = (w * h) as f64 * p.data.iter().map(|v| v * v).sum::<f64>();
    let (high_freq_fraction, low_freq_fraction) =
        if total > 1e-20 * scale { (high / total, low / total) } else { (0.0, 1.0) };
    let mut log_magnitude = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let (cu, cv) = ((u + w / 2) % w, (v + h / 2) % h);
            log_magnitude[cv * w + cu] = f[v * w + u].norm().ln_1p();
        }
    }
    SpectrumReport { width: w, height: h, log_magnitude, cutoff, high_freq_fraction, low_freq_fraction }
}

impl SpectrumReport {
    /// Grayscale rendering normalised to the peak log-magnitude.
    pub fn heatmap(&self) -> ImageRGB {
        let peak = self.log_magnitude.iter().copied().fold(0.0, f64::max);
        let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
        ImageRGB::from_fn(self.width, self.height, |x, y| {
            [crate::data::quantize(self.log_magnitude[y * self.width + x] * scale); 3]
        })
    }
}
