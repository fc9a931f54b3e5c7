//! Independent reference implementations used by the integration tests.
//! Nothing here goes through the engine's graph, im2col or tap tables.

#![allow(dead_code)]

use adcsr::data::{quantize, ImageRGB};
use adcsr::model::{Adrb, Adru, Conv, ConvUnit};
use adcsr::{ParamStore, Real, Tensor};

/// Zero-padded, stride-1, "same" convolution as seven nested loops.
pub fn naive_conv<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    let [n, cin, h, wd] = x.shape();
    let [cout, wcin, kh, kw] = w.shape();
    assert_eq!(cin, wcin);
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    let mut out = Tensor::zeros([n, cout, h, wd]);
    for bi in 0..n {
        for co in 0..cout {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = b.map_or(T::zero(), |b| b.data()[co]);
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let sy = y as isize + ky as isize - ph;
                                let sx = xx as isize + kx as isize - pw;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                    continue;
                                }
                                acc += x.at([bi, ci, sy as usize, sx as usize]) * w.at([co, ci, ky, kx]);
                            }
                        }
                    }
                    out.set([bi, co, y, xx], acc);
                }
            }
        }
    }
    out
}

pub fn add(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    assert_eq!(a.shape(), b.shape());
    Tensor::from_fn(a.shape(), |i| a.at(i) + b.at(i))
}

pub fn scaled(a: &Tensor<f64>, s: f64) -> Tensor<f64> {
    a.map(|v| v * s)
}

pub fn concat(parts: &[&Tensor<f64>]) -> Tensor<f64> {
    let [n, _, h, w] = parts[0].shape();
    let c: usize = parts.iter().map(|p| p.c()).sum();
    Tensor::from_fn([n, c, h, w], |[b, ch, y, x]| {
        let mut ch = ch;
        for p in parts {
            if ch < p.c() {
                return p.at([b, ch, y, x]);
            }
            ch -= p.c();
        }
        unreachable!()
    })
}

fn apply_conv(c: &Conv, store: &ParamStore<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    naive_conv(x, &store.get(c.weight).value, Some(&store.get(c.bias).value))
}

pub fn unit_oracle(u: &ConvUnit, slope: f64, store: &ParamStore<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let h = apply_conv(&u.expand, store, x).map(|v| if v >= 0.0 { v } else { slope * v });
    apply_conv(&u.contract, store, &h)
}

/// Plain dense block: every unit sees the sum of all earlier outputs
/// (block input included); the LFF conv fuses all of them, newest first.
pub fn dense_oracle(
    units: &[&dyn Fn(&Tensor<f64>) -> Tensor<f64>],
    lff: &Conv,
    store: &ParamStore<f64>,
    x: &Tensor<f64>,
) -> Tensor<f64> {
    let mut ys = vec![x.clone()];
    let mut input = x.clone();
    for (i, unit) in units.iter().enumerate() {
        let y = unit(&input);
        ys.push(y);
        if i + 1 < units.len() {
            let mut s = ys[0].clone();
            for y in &ys[1..] {
                s = add(&s, y);
            }
            input = s;
        }
    }
    let rev: Vec<&Tensor<f64>> = ys.iter().rev().collect();
    add(&apply_conv(lff, store, &concat(&rev)), x)
}

pub fn adrb_oracle(b: &Adrb, slope: f64, store: &ParamStore<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let fs: Vec<Box<dyn Fn(&Tensor<f64>) -> Tensor<f64> + '_>> =
        b.units.iter().map(|u| Box::new(move |v: &Tensor<f64>| unit_oracle(u, slope, store, v)) as Box<_>).collect();
    let refs: Vec<&dyn Fn(&Tensor<f64>) -> Tensor<f64>> = fs.iter().map(|f| f.as_ref()).collect();
    dense_oracle(&refs, &b.topology.lff, store, x)
}

pub fn adru_oracle(u: &Adru, slope: f64, store: &ParamStore<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let fs: Vec<Box<dyn Fn(&Tensor<f64>) -> Tensor<f64> + '_>> =
        u.blocks.iter().map(|b| Box::new(move |v: &Tensor<f64>| adrb_oracle(b, slope, store, v)) as Box<_>).collect();
    let refs: Vec<&dyn Fn(&Tensor<f64>) -> Tensor<f64>> = fs.iter().map(|f| f.as_ref()).collect();
    dense_oracle(&refs, &u.topology.lff, store, x)
}

/// Chain block: `X_i = b_i·X_{i−1} + a_i·Y_i`, with a full fusion stage
/// weighted by `fuse_a` (newest output) and `fuse_b[j]` (output `j`).
pub fn chain_oracle(
    b: &Adrb,
    slope: f64,
    store: &ParamStore<f64>,
    x: &Tensor<f64>,
) -> Tensor<f64> {
    let coeff = |id| store.get(id).value.data()[0];
    let n = b.units.len();
    let mut ys = vec![x.clone()];
    let mut input = x.clone();
    for i in 1..=n {
        let y = unit_oracle(&b.units[i - 1], slope, store, &input);
        ys.push(y.clone());
        if i < n {
            let a = coeff(b.topology.coeffs.a[&(i - 1, i)]);
            let bb = coeff(b.topology.coeffs.b[&(i - 1, i)]);
            input = add(&scaled(&input, bb), &scaled(&y, a));
        }
    }
    let mut parts = vec![scaled(&ys[n], coeff(b.topology.coeffs.a[&(n - 1, n)]))];
    for j in (0..n).rev() {
        parts.push(scaled(&ys[j], coeff(b.topology.coeffs.b[&(j, n)])));
    }
    let refs: Vec<&Tensor<f64>> = parts.iter().collect();
    add(&apply_conv(&b.topology.lff, store, &concat(&refs)), x)
}

fn keys(x: f64) -> f64 {
    let a = -0.5;
    let t = x.abs();
    if t < 1.0 {
        1.0 - (a + 3.0) * t.powi(2) + (a + 2.0) * t.powi(3)
    } else if t < 2.0 {
        -4.0 * a + 8.0 * a * t - 5.0 * a * t.powi(2) + a * t.powi(3)
    } else {
        0.0
    }
}

/// Normalised 1D weights over every source index (clamped at the edges).
fn weights_1d(src: usize, dst: usize, i: usize) -> Vec<f64> {
    let s = dst as f64 / src as f64;
    let k = s.min(1.0);
    let c = (i as f64 + 0.5) / s - 0.5;
    let mut w = vec![0.0; src];
    let reach = (2.0 / k).ceil() as i64 + 1;
    for j in (c.floor() as i64 - reach)..=(c.ceil() as i64 + reach) {
        let v = k * keys(k * (c - j as f64));
        w[j.clamp(0, src as i64 - 1) as usize] += v;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Direct 2D bicubic: each output pixel is a full double sum over the source.
pub fn bicubic_2d(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let wx: Vec<Vec<f64>> = (0..out_w).map(|i| weights_1d(w, out_w, i)).collect();
    let wy: Vec<Vec<f64>> = (0..out_h).map(|i| weights_1d(h, out_h, i)).collect();
    let mut out = vec![0.0; out_w * out_h];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let mut acc = 0.0;
            for sy in 0..h {
                if wy[oy][sy] == 0.0 {
                    continue;
                }
                for sx in 0..w {
                    acc += wy[oy][sy] * wx[ox][sx] * src[sy * w + sx];
                }
            }
            out[oy * out_w + ox] = acc;
        }
    }
    out
}

/// A 64×64 test image mixing smooth shading, a disc edge and a checker.
pub fn synthetic_image(size: usize) -> ImageRGB {
    ImageRGB::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let r = 128.0 + 80.0 * (fx * 0.35).sin() * (fy * 0.2).cos();
        let c = size as f64 / 2.0;
        let d = ((fx - c + 2.0).powi(2) + (fy - c - 2.0).powi(2)).sqrt();
        let g = if d < size as f64 * 0.28 { 200.0 } else { 60.0 } + 20.0 * ((fx + fy) * 0.9).sin();
        let b = if (x / 6 + y / 6) % 2 == 0 { 220.0 } else { 40.0 };
        [quantize(r), quantize(g), quantize(b)]
    })
}
