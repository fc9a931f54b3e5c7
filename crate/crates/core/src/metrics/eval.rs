//! Dataset evaluation under the Y-channel, border-cropped convention.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Serialize, Serializer};

use super::ensemble::self_ensemble;
use super::quality::{psnr, ssim};
use crate::data::{bicubic_resize_tensor, to_image, to_tensor, DatasetSpec, ImagePair};
use crate::error::{shape_err, Result};
use crate::model::Adcsr;
use crate::tensor::{Real, Tensor};

/// Anything mapping a `[1, 3, h, w]` LR tensor in `[0, 255]` to an HR one.
pub trait Upscaler {
    fn scale(&self) -> usize;
    fn name(&self) -> String;
    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>>;
}

/// The bicubic baseline, in real arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct Bicubic(pub usize);

impl Upscaler for Bicubic {
    fn scale(&self) -> usize {
        self.0
    }

    fn name(&self) -> String {
        "bicubic".into()
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        bicubic_resize_tensor(&lr.cast::<f64>(), lr.h() * self.0, lr.w() * self.0).map(|t| t.cast())
    }
}

/// Returns its input unchanged (scale 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Upscaler for Identity {
    fn scale(&self) -> usize {
        1
    }

    fn name(&self) -> String {
        "identity".into()
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(lr.clone())
    }
}

impl<T: Real> Upscaler for Adcsr<T> {
    fn scale(&self) -> usize {
        self.config().scale
    }

    fn name(&self) -> String {
        format!("adcsr-{}", self.config().head_variant.name())
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.infer(&lr.cast::<T>())?.cast())
    }
}

/// Self-ensembled wrapper: averages over the eight dihedral transforms.
#[derive(Debug, Clone, Copy)]
pub struct Ensemble<U>(pub U);

impl<U: Upscaler> Upscaler for Ensemble<U> {
    fn scale(&self) -> usize {
        self.0.scale()
    }

    fn name(&self) -> String {
        format!("{}+", self.0.name())
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        self_ensemble(lr, |x| self.0.upscale(x))
    }
}

impl<U: Upscaler + ?Sized> Upscaler for &U {
    fn scale(&self) -> usize {
        (**self).scale()
    }

    fn name(&self) -> String {
        (**self).name()
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        (**self).upscale(lr)
    }
}

impl<U: Upscaler + ?Sized> Upscaler for Box<U> {
    fn scale(&self) -> usize {
        (**self).scale()
    }

    fn name(&self) -> String {
        (**self).name()
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        (**self).upscale(lr)
    }
}

/// Super-resolves one LR image to 8 bits, checking the output size.
pub fn super_resolve(up: &dyn Upscaler, lr: &crate::data::ImageRGB) -> Result<crate::data::ImageRGB> {
    let out = up.upscale(&to_tensor(lr))?;
    let r = up.scale();
    if (out.w(), out.h()) != (lr.width() * r, lr.height() * r) {
        return Err(shape_err!(
            "{} produced {}×{} for a {}×{} input at ×{r}",
            up.name(),
            out.w(),
            out.h(),
            lr.width(),
            lr.height()
        ));
    }
    to_image(&out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvalOptions {
    pub y_only: bool,
    /// Border crop in pixels; `None` crops `scale` pixels.
    pub border_crop: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { y_only: true, border_crop: None }
    }
}

fn ser_db<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() => s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" }),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageScore {
    pub name: String,
    #[serde(serialize_with = "ser_db")]
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convention {
    pub y_only: bool,
    pub border_crop: usize,
    pub scale: usize,
    pub quantized_8bit: bool,
    pub luma: &'static str,
    pub ssim_window: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub dataset: String,
    pub method: String,
    pub convention: Convention,
    pub images: Vec<ImageScore>,
    #[serde(serialize_with = "ser_db")]
    pub mean_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub failures: usize,
}

impl EvalReport {
    fn aggregate(dataset: String, method: String, convention: Convention, images: Vec<ImageScore>) -> Self {
        let ok: Vec<&ImageScore> = images.iter().filter(|s| s.error.is_none()).collect();
        let mean = |f: fn(&ImageScore) -> Option<f64>| {
            let vals: Vec<f64> = ok.iter().filter_map(|s| f(s)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        EvalReport {
            dataset,
            method,
            convention,
            mean_psnr: mean(|s| s.psnr),
            mean_ssim: mean(|s| s.ssim),
            failures: images.len() - ok.len(),
            images,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Plain-text table with one row per image and a mean row.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} on {} (×{}, {}, crop {})",
            self.method,
            self.dataset,
            self.convention.scale,
            if self.convention.y_only { "Y" } else { "RGB" },
            self.convention.border_crop
        );
        let _ = writeln!(s, "{:<24} {:>9} {:>8}", "image", "PSNR", "SSIM");
        for img in &self.images {
            match &img.error {
                Some(e) => {
                    let _ = writeln!(s, "{:<24} error: {e}", img.name);
                }
                None => {
                    let _ = writeln!(s, "{:<24} {:>9} {:>8}", img.name, fmt(img.psnr, 2), fmt(img.ssim, 4));
                }
            }
        }
        let _ = writeln!(s, "{:<24} {:>9} {:>8}", "mean", fmt(self.mean_psnr, 2), fmt(self.mean_ssim, 4));
        s
    }
}

fn score(up: &dyn Upscaler, pair: &ImagePair, crop: usize, y_only: bool) -> Result<(f64, f64)> {
    let sr = super_resolve(up, &pair.lr)?;
    Ok((psnr(&sr, &pair.hr, crop, y_only)?, ssim(&sr, &pair.hr, crop, y_only)?))
}

fn convention(scale: usize, opts: &EvalOptions) -> Convention {
    Convention {
        y_only: opts.y_only,
        border_crop: opts.border_crop.unwrap_or(scale),
        scale,
        quantized_8bit: true,
        luma: "BT.601 16-235",
        ssim_window: "gaussian 11x11 sigma 1.5, K1 0.01, K2 0.03, L 255",
    }
}

/// Scores preloaded pairs in order; failures are recorded, not fatal.
pub fn evaluate_pairs(up: &dyn Upscaler, pairs: &[ImagePair], dataset: &str, opts: &EvalOptions) -> EvalReport {
    let conv = convention(up.scale(), opts);
    let images = pairs
        .iter()
        .map(|p| match score(up, p, conv.border_crop, opts.y_only) {
            Ok((ps, ss)) => ImageScore { name: p.name.clone(), psnr: Some(ps), ssim: Some(ss), error: None },
            Err(e) => ImageScore { name: p.name.clone(), psnr: None, ssim: None, error: Some(e.to_string()) },
        })
        .collect();
    EvalReport::aggregate(dataset.to_string(), up.name(), conv, images)
}

/// Loads and scores every image of `spec`; load errors count as failures.
pub fn evaluate(up: &dyn Upscaler, spec: &DatasetSpec, opts: &EvalOptions) -> Result<EvalReport> {
    if spec.scale != up.scale() {
        return Err(shape_err!("dataset is ×{} but {} upscales ×{}", spec.scale, up.name(), up.scale()));
    }
    let conv = convention(up.scale(), opts);
    let mut images = Vec::with_capacity(spec.len());
    for i in 0..spec.len() {
        let name = spec.files[i].file_name().unwrap_or_default().to_string_lossy().into_owned();
        let result = spec.load_pair(i).and_then(|p| score(up, &p, conv.border_crop, opts.y_only));
        images.push(match result {
            Ok((ps, ss)) => ImageScore { name, psnr: Some(ps), ssim: Some(ss), error: None },
            Err(e) => {
                log::warn!("{name}: {e}");
                ImageScore { name, psnr: None, ssim: None, error: Some(e.to_string()) }
            }
        });
    }
    let dataset = spec.dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
    Ok(EvalReport::aggregate(dataset, up.name(), conv, images))
}
