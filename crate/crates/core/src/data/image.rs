use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageFormat};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Real, Tensor};

/// 8-bit RGB image, interleaved and row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageRGB {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for ImageRGB {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageRGB({}×{})", self.width, self.height)
    }
}

impl ImageRGB {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(shape_err!("{} bytes do not form a {width}×{height} RGB image", pixels.len()));
        }
        Ok(ImageRGB { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(3 * width * height).collect();
        ImageRGB { width, height, pixels }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        ImageRGB { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = 3 * (y * self.width + x);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    /// Top-left crop to `width × height`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(shape_err!(
                "crop {width}×{height}+{x0}+{y0} exceeds {}×{} image",
                self.width,
                self.height
            ));
        }
        Ok(Self::from_fn(width, height, |x, y| self.pixel(x0 + x, y0 + y)))
    }

    /// Crops right/bottom edges so both dimensions are multiples of `r`.
    pub fn modcrop(&self, r: usize) -> Self {
        let (w, h) = (self.width - self.width % r, self.height - self.height % r);
        if (w, h) == (self.width, self.height) {
            return self.clone();
        }
        self.crop(0, 0, w, h).expect("modcrop stays in bounds")
    }

    /// Planar `[3][h·w]` real copy.
    pub fn planes(&self) -> [Vec<f64>; 3] {
        let mut planes: [Vec<f64>; 3] = Default::default();
        for (c, plane) in planes.iter_mut().enumerate() {
            *plane = self.pixels.iter().skip(c).step_by(3).map(|&v| v as f64).collect();
        }
        planes
    }

    /// Rounds half away from zero and clamps to `[0, 255]`.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f64>; 3]) -> Self {
        let mut pixels = Vec::with_capacity(3 * width * height);
        for i in 0..width * height {
            for plane in planes {
                pixels.push(quantize(plane[i]));
            }
        }
        ImageRGB { width, height, pixels }
    }
}

/// Round half away from zero, then clamp to the 8-bit range.
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

/// Reads an 8-bit RGB or grayscale PNG; grayscale is promoted to R = G = B
/// and an alpha channel, if present, is dropped.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageRGB> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let img = image::load(BufReader::new(file), ImageFormat::Png)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let rgb = match img {
        DynamicImage::ImageRgb8(buf) => buf,
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgba8(_) => img.to_rgb8(),
        other => {
            return Err(Error::Data(format!(
                "{}: unsupported pixel format {:?} (8-bit RGB or grayscale expected)",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = rgb.dimensions();
    ImageRGB::new(w as usize, h as usize, rgb.into_raw())
}

pub fn save_png(image: &ImageRGB, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        &image.pixels,
        image.width as u32,
        image.height as u32,
        ExtendedColorType::Rgb8,
        ImageFormat::Png,
    )
    .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// `[1, 3, h, w]` tensor with values in `[0, 255]` (no normalisation).
pub fn to_tensor<T: Real>(image: &ImageRGB) -> Tensor<T> {
    Tensor::from_fn([1, 3, image.height, image.width], |[_, c, y, x]| {
        T::lit(image.pixels[3 * (y * image.width + x) + c] as f64)
    })
}

/// Inverse of [`to_tensor`] for the first image of a batch: rounds half away
/// from zero and clamps to `[0, 255]`.
pub fn to_image<T: Real>(tensor: &Tensor<T>) -> Result<ImageRGB> {
    let [_, c, h, w] = tensor.shape();
    if c != 3 {
        return Err(shape_err!("expected a 3-channel tensor, got {c} channels"));
    }
    Ok(ImageRGB::from_fn(w, h, |x, y| {
        [0, 1, 2].map(|ch| quantize(tensor.at([0, ch, y, x]).as_f64()))
    }))
}
