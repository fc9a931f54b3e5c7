//! PNG I/O, bicubic degradation and patch sampling.

mod dataset;
mod image;
mod resize;
mod sampler;

pub use dataset::{list_pngs, lr_dir_name, DatasetSpec, ImagePair, Split};
pub use image::{load_png, quantize, save_png, to_image, to_tensor, ImageRGB};
pub use resize::{
    axis_taps, bicubic_resize, bicubic_resize_tensor, bicubic_upscale, cubic, make_lr, resize_plane, Taps, CUBIC_A,
};
pub use sampler::{sample_patches, PatchSampler, SamplePair};
