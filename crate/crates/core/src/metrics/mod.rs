//! Image quality metrics, self-ensembling, spectra and dataset evaluation.

mod ensemble;
mod eval;
mod quality;
mod spectrum;

pub use ensemble::{dihedral, dihedral_inverse, self_ensemble, self_ensemble_ordered, N_TRANSFORMS};
pub use eval::{
    evaluate, evaluate_pairs, super_resolve, Bicubic, Convention, Ensemble, EvalOptions, EvalReport, Identity,
    ImageScore, Upscaler,
};
pub use quality::{
    gaussian_window, luma, metric_planes, psnr, psnr_from_mse, rgb_to_y, ssim, ssim_plane, tensor_to_y, Plane,
    SsimParams,
};
pub use spectrum::{spectrum, SpectrumReport, DEFAULT_CUTOFF};
