use std::path::{Path, PathBuf};

use adcsr::data::{list_pngs, load_png, make_lr, save_png, DatasetSpec, ImagePair, PatchSampler};
use adcsr::metrics::{
    evaluate, rgb_to_y, spectrum as spectrum_of, super_resolve, Bicubic, Ensemble, EvalOptions, Upscaler,
};
use adcsr::model::{cost_report, head_params, Adcsr, HeadVariant, ModelConfig};
use adcsr::train::{train as run_training, transfer_scale_weights, Checkpoint, TrainData, TransferAction};
use adcsr::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{EvalArgs, TrainArgs};

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    hr_sha256: String,
    lr_sha256: String,
    hr_size: [usize; 2],
    lr_size: [usize; 2],
}

#[derive(Serialize)]
struct Manifest {
    scale: usize,
    hr_dir: String,
    files: Vec<ManifestEntry>,
}

pub fn prepare(hr_dir: &Path, scale: usize, out: &Path) -> Result<()> {
    if scale == 0 {
        return Err(Error::Config("--scale must be positive".into()));
    }
    let files = list_pngs(hr_dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no PNG files in {}", hr_dir.display())));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::Data(format!("{}: {e}", out.display())))?;
    let mut entries = Vec::new();
    for path in &files {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let hr = load_png(path)?.modcrop(scale);
        let lr = make_lr(&hr, scale)?;
        let dst = out.join(&name);
        save_png(&lr, &dst)?;
        entries.push(ManifestEntry {
            hr_sha256: sha256_file(path)?,
            lr_sha256: sha256_file(&dst)?,
            hr_size: [hr.width(), hr.height()],
            lr_size: [lr.width(), lr.height()],
            name,
        });
    }
    let manifest = Manifest { scale, hr_dir: hr_dir.display().to_string(), files: entries };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(out.join("manifest.json"), text + "\n")?;
    println!("wrote {} LR images (x{scale}) to {}", files.len(), out.display());
    Ok(())
}

fn apply_overrides(cfg: &mut RunConfig, a: &TrainArgs) {
    if let Some(v) = a.mode {
        cfg.train.mode = v;
    }
    if let Some(v) = a.scale {
        cfg.model.scale = v;
    }
    if let Some(v) = a.max_steps {
        cfg.train.max_steps = Some(v);
    }
    if let Some(v) = a.pretrain_steps {
        cfg.train.pretrain_steps = Some(v);
    }
    if let Some(v) = a.lr0 {
        cfg.train.lr0 = v;
    }
    if let Some(v) = a.batch {
        cfg.train.batch = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = &a.data_root {
        cfg.data.root = v.clone();
    }
    cfg.resolve_output_dir(a.out_dir.as_deref());
}

fn load_split(cfg: &RunConfig, split: adcsr::data::Split) -> Result<Vec<ImagePair>> {
    DatasetSpec::new(&cfg.data.root, split, cfg.model.scale)?.load_all()
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    apply_overrides(&mut cfg, a);
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;

    let pairs = load_split(&cfg, cfg.data.split)?;
    let sampler = PatchSampler::new(pairs, cfg.train.patch, cfg.model.scale, cfg.train.seed)?;
    let val = match cfg.data.val_split {
        Some(s) => load_split(&cfg, s)?,
        None => Vec::new(),
    };
    let data = TrainData { sampler, val };

    let mut model = Adcsr::<f32>::new(cfg.model.clone(), cfg.train.seed)?;
    if let Some(src) = &a.transfer_from {
        let report = transfer_scale_weights(&Checkpoint::load(src)?, &mut model)?;
        let copied = report.names(TransferAction::Copied).len();
        log::info!("transferred {copied} tensors from {} ({} skipped)", src.display(), report.entries.len() - copied);
        std::fs::write(out.join("transfer.json"), serde_json::to_string_pretty(&report).expect("serialises"))?;
    }
    let resume = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    if let Some(ck) = &resume {
        if ck.meta.model != cfg.model {
            return Err(Error::Config(format!(
                "{} was trained with a different model config",
                a.resume.as_ref().expect("set").display()
            )));
        }
    }
    let summary = run_training(&mut model, &data, &cfg.train, Some(&out), resume.as_ref())?;
    let state = summary.final_state.expect("set on success");
    let last = summary.losses.last().map_or(f64::NAN, |l| l.2);
    println!("trained to step {} (last loss {last:.4}); final checkpoint {}", state.global_step, out.join("final.adcs").display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig { output_dir: PathBuf::from("."), ..Default::default() },
    };
    cfg.resolve_output_dir(a.out_dir.as_deref());
    let model = match &a.ckpt {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let mut m = if a.config.is_some() {
                cfg.model.validate()?;
                Adcsr::<f32>::new(cfg.model.clone(), 0)?
            } else {
                Adcsr::<f32>::new(ck.meta.model.clone(), 0)?
            };
            ck.apply(&mut m, false)?;
            Some(m)
        }
        None => None,
    };
    let scale = match (&model, a.scale) {
        (Some(m), Some(s)) if s != m.scale() => {
            return Err(Error::Config(format!("--scale {s} disagrees with the x{} checkpoint", m.scale())))
        }
        (Some(m), _) => m.scale(),
        (None, Some(s)) => s,
        (None, None) => cfg.model.scale,
    };
    let base: Box<dyn Upscaler> = match model {
        Some(m) => Box::new(m),
        None => Box::new(Bicubic(scale)),
    };
    let up: Box<dyn Upscaler> = if a.ensemble || cfg.eval.ensemble { Box::new(Ensemble(base)) } else { base };
    let opts = EvalOptions { y_only: cfg.eval.y_only && !a.rgb, border_crop: a.border_crop.or(cfg.eval.border_crop) };
    let spec = DatasetSpec::from_dir(&a.dataset, scale)?;
    let report = evaluate(up.as_ref(), &spec, &opts)?;
    print!("{}", report.table());
    let path = match &a.report {
        Some(p) => p.clone(),
        None => {
            std::fs::create_dir_all(&cfg.output_dir)?;
            cfg.output_dir.join(format!("eval_{}_x{scale}.json", report.dataset))
        }
    };
    report.write_json(&path)?;
    println!("report: {}", path.display());
    Ok(())
}

pub fn sr(ckpt: &Path, input: &Path, out: &Path, ensemble: bool) -> Result<()> {
    let model = Checkpoint::load(ckpt)?.build_model()?;
    let lr = load_png(input)?;
    let hr = if ensemble { super_resolve(&Ensemble(&model), &lr)? } else { super_resolve(&model, &lr)? };
    save_png(&hr, out)?;
    println!("{}x{} -> {}x{} ({})", lr.width(), lr.height(), hr.width(), hr.height(), out.display());
    Ok(())
}

pub fn spectrum(input: &Path, out: &Path, cutoff: f64) -> Result<()> {
    if !(cutoff > 0.0) {
        return Err(Error::Config(format!("--cutoff must be positive, got {cutoff}")));
    }
    let img = load_png(input)?;
    let report = spectrum_of(&rgb_to_y(&img), cutoff);
    save_png(&report.heatmap(), out)?;
    println!("high_freq_fraction {:.6} (cutoff {cutoff} x Nyquist)", report.high_freq_fraction);
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--input-size must look like 48x48, got {s:?}"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

pub fn count(config: Option<&Path>, input_size: &str, verify: bool) -> Result<()> {
    let base = match config {
        Some(p) => RunConfig::load(p)?.model,
        None => ModelConfig::default(),
    };
    base.validate()?;
    let (h, w) = parse_size(input_size)?;
    println!("x{} feats {} adru {} input {h}x{w}", base.scale, base.feats, base.n_adru);
    println!(
        "{:<9} {:>12} {:>14} {:>14} {:>14}{}",
        "head",
        "head params",
        "head (no bias)",
        "total params",
        "MACs",
        if verify { "   instantiated" } else { "" }
    );
    for head in HeadVariant::ALL {
        let cfg = ModelConfig { head_variant: head, ..base.clone() };
        let rep = cost_report(&cfg, h, w);
        let hp = head_params(&cfg);
        let mut line = format!(
            "{:<9} {:>12} {:>14} {:>14} {:>14}",
            head.name(),
            hp.total,
            hp.without_bias,
            rep.params,
            rep.flops
        );
        if verify {
            let n = Adcsr::<f32>::new(cfg, 0)?.params().numel() as u64;
            if n != rep.params {
                return Err(Error::Numeric(format!("{} head: counted {} but instantiated {n}", head.name(), rep.params)));
            }
            line.push_str(&format!(" {n:>14}"));
        }
        println!("{line}");
    }
    Ok(())
}
