use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::checkpoint::{Checkpoint, Phase, TrainState};
use super::config::{lr_schedule, TrainConfig, TrainMode};
use super::optim::Adam;
use crate::data::{ImagePair, PatchSampler};
use crate::error::{config_err, Error, Result};
use crate::metrics::{evaluate_pairs, EvalOptions};
use crate::model::{Adcsr, SKIP_PREFIX};
use crate::tensor::Graph;

/// Training patches plus optional whole-image validation pairs.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub sampler: PatchSampler,
    pub val: Vec<ImagePair>,
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogRecord {
    Phase { phase: Phase, step: u64 },
    Step { phase: Phase, step: u64, phase_step: u64, lr: f64, loss: f64, val_psnr: Option<f64> },
    Checkpoint { step: u64, path: String },
    Done { step: u64, reason: String },
}

#[derive(Debug, Clone, Default)]
pub struct TrainSummary {
    /// `(global step, phase, loss)` of every step run by this call.
    pub losses: Vec<(u64, Phase, f64)>,
    pub records: Vec<LogRecord>,
    pub final_state: Option<TrainState>,
    pub final_checkpoint: Option<PathBuf>,
}

impl TrainSummary {
    pub fn phase_losses(&self, phase: Phase) -> Vec<f64> {
        self.losses.iter().filter(|(_, p, _)| *p == phase).map(|&(_, _, l)| l).collect()
    }

    pub fn val_curve(&self) -> Vec<(u64, f64)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Step { step, val_psnr: Some(v), .. } => Some((*step, *v)),
                _ => None,
            })
            .collect()
    }
}

struct Run<'a> {
    model: &'a mut Adcsr<f32>,
    data: &'a TrainData,
    cfg: &'a TrainConfig,
    out: Option<PathBuf>,
    log: Option<File>,
    adam: Adam<f32>,
    state: TrainState,
    summary: TrainSummary,
    base_trainable: Vec<bool>,
}

impl Run<'_> {
    fn emit(&mut self, rec: LogRecord) -> Result<()> {
        if let Some(f) = self.log.as_mut() {
            let line = serde_json::to_string(&rec).expect("record serialises");
            writeln!(f, "{line}")?;
        }
        log::debug!("{rec:?}");
        self.summary.records.push(rec);
        Ok(())
    }

    fn set_phase_trainable(&mut self, phase: Phase) {
        let freeze_skip = self.cfg.mode == TrainMode::PretrainSkipThenFreeze;
        let ids: Vec<_> = self.model.params().ids().collect();
        for id in ids {
            let is_skip = self.model.params().get(id).name.starts_with(SKIP_PREFIX);
            let on = match phase {
                Phase::PretrainSkip => is_skip,
                Phase::Joint => !(freeze_skip && is_skip),
            };
            self.model.params_mut().set_trainable(id, on && self.base_trainable[id.index()]);
        }
    }

    fn restore_trainable(&mut self) {
        let ids: Vec<_> = self.model.params().ids().collect();
        for id in ids {
            self.model.params_mut().set_trainable(id, self.base_trainable[id.index()]);
        }
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::with_optimizer(self.model, &self.adam, self.state.clone())
    }

    fn save(&mut self, name: &str) -> Result<Option<PathBuf>> {
        let Some(dir) = self.out.clone() else { return Ok(None) };
        let path = dir.join(name);
        self.checkpoint().save(&path)?;
        self.emit(LogRecord::Checkpoint { step: self.state.global_step, path: path.display().to_string() })?;
        Ok(Some(path))
    }

    fn step(&mut self, lr: f64) -> Result<()> {
        let phase = self.state.phase;
        let (lr_t, hr_t) = self.data.sampler.stacked::<f32>(self.state.global_step, self.cfg.batch)?;
        self.model.params_mut().zero_grads();
        let mut g = Graph::new();
        let x = g.constant(lr_t);
        let y = g.constant(hr_t);
        let pred = match phase {
            Phase::PretrainSkip => self.model.skip_forward(&mut g, x)?,
            Phase::Joint => self.model.forward(&mut g, x)?,
        };
        let loss = g.l1_loss(pred, y)?;
        let lv = g.value(loss).item()? as f64;
        if !lv.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at step {} ({} phase); last checkpoint kept",
                self.state.global_step,
                phase.name()
            )));
        }
        g.backward(loss, self.model.params_mut())?;
        drop(g);
        self.adam.step(self.model.params_mut(), lr)?;
        self.state.phase_step += 1;
        self.state.global_step += 1;
        self.state.adam_t = self.adam.t;
        self.summary.losses.push((self.state.global_step, phase, lv));

        let s = self.state.global_step;
        let val_due = self.cfg.val_every > 0 && s % self.cfg.val_every == 0 && !self.data.val.is_empty();
        let log_due = self.cfg.log_every > 0 && s % self.cfg.log_every == 0;
        if val_due || log_due {
            let val_psnr = if val_due {
                evaluate_pairs(&*self.model, &self.data.val, "val", &EvalOptions::default()).mean_psnr
            } else {
                None
            };
            self.emit(LogRecord::Step { phase, step: s, phase_step: self.state.phase_step, lr, loss: lv, val_psnr })?;
        }
        if self.cfg.checkpoint_every > 0 && s % self.cfg.checkpoint_every == 0 {
            self.save(&format!("ckpt_{s:08}.adcs"))?;
            self.save("latest.adcs")?;
        }
        Ok(())
    }

    fn run(&mut self) -> Result<String> {
        let pretrain = self.cfg.pretrain_steps();
        if self.state.phase == Phase::PretrainSkip {
            if self.state.phase_step == 0 {
                self.emit(LogRecord::Phase { phase: Phase::PretrainSkip, step: self.state.global_step })?;
            }
            self.set_phase_trainable(Phase::PretrainSkip);
            while self.state.phase_step < pretrain {
                self.step(lr_schedule(self.state.phase_step, self.cfg))?;
            }
            self.state.phase = Phase::Joint;
            self.state.phase_step = 0;
            self.adam = Adam::new(self.cfg.beta1, self.cfg.beta2, self.cfg.eps);
            self.state.adam_t = 0;
        }
        if self.state.phase_step == 0 {
            self.emit(LogRecord::Phase { phase: Phase::Joint, step: self.state.global_step })?;
        }
        self.set_phase_trainable(Phase::Joint);
        loop {
            if self.cfg.max_steps.is_some_and(|m| self.state.phase_step >= m) {
                return Ok("max_steps".into());
            }
            let lr = lr_schedule(self.state.phase_step, self.cfg);
            if lr < self.cfg.lr_stop {
                return Ok("lr_stop".into());
            }
            self.step(lr)?;
        }
    }
}

fn open_log(dir: &Path, append: bool) -> Result<File> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("train.jsonl");
    Ok(OpenOptions::new().create(true).write(true).append(append).truncate(!append).open(path)?)
}

/// Runs the configured schedule on `model`.
///
/// With `out_dir`, a `train.jsonl` log, periodic checkpoints and
/// `final.adcs` are written there. `resume` continues a run from one of its
/// checkpoints; the result is identical to never having stopped.
pub fn train(
    model: &mut Adcsr<f32>,
    data: &TrainData,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<&Checkpoint>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let base_trainable = model.params().iter().map(|p| p.trainable).collect();
    let (adam, state) = match resume {
        Some(ck) => {
            let st = ck.meta.train.clone().ok_or_else(|| config_err!("checkpoint carries no training state"))?;
            if st.mode != cfg.mode {
                return Err(config_err!(
                    "checkpoint was trained with mode {} but the config asks for {}",
                    st.mode.name(),
                    cfg.mode.name()
                ));
            }
            ck.apply(model, false)?;
            (ck.optimizer(model)?.expect("state present"), st)
        }
        None => {
            let phase = if cfg.pretrain_steps() > 0 { Phase::PretrainSkip } else { Phase::Joint };
            let st = TrainState {
                mode: cfg.mode,
                phase,
                phase_step: 0,
                global_step: 0,
                adam_t: 0,
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                eps: cfg.eps,
            };
            (Adam::new(cfg.beta1, cfg.beta2, cfg.eps), st)
        }
    };
    let log = out_dir.map(|d| open_log(d, resume.is_some())).transpose()?;
    let mut run = Run {
        model,
        data,
        cfg,
        out: out_dir.map(Path::to_path_buf),
        log,
        adam,
        state,
        summary: TrainSummary::default(),
        base_trainable,
    };
    let outcome = run.run();
    run.restore_trainable();
    let reason = outcome?;
    run.summary.final_checkpoint = run.save("final.adcs")?;
    run.emit(LogRecord::Done { step: run.state.global_step, reason })?;
    run.summary.final_state = Some(run.state.clone());
    Ok(run.summary)
}

/// Optimises SKIP alone for `cfg.pretrain_steps()` steps (none in direct
/// mode). Returns the per-step losses.
pub fn pretrain_skip(model: &mut Adcsr<f32>, data: &TrainData, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let steps = cfg.pretrain_steps();
    let state = TrainState {
        mode: cfg.mode,
        phase: Phase::PretrainSkip,
        phase_step: 0,
        global_step: 0,
        adam_t: 0,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };
    let base_trainable = model.params().iter().map(|p| p.trainable).collect();
    let mut run = Run {
        model,
        data,
        cfg,
        out: None,
        log: None,
        adam: Adam::new(cfg.beta1, cfg.beta2, cfg.eps),
        state,
        summary: TrainSummary::default(),
        base_trainable,
    };
    run.set_phase_trainable(Phase::PretrainSkip);
    let mut outcome = Ok(());
    while run.state.phase_step < steps {
        outcome = run.step(lr_schedule(run.state.phase_step, cfg));
        if outcome.is_err() {
            break;
        }
    }
    run.restore_trainable();
    outcome?;
    Ok(run.summary.losses.iter().map(|&(_, _, l)| l).collect())
}
