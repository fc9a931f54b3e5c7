//! The ADCSR network: a shallow sub-pixel SKIP branch plus a deep BODY of
//! adaptive dense residual units, global feature fusion and a multi-kernel
//! sub-pixel reconstruction head. `HR = HR_BODY + HR_SKIP`.

mod blocks;
mod config;
mod cost;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use blocks::{AdaptiveCoeffs, AdaptiveDense, Adrb, Adru, Conv, ConvUnit};
pub use config::{HeadVariant, ModelConfig};
pub use cost::{count_flops, count_params, cost_report, head_params, ComponentCost, CostReport, ParamCount};

use blocks::Builder;

use crate::error::{shape_err, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Real, Tensor, Var};

/// Name prefix of SKIP parameters.
pub const SKIP_PREFIX: &str = "skip.";
/// Name prefix of BODY parameters (including the reconstruction head).
pub const BODY_PREFIX: &str = "body.";

/// Sub-pixel convolution stages applied directly to the LR image.
#[derive(Debug, Clone)]
pub struct Skip {
    pub stages: Vec<(Conv, usize)>,
}

impl Skip {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (conv, r) in &self.stages {
            h = conv.forward(g, store, h)?;
            h = g.pixel_shuffle(h, *r)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
pub enum Head {
    Subpixel { conv: Conv },
    Afsl { branches: Vec<Conv>, fuse: Conv },
    Awms { branches: Vec<Conv>, weights: Vec<ParamId> },
}

impl Head {
    pub fn prefix(variant: HeadVariant) -> String {
        format!("{BODY_PREFIX}{}.", variant.name())
    }

    fn build<T: Real>(b: &mut Builder<'_, T>, cfg: &ModelConfig) -> Result<Self> {
        let out = 3 * cfg.scale * cfg.scale;
        let name = format!("{BODY_PREFIX}{}", cfg.head_variant.name());
        let branches = |b: &mut Builder<'_, T>| {
            cfg.afsl_kernels
                .iter()
                .enumerate()
                .map(|(i, &k)| b.conv(&format!("{name}.branch.{i}"), cfg.feats, out, k))
                .collect::<Result<Vec<_>>>()
        };
        Ok(match cfg.head_variant {
            HeadVariant::Subpixel => Head::Subpixel { conv: b.conv(&format!("{name}.conv"), cfg.feats, out, 3)? },
            HeadVariant::Afsl => {
                let branches = branches(b)?;
                let fuse = b.conv(&format!("{name}.fuse"), 3 * branches.len(), 3, 1)?;
                Head::Afsl { branches, fuse }
            }
            HeadVariant::Awms => {
                let branches = branches(b)?;
                let weights = (0..branches.len())
                    .map(|i| b.scalar(format!("{name}.weight.{i}"), cfg.adaptive_init, true))
                    .collect::<Result<Vec<_>>>()?;
                Head::Awms { branches, weights }
            }
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, r: usize) -> Result<Var> {
        g.scoped(|g| match self {
            Head::Subpixel { conv } => {
                let h = conv.forward(g, store, x)?;
                g.pixel_shuffle(h, r)
            }
            Head::Afsl { branches, fuse } => {
                let outs = Self::branch_outputs(branches, g, store, x, r)?;
                let cat = g.concat_channels(&outs)?;
                fuse.forward(g, store, cat)
            }
            Head::Awms { branches, weights } => {
                let outs = Self::branch_outputs(branches, g, store, x, r)?;
                let terms: Vec<(Var, Var)> =
                    weights.iter().zip(outs).map(|(&w, o)| (g.param(store, w), o)).collect();
                g.weighted_sum(&terms)
            }
        })
    }

    fn branch_outputs<T: Real>(
        branches: &[Conv],
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        r: usize,
    ) -> Result<Vec<Var>> {
        branches
            .iter()
            .map(|c| {
                let h = c.forward(g, store, x)?;
                g.pixel_shuffle(h, r)
            })
            .collect()
    }
}

/// Feature extraction, chained ADRUs, global feature fusion and the head.
#[derive(Debug, Clone)]
pub struct Body {
    pub feat: Conv,
    pub adrus: Vec<Adru>,
    /// `(a_k, b_k)` of the weighted residual chain between ADRUs.
    pub chain: Vec<(ParamId, ParamId)>,
    pub gff_fuse: Conv,
    pub gff_conv: Conv,
    pub head: Head,
}

impl Body {
    fn build<T: Real>(b: &mut Builder<'_, T>, cfg: &ModelConfig) -> Result<Self> {
        let feat = b.conv("body.feat", 3, cfg.feats, 3)?;
        let mut adrus = Vec::new();
        let mut chain = Vec::new();
        for k in 0..cfg.n_adru {
            adrus.push(Adru::build(b, &format!("body.adru.{k}"), cfg)?);
            let a = b.scalar(format!("body.chain.{k}.a"), cfg.adaptive_init, cfg.adaptive_weights)?;
            let bb = b.scalar(format!("body.chain.{k}.b"), cfg.adaptive_init, cfg.adaptive_weights)?;
            chain.push((a, bb));
        }
        let gff_fuse = b.conv("body.gff.fuse", cfg.n_adru * cfg.feats, cfg.feats, 1)?;
        let gff_conv = b.conv("body.gff.conv", cfg.feats, cfg.feats, 3)?;
        let head = Head::build(b, cfg)?;
        Ok(Body { feat, adrus, chain, gff_fuse, gff_conv, head })
    }

    /// Global-fusion features `F_GFF` before the head.
    pub fn features<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let mut state = self.feat.forward(g, store, x)?;
        let mut outputs = Vec::with_capacity(self.adrus.len());
        let last = self.adrus.len() - 1;
        for (k, (adru, &(a, b))) in self.adrus.iter().zip(&self.chain).enumerate() {
            let f = adru.forward(g, store, state)?;
            let av = g.param(store, a);
            let bv = g.param(store, b);
            if k == last {
                outputs.push(g.weighted_sum(&[(bv, state), (av, f)])?);
            } else {
                let y = g.scale(f, av)?;
                let carried = g.scale(state, bv)?;
                state = g.add(carried, y)?;
                outputs.push(y);
            }
        }
        let cat = g.concat_channels(&outputs)?;
        let fused = self.gff_fuse.forward(g, store, cat)?;
        self.gff_conv.forward(g, store, fused)
    }
}

/// Per-branch outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    pub body: Var,
    pub skip: Var,
    pub hr: Var,
}

/// The full network together with its parameters.
#[derive(Debug, Clone)]
pub struct Adcsr<T: Real = f32> {
    config: ModelConfig,
    params: ParamStore<T>,
    skip: Skip,
    body: Body,
}

impl<T: Real> Adcsr<T> {
    /// Builds and initialises a network. Parameter values depend only on
    /// `config` and `seed`, not on `T`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut b = Builder { store: &mut params, rng: ChaCha8Rng::seed_from_u64(seed) };
        let mut stages = Vec::new();
        for (i, r) in config.skip_stages().into_iter().enumerate() {
            stages.push((b.conv(&format!("skip.{i}"), 3, 3 * r * r, config.skip_kernel)?, r));
        }
        let skip = Skip { stages };
        let body = Body::build(&mut b, &config)?;
        Ok(Adcsr { config, params, skip, body })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn scale(&self) -> usize {
        self.config.scale
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn skip(&self) -> &Skip {
        &self.skip
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    /// Prefix of the reconstruction head's parameter names.
    pub fn head_prefix(&self) -> String {
        Head::prefix(self.config.head_variant)
    }

    fn check_input(&self, g: &Graph<T>, x: Var) -> Result<()> {
        let c = g.value(x).c();
        if c != 3 {
            return Err(shape_err!("network input must have 3 channels, got {c}"));
        }
        Ok(())
    }

    pub fn skip_forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.check_input(g, x)?;
        self.skip.forward(g, &self.params, x)
    }

    pub fn body_forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.check_input(g, x)?;
        let feats = self.body.features(g, &self.params, x)?;
        self.body.head.forward(g, &self.params, feats, self.config.scale)
    }

    pub fn forward_parts(&self, g: &mut Graph<T>, x: Var) -> Result<Outputs> {
        let body = self.body_forward(g, x)?;
        let skip = self.skip_forward(g, x)?;
        let hr = g.add(body, skip)?;
        Ok(Outputs { body, skip, hr })
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        Ok(self.forward_parts(g, x)?.hr)
    }

    /// Inference without gradient bookkeeping: returns `(body, skip, hr)`.
    pub fn infer_parts(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let mut g = Graph::no_grad();
        let xv = g.constant(x.clone());
        let out = self.forward_parts(&mut g, xv)?;
        Ok((g.value(out.body).clone(), g.value(out.skip).clone(), g.value(out.hr).clone()))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::no_grad();
        let xv = g.constant(x.clone());
        let hr = self.forward(&mut g, xv)?;
        Ok(g.value(hr).clone())
    }

    pub fn skip_param_ids(&self) -> Vec<ParamId> {
        self.ids_with_prefix(SKIP_PREFIX)
    }

    pub fn body_param_ids(&self) -> Vec<ParamId> {
        self.ids_with_prefix(BODY_PREFIX)
    }

    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.params.ids().filter(|&id| self.params.get(id).name.starts_with(prefix)).collect()
    }

    /// Every adaptive scalar: block/unit edges and the inter-ADRU chain.
    pub fn coefficient_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for (adru, &(a, b)) in self.body.adrus.iter().zip(&self.body.chain) {
            ids.extend(adru.coefficient_ids());
            ids.extend([a, b]);
        }
        ids
    }

    pub fn set_trainable(&mut self, ids: &[ParamId], trainable: bool) {
        for &id in ids {
            self.params.set_trainable(id, trainable);
        }
    }

    /// Overwrites every parameter whose name starts with `prefix`.
    pub fn fill_prefix(&mut self, prefix: &str, value: T) {
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.value.fill(value);
        }
    }

    /// Same network and values in another precision.
    pub fn cast<U: Real>(&self) -> Adcsr<U> {
        let mut params = ParamStore::new();
        for p in self.params.iter() {
            params.add(p.name.clone(), p.value.cast(), p.trainable).expect("names are unique");
        }
        Adcsr { config: self.config.clone(), params, skip: self.skip.clone(), body: self.body.clone() }
    }
}
