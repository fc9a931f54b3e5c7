//! Analytic parameter and multiply-accumulate counts.

use serde::Serialize;

use super::blocks::AdaptiveCoeffs;
use super::{HeadVariant, ModelConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub total: u64,
    pub without_bias: u64,
}

impl std::ops::Add for ParamCount {
    type Output = ParamCount;

    fn add(self, o: ParamCount) -> ParamCount {
        ParamCount { total: self.total + o.total, without_bias: self.without_bias + o.without_bias }
    }
}

impl std::iter::Sum for ParamCount {
    fn sum<I: Iterator<Item = ParamCount>>(iter: I) -> Self {
        iter.fold(ParamCount::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentCost {
    pub name: &'static str,
    pub params: ParamCount,
    pub macs: u64,
}

/// Parameter and MAC totals, with a per-component breakdown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub params: u64,
    pub params_without_bias: u64,
    /// Multiply-accumulates of every convolution for one `input_h × input_w`
    /// LR image.
    pub flops: u64,
    pub input_size: (usize, usize),
    pub components: Vec<ComponentCost>,
}

#[derive(Default)]
struct Tally {
    params: ParamCount,
    macs: u64,
}

impl Tally {
    fn conv(&mut self, cin: usize, cout: usize, k: usize, pixels: usize) {
        let w = (k * k * cin * cout) as u64;
        self.params = self.params + ParamCount { total: w + cout as u64, without_bias: w };
        self.macs += w * pixels as u64;
    }

    fn scalars(&mut self, n: usize) {
        self.params = self.params + ParamCount { total: n as u64, without_bias: n as u64 };
    }

    fn into_component(self, name: &'static str) -> ComponentCost {
        ComponentCost { name, params: self.params, macs: self.macs }
    }
}

fn dense_block(t: &mut Tally, n: usize, cfg: &ModelConfig, pixels: usize) {
    t.conv((n + 1) * cfg.feats, cfg.feats, 1, pixels);
    t.scalars(AdaptiveCoeffs::expected_edges(n, cfg.dense_connections));
}

/// Full cost breakdown for an LR input of `h × w`.
pub fn cost_report(cfg: &ModelConfig, h: usize, w: usize) -> CostReport {
    let lr = h * w;
    let hr = lr * cfg.scale * cfg.scale;
    let f = cfg.feats;

    let mut skip = Tally::default();
    let mut pixels = lr;
    for r in cfg.skip_stages() {
        skip.conv(3, 3 * r * r, cfg.skip_kernel, pixels);
        pixels *= r * r;
    }

    let mut trunk = Tally::default();
    trunk.conv(3, f, 3, lr);
    for _ in 0..cfg.n_adru {
        for _ in 0..cfg.n_adrb_per_adru {
            for _ in 0..cfg.n_units_per_adrb {
                trunk.conv(f, f * cfg.expansion, 3, lr);
                trunk.conv(f * cfg.expansion, f, 3, lr);
            }
            dense_block(&mut trunk, cfg.n_units_per_adrb, cfg, lr);
        }
        dense_block(&mut trunk, cfg.n_adrb_per_adru, cfg, lr);
        trunk.scalars(2);
    }
    trunk.conv(cfg.n_adru * f, f, 1, lr);
    trunk.conv(f, f, 3, lr);

    let head = head_cost(cfg, lr, hr);

    let components = vec![
        skip.into_component("skip"),
        trunk.into_component("body"),
        head.into_component(cfg.head_variant.name()),
    ];
    let params: ParamCount = components.iter().map(|c| c.params).sum();
    CostReport {
        params: params.total,
        params_without_bias: params.without_bias,
        flops: components.iter().map(|c| c.macs).sum(),
        input_size: (h, w),
        components,
    }
}

fn head_cost(cfg: &ModelConfig, lr: usize, hr: usize) -> Tally {
    let out = 3 * cfg.scale * cfg.scale;
    let mut t = Tally::default();
    match cfg.head_variant {
        HeadVariant::Subpixel => t.conv(cfg.feats, out, 3, lr),
        HeadVariant::Afsl | HeadVariant::Awms => {
            for &k in &cfg.afsl_kernels {
                t.conv(cfg.feats, out, k, lr);
            }
            if cfg.head_variant == HeadVariant::Afsl {
                t.conv(3 * cfg.afsl_kernels.len(), 3, 1, hr);
            } else {
                t.scalars(cfg.afsl_kernels.len());
            }
        }
    }
    t
}

pub fn count_params(cfg: &ModelConfig) -> ParamCount {
    let r = cost_report(cfg, 1, 1);
    ParamCount { total: r.params, without_bias: r.params_without_bias }
}

pub fn count_flops(cfg: &ModelConfig, h: usize, w: usize) -> u64 {
    cost_report(cfg, h, w).flops
}

/// Parameters of the reconstruction head alone.
pub fn head_params(cfg: &ModelConfig) -> ParamCount {
    head_cost(cfg, 1, cfg.scale * cfg.scale).params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Adcsr;

    #[test]
    fn conv_unit_count() {
        let mut t = Tally::default();
        t.conv(8, 24, 3, 1);
        t.conv(24, 8, 3, 1);
        assert_eq!(t.params.total, 9 * 8 * 24 + 24 + 9 * 24 * 8 + 8);
        assert_eq!(t.params.total, 3488);
    }

    #[test]
    fn table_head_counts() {
        let cfg = |head| ModelConfig { head_variant: head, feats: 64, scale: 2, ..Default::default() };
        assert_eq!(head_params(&cfg(HeadVariant::Subpixel)).without_bias, 6912);
        assert_eq!(head_params(&cfg(HeadVariant::Afsl)).without_bias, 125_988);
        assert_eq!(head_params(&cfg(HeadVariant::Awms)).without_bias, 125_956);
    }

    #[test]
    fn x4_skip_is_two_x2_stages() {
        let cfg = ModelConfig { scale: 4, ..ModelConfig::tiny(4, 8) };
        let skip = &cost_report(&cfg, 4, 4).components[0];
        assert_eq!(skip.params.total, 2 * (900 + 12));
    }

    #[test]
    fn counter_matches_instantiated_model() {
        for head in HeadVariant::ALL {
            for dense in [true, false] {
                let cfg = ModelConfig {
                    head_variant: head,
                    dense_connections: dense,
                    adaptive_weights: dense,
                    n_adru: 2,
                    n_adrb_per_adru: 2,
                    n_units_per_adrb: 3,
                    ..ModelConfig::tiny(3, 4)
                };
                let m = Adcsr::<f32>::new(cfg.clone(), 0).unwrap();
                assert_eq!(count_params(&cfg).total, m.params().numel() as u64, "{head:?} dense={dense}");
            }
        }
    }

    #[test]
    fn flops_positive_and_scale_with_area() {
        let cfg = ModelConfig::tiny(2, 8);
        let a = count_flops(&cfg, 8, 8);
        assert!(a > 0);
        assert_eq!(count_flops(&cfg, 16, 8), 2 * a);
    }
}
