use std::collections::BTreeMap;

use super::{Module, Param, Visitor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction; moment buffers keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter from its accumulated gradient.
    pub fn step(&mut self, module: &mut dyn Module) {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2_sqrt = (1.0 - c.beta2.powi(t)).sqrt();
        let step_size = c.lr / bc1;

        struct Update<'a> {
            adam: &'a mut BTreeMap<String, (Vec<f32>, Vec<f32>)>,
            c: AdamConfig,
            step_size: f32,
            bc2_sqrt: f32,
        }
        impl Visitor for Update<'_> {
            fn param(&mut self, name: &str, p: &mut Param) {
                let (m, v) = self
                    .adam
                    .entry(name.to_string())
                    .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
                let c = self.c;
                for i in 0..p.len() {
                    let g = p.grad[i] + c.weight_decay * p.value[i];
                    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                    let denom = v[i].sqrt() / self.bc2_sqrt + c.eps;
                    p.value[i] -= self.step_size * m[i] / denom;
                }
            }
        }
        module.visit(
            "",
            &mut Update {
                adam: &mut self.moments,
                c,
                step_size,
                bc2_sqrt,
            },
        );
    }
}
