//! Adam optimizer.
//!
//! GAN training conventionally runs with `beta1 = 0.5`; classifier training
//! uses the usual `0.9`. Setting `beta1 = 0` removes the first-moment
//! average entirely, leaving a purely adaptive RMS-style update.

use ndarray::ArrayD;

use super::layers::Params;

/// Adam with constant learning rate.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update step. `params` and `grads` must be aligned and keep the
    /// same order across steps.
    pub fn step(&mut self, params: &mut [&mut ArrayD<f64>], grads: &[ArrayD<f64>]) {
        assert_eq!(params.len(), grads.len(), "param/grad count mismatch");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
            self.v = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer state mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut **p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|pv, &gv, mv, vv| {
                    *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                    *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                    let mhat = *mv / bc1;
                    let vhat = *vv / bc2;
                    *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

/// One Adam update across a whole parameter set, gradients in visit order.
pub fn step_params(opt: &mut Adam, model: &mut dyn Params, grads: &[ArrayD<f64>]) {
    let mut refs: Vec<*mut ArrayD<f64>> = Vec::with_capacity(grads.len());
    model.visit_mut(&mut |_, p| refs.push(p as *mut _));
    assert_eq!(refs.len(), grads.len(), "grad count mismatch");
    // The pointers address disjoint fields, each visited exactly once.
    let mut params: Vec<&mut ArrayD<f64>> = refs.into_iter().map(|p| unsafe { &mut *p }).collect();
    opt.step(&mut params, grads);
}
