//! The four losses: cycle, adversarial, similarity, and the combined
//! objective, both as tape graphs (for training) and as plain values (for
//! reporting and tests).
//!
//! Direction naming: `adv_ab` is the adversarial value for generator
//! `g_ab` judged by `d_b` (fakes land in domain B); `adv_ba` the mirror.
//! `sim_a`/`cyc_a` are the terms fed by domain-A originals.

use ndarray::{Array4, ArrayD};

use crate::dataio::{batch_nchw, ImageTensor};
use crate::nn::tape::{Tape, VarId};
use crate::par::{self, Parallelism};
use crate::ssim::SsimParams;

use super::{
    BoundGenerator, BoundPatchDiscriminator, GanError, GanLossMode, GanModel, GanTrainConfig,
    Generator, PatchDiscriminator, ADV_EPS,
};

/// Labeled loss values for one batch or one epoch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub adv_ab: f64,
    pub adv_ba: f64,
    pub sim_a: f64,
    pub sim_b: f64,
    pub cyc_a: f64,
    pub cyc_b: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [
            self.adv_ab,
            self.adv_ba,
            self.sim_a,
            self.sim_b,
            self.cyc_a,
            self.cyc_b,
            self.total_g,
            self.total_d,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub(crate) fn zeros() -> Self {
        Self {
            adv_ab: 0.0,
            adv_ba: 0.0,
            sim_a: 0.0,
            sim_b: 0.0,
            cyc_a: 0.0,
            cyc_b: 0.0,
            total_g: 0.0,
            total_d: 0.0,
        }
    }
}

/// Validates a value-level batch and stacks it NCHW.
fn to_batch(batch: &[&ImageTensor]) -> Result<Array4<f64>, GanError> {
    if batch.is_empty() {
        return Err(GanError::EmptyBatch);
    }
    let hw = batch[0].hw();
    let range = batch[0].range;
    for img in batch {
        if img.hw() != hw {
            return Err(GanError::ShapeMismatch(format!(
                "batch mixes image shapes {:?} and {:?}",
                hw,
                img.hw()
            )));
        }
        if img.range != range {
            return Err(GanError::ShapeMismatch(
                "batch mixes value ranges".into(),
            ));
        }
    }
    Ok(batch_nchw(batch))
}

/// Batch-mean SSIM as a tape graph: per-sample, per-channel global
/// statistics (sample-normalized covariance), averaged over batch and
/// channels. Produces a 0-d node.
pub(crate) fn ssim_tape(t: &Tape, x: VarId, y: VarId, params: SsimParams) -> VarId {
    let shape = t.shape(x);
    let (h, w) = (shape[2], shape[3]);
    let m = (h * w) as f64;
    debug_assert!(m >= 2.0, "ssim needs at least 2 pixels");
    let bessel = m / (m - 1.0);

    let mu_x = t.mean_spatial(x);
    let mu_y = t.mean_spatial(y);
    let xc = t.sub(x, t.broadcast_spatial(mu_x, h, w));
    let yc = t.sub(y, t.broadcast_spatial(mu_y, h, w));
    let cov = t.mul_scalar(t.mean_spatial(t.mul(xc, yc)), bessel);
    let var_x = t.mul_scalar(t.mean_spatial(t.mul(xc, xc)), bessel);
    let var_y = t.mul_scalar(t.mean_spatial(t.mul(yc, yc)), bessel);

    let num_l = t.add_scalar(t.mul_scalar(t.mul(mu_x, mu_y), 2.0), params.c1);
    let num_c = t.add_scalar(t.mul_scalar(cov, 2.0), params.c2);
    let den_l = t.add_scalar(t.add(t.mul(mu_x, mu_x), t.mul(mu_y, mu_y)), params.c1);
    let den_c = t.add_scalar(t.add(var_x, var_y), params.c2);
    let ssim_nc = t.div(t.mul(num_l, num_c), t.mul(den_l, den_c));
    t.mean_all(ssim_nc)
}

/// Adversarial pieces for one domain:
/// `value` is the written objective E[log D(real)] + E[log(1 - D(fake))]
/// (or its least-squares analog with targets {1, 0});
/// `gen_term` is what the generators minimize.
pub(crate) struct AdvTerms {
    pub value: VarId,
    pub gen_term: VarId,
    pub fake: VarId,
}

pub(crate) fn adversarial_terms(
    t: &Tape,
    disc: &BoundPatchDiscriminator,
    gen_into_p: &BoundGenerator,
    real_p: VarId,
    source_q: VarId,
    mode: GanLossMode,
) -> AdvTerms {
    let fake = gen_into_p.forward(t, source_q);
    match mode {
        GanLossMode::LogAdversarial => {
            let d_real = t.clamp(disc.realness(t, real_p, mode), ADV_EPS, 1.0 - ADV_EPS);
            let d_fake = t.clamp(disc.realness(t, fake, mode), ADV_EPS, 1.0 - ADV_EPS);
            let real_term = t.mean_all(t.ln(d_real));
            let one_minus = t.add_scalar(t.neg(d_fake), 1.0);
            let fake_term = t.mean_all(t.ln(one_minus));
            let value = t.add(real_term, fake_term);
            // The saturating objective: generators minimize the same value
            // (the real term is constant with respect to them).
            AdvTerms {
                value,
                gen_term: value,
                fake,
            }
        }
        GanLossMode::LeastSquares => {
            let d_real = disc.realness(t, real_p, mode);
            let d_fake = disc.realness(t, fake, mode);
            let real_dev = t.add_scalar(d_real, -1.0);
            let real_term = t.mean_all(t.mul(real_dev, real_dev));
            let fake_term = t.mean_all(t.mul(d_fake, d_fake));
            let value = t.add(real_term, fake_term);
            let gen_dev = t.add_scalar(d_fake, -1.0);
            let gen_term = t.mean_all(t.mul(gen_dev, gen_dev));
            AdvTerms {
                value,
                gen_term,
                fake,
            }
        }
    }
}

/// One translation chain built on a tape: fake = G_pq(x_p), rec = G_qp(fake).
pub(crate) struct ChainBuilt {
    pub adv_value: VarId,
    pub gen_adv: VarId,
    pub sim: Option<VarId>,
    pub cyc: VarId,
    pub fake: VarId,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn build_chain(
    t: &Tape,
    g_fwd: &BoundGenerator,
    g_bwd: &BoundGenerator,
    disc_q: &BoundPatchDiscriminator,
    x_p: VarId,
    real_q: VarId,
    mode: GanLossMode,
    ssim_params: SsimParams,
    include_sim: bool,
) -> ChainBuilt {
    let adv = adversarial_terms(t, disc_q, g_fwd, real_q, x_p, mode);
    let rec = g_bwd.forward(t, adv.fake);
    let cyc = t.mean_all(t.abs(t.sub(x_p, rec)));
    let sim = include_sim.then(|| {
        let s = ssim_tape(t, x_p, adv.fake, ssim_params);
        t.add_scalar(t.neg(s), 1.0)
    });
    ChainBuilt {
        adv_value: adv.value,
        gen_adv: adv.gen_term,
        sim,
        cyc,
        fake: adv.fake,
    }
}

/// Output of one generator update step: logged values, gradients for
/// `[g_ab params..., g_ba params...]`, and detached fakes for the
/// discriminator step.
pub struct GeneratorChains {
    pub breakdown: LossBreakdown,
    pub grads: Vec<ArrayD<f64>>,
    pub fake_b: ArrayD<f64>,
    pub fake_a: ArrayD<f64>,
    /// The value the generators minimize (both chains summed).
    pub gen_objective: f64,
}

/// Builds both translation chains, backpropagates the generator objective,
/// and returns summed gradients. `include_sim = false` removes the
/// similarity term from the graph entirely (the similarity-free build).
pub(crate) fn generator_step(
    model: &GanModel,
    batch_a: &Array4<f64>,
    batch_b: &Array4<f64>,
    config: &GanTrainConfig,
    include_sim: bool,
    ssim_params: SsimParams,
    trainable: bool,
) -> GeneratorChains {
    let par = config.parallelism;
    let run_chain = |origin_a: bool| -> (f64, f64, f64, Vec<ArrayD<f64>>, ArrayD<f64>, f64) {
        let t = Tape::with_parallelism(par);
        let g_ab = model.g_ab.bind(&t, trainable);
        let g_ba = model.g_ba.bind(&t, trainable);
        let (g_fwd, g_bwd, disc, x, real, lam_sim, lam_cyc) = if origin_a {
            let d_b = model.d_b.bind(&t, false);
            (
                &g_ab,
                &g_ba,
                d_b,
                t.constant(batch_a.clone().into_dyn()),
                t.constant(batch_b.clone().into_dyn()),
                config.lambda1,
                config.lambda3,
            )
        } else {
            let d_a = model.d_a.bind(&t, false);
            (
                &g_ba,
                &g_ab,
                d_a,
                t.constant(batch_b.clone().into_dyn()),
                t.constant(batch_a.clone().into_dyn()),
                config.lambda2,
                config.lambda4,
            )
        };
        let chain = build_chain(
            &t,
            g_fwd,
            g_bwd,
            &disc,
            x,
            real,
            config.gan_loss_mode,
            ssim_params,
            include_sim,
        );
        let mut loss = t.add(chain.gen_adv, t.mul_scalar(chain.cyc, lam_cyc));
        if let Some(sim) = chain.sim {
            loss = t.add(loss, t.mul_scalar(sim, lam_sim));
        }
        let grads = if trainable {
            let g = t.backward(loss);
            g_ab.var_ids()
                .into_iter()
                .chain(g_ba.var_ids())
                .map(|id| g.get_or_zeros(id, &t.shape(id)))
                .collect()
        } else {
            Vec::new()
        };
        (
            t.scalar(chain.adv_value),
            chain.sim.map(|s| t.scalar(s)).unwrap_or(0.0),
            t.scalar(chain.cyc),
            grads,
            t.value(chain.fake),
            t.scalar(loss),
        )
    };

    let (chain_a, chain_b) = par::join(par, || run_chain(true), || run_chain(false));
    let (adv_ab, sim_a, cyc_a, grads_a, fake_b, gen_loss_a) = chain_a;
    let (adv_ba, sim_b, cyc_b, grads_b, fake_a, gen_loss_b) = chain_b;

    let grads = if trainable {
        grads_a
            .into_iter()
            .zip(grads_b)
            .map(|(a, b)| a + b)
            .collect()
    } else {
        Vec::new()
    };

    let total_g = adv_ab
        + adv_ba
        + config.lambda1 * sim_a
        + config.lambda2 * sim_b
        + config.lambda3 * cyc_a
        + config.lambda4 * cyc_b;
    let breakdown = LossBreakdown {
        adv_ab,
        adv_ba,
        sim_a,
        sim_b,
        cyc_a,
        cyc_b,
        total_g,
        total_d: adv_ab + adv_ba,
    };
    GeneratorChains {
        breakdown,
        grads,
        fake_b,
        fake_a,
        gen_objective: gen_loss_a + gen_loss_b,
    }
}

/// One discriminator update: loss value and parameter gradients.
/// Fakes arrive detached (plain arrays).
pub(crate) fn discriminator_step(
    disc: &PatchDiscriminator,
    real: &ArrayD<f64>,
    fake: &ArrayD<f64>,
    mode: GanLossMode,
    par: Parallelism,
) -> (f64, Vec<ArrayD<f64>>) {
    discriminator_objective(disc, real, fake, mode, par, true)
}

fn discriminator_objective(
    disc: &PatchDiscriminator,
    real: &ArrayD<f64>,
    fake: &ArrayD<f64>,
    mode: GanLossMode,
    par: Parallelism,
    want_grads: bool,
) -> (f64, Vec<ArrayD<f64>>) {
    let t = Tape::with_parallelism(par);
    let bound = disc.bind(&t, want_grads);
    let real_v = t.constant(real.clone());
    let fake_v = t.constant(fake.clone());
    let loss = match mode {
        GanLossMode::LogAdversarial => {
            let d_real = t.clamp(bound.realness(&t, real_v, mode), ADV_EPS, 1.0 - ADV_EPS);
            let d_fake = t.clamp(bound.realness(&t, fake_v, mode), ADV_EPS, 1.0 - ADV_EPS);
            let real_term = t.mean_all(t.ln(d_real));
            let fake_term = t.mean_all(t.ln(t.add_scalar(t.neg(d_fake), 1.0)));
            // Discriminator maximizes the objective; minimize its negation.
            t.neg(t.add(real_term, fake_term))
        }
        GanLossMode::LeastSquares => {
            let d_real = bound.realness(&t, real_v, mode);
            let d_fake = bound.realness(&t, fake_v, mode);
            let real_dev = t.add_scalar(d_real, -1.0);
            let real_term = t.mean_all(t.mul(real_dev, real_dev));
            let fake_term = t.mean_all(t.mul(d_fake, d_fake));
            t.add(real_term, fake_term)
        }
    };
    let g = if want_grads {
        let grads = t.backward(loss);
        bound
            .var_ids()
            .into_iter()
            .map(|id| grads.get_or_zeros(id, &t.shape(id)))
            .collect()
    } else {
        Vec::new()
    };
    (t.scalar(loss), g)
}

/// Gradients of the generator-side objective for `[g_ab..., g_ba...]`, with
/// the similarity term either in the graph or removed from it entirely.
pub fn generator_gradients(
    model: &GanModel,
    batch_a: &Array4<f64>,
    batch_b: &Array4<f64>,
    config: &GanTrainConfig,
    include_sim: bool,
) -> Vec<ArrayD<f64>> {
    let params = SsimParams::for_dynamic_range(2.0);
    generator_step(model, batch_a, batch_b, config, include_sim, params, true).grads
}

/// Value of the quantity the generators minimize: per-direction adversarial
/// generator terms plus the weighted similarity and cycle terms.
pub fn generator_objective_value(
    model: &GanModel,
    batch_a: &Array4<f64>,
    batch_b: &Array4<f64>,
    config: &GanTrainConfig,
) -> f64 {
    let params = SsimParams::for_dynamic_range(2.0);
    generator_step(model, batch_a, batch_b, config, true, params, false).gen_objective
}

/// Discriminator loss value on detached batches.
pub fn discriminator_loss_value(
    disc: &PatchDiscriminator,
    real: &ArrayD<f64>,
    fake: &ArrayD<f64>,
    mode: GanLossMode,
) -> f64 {
    discriminator_objective(disc, real, fake, mode, Parallelism::Sequential, false).0
}

/// Discriminator loss and parameter gradients on detached batches.
pub fn discriminator_gradients(
    disc: &PatchDiscriminator,
    real: &ArrayD<f64>,
    fake: &ArrayD<f64>,
    mode: GanLossMode,
) -> (f64, Vec<ArrayD<f64>>) {
    discriminator_objective(disc, real, fake, mode, Parallelism::Sequential, true)
}

/// Mean L1 cycle reconstruction error, `E || x - G_qp(G_pq(x)) ||`, with the
/// norm taken as the per-pixel mean so the value is resolution-invariant.
pub fn cycle_loss(
    g_pq: &Generator,
    g_qp: &Generator,
    batch: &[&ImageTensor],
) -> Result<f64, GanError> {
    let x = to_batch(batch)?;
    let t = Tape::new();
    let xv = t.constant(x.into_dyn());
    let fwd = g_pq.bind(&t, false);
    let bwd = g_qp.bind(&t, false);
    let rec = bwd.forward(&t, fwd.forward(&t, xv));
    let loss = t.mean_all(t.abs(t.sub(xv, rec)));
    Ok(t.scalar(loss))
}

/// The written adversarial objective for discriminator `d_p` and the
/// generator producing fakes in domain p from `source_q`.
pub fn adversarial_loss(
    gen_into_p: &Generator,
    d_p: &PatchDiscriminator,
    real_p: &[&ImageTensor],
    source_q: &[&ImageTensor],
    mode: GanLossMode,
) -> Result<f64, GanError> {
    let real = to_batch(real_p)?;
    let source = to_batch(source_q)?;
    let t = Tape::new();
    let real_v = t.constant(real.into_dyn());
    let source_v = t.constant(source.into_dyn());
    let disc = d_p.bind(&t, false);
    let gen = gen_into_p.bind(&t, false);
    let terms = adversarial_terms(&t, &disc, &gen, real_v, source_v, mode);
    Ok(t.scalar(terms.value))
}

/// Similarity loss: `[1 - mean SSIM(x_A, G_AB(x_A))] + [1 - mean SSIM(x_B,
/// G_BA(x_B))]`. The sum over the batch is normalized to a mean so the value
/// is batch-size invariant.
pub fn similarity_loss(
    g_ab: &Generator,
    g_ba: &Generator,
    batch_a: &[&ImageTensor],
    batch_b: &[&ImageTensor],
    params: SsimParams,
) -> Result<f64, GanError> {
    let a = to_batch(batch_a)?;
    let b = to_batch(batch_b)?;
    let t = Tape::new();
    let av = t.constant(a.into_dyn());
    let bv = t.constant(b.into_dyn());
    let gab = g_ab.bind(&t, false);
    let gba = g_ba.bind(&t, false);
    let fake_b = gab.forward(&t, av);
    let fake_a = gba.forward(&t, bv);
    let sim_a = t.add_scalar(t.neg(ssim_tape(&t, av, fake_b, params)), 1.0);
    let sim_b = t.add_scalar(t.neg(ssim_tape(&t, bv, fake_a, params)), 1.0);
    Ok(t.scalar(sim_a) + t.scalar(sim_b))
}

/// The overall objective, reported as a labeled breakdown.
///
/// Generator objective: `adv_ab + adv_ba + l1*sim_a + l2*sim_b + l3*cyc_a +
/// l4*cyc_b`; the discriminators receive only their adversarial terms.
pub fn total_objective(
    model: &GanModel,
    batch_a: &[&ImageTensor],
    batch_b: &[&ImageTensor],
    config: &GanTrainConfig,
) -> Result<LossBreakdown, GanError> {
    config.validate()?;
    let a = to_batch(batch_a)?;
    let b = to_batch(batch_b)?;
    let params = SsimParams::for_range(batch_a[0].range);
    let chains = generator_step(model, &a, &b, config, true, params, false);
    Ok(chains.breakdown)
}
