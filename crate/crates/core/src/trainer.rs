//! Training loops: `k` critic ascent steps per generator step, Adam on
//! both players, multiplier updates for the augmented-Lagrangian methods,
//! and held-out metric logging.
//!
//! The critic maximizes
//! `L = mean D(real) − mean D(fake) + mean penalty`
//! over a batch of `n` real/fake pairs. The generator maximizes
//! `mean D(G(z))`; penalties never enter its loss.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constraints::{
    alm_term, alpha_update, cp_term, gp_term, group_reduce, omega_from_norms, sgan_al_term,
    squared_gradient_norms, wgan_al_from_norms, wgan_gp_from_norms, AlmState, Method,
    PenaltyConfig, SganMeasure,
};
use crate::error::{Error, Result};
use crate::nets::{BoundMlp, CriticModel, LinearCritic, LinearModel, MlpParams, MlpSpec};
use crate::oracle::{critic_objective, empirical_w1, MAX_ASSIGNMENT};
use crate::rng::{seeded, streams};
use crate::tape::{Tape, Tensor, Var};
use crate::toydata::{lerp, Point, ToyDistribution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// Bias-corrected Adam. `ascent` moves along `+grad`.
pub fn adam_update(
    state: &mut AdamState,
    params: &mut [f64],
    grad: &[f64],
    lr: f64,
    cfg: &AdamConfig,
    ascent: bool,
) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != grad.len() {
        return Err(Error::Size {
            left: params.len(),
            right: grad.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let sign = if ascent { 1.0 } else { -1.0 };
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] += sign * lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// A critic whose parameters can be placed on a tape as differentiable
/// inputs and updated from a flat gradient.
pub trait TrainableCritic: CriticModel {
    fn param_tensors(&self) -> Vec<Tensor>;
    fn bind_vars(&self, vars: Vec<Var>) -> Result<Self::Bound>;
    /// Flat order matches [`TrainableCritic::param_tensors`].
    fn flat_params(&self) -> Vec<f64>;
    fn set_flat_params(&mut self, values: &[f64]) -> Result<()>;
}

impl TrainableCritic for MlpParams {
    fn param_tensors(&self) -> Vec<Tensor> {
        self.tensors()
    }
    fn bind_vars(&self, vars: Vec<Var>) -> Result<BoundMlp> {
        BoundMlp::from_vars(&self.spec, vars)
    }
    fn flat_params(&self) -> Vec<f64> {
        self.flat()
    }
    fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        self.set_flat(values)
    }
}

impl TrainableCritic for LinearModel {
    fn param_tensors(&self) -> Vec<Tensor> {
        vec![Tensor::column(&self.0)]
    }
    fn bind_vars(&self, vars: Vec<Var>) -> Result<LinearCritic> {
        match vars.as_slice() {
            [w] => Ok(LinearCritic {
                weight: *w,
                dim: self.0.len(),
            }),
            _ => Err(Error::Size {
                left: 1,
                right: vars.len(),
            }),
        }
    }
    fn flat_params(&self) -> Vec<f64> {
        self.0.clone()
    }
    fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.0.len() {
            return Err(Error::Size {
                left: self.0.len(),
                right: values.len(),
            });
        }
        self.0.copy_from_slice(values);
        Ok(())
    }
}

/// Batch quantities from one critic step, measured before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub loss: f64,
    pub objective: f64,
    pub omega_mean: f64,
    pub omega_min: f64,
    pub grad_norm_mean: f64,
    /// Multiplier after the update.
    pub alpha: f64,
    pub grad_alpha: f64,
}

fn ensure_finite(values: &[f64], context: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

/// One Adam ascent step on the critic for the pairs `(real[i], fake[i])`.
/// Interpolation parameters are drawn from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn critic_step<P: TrainableCritic, R: Rng + ?Sized>(
    params: &mut P,
    real: &[Point],
    fake: &[Point],
    penalty: &PenaltyConfig,
    alm: &mut AlmState,
    adam: &mut AdamState,
    opt: &AdamConfig,
    lr: f64,
    rng: &mut R,
) -> Result<StepMetrics> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::Size {
            left: real.len(),
            right: fake.len(),
        });
    }
    let n = real.len();
    let m = penalty.m;
    let mut tape = Tape::new();
    let inputs: Vec<Var> = params
        .param_tensors()
        .into_iter()
        .map(|t| tape.constant(t))
        .collect();
    let critic = params.bind_vars(inputs.clone())?;
    let alpha = tape.scalar(alm.alpha);

    let xr = tape.constant(Tensor::from_rows(real)?);
    let xf = tape.constant(Tensor::from_rows(fake)?);
    let dr = critic_eval_mean(&mut tape, &critic, xr)?;
    let df = critic_eval_mean(&mut tape, &critic, xf)?;
    let objective = tape.sub(dr, df)?;

    let mut points = Vec::with_capacity(n * m);
    for (r, f) in real.iter().zip(fake) {
        for _ in 0..m {
            points.push(lerp(r, f, rng.random::<f64>()));
        }
    }
    let xi = tape.constant(Tensor::from_rows(&points)?);
    let sq = squared_gradient_norms(&mut tape, &critic, xi)?;
    let s = group_reduce(&mut tape, sq, m, 1.0 / m as f64)?;

    let per_pair = match penalty.method {
        Method::SwganAl => {
            let om = omega_from_norms(&mut tape, s, 1.0)?;
            alm_term(&mut tape, om, alpha, penalty.rho)?
        }
        Method::SwganGp => {
            let om = omega_from_norms(&mut tape, s, penalty.g0)?;
            gp_term(&mut tape, om, penalty.lambda, penalty.gp_mode)?
        }
        Method::SwganCp => cp_term(&mut tape, s, penalty.lambda)?,
        Method::WganGp => wgan_gp_from_norms(&mut tape, sq, penalty.lambda)?,
        Method::WganAl => wgan_al_from_norms(&mut tape, sq, m, alpha, penalty.rho)?,
        Method::SganAl => {
            let samples = match penalty.sgan_measure {
                SganMeasure::Mixed => {
                    let mut both = real.to_vec();
                    both.extend_from_slice(fake);
                    both
                }
                SganMeasure::Interpolation => points.iter().step_by(m).cloned().collect(),
            };
            let xs = tape.constant(Tensor::from_rows(&samples)?);
            sgan_al_term(&mut tape, &critic, xs, alpha, penalty.rho)?.0
        }
    };
    let penalty_mean = tape.mean(per_pair)?;
    let loss = tape.add(objective, penalty_mean)?;
    let loss_value = tape.scalar_value(loss)?;
    ensure_finite(&[loss_value], "critic loss")?;

    let mut wrt = inputs;
    wrt.push(alpha);
    let grads = tape.backward(loss, &wrt)?;
    let mut flat_grad = Vec::with_capacity(params.flat_params().len());
    for g in &grads[..grads.len() - 1] {
        flat_grad.extend_from_slice(tape.value(*g)?.data());
    }
    let grad_alpha = tape.scalar_value(grads[grads.len() - 1])?;
    ensure_finite(&flat_grad, "critic gradient")?;

    let s_values = tape.value(s)?.data().to_vec();
    let sq_values = tape.value(sq)?.data().to_vec();
    let objective_value = tape.scalar_value(objective)?;

    let mut flat = params.flat_params();
    adam_update(adam, &mut flat, &flat_grad, lr, opt, true)?;
    params.set_flat_params(&flat)?;
    if penalty.method.uses_multiplier() {
        *alm = alpha_update(*alm, grad_alpha, penalty.method);
    }

    let omegas: Vec<f64> = s_values.iter().map(|s| 1.0 - s).collect();
    Ok(StepMetrics {
        loss: loss_value,
        objective: objective_value,
        omega_mean: omegas.iter().sum::<f64>() / n as f64,
        omega_min: omegas.iter().copied().fold(f64::INFINITY, f64::min),
        grad_norm_mean: sq_values.iter().map(|v| v.sqrt()).sum::<f64>() / sq_values.len() as f64,
        alpha: alm.alpha,
        grad_alpha,
    })
}

fn critic_eval_mean<C: crate::nets::Critic>(tape: &mut Tape, critic: &C, x: Var) -> Result<Var> {
    let d = critic.eval(tape, x)?;
    tape.mean(d)
}

/// `n` standard-normal noise vectors for the generator.
pub fn sample_noise<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Point> {
    (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// One Adam ascent step of the generator on `mean D(G(z))`. Returns that
/// mean before the update.
pub fn generator_step<M: CriticModel>(
    generator: &mut MlpParams,
    critic: &M,
    noise: &[Point],
    adam: &mut AdamState,
    opt: &AdamConfig,
    lr: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let inputs: Vec<Var> = generator
        .tensors()
        .into_iter()
        .map(|t| tape.constant(t))
        .collect();
    let net = BoundMlp::from_vars(&generator.spec, inputs.clone())?;
    let bound_critic = critic.bind_critic(&mut tape);
    let z = tape.constant(Tensor::from_rows(noise)?);
    let x = net.forward(&mut tape, z)?;
    let d = critic_eval_mean(&mut tape, &bound_critic, x)?;
    let value = tape.scalar_value(d)?;
    ensure_finite(&[value], "generator loss")?;
    let grads = tape.backward(d, &inputs)?;
    let mut flat_grad = Vec::with_capacity(generator.param_count());
    for g in &grads {
        flat_grad.extend_from_slice(tape.value(*g)?.data());
    }
    ensure_finite(&flat_grad, "generator gradient")?;
    let mut flat = generator.flat();
    adam_update(adam, &mut flat, &flat_grad, lr, opt, true)?;
    generator.set_flat(&flat)?;
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Pairs per critic batch.
    pub n: usize,
    /// Critic steps per generator step.
    pub k: usize,
    pub lr: f64,
    /// Linear decay of the learning rate to 0 over `iterations`.
    pub lr_decay: bool,
    pub adam: AdamConfig,
    pub iterations: usize,
    pub log_every: usize,
    /// Held-out samples per side for logged metrics.
    pub holdout: usize,
    /// Pairs used for the logged `Ω` statistics.
    pub probe_pairs: usize,
    /// Compute the exact empirical W1 and the duality gap at each log.
    pub oracle: bool,
    /// Replaces the generator with a fixed distribution.
    pub fixed_generator: Option<ToyDistribution>,
    pub critic: Option<MlpSpec>,
    pub generator: Option<MlpSpec>,
    /// Iterations at which the critic parameters are kept.
    pub snapshot_steps: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n: 64,
            k: 5,
            lr: 2e-4,
            lr_decay: false,
            adam: AdamConfig::default(),
            iterations: 300,
            log_every: 10,
            holdout: 512,
            probe_pairs: 64,
            oracle: true,
            fixed_generator: None,
            critic: None,
            generator: None,
            snapshot_steps: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, data_dim: usize) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("train.n", "must be >= 1"));
        }
        if self.k == 0 {
            return Err(Error::config("train.k", "must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("train.log_every", "must be >= 1"));
        }
        if self.holdout == 0 || self.probe_pairs == 0 {
            return Err(Error::config("train.holdout", "must be >= 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr", "must be finite and >= 0"));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::config("train.adam", "betas must lie in [0, 1)"));
        }
        if !(a.eps > 0.0) {
            return Err(Error::config("train.adam.eps", "must be > 0"));
        }
        if let Some(fixed) = &self.fixed_generator {
            fixed.validate()?;
            if fixed.dim() != data_dim {
                return Err(Error::config(
                    "train.fixed_generator",
                    "dimension differs from the real data",
                ));
            }
        }
        let critic = self.critic_spec(data_dim);
        critic.validate()?;
        if critic.input_dim != data_dim || critic.output_dim != 1 {
            return Err(Error::config("train.critic", "must map data_dim -> 1"));
        }
        let generator = self.generator_spec(data_dim);
        generator.validate()?;
        if generator.output_dim != data_dim {
            return Err(Error::config("train.generator", "must output data_dim"));
        }
        Ok(())
    }

    pub fn critic_spec(&self, data_dim: usize) -> MlpSpec {
        self.critic
            .clone()
            .unwrap_or_else(|| MlpSpec::default_critic(data_dim))
    }

    pub fn generator_spec(&self, data_dim: usize) -> MlpSpec {
        self.generator
            .clone()
            .unwrap_or_else(|| MlpSpec::default_generator(data_dim))
    }

    /// Held-out size actually used: the assignment oracle caps it in 2D.
    pub fn effective_holdout(&self, data_dim: usize) -> usize {
        if self.oracle && data_dim > 1 {
            self.holdout.min(MAX_ASSIGNMENT)
        } else {
            self.holdout
        }
    }

    fn lr_at(&self, iteration: usize) -> f64 {
        if self.lr_decay && self.iterations > 0 {
            self.lr * (1.0 - (iteration - 1) as f64 / self.iterations as f64)
        } else {
            self.lr
        }
    }
}

/// Held-out metrics at one generator iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogEntry {
    pub step: usize,
    /// `mean D(real) − mean D(fake)` on the held-out sets.
    pub objective: f64,
    pub omega_mean: f64,
    pub omega_min: f64,
    pub grad_norm_mean: f64,
    pub alpha: f64,
    pub w1: Option<f64>,
    pub dualgap: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunRecord {
    pub entries: Vec<LogEntry>,
}

impl RunRecord {
    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    pub fn at(&self, step: usize) -> Option<&LogEntry> {
        self.entries.iter().find(|e| e.step == step)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub record: RunRecord,
    pub critic: MlpParams,
    pub generator: Option<MlpParams>,
    pub snapshots: Vec<(usize, MlpParams)>,
    pub real_holdout: Vec<Point>,
    pub fake_holdout: Vec<Point>,
    /// Per-coordinate `(min, max)` over every real and fake sample used,
    /// batches and held-out sets alike.
    pub sample_bounds: Vec<(f64, f64)>,
    pub alm: AlmState,
}

/// Per-coordinate `(min, max)`, grown to cover every point seen.
fn widen(bounds: &mut [(f64, f64)], points: &[Point]) {
    for p in points {
        for (b, &x) in bounds.iter_mut().zip(p) {
            b.0 = b.0.min(x);
            b.1 = b.1.max(x);
        }
    }
}

struct Probe {
    points: Vec<Point>,
    pairs: usize,
    m: usize,
}

impl Probe {
    fn new<R: Rng + ?Sized>(
        real: &[Point],
        fake: &[Point],
        pairs: usize,
        m: usize,
        rng: &mut R,
    ) -> Self {
        let pairs = pairs.min(real.len()).min(fake.len());
        let mut points = Vec::with_capacity(pairs * m);
        for i in 0..pairs {
            for _ in 0..m {
                points.push(lerp(&real[i], &fake[i], rng.random::<f64>()));
            }
        }
        Probe { points, pairs, m }
    }

    /// `(Ω mean, Ω min, mean ‖∇ₓD‖)` over the probe pairs.
    fn measure<M: CriticModel>(&self, critic: &M) -> Result<(f64, f64, f64)> {
        let grads = crate::nets::critic_gradients(critic, &self.points)?;
        let sq: Vec<f64> = grads
            .iter()
            .map(|g| g.iter().map(|v| v * v).sum())
            .collect();
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        for k in 0..self.pairs {
            let s = sq[k * self.m..(k + 1) * self.m].iter().sum::<f64>() / self.m as f64;
            sum += 1.0 - s;
            min = min.min(1.0 - s);
        }
        let norm_mean = sq.iter().map(|v| v.sqrt()).sum::<f64>() / sq.len() as f64;
        Ok((sum / self.pairs as f64, min, norm_mean))
    }
}

/// Full training run. Deterministic in `seed`.
pub fn run(
    real: &ToyDistribution,
    train: &TrainConfig,
    penalty: &PenaltyConfig,
    seed: u64,
) -> Result<RunOutput> {
    real.validate()?;
    penalty.validate()?;
    let dim = real.dim();
    train.validate(dim)?;

    let mut critic = MlpParams::init(
        &train.critic_spec(dim),
        &mut seeded(seed, streams::CRITIC_INIT),
    )?;
    let mut generator = match train.fixed_generator {
        Some(_) => None,
        None => Some(MlpParams::init(
            &train.generator_spec(dim),
            &mut seeded(seed, streams::GENERATOR_INIT),
        )?),
    };

    let holdout = train.effective_holdout(dim);
    let mut hold_rng = seeded(seed, streams::HOLDOUT);
    let real_holdout = real.sample(holdout, &mut hold_rng);
    let holdout_noise = match &generator {
        Some(g) => sample_noise(holdout, g.spec.input_dim, &mut hold_rng),
        None => Vec::new(),
    };
    let fake_holdout_of = |generator: &Option<MlpParams>| -> Result<Vec<Point>> {
        match (&train.fixed_generator, generator) {
            (Some(fixed), _) => Ok(fixed.sample(holdout, &mut seeded(seed, streams::FAKE_HOLDOUT))),
            (None, Some(g)) => g.eval(&holdout_noise),
            (None, None) => unreachable!("generator exists without a fixed distribution"),
        }
    };
    let mut fake_holdout = fake_holdout_of(&generator)?;
    let mut sample_bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    widen(&mut sample_bounds, &real_holdout);
    widen(&mut sample_bounds, &fake_holdout);
    let mut probe_rng = seeded(seed, streams::PROBE);
    let probe_ts_seed: u64 = probe_rng.random();

    let mut alm = penalty.initial_state();
    let mut critic_adam = AdamState::new(critic.param_count());
    let mut generator_adam = generator.as_ref().map(|g| AdamState::new(g.param_count()));
    let mut rng = seeded(seed, streams::TRAIN);

    let fixed_w1 = match (&train.fixed_generator, train.oracle) {
        (Some(_), true) => Some(empirical_w1(&real_holdout, &fake_holdout)?),
        _ => None,
    };

    let mut record = RunRecord::default();
    let mut snapshots = Vec::new();
    let mut log =
        |step: usize, critic: &MlpParams, fake_holdout: &[Point], alm: &AlmState| -> Result<()> {
            let probe = Probe::new(
                &real_holdout,
                fake_holdout,
                train.probe_pairs,
                penalty.m,
                &mut seeded(probe_ts_seed, 0),
            );
            let objective = critic_objective(critic, &real_holdout, fake_holdout)?;
            let (omega_mean, omega_min, grad_norm_mean) = probe.measure(critic)?;
            let w1 = match fixed_w1 {
                Some(w) => Some(w),
                None if train.oracle => Some(empirical_w1(&real_holdout, fake_holdout)?),
                None => None,
            };
            let entry = LogEntry {
                step,
                objective,
                omega_mean,
                omega_min,
                grad_norm_mean,
                alpha: alm.alpha,
                w1,
                dualgap: w1.map(|w| w - objective),
            };
            ensure_finite(
                &[objective, omega_mean, omega_min, grad_norm_mean, alm.alpha],
                "held-out evaluation",
            )?;
            record.entries.push(entry);
            Ok(())
        };

    if train.snapshot_steps.contains(&0) {
        snapshots.push((0, critic.clone()));
    }
    log(0, &critic, &fake_holdout, &alm)?;

    for it in 1..=train.iterations {
        let lr = train.lr_at(it);
        for _ in 0..train.k {
            let real_batch = real.sample(train.n, &mut rng);
            let fake_batch = match (&train.fixed_generator, &generator) {
                (Some(fixed), _) => fixed.sample(train.n, &mut rng),
                (None, Some(g)) => {
                    let z = sample_noise(train.n, g.spec.input_dim, &mut rng);
                    g.eval(&z)?
                }
                (None, None) => unreachable!("generator exists without a fixed distribution"),
            };
            widen(&mut sample_bounds, &real_batch);
            widen(&mut sample_bounds, &fake_batch);
            critic_step(
                &mut critic,
                &real_batch,
                &fake_batch,
                penalty,
                &mut alm,
                &mut critic_adam,
                &train.adam,
                lr,
                &mut rng,
            )?;
        }
        if let (Some(g), Some(adam)) = (generator.as_mut(), generator_adam.as_mut()) {
            let z = sample_noise(train.n, g.spec.input_dim, &mut rng);
            generator_step(g, &critic, &z, adam, &train.adam, lr)?;
            fake_holdout = fake_holdout_of(&generator)?;
            widen(&mut sample_bounds, &fake_holdout);
        }
        if train.snapshot_steps.contains(&it) {
            snapshots.push((it, critic.clone()));
        }
        if it % train.log_every == 0 || it == train.iterations {
            log(it, &critic, &fake_holdout, &alm)?;
        }
    }

    Ok(RunOutput {
        record,
        critic,
        generator,
        snapshots,
        real_holdout,
        fake_holdout,
        sample_bounds,
        alm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::Activation;

    fn diracs() -> (Vec<Point>, Vec<Point>) {
        (vec![vec![0.0]; 8], vec![vec![5.0]; 8])
    }

    #[test]
    fn adam_first_step_is_sign_scaled() {
        let mut st = AdamState::new(3);
        let mut p = vec![1.0, 1.0, 1.0];
        let cfg = AdamConfig::default();
        adam_update(&mut st, &mut p, &[2.0, -0.5, 0.0], 0.1, &cfg, false).unwrap();
        let expect = |g: f64| 1.0 - 0.1 * g / (g.abs() + cfg.eps);
        assert!((p[0] - expect(2.0)).abs() < 1e-15);
        assert!((p[1] - expect(-0.5)).abs() < 1e-15);
        assert_eq!(p[2], 1.0);
        assert_eq!(st.step, 1);

        let mut q = vec![1.0, 1.0, 1.0];
        adam_update(
            &mut AdamState::new(3),
            &mut q,
            &[2.0, -0.5, 0.0],
            0.1,
            &cfg,
            true,
        )
        .unwrap();
        assert!((q[0] - (2.0 - expect(2.0))).abs() < 1e-15);
    }

    #[test]
    fn adam_matches_reference_recursion() {
        let cfg = AdamConfig {
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        };
        let grads = [[0.3, -1.0], [0.1, 2.0], [-0.4, 0.5]];
        let mut st = AdamState::new(2);
        let mut p = vec![0.0, 0.0];
        let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
        let mut q = [0.0f64; 2];
        for (t, g) in grads.iter().enumerate() {
            adam_update(&mut st, &mut p, g, 0.01, &cfg, false).unwrap();
            let t = (t + 1) as i32;
            for i in 0..2 {
                m[i] = 0.5 * m[i] + 0.5 * g[i];
                v[i] = 0.9 * v[i] + 0.1 * g[i] * g[i];
                let mh = m[i] / (1.0 - 0.5f64.powi(t));
                let vh = v[i] / (1.0 - 0.9f64.powi(t));
                q[i] -= 0.01 * mh / (vh.sqrt() + 1e-8);
            }
        }
        assert!((p[0] - q[0]).abs() < 1e-15 && (p[1] - q[1]).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut st = AdamState::new(2);
        let mut p = vec![0.0; 2];
        assert!(adam_update(&mut st, &mut p, &[1.0], 0.1, &AdamConfig::default(), true).is_err());
    }

    #[test]
    fn zero_lr_leaves_critic_but_logs() {
        let mut critic = LinearModel(vec![0.3]);
        let (real, fake) = diracs();
        let penalty = PenaltyConfig::default();
        let mut alm = penalty.initial_state();
        let mut adam = AdamState::new(1);
        let mut rng = seeded(0, 0);
        let m = critic_step(
            &mut critic,
            &real,
            &fake,
            &penalty,
            &mut alm,
            &mut adam,
            &AdamConfig::default(),
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(critic.0, vec![0.3]);
        assert!((m.objective + 1.5).abs() < 1e-12);
        assert!((m.omega_mean - (1.0 - 0.09)).abs() < 1e-12);
        assert!((m.grad_norm_mean - 0.3).abs() < 1e-12);
    }

    #[test]
    fn satisfied_constraints_with_zero_multiplier_drop_out() {
        let (real, fake) = diracs();
        let penalty = PenaltyConfig::default();
        let mut rng = seeded(0, 0);
        let mut alm = AlmState {
            alpha: 0.0,
            rho: 10.0,
        };
        let mut adam = AdamState::new(1);
        let mut critic = LinearModel(vec![0.5]);
        let metrics = critic_step(
            &mut critic,
            &real,
            &fake,
            &penalty,
            &mut alm,
            &mut adam,
            &AdamConfig::default(),
            1e-3,
            &mut rng,
        )
        .unwrap();
        assert!(metrics.omega_min > 0.0);
        assert_eq!(metrics.loss, metrics.objective);
        assert_eq!(metrics.grad_alpha, 0.0);
        // objective gradient is −5; Adam's first step moves by −lr
        assert!((critic.0[0] - (0.5 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn swgan_al_linear_critic_reaches_unit_slope() {
        let (real, fake) = diracs();
        let penalty = PenaltyConfig::default();
        let mut alm = penalty.initial_state();
        let mut critic = LinearModel(vec![0.1]);
        let mut adam = AdamState::new(1);
        let opt = AdamConfig {
            beta1: 0.5,
            ..AdamConfig::default()
        };
        let mut rng = seeded(1, 0);
        for it in 0..3000 {
            let lr = if it < 2000 { 1e-2 } else { 1e-3 };
            critic_step(
                &mut critic,
                &real,
                &fake,
                &penalty,
                &mut alm,
                &mut adam,
                &opt,
                lr,
                &mut rng,
            )
            .unwrap();
        }
        let slope = critic.0[0].abs();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
        assert!(alm.alpha > 0.0);
    }

    #[test]
    fn multiplier_stays_nonnegative_for_inequality_methods() {
        let (real, fake) = diracs();
        for method in [Method::SwganAl, Method::SganAl] {
            let penalty = PenaltyConfig::with_method(method);
            let mut alm = penalty.initial_state();
            let mut critic = LinearModel(vec![0.9]);
            let mut adam = AdamState::new(1);
            let mut rng = seeded(2, 0);
            for _ in 0..200 {
                critic_step(
                    &mut critic,
                    &real,
                    &fake,
                    &penalty,
                    &mut alm,
                    &mut adam,
                    &AdamConfig::default(),
                    5e-2,
                    &mut rng,
                )
                .unwrap();
                assert!(alm.alpha >= 0.0);
            }
        }
    }

    #[test]
    fn every_method_runs_on_an_mlp() {
        let spec = MlpSpec::critic(2, &[8, 8], Activation::Tanh);
        let real = ToyDistribution::ring8().sample(16, &mut seeded(0, 9));
        let fake = ToyDistribution::grid25().sample(16, &mut seeded(0, 10));
        for method in Method::ALL {
            let mut critic = MlpParams::init(&spec, &mut seeded(0, 1)).unwrap();
            let before = critic.flat();
            let penalty = PenaltyConfig::with_method(method);
            let mut alm = penalty.initial_state();
            let mut adam = AdamState::new(critic.param_count());
            let m = critic_step(
                &mut critic,
                &real,
                &fake,
                &penalty,
                &mut alm,
                &mut adam,
                &AdamConfig::default(),
                1e-3,
                &mut seeded(0, 2),
            )
            .unwrap();
            assert!(m.loss.is_finite(), "{method}");
            assert_ne!(critic.flat(), before, "{method}");
        }
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut critic = LinearModel(vec![f64::NAN]);
        let (real, fake) = diracs();
        let penalty = PenaltyConfig::default();
        let mut alm = penalty.initial_state();
        let err = critic_step(
            &mut critic,
            &real,
            &fake,
            &penalty,
            &mut alm,
            &mut AdamState::new(1),
            &AdamConfig::default(),
            1e-3,
            &mut seeded(0, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn zero_critic_gives_zero_generator_gradient() {
        let critic = MlpParams::zeros(&MlpSpec::default_critic(1)).unwrap();
        let mut generator =
            MlpParams::init(&MlpSpec::default_generator(1), &mut seeded(0, 1)).unwrap();
        let before = generator.flat();
        let noise = sample_noise(16, 1, &mut seeded(0, 2));
        let mut adam = AdamState::new(generator.param_count());
        generator_step(
            &mut generator,
            &critic,
            &noise,
            &mut adam,
            &AdamConfig::default(),
            0.1,
        )
        .unwrap();
        assert_eq!(generator.flat(), before);
        assert!(adam.m.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn generator_moves_toward_larger_critic() {
        let critic = LinearModel(vec![1.0]);
        let spec = MlpSpec::generator(1, &[4], 1);
        let mut generator = MlpParams::init(&spec, &mut seeded(3, 1)).unwrap();
        let noise = sample_noise(32, 1, &mut seeded(3, 2));
        let mean = |g: &MlpParams| g.eval(&noise).unwrap().iter().map(|p| p[0]).sum::<f64>();
        let before = mean(&generator);
        let mut adam = AdamState::new(generator.param_count());
        generator_step(
            &mut generator,
            &critic,
            &noise,
            &mut adam,
            &AdamConfig::default(),
            1e-2,
        )
        .unwrap();
        assert!(mean(&generator) > before);

        let frozen = generator.clone();
        generator_step(
            &mut generator,
            &critic,
            &noise,
            &mut adam,
            &AdamConfig::default(),
            0.0,
        )
        .unwrap();
        assert_eq!(generator, frozen);
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            n: 16,
            k: 2,
            lr: 1e-3,
            iterations: 6,
            log_every: 2,
            holdout: 64,
            probe_pairs: 8,
            critic: Some(MlpSpec::critic(1, &[16, 16], Activation::Relu)),
            generator: Some(MlpSpec::generator(1, &[16], 1)),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn run_is_deterministic() {
        let real = ToyDistribution::Gauss1d {
            mean: 0.0,
            std: 1.0,
        };
        let cfg = small_config();
        let penalty = PenaltyConfig::default();
        let a = run(&real, &cfg, &penalty, 7).unwrap();
        let b = run(&real, &cfg, &penalty, 7).unwrap();
        assert_eq!(a, b);
        let steps: Vec<usize> = a.record.entries.iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![0, 2, 4, 6]);
        let c = run(&real, &cfg, &penalty, 8).unwrap();
        assert_ne!(a.record, c.record);
    }

    #[test]
    fn zero_iterations_logs_only_the_initial_entry() {
        let real = ToyDistribution::Gauss1d {
            mean: 0.0,
            std: 1.0,
        };
        let cfg = TrainConfig {
            iterations: 0,
            fixed_generator: Some(ToyDistribution::bimodal_fake()),
            ..small_config()
        };
        let out = run(&real, &cfg, &PenaltyConfig::default(), 1).unwrap();
        assert_eq!(out.record.entries.len(), 1);
        assert_eq!(out.record.entries[0].step, 0);
        let e = out.record.entries[0];
        assert_eq!(e.dualgap, Some(e.w1.unwrap() - e.objective));
    }

    #[test]
    fn fixed_generator_run_keeps_fake_holdout() {
        let real = ToyDistribution::Gauss1d {
            mean: 0.0,
            std: 1.0,
        };
        let cfg = TrainConfig {
            fixed_generator: Some(ToyDistribution::bimodal_fake()),
            snapshot_steps: vec![0, 3],
            ..small_config()
        };
        let out = run(&real, &cfg, &PenaltyConfig::default(), 1).unwrap();
        assert!(out.generator.is_none());
        let w1: Vec<f64> = out.record.entries.iter().map(|e| e.w1.unwrap()).collect();
        assert!(w1.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(
            out.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(),
            vec![0, 3]
        );
        let (lo, hi) = out.sample_bounds[0];
        assert!(out
            .real_holdout
            .iter()
            .chain(&out.fake_holdout)
            .all(|p| lo <= p[0] && p[0] <= hi));
    }

    #[test]
    fn two_d_holdout_is_capped_for_the_oracle() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.effective_holdout(1), 512);
        assert_eq!(cfg.effective_holdout(2), MAX_ASSIGNMENT);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let real = ToyDistribution::Gauss1d {
            mean: 0.0,
            std: 1.0,
        };
        let bad = [
            TrainConfig {
                n: 0,
                ..small_config()
            },
            TrainConfig {
                k: 0,
                ..small_config()
            },
            TrainConfig {
                adam: AdamConfig {
                    beta1: 1.0,
                    ..AdamConfig::default()
                },
                ..small_config()
            },
            TrainConfig {
                fixed_generator: Some(ToyDistribution::ring8()),
                ..small_config()
            },
        ];
        for cfg in bad {
            let err = run(&real, &cfg, &PenaltyConfig::default(), 0).unwrap_err();
            assert!(matches!(err, Error::Config { .. }), "{cfg:?}");
        }
    }
}
