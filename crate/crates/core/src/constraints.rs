//! Critic regularizers, recorded on the tape so their parameter gradients
//! (second order through `∇ₓD`) come out of the same backward pass as the
//! critic objective.
//!
//! Column conventions: interpolation points for `n` pairs with `m` points
//! each are stacked pair-major into an `(n·m)×d` matrix; per-pair
//! quantities are `n×1` columns.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::Critic;
use crate::tape::{Tape, Tensor, Var};
use crate::toydata::{interpolate, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SwganAl,
    SwganGp,
    SwganCp,
    WganGp,
    WganAl,
    SganAl,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SwganAl,
        Method::SwganGp,
        Method::SwganCp,
        Method::WganGp,
        Method::WganAl,
        Method::SganAl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SwganAl => "swgan-al",
            Method::SwganGp => "swgan-gp",
            Method::SwganCp => "swgan-cp",
            Method::WganGp => "wgan-gp",
            Method::WganAl => "wgan-al",
            Method::SganAl => "sgan-al",
        }
    }

    /// Carries a Lagrange multiplier.
    pub fn uses_multiplier(self) -> bool {
        matches!(self, Method::SwganAl | Method::WganAl | Method::SganAl)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpMode {
    /// `−λ·max(−Ω, 0)²`
    OneSided,
    /// `−λ·Ω²`
    TwoSided,
}

/// Where the Sobolev-GAN baseline samples its constraint points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SganMeasure {
    /// Union of the real and fake batches.
    Mixed,
    /// One interpolate per real/fake pair.
    Interpolation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub method: Method,
    pub lambda: f64,
    pub rho: f64,
    pub alpha0: f64,
    /// Gradient-norm target of the penalty variants (1, or 0 for zero-centred).
    pub g0: f64,
    /// Interpolation points per pair.
    pub m: usize,
    pub gp_mode: GpMode,
    pub sgan_measure: SganMeasure,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            method: Method::SwganAl,
            lambda: 10.0,
            rho: 10.0,
            alpha0: 0.0,
            g0: 1.0,
            m: 8,
            gp_mode: GpMode::OneSided,
            sgan_measure: SganMeasure::Interpolation,
        }
    }
}

impl PenaltyConfig {
    pub fn with_method(method: Method) -> Self {
        PenaltyConfig {
            method,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::config("penalty.lambda", "must be > 0"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::config("penalty.rho", "must be > 0"));
        }
        if self.m == 0 {
            return Err(Error::config("penalty.m", "must be >= 1"));
        }
        if self.g0 != 0.0 && self.g0 != 1.0 {
            return Err(Error::config("penalty.g0", "must be 0 or 1"));
        }
        if matches!(self.method, Method::SwganAl | Method::SganAl) && self.alpha0 < 0.0 {
            return Err(Error::config("penalty.alpha0", "must be >= 0"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> AlmState {
        AlmState {
            alpha: self.alpha0,
            rho: self.rho,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmState {
    pub alpha: f64,
    pub rho: f64,
}

/// `Ω = 1 − (1/m)Σⱼ‖∇ₓD(x̂ⱼ)‖²` for one real/fake pair.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaEstimate {
    pub value: f64,
    pub pair: (Point, Point),
    pub m: usize,
}

/// `‖∇ₓD‖²` at every row of `points`, as a column.
pub fn squared_gradient_norms<C: Critic>(tape: &mut Tape, critic: &C, points: Var) -> Result<Var> {
    let g = critic.input_gradient(tape, points)?;
    row_squared_norms(tape, g)
}

pub fn row_squared_norms(tape: &mut Tape, x: Var) -> Result<Var> {
    let d = tape.value(x)?.cols();
    let ones = tape.constant(Tensor::filled(d, 1, 1.0));
    let sq = tape.square(x)?;
    tape.matmul(sq, ones, false, false)
}

/// Sums consecutive groups of `size` rows of a column, times `scale`.
pub fn group_reduce(tape: &mut Tape, column: Var, size: usize, scale: f64) -> Result<Var> {
    let rows = tape.value(column)?.rows();
    if size == 0 || rows % size != 0 {
        return Err(Error::Dimension {
            op: "group_reduce",
            lhs: (rows, 1),
            rhs: (size, 1),
        });
    }
    let groups = rows / size;
    let mut g = Tensor::zeros(groups, rows).into_data();
    for k in 0..groups {
        for j in 0..size {
            g[k * rows + k * size + j] = scale;
        }
    }
    let g = tape.constant(Tensor::new(groups, rows, g)?);
    tape.matmul(g, column, false, false)
}

/// Per-pair `S = (1/m)Σⱼ‖∇ₓD‖²` from pair-major interpolation points.
pub fn pair_mean_squared_norms<C: Critic>(
    tape: &mut Tape,
    critic: &C,
    points: Var,
    m: usize,
) -> Result<Var> {
    let sq = squared_gradient_norms(tape, critic, points)?;
    group_reduce(tape, sq, m, 1.0 / m as f64)
}

/// `g₀ − S`, elementwise.
pub fn omega_from_norms(tape: &mut Tape, s: Var, target: f64) -> Result<Var> {
    let neg = tape.neg(s)?;
    tape.add_scalar(neg, target)
}

/// Taped `Ω` for a single pair with `m` fresh interpolation points. A
/// coincident pair collapses to the single-point value `1 − ‖∇ₓD(x_i)‖²`.
pub fn omega<C: Critic, R: Rng + ?Sized>(
    tape: &mut Tape,
    critic: &C,
    x_i: &[f64],
    x_j: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<(Var, OmegaEstimate)> {
    let batch = interpolate(x_i, x_j, m, rng);
    let points = if batch.degenerate {
        vec![x_i.to_vec()]
    } else {
        batch.points
    };
    let count = points.len();
    let x = tape.constant(Tensor::from_rows(&points)?);
    let s = pair_mean_squared_norms(tape, critic, x, count)?;
    let om = omega_from_norms(tape, s, 1.0)?;
    let value = tape.scalar_value(om)?;
    Ok((
        om,
        OmegaEstimate {
            value,
            pair: (x_i.to_vec(), x_j.to_vec()),
            m,
        },
    ))
}

/// Augmented Lagrangian with the slack replaced by its optimum
/// `s* = max(Ω − α/ρ, 0)`: `α(Ω − s*) − (ρ/2)(Ω − s*)²`, elementwise.
pub fn alm_term(tape: &mut Tape, omega: Var, alpha: Var, rho: f64) -> Result<Var> {
    let (r, c) = tape.value(omega)?.shape();
    let a = tape.broadcast(alpha, r, c)?;
    let a_over_rho = tape.scale(a, 1.0 / rho)?;
    let shifted = tape.sub(omega, a_over_rho)?;
    let slack = tape.max_scalar(shifted, 0.0)?;
    let d = tape.sub(omega, slack)?;
    let lin = tape.mul(a, d)?;
    let sq = tape.square(d)?;
    let quad = tape.scale(sq, rho / 2.0)?;
    tape.sub(lin, quad)
}

pub fn gp_term(tape: &mut Tape, omega: Var, lambda: f64, mode: GpMode) -> Result<Var> {
    let base = match mode {
        GpMode::OneSided => {
            let neg = tape.neg(omega)?;
            tape.max_scalar(neg, 0.0)?
        }
        GpMode::TwoSided => omega,
    };
    let sq = tape.square(base)?;
    tape.scale(sq, -lambda)
}

/// Zero-centred penalty `−λ(S² + S)` on the per-pair mean squared norm.
pub fn cp_term(tape: &mut Tape, s: Var, lambda: f64) -> Result<Var> {
    let sq = tape.square(s)?;
    let sum = tape.add(sq, s)?;
    tape.scale(sum, -lambda)
}

/// `−λ(‖∇ₓD(x̂)‖ − 1)²` at each row of `points`.
pub fn wgan_gp_term<C: Critic>(
    tape: &mut Tape,
    critic: &C,
    points: Var,
    lambda: f64,
) -> Result<Var> {
    let sq = squared_gradient_norms(tape, critic, points)?;
    wgan_gp_from_norms(tape, sq, lambda)
}

/// [`wgan_gp_term`] from precomputed squared norms.
pub fn wgan_gp_from_norms(tape: &mut Tape, sq_norms: Var, lambda: f64) -> Result<Var> {
    let norm = tape.sqrt(sq_norms)?;
    let dev = tape.add_scalar(norm, -1.0)?;
    let dev2 = tape.square(dev)?;
    tape.scale(dev2, -lambda)
}

/// Equality ALM per pair: `Σⱼ [α·hⱼ − (ρ/2)·hⱼ²]` with `hⱼ = 1 − ‖∇ₓD(x̂ⱼ)‖`.
pub fn wgan_al_term<C: Critic>(
    tape: &mut Tape,
    critic: &C,
    points: Var,
    m: usize,
    alpha: Var,
    rho: f64,
) -> Result<Var> {
    let sq = squared_gradient_norms(tape, critic, points)?;
    wgan_al_from_norms(tape, sq, m, alpha, rho)
}

/// [`wgan_al_term`] from precomputed pair-major squared norms.
pub fn wgan_al_from_norms(
    tape: &mut Tape,
    sq_norms: Var,
    m: usize,
    alpha: Var,
    rho: f64,
) -> Result<Var> {
    let norm = tape.sqrt(sq_norms)?;
    let h = omega_from_norms(tape, norm, 1.0)?;
    let (r, c) = tape.value(h)?.shape();
    let a = tape.broadcast(alpha, r, c)?;
    let lin = tape.mul(a, h)?;
    let h2 = tape.square(h)?;
    let quad = tape.scale(h2, rho / 2.0)?;
    let per_point = tape.sub(lin, quad)?;
    group_reduce(tape, per_point, m, 1.0)
}

/// Single batch-level constraint `Ω_S = 1 − mean ‖∇ₓD‖²`, equality ALM:
/// `α·Ω_S − (ρ/2)·Ω_S²`. Returns `(term, Ω_S)`.
pub fn sgan_al_term<C: Critic>(
    tape: &mut Tape,
    critic: &C,
    samples: Var,
    alpha: Var,
    rho: f64,
) -> Result<(Var, Var)> {
    let sq = squared_gradient_norms(tape, critic, samples)?;
    let mean = tape.mean(sq)?;
    let om = omega_from_norms(tape, mean, 1.0)?;
    let lin = tape.mul(alpha, om)?;
    let om2 = tape.square(om)?;
    let quad = tape.scale(om2, rho / 2.0)?;
    Ok((tape.sub(lin, quad)?, om))
}

/// Multiplier step with learning rate `ρ`: projected onto `α ≥ 0` for the
/// inequality-constrained methods, unprojected for WGAN-AL.
pub fn alpha_update(state: AlmState, grad_alpha: f64, method: Method) -> AlmState {
    let raw = state.alpha - state.rho * grad_alpha;
    let alpha = match method {
        Method::WganAl => raw,
        _ => raw.max(0.0),
    };
    AlmState { alpha, ..state }
}
