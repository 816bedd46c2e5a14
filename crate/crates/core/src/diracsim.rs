//! The Dirac-GAN: real data `δ₀`, generator `δ_θ`, linear critic
//! `D(x) = w·x`. The two-player objective is `f(θw) + f(0)` plus a
//! penalty on `w`, and training follows the gradient vector field
//! `v(θ, w) = (−∂_θ L, ∂_w L)`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiracState {
    pub w: f64,
    pub theta: f64,
}

impl DiracState {
    pub const ORIGIN: DiracState = DiracState { w: 0.0, theta: 0.0 };

    pub fn new(w: f64, theta: f64) -> Self {
        DiracState { w, theta }
    }

    pub fn norm(&self) -> f64 {
        self.w.hypot(self.theta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DiracPenalty {
    /// `−λ(w² − g₀)²`
    Gp { g0: f64 },
    /// `−λ(w⁴ + w²)`
    Cp,
}

/// The outer function `f` of the objective `f(θw)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Objective {
    /// `f(t) = slope·t`; `slope = 1` is the WGAN objective.
    Linear { slope: f64 },
    /// `f(t) = −log(1 + e^{−t})`, the original GAN objective.
    Logistic,
}

impl Objective {
    pub fn fprime(&self, t: f64) -> f64 {
        match *self {
            Objective::Linear { slope } => slope,
            Objective::Logistic => 1.0 / (1.0 + t.exp()),
        }
    }

    pub fn fsecond(&self, t: f64) -> f64 {
        match *self {
            Objective::Linear { .. } => 0.0,
            Objective::Logistic => {
                let s = 1.0 / (1.0 + (-t).exp());
                -s * (1.0 - s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracConfig {
    pub penalty: DiracPenalty,
    pub lambda: f64,
    pub objective: Objective,
}

impl DiracConfig {
    pub fn gp(g0: f64, lambda: f64) -> Self {
        DiracConfig {
            penalty: DiracPenalty::Gp { g0 },
            lambda,
            objective: Objective::Linear { slope: 1.0 },
        }
    }

    pub fn cp(lambda: f64) -> Self {
        DiracConfig {
            penalty: DiracPenalty::Cp,
            lambda,
            objective: Objective::Linear { slope: 1.0 },
        }
    }

    pub fn with_fprime0(mut self, slope: f64) -> Self {
        self.objective = Objective::Linear { slope };
        self
    }

    fn penalty_slope(&self, w: f64) -> f64 {
        match self.penalty {
            DiracPenalty::Gp { g0 } => -4.0 * self.lambda * w * (w * w - g0),
            DiracPenalty::Cp => -self.lambda * (4.0 * w * w * w + 2.0 * w),
        }
    }

    fn penalty_curvature(&self, w: f64) -> f64 {
        match self.penalty {
            DiracPenalty::Gp { g0 } => -4.0 * self.lambda * (3.0 * w * w - g0),
            DiracPenalty::Cp => -self.lambda * (12.0 * w * w + 2.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Field {
    pub d_theta: f64,
    pub d_w: f64,
}

pub fn vector_field(s: DiracState, cfg: &DiracConfig) -> Field {
    let fp = cfg.objective.fprime(s.theta * s.w);
    Field {
        d_theta: -fp * s.w,
        d_w: fp * s.theta + cfg.penalty_slope(s.w),
    }
}

/// Both players step from the same state.
pub fn simgd_step(s: DiracState, cfg: &DiracConfig, lr: f64) -> DiracState {
    let v = vector_field(s, cfg);
    DiracState {
        w: s.w + lr * v.d_w,
        theta: s.theta + lr * v.d_theta,
    }
}

/// `n_d` critic steps, each from the freshest state, then one generator step.
pub fn altgd_step(s: DiracState, cfg: &DiracConfig, lr: f64, n_d: usize) -> DiracState {
    let mut s = s;
    for _ in 0..n_d {
        s.w += lr * vector_field(s, cfg).d_w;
    }
    s.theta += lr * vector_field(s, cfg).d_theta;
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scheme {
    SimGd,
    AltGd { n_d: usize },
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::SimGd => "simgd".to_string(),
            Scheme::AltGd { n_d } => format!("altgd{n_d}"),
        }
    }
}

/// Iterate magnitude treated as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `states[0]` is the start; `states[k]` follows `k` steps.
    pub states: Vec<DiracState>,
    /// Step at which an iterate left the divergence bound; the trajectory
    /// is truncated before it.
    pub diverged_at: Option<usize>,
}

pub fn integrate(
    start: DiracState,
    cfg: &DiracConfig,
    lr: f64,
    steps: usize,
    scheme: Scheme,
) -> Trajectory {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(start);
    let mut s = start;
    for k in 1..=steps {
        s = match scheme {
            Scheme::SimGd => simgd_step(s, cfg, lr),
            Scheme::AltGd { n_d } => altgd_step(s, cfg, lr, n_d),
        };
        let escaped = |x: f64| !x.is_finite() || x.abs() > DIVERGENCE_BOUND;
        if escaped(s.w) || escaped(s.theta) {
            return Trajectory {
                states,
                diverged_at: Some(k),
            };
        }
        states.push(s);
    }
    Trajectory {
        states,
        diverged_at: None,
    }
}

/// Analytic Jacobian of [`vector_field`]; rows `(dθ, dw)`, columns `(θ, w)`.
pub fn jacobian_at(s: DiracState, cfg: &DiracConfig) -> [[f64; 2]; 2] {
    let t = s.theta * s.w;
    let fp = cfg.objective.fprime(t);
    let fpp = cfg.objective.fsecond(t);
    [
        [-fpp * s.w * s.w, -fp - fpp * t],
        [
            fp + fpp * t,
            fpp * s.theta * s.theta + cfg.penalty_curvature(s.w),
        ],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

/// Roots of the characteristic polynomial `γ² − tr·γ + det`.
pub fn eigenvalues(m: [[f64; 2]; 2]) -> [Complex; 2] {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [
            Complex {
                re: half_tr + r,
                im: 0.0,
            },
            Complex {
                re: half_tr - r,
                im: 0.0,
            },
        ]
    } else {
        let r = (-disc).sqrt();
        [
            Complex { re: half_tr, im: r },
            Complex {
                re: half_tr,
                im: -r,
            },
        ]
    }
}

/// Eigenvalues of the zero-centred-penalty Jacobian at the origin:
/// `−λ ± √(λ² − f′(0)²)`.
pub fn cp_origin_eigenvalues(lambda: f64, fprime0: f64) -> [Complex; 2] {
    let disc = lambda * lambda - fprime0 * fprime0;
    if disc >= 0.0 {
        [
            Complex {
                re: -lambda + disc.sqrt(),
                im: 0.0,
            },
            Complex {
                re: -lambda - disc.sqrt(),
                im: 0.0,
            },
        ]
    } else {
        [
            Complex {
                re: -lambda,
                im: (-disc).sqrt(),
            },
            Complex {
                re: -lambda,
                im: -(-disc).sqrt(),
            },
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convergence {
    /// Within ε of the origin from this step to the end.
    Converged(usize),
    NonConverged,
    Diverged(usize),
}

/// Converged when `‖(w, θ)‖ < eps` holds throughout the last 10% of the
/// trajectory.
pub fn classify(traj: &Trajectory, eps: f64) -> Convergence {
    if let Some(k) = traj.diverged_at {
        return Convergence::Diverged(k);
    }
    let n = traj.states.len();
    let first_inside = traj
        .states
        .iter()
        .rposition(|s| s.norm() >= eps)
        .map_or(0, |k| k + 1);
    let tail_start = n - n.div_ceil(10);
    if first_inside <= tail_start && first_inside < n {
        Convergence::Converged(first_inside)
    } else {
        Convergence::NonConverged
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub w: f64,
    pub theta: f64,
    pub v_w: f64,
    pub v_theta: f64,
}

/// Vector field on a `resolution × resolution` grid over `[lo, hi]²`,
/// `w` varying slowest.
pub fn field_grid(cfg: &DiracConfig, lo: f64, hi: f64, resolution: usize) -> Vec<FieldSample> {
    let coord = |i: usize| {
        if resolution == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (resolution - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let s = DiracState::new(coord(i), coord(j));
            let v = vector_field(s, cfg);
            out.push(FieldSample {
                w: s.w,
                theta: s.theta,
                v_w: v.d_w,
                v_theta: v.d_theta,
            });
        }
    }
    out
}
