//! Central finite-difference verification of taped gradients.
//!
//! Error measure for one coordinate: `|analytic − fd| / max(1, |fd|)`.

use serde::Serialize;

use crate::constraints::{
    alm_term, cp_term, gp_term, omega_from_norms, pair_mean_squared_norms, sgan_al_term,
    wgan_al_term, wgan_gp_term, GpMode,
};
use crate::error::Result;
use crate::nets::{Activation, BoundMlp, Critic, MlpParams, MlpSpec};
use crate::rng::seeded;
use crate::tape::{Tape, Tensor, Var};
use crate::toydata::{InterpolationBatch, Point};

/// Max relative error between the taped gradient of `f` at `inputs` and
/// central differences with step `h`. NaN anywhere yields NaN.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with_fault(f, inputs, h, None)
}

/// [`grad_check`] with the analytic tape's tanh adjoints scaled by
/// `fault`, for negative controls.
pub fn grad_check_with_fault<F>(f: F, inputs: &[Tensor], h: f64, fault: Option<f64>) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    if let Some(factor) = fault {
        tape.corrupt_adjoints(factor);
    }
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let grads = tape.backward(root, &vars)?;

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let root = f(&mut tape, &vars)?;
        tape.scalar_value(root)
    };

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, g) in grads.iter().enumerate() {
        let analytic = tape.value(*g)?.data().to_vec();
        for (i, &a) in analytic.iter().enumerate() {
            let base = inputs[k].data()[i];
            probe[k] = with_entry(&inputs[k], i, base + h);
            let plus = eval(&probe)?;
            probe[k] = with_entry(&inputs[k], i, base - h);
            let minus = eval(&probe)?;
            probe[k] = inputs[k].clone();
            let fd = (plus - minus) / (2.0 * h);
            let err = (a - fd).abs() / fd.abs().max(1.0);
            if err.is_nan() {
                return Ok(f64::NAN);
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn with_entry(t: &Tensor, i: usize, value: f64) -> Tensor {
    let mut data = t.data().to_vec();
    data[i] = value;
    Tensor::new(t.rows(), t.cols(), data).expect("same shape")
}

type CheckFn = Box<dyn Fn(Option<f64>) -> Result<f64> + Send + Sync>;

/// One named finite-difference check.
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    run: CheckFn,
}

impl Check {
    pub fn new<F>(name: &str, tolerance: f64, h: f64, inputs: Vec<Tensor>, f: F) -> Self
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync + 'static,
    {
        Check {
            name: name.to_string(),
            tolerance,
            run: Box::new(move |fault| grad_check_with_fault(&f, &inputs, h, fault)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

pub fn run_checks(checks: &[Check], fault: Option<f64>) -> Result<Report> {
    let mut results = Vec::with_capacity(checks.len());
    for c in checks {
        let err = (c.run)(fault)?;
        results.push(CheckResult {
            name: c.name.clone(),
            max_rel_error: err,
            tolerance: c.tolerance,
            // NaN compares false, so it fails
            passed: err < c.tolerance,
        });
    }
    let mut warnings = Vec::new();
    if results.is_empty() {
        warnings.push("no checks selected; vacuous pass".to_string());
    }
    Ok(Report {
        passed: results.iter().all(|r| r.passed),
        checks: results,
        warnings,
    })
}

fn random_tensor(rows: usize, cols: usize, lo: f64, hi: f64, stream: u64) -> Tensor {
    use rand::Rng;
    let mut rng = seeded(0x5eed, stream);
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(rows, cols, data).expect("shape")
}

fn weighted_sum(tape: &mut Tape, x: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let p = tape.mul(x, w)?;
    tape.sum(p)
}

/// Elementwise and reduction ops, each composed with a fixed random
/// weighting so every output coordinate matters.
fn op_checks() -> Vec<Check> {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-7;
    let a = random_tensor(3, 4, -1.5, 1.5, 1);
    let b = random_tensor(3, 4, -1.5, 1.5, 2);
    let pos = random_tensor(3, 4, 0.5, 2.0, 3);
    let w = random_tensor(3, 4, -1.0, 1.0, 4);
    let mut checks = Vec::new();

    macro_rules! unary {
        ($name:expr, $input:expr, |$t:ident, $x:ident| $body:expr) => {{
            let w = w.clone();
            checks.push(Check::new(
                $name,
                TOL,
                H,
                vec![$input.clone()],
                move |$t, v| {
                    let $x = v[0];
                    let y = $body?;
                    weighted_sum($t, y, &w)
                },
            ));
        }};
    }
    macro_rules! binary {
        ($name:expr, $lhs:expr, $rhs:expr, |$t:ident, $x:ident, $y:ident| $body:expr) => {{
            let w = w.clone();
            checks.push(Check::new(
                $name,
                TOL,
                H,
                vec![$lhs.clone(), $rhs.clone()],
                move |$t, v| {
                    let ($x, $y) = (v[0], v[1]);
                    let z = $body?;
                    weighted_sum($t, z, &w)
                },
            ));
        }};
    }

    binary!("op/add", a, b, |t, x, y| t.add(x, y));
    binary!("op/sub", a, b, |t, x, y| t.sub(x, y));
    binary!("op/mul", a, b, |t, x, y| t.mul(x, y));
    binary!("op/div", a, pos, |t, x, y| t.div(x, y));
    unary!("op/neg", a, |t, x| t.neg(x));
    unary!("op/scale", a, |t, x| t.scale(x, -2.5));
    unary!("op/add_scalar", a, |t, x| t.add_scalar(x, 0.75));
    unary!("op/square", a, |t, x| t.square(x));
    unary!("op/sqrt", pos, |t, x| t.sqrt(x));
    unary!("op/max_scalar", a, |t, x| t.max_scalar(x, 0.1));
    unary!("op/relu", a, |t, x| t.relu(x));
    unary!("op/tanh", a, |t, x| t.tanh(x));
    unary!("op/broadcast", random_tensor(1, 1, -1.0, 1.0, 5), |t, x| t
        .broadcast(x, 3, 4));
    checks.push(Check::new("op/sum", TOL, H, vec![a.clone()], |t, v| {
        let s = t.sum(v[0])?;
        t.square(s)
    }));
    checks.push(Check::new("op/mean", TOL, H, vec![a.clone()], |t, v| {
        let s = t.mean(v[0])?;
        t.square(s)
    }));
    let (u, z) = (
        random_tensor(5, 1, -1.0, 1.0, 6),
        random_tensor(5, 1, -1.0, 1.0, 7),
    );
    checks.push(Check::new("op/dot", TOL, H, vec![u.clone(), z], |t, v| {
        let d = t.dot(v[0], v[1])?;
        t.square(d)
    }));
    checks.push(Check::new("op/sq_norm", TOL, H, vec![u.clone()], |t, v| {
        let s = t.sq_norm(v[0])?;
        t.tanh(s)
    }));
    checks.push(Check::new(
        "op/sum_of_squares",
        1e-8,
        H,
        vec![random_tensor(6, 1, -2.0, 2.0, 8)],
        |t, v| {
            let s = t.square(v[0])?;
            t.sum(s)
        },
    ));
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let lhs = if ta {
            random_tensor(4, 3, -1.0, 1.0, 9)
        } else {
            random_tensor(3, 4, -1.0, 1.0, 9)
        };
        let rhs = if tb {
            random_tensor(2, 4, -1.0, 1.0, 10)
        } else {
            random_tensor(4, 2, -1.0, 1.0, 10)
        };
        let out_w = random_tensor(3, 2, -1.0, 1.0, 11);
        let name = format!(
            "op/matmul[{}{}]",
            if ta { "T" } else { "N" },
            if tb { "T" } else { "N" }
        );
        checks.push(Check::new(&name, TOL, H, vec![lhs, rhs], move |t, v| {
            let p = t.matmul(v[0], v[1], ta, tb)?;
            weighted_sum(t, p, &out_w)
        }));
    }
    let out_w = random_tensor(3, 1, -1.0, 1.0, 12);
    checks.push(Check::new(
        "op/matvec",
        TOL,
        H,
        vec![random_tensor(3, 5, -1.0, 1.0, 13), u],
        move |t, v| {
            let p = t.matvec(v[0], v[1])?;
            weighted_sum(t, p, &out_w)
        },
    ));
    checks
}

fn tanh_critic(input_dim: usize, hidden: &[usize], weight_scale: f64, stream: u64) -> MlpParams {
    let spec = MlpSpec::critic(input_dim, hidden, Activation::Tanh);
    let mut p = MlpParams::init(&spec, &mut seeded(0x5eed, stream)).expect("valid spec");
    let mut rng = seeded(0x5eed, stream + 100);
    for l in &mut p.layers {
        for w in &mut l.w {
            *w *= weight_scale;
        }
        for b in &mut l.b {
            *b = rand::Rng::random_range(&mut rng, -0.3..0.3);
        }
    }
    p
}

fn points(rows: usize, dim: usize, stream: u64) -> Tensor {
    random_tensor(rows, dim, -1.5, 1.5, stream)
}

/// Pair-major interpolation points with fixed `t`s.
fn interpolation_points(pairs: usize, m: usize, dim: usize, stream: u64) -> Tensor {
    use rand::Rng;
    let real = points(pairs, dim, stream).to_rows();
    let fake = points(pairs, dim, stream + 1).to_rows();
    let mut rng = seeded(0x5eed, stream + 2);
    let mut out: Vec<Point> = Vec::with_capacity(pairs * m);
    for (r, f) in real.iter().zip(&fake) {
        let ts = (0..m).map(|_| rng.random::<f64>()).collect();
        out.extend(InterpolationBatch::with_ts(r, f, ts).points);
    }
    Tensor::from_rows(&out).expect("equal dims")
}

fn critic_from(spec: &MlpSpec, vars: &[Var]) -> Result<BoundMlp> {
    BoundMlp::from_vars(spec, vars.to_vec())
}

fn net_checks() -> Vec<Check> {
    let mut checks = Vec::new();
    let net = tanh_critic(2, &[16], 1.0, 20);
    let spec = net.spec.clone();
    let x = points(6, 2, 21);

    let (s, xc) = (spec.clone(), x.clone());
    checks.push(Check::new(
        "net/output_wrt_params",
        1e-5,
        1e-5,
        net.tensors(),
        move |t, v| {
            let c = critic_from(&s, v)?;
            let xv = t.constant(xc.clone());
            let d = c.eval(t, xv)?;
            t.sum(d)
        },
    ));

    let params = net.clone();
    checks.push(Check::new(
        "net/output_wrt_input",
        1e-5,
        1e-5,
        vec![x.clone()],
        move |t, v| {
            let c = params.bind(t);
            let d = c.eval(t, v[0])?;
            let sq = t.square(d)?;
            t.sum(sq)
        },
    ));

    let deep = tanh_critic(2, &[8, 8], 1.0, 22);
    let (s, xc) = (deep.spec.clone(), x.clone());
    checks.push(Check::new(
        "net/deep_output_wrt_params",
        1e-5,
        1e-5,
        deep.tensors(),
        move |t, v| {
            let c = critic_from(&s, v)?;
            let xv = t.constant(xc.clone());
            let d = c.eval(t, xv)?;
            t.mean(d)
        },
    ));

    let (s, xc) = (spec, x);
    checks.push(Check::new(
        "net/input_gradient_norm_wrt_params",
        1e-5,
        1e-5,
        net.tensors(),
        move |t, v| {
            let c = critic_from(&s, v)?;
            let xv = t.constant(xc.clone());
            let g = c.input_gradient(t, xv)?;
            let sq = t.square(g)?;
            t.sum(sq)
        },
    ));
    checks
}

fn penalty_checks() -> Vec<Check> {
    const H: f64 = 1e-4;
    const TOL: f64 = 1e-4;
    const PAIRS: usize = 4;
    const M: usize = 5;
    let mut checks = Vec::new();
    // weights scaled so some pairs violate the constraint and some do not
    let net = tanh_critic(2, &[12, 12], 1.6, 30);
    let spec = net.spec.clone();
    let xi = interpolation_points(PAIRS, M, 2, 31);
    let alpha = Tensor::scalar(0.7);

    let with_alpha = |extra: Tensor| {
        let mut v = net.tensors();
        v.push(extra);
        v
    };

    let (s, x) = (spec.clone(), xi.clone());
    checks.push(Check::new(
        "penalty/omega",
        TOL,
        H,
        net.tensors(),
        move |t, v| {
            let c = critic_from(&s, v)?;
            let xv = t.constant(x.clone());
            let sq = pair_mean_squared_norms(t, &c, xv, M)?;
            let om = omega_from_norms(t, sq, 1.0)?;
            t.sum(om)
        },
    ));

    let (s, x) = (spec.clone(), xi.clone());
    checks.push(Check::new(
        "penalty/swgan_al",
        TOL,
        H,
        with_alpha(alpha.clone()),
        move |t, v| {
            let (params, a) = v.split_at(v.len() - 1);
            let c = critic_from(&s, params)?;
            let xv = t.constant(x.clone());
            let sq = pair_mean_squared_norms(t, &c, xv, M)?;
            let om = omega_from_norms(t, sq, 1.0)?;
            let term = alm_term(t, om, a[0], 3.0)?;
            t.mean(term)
        },
    ));

    for (name, mode, g0) in [
        ("penalty/swgan_gp_one_sided", GpMode::OneSided, 1.0),
        ("penalty/swgan_gp_two_sided", GpMode::TwoSided, 1.0),
        ("penalty/swgan_gp_zero_centred", GpMode::TwoSided, 0.0),
    ] {
        let (s, x) = (spec.clone(), xi.clone());
        checks.push(Check::new(name, TOL, H, net.tensors(), move |t, v| {
            let c = critic_from(&s, v)?;
            let xv = t.constant(x.clone());
            let sq = pair_mean_squared_norms(t, &c, xv, M)?;
            let om = omega_from_norms(t, sq, g0)?;
            let term = gp_term(t, om, 10.0, mode)?;
            t.mean(term)
        }));
    }

    let (s, x) = (spec.clone(), xi.clone());
    checks.push(Check::new(
        "penalty/swgan_cp",
        TOL,
        H,
        net.tensors(),
        move |t, v| {
            let c = critic_from(&s, v)?;
            let xv = t.constant(x.clone());
            let sq = pair_mean_squared_norms(t, &c, xv, M)?;
            let term = cp_term(t, sq, 2.0)?;
            t.mean(term)
        },
    ));

    let (s, x) = (spec.clone(), xi.clone());
    checks.push(Check::new(
        "penalty/wgan_gp",
        TOL,
        H,
        net.tensors(),
        move |t, v| {
            let c = critic_from(&s, v)?;
            let xv = t.constant(x.clone());
            let term = wgan_gp_term(t, &c, xv, 10.0)?;
            t.mean(term)
        },
    ));

    let (s, x) = (spec.clone(), xi.clone());
    checks.push(Check::new(
        "penalty/wgan_al",
        TOL,
        H,
        with_alpha(alpha.clone()),
        move |t, v| {
            let (params, a) = v.split_at(v.len() - 1);
            let c = critic_from(&s, params)?;
            let xv = t.constant(x.clone());
            let term = wgan_al_term(t, &c, xv, M, a[0], 3.0)?;
            t.mean(term)
        },
    ));

    let (s, x) = (spec, points(8, 2, 32));
    checks.push(Check::new(
        "penalty/sgan_al",
        TOL,
        H,
        with_alpha(alpha),
        move |t, v| {
            let (params, a) = v.split_at(v.len() - 1);
            let c = critic_from(&s, params)?;
            let xv = t.constant(x.clone());
            Ok(sgan_al_term(t, &c, xv, a[0], 3.0)?.0)
        },
    ));
    checks
}

/// Every op, network and penalty check with its tolerance.
pub fn default_suite() -> Vec<Check> {
    let mut all = op_checks();
    all.extend(net_checks());
    all.extend(penalty_checks());
    all
}

/// The suite restricted to checks whose name starts with one of `prefixes`.
pub fn select(prefixes: &[String]) -> Vec<Check> {
    default_suite()
        .into_iter()
        .filter(|c| prefixes.iter().any(|p| c.name.starts_with(p.as_str())))
        .collect()
}
