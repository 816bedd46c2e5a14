//! Ground truth for critic training: exact empirical W1 distances with
//! their optimal couplings, Monte-Carlo feasibility of the per-pair
//! gradient-norm ball, and the closed-form Sobolev-IPM critic gradient of
//! the two-squares example.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nets::{Critic, CriticModel};
use crate::tape::{Tape, Tensor};
use crate::toydata::{lerp, Point};

/// Largest instance accepted by [`w1_assignment`].
pub const MAX_ASSIGNMENT: usize = 256;

/// A uniform-weight perfect matching: `pairs[k] = (real index, fake index)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Coupling {
    pub pairs: Vec<(usize, usize)>,
}

/// W1 between equal-size 1D samples via the monotone (rank-to-rank) coupling.
pub fn w1_sorted_1d(a: &[f64], b: &[f64]) -> Result<(f64, Coupling)> {
    if a.len() != b.len() {
        return Err(Error::Size {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Ok((0.0, Coupling { pairs: Vec::new() }));
    }
    let order = |xs: &[f64]| {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]).then(i.cmp(&j)));
        idx
    };
    let (ia, ib) = (order(a), order(b));
    let pairs: Vec<(usize, usize)> = ia.into_iter().zip(ib).collect();
    let total: f64 = pairs.iter().map(|&(i, j)| (a[i] - b[j]).abs()).sum();
    Ok((total / a.len() as f64, Coupling { pairs }))
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Exact W1 between equal-size point clouds under Euclidean cost.
pub fn w1_assignment(a: &[Point], b: &[Point]) -> Result<(f64, Coupling)> {
    if a.len() != b.len() {
        return Err(Error::Size {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n > MAX_ASSIGNMENT {
        return Err(Error::Capacity {
            n,
            max: MAX_ASSIGNMENT,
        });
    }
    if n == 0 {
        return Ok((0.0, Coupling { pairs: Vec::new() }));
    }
    let cost: Vec<f64> = a
        .iter()
        .flat_map(|p| b.iter().map(move |q| euclid(p, q)))
        .collect();
    let assign = hungarian(&cost, n);
    let pairs: Vec<(usize, usize)> = assign.into_iter().enumerate().collect();
    let total: f64 = pairs.iter().map(|&(i, j)| cost[i * n + j]).sum();
    Ok((total / n as f64, Coupling { pairs }))
}

/// Minimum-cost perfect matching on a dense `n×n` cost matrix (row-major).
/// Returns the column assigned to each row.
///
/// Shortest augmenting paths with row/column potentials, O(n³).
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut row_of = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assign[row_of[j] - 1] = j - 1;
        }
    }
    assign
}

/// W1 for equal-size samples, choosing the sorted route in 1D.
pub fn empirical_w1(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.first().map_or(0, Vec::len) == 1 {
        let xa: Vec<f64> = a.iter().map(|p| p[0]).collect();
        let xb: Vec<f64> = b.iter().map(|p| p[0]).collect();
        Ok(w1_sorted_1d(&xa, &xb)?.0)
    } else {
        Ok(w1_assignment(a, b)?.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// `max(0, max Ŝ − 1)` over all checked pairs.
    pub max_violation: f64,
    pub max_s: f64,
    pub pairs_checked: usize,
    pub degenerate_pairs: usize,
}

/// Checks `Ŝ = (1/m)Σ‖∇ₓD(x̂)‖² ≤ 1 + tol` on every real×fake pair.
pub fn feasibility<M: CriticModel, R: Rng + ?Sized>(
    model: &M,
    real: &[Point],
    fake: &[Point],
    m: usize,
    tol: f64,
    rng: &mut R,
) -> Result<Feasibility> {
    let max_s = max_pair_sobolev_norm(model, real, fake, m, rng)?;
    let degenerate_pairs = real
        .iter()
        .map(|r| fake.iter().filter(|f| *f == r).count())
        .sum::<usize>();
    let pairs_checked = real.len() * fake.len() - degenerate_pairs;
    let max_s = max_s.unwrap_or(0.0);
    Ok(Feasibility {
        feasible: max_s <= 1.0 + tol,
        max_violation: (max_s - 1.0).max(0.0),
        max_s,
        pairs_checked,
        degenerate_pairs,
    })
}

/// Largest per-pair Monte-Carlo estimate of the mean squared gradient
/// norm over the segment, skipping coincident pairs. `None` when every pair
/// is degenerate.
pub fn max_pair_sobolev_norm<M: CriticModel, R: Rng + ?Sized>(
    model: &M,
    real: &[Point],
    fake: &[Point],
    m: usize,
    rng: &mut R,
) -> Result<Option<f64>> {
    const CHUNK: usize = 64;
    let mut pairs = Vec::new();
    for r in real {
        for f in fake {
            if r != f {
                pairs.push((r, f));
            }
        }
    }
    let mut best: Option<f64> = None;
    for chunk in pairs.chunks(CHUNK) {
        let mut points = Vec::with_capacity(chunk.len() * m);
        for (r, f) in chunk {
            for _ in 0..m {
                points.push(lerp(r, f, rng.random::<f64>()));
            }
        }
        let mut tape = Tape::new();
        let critic = model.bind_critic(&mut tape);
        let x = tape.constant(Tensor::from_rows(&points)?);
        let g = critic.input_gradient(&mut tape, x)?;
        let g = tape.value(g)?;
        for k in 0..chunk.len() {
            let s = (0..m)
                .map(|j| g.row(k * m + j).iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                / m as f64;
            best = Some(best.map_or(s, |b: f64| b.max(s)));
        }
    }
    Ok(best)
}

/// `Ω̂ = 1 − Ŝ` of the most violated pair; `None` when every pair is
/// degenerate.
pub fn min_pair_omega<M: CriticModel, R: Rng + ?Sized>(
    model: &M,
    real: &[Point],
    fake: &[Point],
    m: usize,
    rng: &mut R,
) -> Result<Option<f64>> {
    Ok(max_pair_sobolev_norm(model, real, fake, m, rng)?.map(|s| 1.0 - s))
}

/// `oracle_distance − (mean D(real) − mean D(fake))`.
pub fn weak_duality_gap<M: CriticModel>(
    model: &M,
    real: &[Point],
    fake: &[Point],
    oracle_distance: f64,
) -> Result<f64> {
    Ok(oracle_distance - critic_objective(model, real, fake)?)
}

/// `mean D(real) − mean D(fake)`.
pub fn critic_objective<M: CriticModel>(model: &M, real: &[Point], fake: &[Point]) -> Result<f64> {
    let dr = crate::nets::critic_values(model, real)?;
    let df = crate::nets::critic_values(model, fake)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(mean(&dr) - mean(&df))
}

/// Gradient direction (up to a positive factor) of the optimal Sobolev-IPM
/// critic at `(a, b)` when the real data is uniform on `[−1,0]²` and the
/// fake data uniform on `[0,1]²`.
///
/// Each component is the difference of conditional CDF mass to the left
/// of the point: `∂₁ ∝ ∫_{−∞}^{a} (P_g(x, b) − P_r(x, b)) dx`, and
/// symmetrically for `∂₂`.
pub fn sobolev_ipm_example_gradient(a: f64, b: f64) -> [f64; 2] {
    let in_unit = |y: f64| (0.0..=1.0).contains(&y);
    let in_neg = |y: f64| (-1.0..=0.0).contains(&y);
    // ∫_{−∞}^{s} of the indicator of [lo, lo+1]
    let mass = |s: f64, lo: f64| (s - lo).clamp(0.0, 1.0);
    let component = |s: f64, other: f64| {
        let g = if in_unit(other) { mass(s, 0.0) } else { 0.0 };
        let r = if in_neg(other) { mass(s, -1.0) } else { 0.0 };
        g - r
    };
    [component(a, b), component(b, a)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{LinearModel, MlpParams, MlpSpec};
    use crate::rng::seeded;

    fn pts(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn sorted_examples() {
        let (d, c) = w1_sorted_1d(&[0.0, 0.0], &[1.0, 3.0]).unwrap();
        assert_eq!(d, 2.0);
        assert_eq!(c.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(w1_sorted_1d(&[1.0, 2.0], &[2.0, 1.0]).unwrap().0, 0.0);
        assert_eq!(w1_sorted_1d(&[0.0], &[5.0]).unwrap().0, 5.0);
        assert!(matches!(
            w1_sorted_1d(&[0.0], &[1.0, 2.0]),
            Err(Error::Size { .. })
        ));
    }

    #[test]
    fn assignment_examples() {
        let (d, _) = w1_assignment(&pts(&[0.0, 0.0]), &pts(&[1.0, 3.0])).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        let a = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let b = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let (d, c) = w1_assignment(&a, &b).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert_eq!(c.pairs, vec![(0, 0), (1, 1)]);
        let permuted = vec![a[1].clone(), a[0].clone()];
        assert_eq!(w1_assignment(&a, &permuted).unwrap().0, 0.0);
    }

    #[test]
    fn assignment_capacity() {
        let a = vec![vec![0.0]; MAX_ASSIGNMENT + 1];
        assert!(matches!(w1_assignment(&a, &a), Err(Error::Capacity { .. })));
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn hungarian_matches_brute_force() {
        use rand::Rng;
        let mut rng = seeded(12, 0);
        for n in 1..=6 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() * 10.0).collect();
                let best = permutations(n)
                    .iter()
                    .map(|p| {
                        p.iter()
                            .enumerate()
                            .map(|(i, &j)| cost[i * n + j])
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
                let a = hungarian(&cost, n);
                let got: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
                assert!((got - best).abs() < 1e-9);
                let mut cols = a.clone();
                cols.sort();
                assert_eq!(cols, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn example_gradient_signs() {
        assert_eq!(sobolev_ipm_example_gradient(0.5, 0.5), [0.5, 0.5]);
        assert_eq!(sobolev_ipm_example_gradient(1.0, 1.0), [1.0, 1.0]);
        let g = sobolev_ipm_example_gradient(-0.5, -0.5);
        // No P_g mass to the left; only the real square contributes.
        assert_eq!(g, [-0.5, -0.5]);
    }

    #[test]
    fn linear_critic_feasibility() {
        let real = vec![vec![0.0, 0.0], vec![1.0, 2.0]];
        let fake = vec![vec![3.0, 1.0], vec![-1.0, 0.5]];
        let mut rng = seeded(0, 0);
        let f = feasibility(&LinearModel(vec![1.0, 0.0]), &real, &fake, 8, 0.0, &mut rng).unwrap();
        assert!(f.feasible);
        assert_eq!(f.max_s, 1.0);
        let f = feasibility(
            &LinearModel(vec![2.0, 0.0]),
            &real,
            &fake,
            8,
            0.05,
            &mut rng,
        )
        .unwrap();
        assert!(!f.feasible);
        assert_eq!(f.max_violation, 3.0);
        assert_eq!(f.pairs_checked, 4);
    }

    #[test]
    fn zero_critic_is_feasible_and_gap_is_distance() {
        let z = MlpParams::zeros(&MlpSpec::default_critic(1)).unwrap();
        let real = pts(&[0.0, 1.0, 2.0]);
        let fake = pts(&[0.0, 4.0, 5.0]);
        let f = feasibility(&z, &real, &fake, 8, 0.0, &mut seeded(0, 0)).unwrap();
        assert!(f.feasible);
        assert_eq!(f.max_violation, 0.0);
        assert_eq!(f.degenerate_pairs, 1);
        assert_eq!(f.pairs_checked, 8);
        assert_eq!(weak_duality_gap(&z, &real, &fake, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn optimal_potential_between_diracs_closes_the_gap() {
        let critic = LinearModel(vec![-1.0]);
        let real = pts(&[0.0; 4]);
        let fake = pts(&[5.0; 4]);
        let f = feasibility(&critic, &real, &fake, 16, 0.0, &mut seeded(0, 0)).unwrap();
        assert!(f.feasible);
        assert_eq!(f.max_s, 1.0);
        let (w1, _) = w1_sorted_1d(&[0.0; 4], &[5.0; 4]).unwrap();
        assert_eq!(weak_duality_gap(&critic, &real, &fake, w1).unwrap(), 0.0);
    }
}
