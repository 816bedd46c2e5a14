//! Toy distributions and the interpolation measure between point pairs.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyDistribution {
    Gauss1d {
        mean: f64,
        std: f64,
    },
    GaussMixture {
        components: Vec<MixtureComponent>,
    },
    Ring8 {
        #[serde(default = "ring8_std")]
        std: f64,
    },
    Grid25 {
        #[serde(default = "grid25_std")]
        std: f64,
    },
    Swissroll {
        #[serde(default = "swissroll_noise")]
        noise: f64,
    },
    Dirac {
        point: Vec<f64>,
    },
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Draws from `base` plus isotropic Gaussian noise.
    Noisy {
        base: Box<ToyDistribution>,
        std: f64,
    },
}

fn ring8_std() -> f64 {
    0.02
}
fn grid25_std() -> f64 {
    0.05
}
fn swissroll_noise() -> f64 {
    0.25
}

pub const RING8_RADIUS: f64 = 2.0;
const SWISSROLL_T_MAX: f64 = 4.5 * PI;

impl ToyDistribution {
    pub fn ring8() -> Self {
        ToyDistribution::Ring8 { std: ring8_std() }
    }

    pub fn grid25() -> Self {
        ToyDistribution::Grid25 { std: grid25_std() }
    }

    pub fn swissroll() -> Self {
        ToyDistribution::Swissroll {
            noise: swissroll_noise(),
        }
    }

    /// The fake distribution of the 1D comparison: ½N(−5,1)+½N(5,1).
    pub fn bimodal_fake() -> Self {
        ToyDistribution::GaussMixture {
            components: vec![
                MixtureComponent {
                    weight: 0.5,
                    mean: -5.0,
                    std: 1.0,
                },
                MixtureComponent {
                    weight: 0.5,
                    mean: 5.0,
                    std: 1.0,
                },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ToyDistribution::Gauss1d { .. } | ToyDistribution::GaussMixture { .. } => 1,
            ToyDistribution::Ring8 { .. }
            | ToyDistribution::Grid25 { .. }
            | ToyDistribution::Swissroll { .. } => 2,
            ToyDistribution::Dirac { point } => point.len(),
            ToyDistribution::UniformBox { lo, .. } => lo.len(),
            ToyDistribution::Noisy { base, .. } => base.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config("distribution", m));
        match self {
            ToyDistribution::Gauss1d { std, .. } if !(*std > 0.0) => bad("std must be positive"),
            ToyDistribution::GaussMixture { components } => {
                if components.is_empty() {
                    return bad("mixture needs at least one component");
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 || components.iter().any(|c| c.weight < 0.0) {
                    return bad("mixture weights must be nonnegative and sum to 1");
                }
                if components.iter().any(|c| !(c.std > 0.0)) {
                    return bad("std must be positive");
                }
                Ok(())
            }
            ToyDistribution::Ring8 { std } | ToyDistribution::Grid25 { std } if !(*std > 0.0) => {
                bad("std must be positive")
            }
            ToyDistribution::Swissroll { noise } if !(*noise >= 0.0) => bad("noise must be >= 0"),
            ToyDistribution::Dirac { point } if point.is_empty() => bad("empty point"),
            ToyDistribution::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(l < h))
                {
                    bad("box needs lo < hi in every dimension")
                } else {
                    Ok(())
                }
            }
            ToyDistribution::Noisy { base, std } => {
                if !(*std >= 0.0) {
                    return bad("std must be >= 0");
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    /// Mode centres of the ring and grid distributions.
    pub fn modes(&self) -> Vec<Point> {
        match self {
            ToyDistribution::Ring8 { .. } => (0..8)
                .map(|k| {
                    let a = k as f64 * PI / 4.0;
                    vec![RING8_RADIUS * a.cos(), RING8_RADIUS * a.sin()]
                })
                .collect(),
            ToyDistribution::Grid25 { .. } => (0..25)
                .map(|k| vec![-4.0 + 2.0 * (k / 5) as f64, -4.0 + 2.0 * (k % 5) as f64])
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            ToyDistribution::Gauss1d { mean, std } => vec![mean + std * normal(rng)],
            ToyDistribution::GaussMixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = components.last().expect("non-empty mixture");
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                vec![pick.mean + pick.std * normal(rng)]
            }
            ToyDistribution::Ring8 { std } | ToyDistribution::Grid25 { std } => {
                let modes = self.modes();
                let centre = &modes[rng.random_range(0..modes.len())];
                centre.iter().map(|c| c + std * normal(rng)).collect()
            }
            ToyDistribution::Swissroll { noise } => {
                let t = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
                // Spiral radius reaches SWISSROLL_T_MAX; six noise stds of
                // margin keep the scaled roll inside [-2, 2]².
                let scale = 2.0 / (SWISSROLL_T_MAX + 6.0 * noise);
                let x = t * t.cos() + noise * normal(rng);
                let y = t * t.sin() + noise * normal(rng);
                vec![scale * x, scale * y]
            }
            ToyDistribution::Dirac { point } => point.clone(),
            ToyDistribution::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| Uniform::new(l, h).expect("lo < hi").sample(rng))
                .collect(),
            ToyDistribution::Noisy { base, std } => {
                let mut p = base.sample_one(rng);
                for x in &mut p {
                    *x += std * normal(rng);
                }
                p
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Points `t·x_i + (1−t)·x_j` on the segment from a fake point `x_j` to a
/// real point `x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationBatch {
    pub x_i: Point,
    pub x_j: Point,
    pub ts: Vec<f64>,
    pub points: Vec<Point>,
    /// Set when `x_i == x_j`; every point then equals `x_i`.
    pub degenerate: bool,
}

impl InterpolationBatch {
    pub fn with_ts(x_i: &[f64], x_j: &[f64], ts: Vec<f64>) -> Self {
        let points = ts.iter().map(|&t| lerp(x_i, x_j, t)).collect();
        InterpolationBatch {
            x_i: x_i.to_vec(),
            x_j: x_j.to_vec(),
            ts,
            points,
            degenerate: x_i == x_j,
        }
    }
}

pub fn lerp(x_i: &[f64], x_j: &[f64], t: f64) -> Point {
    x_i.iter()
        .zip(x_j)
        .map(|(a, b)| t * a + (1.0 - t) * b)
        .collect()
}

/// `m` interpolates with `t ~ U(0,1)`.
pub fn interpolate<R: Rng + ?Sized>(
    x_i: &[f64],
    x_j: &[f64],
    m: usize,
    rng: &mut R,
) -> InterpolationBatch {
    let ts = (0..m).map(|_| rng.random::<f64>()).collect();
    InterpolationBatch::with_ts(x_i, x_j, ts)
}

/// Density of the uniform measure on the segment `[x_j, x_i]`, w.r.t.
/// arc length: `1/‖x_i − x_j‖` on the segment, zero elsewhere.
pub fn mu_density(x_i: &[f64], x_j: &[f64], x: &[f64]) -> Result<f64> {
    let dir: Vec<f64> = x_i.iter().zip(x_j).map(|(a, b)| a - b).collect();
    let len2: f64 = dir.iter().map(|d| d * d).sum();
    if len2 == 0.0 {
        return Err(Error::UndefinedMeasure);
    }
    let len = len2.sqrt();
    let rel: Vec<f64> = x.iter().zip(x_j).map(|(a, b)| a - b).collect();
    let t = rel.iter().zip(&dir).map(|(r, d)| r * d).sum::<f64>() / len2;
    let off: f64 = rel
        .iter()
        .zip(&dir)
        .map(|(r, d)| (r - t * d).powi(2))
        .sum::<f64>()
        .sqrt();
    let tol = 1e-9 * len.max(1.0);
    let t_tol = 1e-9;
    if off <= tol && (-t_tol..=1.0 + t_tol).contains(&t) {
        Ok(1.0 / len)
    } else {
        Ok(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn dirac_repeats_its_point() {
        let d = ToyDistribution::Dirac { point: vec![0.0] };
        assert_eq!(d.sample(3, &mut seeded(0, 0)), vec![vec![0.0]; 3]);
    }

    #[test]
    fn gauss_sample_mean() {
        let d = ToyDistribution::Gauss1d {
            mean: 0.0,
            std: 1.0,
        };
        let xs = d.sample(100_000, &mut seeded(1, 0));
        let mean = xs.iter().map(|p| p[0]).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() <= 0.02, "{mean}");
    }

    #[test]
    fn bimodal_fake_is_balanced() {
        let xs = ToyDistribution::bimodal_fake().sample(100_000, &mut seeded(2, 0));
        let below = xs.iter().filter(|p| p[0] < 0.0).count() as f64 / xs.len() as f64;
        assert!((0.49..=0.51).contains(&below), "{below}");
    }

    #[test]
    fn sampling_is_seeded() {
        let d = ToyDistribution::swissroll();
        assert_eq!(
            d.sample(50, &mut seeded(9, 3)),
            d.sample(50, &mut seeded(9, 3))
        );
        assert_ne!(
            d.sample(50, &mut seeded(9, 3)),
            d.sample(50, &mut seeded(9, 4))
        );
    }

    fn nearest_mode_distance(modes: &[Point], p: &[f64]) -> f64 {
        modes
            .iter()
            .map(|m| ((m[0] - p[0]).powi(2) + (m[1] - p[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn ring_and_grid_samples_stay_near_modes() {
        for (dist, std) in [
            (ToyDistribution::ring8(), 0.02),
            (ToyDistribution::grid25(), 0.05),
        ] {
            let modes = dist.modes();
            for p in dist.sample(5000, &mut seeded(3, 0)) {
                // 4 stds per coordinate bounds the radial offset by 4√2 std.
                assert!(nearest_mode_distance(&modes, &p) <= 4.0 * 2f64.sqrt() * std);
            }
        }
        let ring = ToyDistribution::ring8().modes();
        assert_eq!(ring.len(), 8);
        assert!((ring[2][1] - 2.0).abs() < 1e-12);
        let grid = ToyDistribution::grid25().modes();
        assert_eq!(grid.len(), 25);
        assert_eq!(grid[0], vec![-4.0, -4.0]);
        assert_eq!(grid[24], vec![4.0, 4.0]);
    }

    #[test]
    fn swissroll_inside_box() {
        for p in ToyDistribution::swissroll().sample(10_000, &mut seeded(4, 0)) {
            assert!(p.iter().all(|x| x.abs() <= 2.0), "{p:?}");
        }
    }

    #[test]
    fn noisy_wraps_base() {
        let d = ToyDistribution::Noisy {
            base: Box::new(ToyDistribution::Dirac {
                point: vec![1.0, 1.0],
            }),
            std: 0.5,
        };
        assert_eq!(d.dim(), 2);
        let xs = d.sample(20_000, &mut seeded(5, 0));
        let var = xs.iter().map(|p| (p[0] - 1.0).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((var - 0.25).abs() < 0.02);
    }

    #[test]
    fn validation() {
        assert!(ToyDistribution::bimodal_fake().validate().is_ok());
        let bad = ToyDistribution::GaussMixture {
            components: vec![MixtureComponent {
                weight: 0.4,
                mean: 0.0,
                std: 1.0,
            }],
        };
        assert!(bad.validate().is_err());
        assert!(ToyDistribution::Gauss1d {
            mean: 0.0,
            std: 0.0
        }
        .validate()
        .is_err());
        let bx = ToyDistribution::UniformBox {
            lo: vec![0.0, 1.0],
            hi: vec![1.0, 1.0],
        };
        assert!(bx.validate().is_err());
    }

    #[test]
    fn interpolation_with_fixed_ts() {
        let b = InterpolationBatch::with_ts(&[1.0], &[0.0], vec![0.0, 0.5, 1.0]);
        assert_eq!(b.points, vec![vec![0.0], vec![0.5], vec![1.0]]);
        assert!(!b.degenerate);
    }

    #[test]
    fn interpolation_stays_on_segment() {
        let mut rng = seeded(6, 0);
        let b = interpolate(&[1.0, 0.0], &[-1.0, 0.0], 100, &mut rng);
        assert!(b.points.iter().all(|p| p[1] == 0.0 && p[0].abs() <= 1.0));
        assert!(b.ts.iter().all(|t| (0.0..=1.0).contains(t)));
    }

    #[test]
    fn interpolation_mean_is_midpoint() {
        let (xi, xj) = ([3.0, -1.0], [-1.0, 2.0]);
        let b = interpolate(&xi, &xj, 100_000, &mut seeded(7, 0));
        let n = b.points.len() as f64;
        let mx = b.points.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = b.points.iter().map(|p| p[1]).sum::<f64>() / n;
        let err = ((mx - 1.0).powi(2) + (my - 0.5).powi(2)).sqrt();
        assert!(err <= 0.01 * 5.0, "{err}");
    }

    #[test]
    fn degenerate_pair_is_flagged() {
        let b = interpolate(&[0.5, 0.5], &[0.5, 0.5], 4, &mut seeded(0, 0));
        assert!(b.degenerate);
        assert!(b.points.iter().all(|p| p == &vec![0.5, 0.5]));
    }

    #[test]
    fn density_examples() {
        assert_eq!(
            mu_density(&[1.0, 0.0], &[0.0, 0.0], &[0.3, 0.0]).unwrap(),
            1.0
        );
        assert_eq!(mu_density(&[2.0], &[0.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(
            mu_density(&[1.0, 0.0], &[0.0, 0.0], &[0.3, 0.1]).unwrap(),
            0.0
        );
        assert_eq!(
            mu_density(&[1.0, 0.0], &[0.0, 0.0], &[1.5, 0.0]).unwrap(),
            0.0
        );
        assert!(matches!(
            mu_density(&[1.0], &[1.0], &[1.0]),
            Err(Error::UndefinedMeasure)
        ));
    }

    #[test]
    fn density_times_length_is_one() {
        let (xi, xj) = ([3.0, 4.0], [0.0, 0.0]);
        let d = mu_density(&xi, &xj, &[1.5, 2.0]).unwrap();
        assert!((d * 5.0 - 1.0).abs() < 1e-15);
    }
}
