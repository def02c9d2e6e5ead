use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::Vec3;
use crate::shots::TargetEstimate;

/// Target tracker fed with noisy position fixes.
///
/// Velocity is the finite difference of consecutive fixes, smoothed with an
/// exponential filter. Estimates between fixes extrapolate at that velocity.
#[derive(Clone, Debug)]
pub struct Estimator {
    noise: Option<Normal<f64>>,
    alpha: f64,
    rng: ChaCha8Rng,
    last: Option<(f64, Vec3)>,
    velocity: Option<Vec3>,
}

impl Estimator {
    pub fn new(sigma: f64, alpha: f64, seed: u64) -> Self {
        let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma is finite and positive"));
        Self { noise, alpha, rng: ChaCha8Rng::seed_from_u64(seed), last: None, velocity: None }
    }

    /// Records a fix of the true position `truth` taken at time `t`.
    pub fn observe(&mut self, t: f64, truth: &Vec3) -> Vec3 {
        let mut p = *truth;
        if let Some(n) = &self.noise {
            for i in 0..3 {
                p[i] += n.sample(&mut self.rng);
            }
        }
        if let Some((t_prev, p_prev)) = self.last {
            if t > t_prev {
                let fd = (p - p_prev) / (t - t_prev);
                self.velocity = Some(match self.velocity {
                    Some(v) => fd * self.alpha + v * (1.0 - self.alpha),
                    None => fd,
                });
            }
        }
        self.last = Some((t, p));
        p
    }

    pub fn estimate(&self, t: f64) -> Option<TargetEstimate> {
        let (t_obs, p) = self.last?;
        let v = self.velocity.unwrap_or_else(Vec3::zeros);
        Some(TargetEstimate { p: p + v * (t - t_obs), v, timestamp: t })
    }
}
