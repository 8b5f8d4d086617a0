use serde::{Deserialize, Serialize};

use super::DishError;

/// Per-step rewards of the dish domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rewards {
    /// Moving a dirty object into the dishwasher.
    pub wash_dirty: f64,
    /// Moving a clean object into the dishwasher.
    pub wash_clean: f64,
    /// A failed WASH grasp.
    pub grasp_fail: f64,
    /// Any LIFT, successful or not.
    pub lift: f64,
    /// Charged per dirty object left on the table when the episode ends.
    pub finish_per_dirty: f64,
}

impl Default for Rewards {
    fn default() -> Self {
        Rewards {
            wash_dirty: 5.0,
            wash_clean: -10.0,
            grasp_fail: -0.5,
            lift: -0.5,
            finish_per_dirty: -5.0,
        }
    }
}

/// Model parameters: exponential occlusion models for grasping and for
/// reading the attribute, the grasp prior pseudo-count, the number of
/// attribute bits per observation, rewards and the episode length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainParams {
    pub theta_g1: f64,
    pub theta_g2: f64,
    pub theta_d1: f64,
    pub theta_d2: f64,
    pub theta_c1: f64,
    pub theta_c2: f64,
    pub n_prior: f64,
    pub k: usize,
    pub rewards: Rewards,
    pub max_steps: usize,
}

impl Default for DomainParams {
    fn default() -> Self {
        DomainParams {
            theta_g1: -0.904,
            theta_g2: -0.087,
            theta_d1: -0.895,
            theta_d2: -0.087,
            theta_c1: -0.193,
            theta_c2: 0.0,
            n_prior: 0.5,
            k: 2,
            rewards: Rewards::default(),
            max_steps: 10,
        }
    }
}

impl DomainParams {
    pub fn validate(&self) -> Result<(), DishError> {
        let invalid = |msg: String| Err(DishError::InvalidParams(msg));
        if !(self.n_prior > 0.0 && self.n_prior.is_finite()) {
            return invalid(format!("n_prior must be positive, got {}", self.n_prior));
        }
        if !(1..=8).contains(&self.k) {
            return invalid(format!("k must be between 1 and 8, got {}", self.k));
        }
        if self.max_steps == 0 {
            return invalid("max_steps must be at least 1".into());
        }
        let thetas = [
            self.theta_g1,
            self.theta_g2,
            self.theta_d1,
            self.theta_d2,
            self.theta_c1,
            self.theta_c2,
        ];
        let r = &self.rewards;
        let rewards = [r.wash_dirty, r.wash_clean, r.grasp_fail, r.lift, r.finish_per_dirty];
        if thetas.iter().chain(&rewards).any(|v| !v.is_finite()) {
            return invalid("parameters must be finite".into());
        }
        Ok(())
    }

    /// Prior grasp success probability at occlusion `occl`.
    pub fn grasp_prior(&self, occl: f64) -> f64 {
        clamped_exp(self.theta_g1 * occl + self.theta_g2)
    }

    /// Mean of the Beta posterior over grasp success given the object's
    /// success and failure counts, with the occlusion prior weighted by
    /// `n_prior` pseudo-observations.
    pub fn grasp_success_prob(&self, n_succ: f64, n_fail: f64, occl: f64) -> f64 {
        let prior = self.grasp_prior(occl);
        (prior * self.n_prior + n_succ) / (self.n_prior + n_succ + n_fail)
    }

    /// Probability of reading the object as dirty at occlusion `occl`.
    ///
    /// The clean-object exponential is the probability of the correct
    /// (clean) reading, so a misread is its complement.
    pub fn obs_prob(&self, true_dirty: bool, occl: f64) -> f64 {
        if true_dirty {
            clamped_exp(self.theta_d1 * occl + self.theta_d2)
        } else {
            1.0 - clamped_exp(self.theta_c1 * occl + self.theta_c2)
        }
    }

    /// `P(reading | truth)` for a single attribute reading.
    pub fn obs_likelihood(&self, observed_dirty: bool, true_dirty: bool, occl: f64) -> f64 {
        let p = self.obs_prob(true_dirty, occl);
        if observed_dirty {
            p
        } else {
            1.0 - p
        }
    }

    /// Posterior probability of dirtiness after independent readings
    /// `(observed_dirty, occlusion)` under a uniform prior.
    pub fn attribute_posterior(&self, history: &[(bool, f64)]) -> AttributePosterior {
        let (mut dirty, mut clean) = (1.0, 1.0);
        for &(obs, occl) in history {
            dirty *= self.obs_likelihood(obs, true, occl);
            clean *= self.obs_likelihood(obs, false, occl);
        }
        let total = dirty + clean;
        if total > 0.0 {
            AttributePosterior {
                p_dirty: dirty / total,
                degenerate: false,
            }
        } else {
            AttributePosterior {
                p_dirty: 0.5,
                degenerate: true,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributePosterior {
    pub p_dirty: f64,
    /// Both hypotheses had zero likelihood; `p_dirty` fell back to the prior.
    pub degenerate: bool,
}

fn clamped_exp(x: f64) -> f64 {
    x.exp().clamp(0.0, 1.0)
}

/// Occlusion ratio from a contour perimeter `tot` and the occluded part of
/// it `tou`: 0 when nothing touches, saturating at 1 once the touching part
/// exceeds the free part.
pub fn occlusion_ratio(tot: f64, tou: f64) -> f64 {
    if tou <= 0.0 {
        return 0.0;
    }
    let free = tot - tou;
    if free < tou {
        return 1.0;
    }
    (tou / free).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(occlusion_ratio(100.0, 0.0), 0.0);
        assert_eq!(occlusion_ratio(100.0, 20.0), 0.25);
        assert_eq!(occlusion_ratio(100.0, 60.0), 1.0);
        assert_eq!(occlusion_ratio(100.0, 50.0), 1.0);
        assert_eq!(occlusion_ratio(100.0, 150.0), 1.0);
    }

    #[test]
    fn degenerate_grasp_parameters() {
        let p = DomainParams {
            theta_g1: 0.0,
            theta_g2: 0.0,
            ..DomainParams::default()
        };
        for occl in [0.0, 0.3, 1.0] {
            assert_eq!(p.grasp_prior(occl), 1.0);
        }
    }

    #[test]
    fn counts_reduce_to_prior() {
        let p = DomainParams::default();
        assert_eq!(p.grasp_success_prob(0.0, 0.0, 0.4), p.grasp_prior(0.4));
    }

    #[test]
    fn clean_unoccluded_never_misread() {
        let p = DomainParams::default();
        assert_eq!(p.obs_prob(false, 0.0), 0.0);
        assert_eq!(p.attribute_posterior(&[(true, 0.0)]).p_dirty, 1.0);
    }

    #[test]
    fn impossible_history_is_degenerate() {
        // Clean misread is impossible at zero occlusion; make the dirty
        // reading impossible too.
        let p = DomainParams {
            theta_d2: -1000.0,
            ..DomainParams::default()
        };
        let post = p.attribute_posterior(&[(true, 0.0)]);
        assert!(post.degenerate);
        assert_eq!(post.p_dirty, 0.5);
        assert_eq!(p.attribute_posterior(&[]).p_dirty, 0.5);
    }

    #[test]
    fn validation() {
        assert!(DomainParams::default().validate().is_ok());
        let bad = [
            DomainParams {
                n_prior: 0.0,
                ..DomainParams::default()
            },
            DomainParams {
                k: 0,
                ..DomainParams::default()
            },
            DomainParams {
                max_steps: 0,
                ..DomainParams::default()
            },
        ];
        assert!(bad.iter().all(|p| p.validate().is_err()));
    }
}
