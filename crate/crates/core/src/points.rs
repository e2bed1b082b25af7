//! Exploration-points feedback law and budget arithmetic.
//!
//! The rating r of a verified version scales the point pool through
//!
//! ```text
//! p_hat  = (alpha - beta * r) * p
//! p_next = eta * p_hat + (1 - eta) * p
//! ```
//!
//! High ratings shrink the pool (the design is working, optimize gently);
//! low ratings grow it (break away from the current design). The stored pool
//! stays real-valued between rounds; only the spendable budget is floored.

use serde::{Deserialize, Serialize};

use crate::domain::ExplorationPlan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointsConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Smoothing factor in [0, 1].
    pub eta: f64,
    /// Initial point pool.
    pub p0: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for PointsConfig {
    fn default() -> Self {
        PointsConfig {
            alpha: 2.375,
            beta: 0.375,
            eta: 0.4,
            p0: 6.0,
            p_min: 1.0,
            p_max: 16.0,
        }
    }
}

impl PointsConfig {
    pub fn validate(&self) -> Result<()> {
        let margin = self.alpha - self.beta * 5.0;
        if !margin.is_finite() || margin <= 0.0 {
            return Err(Error::InvalidInput(
                "points law multiplier must stay positive over r in [1,5]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidInput("eta must lie in [0,1]".into()));
        }
        if !self.p0.is_finite() || self.p0 <= 0.0 {
            return Err(Error::InvalidInput("p0 must be positive".into()));
        }
        if self.p_min < 0.0 || self.p_min > self.p0 || self.p0 > self.p_max {
            return Err(Error::InvalidInput(
                "require 0 <= p_min <= p0 <= p_max".into(),
            ));
        }
        Ok(())
    }
}

/// One applied update of the feedback law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointsUpdate {
    /// Outer iteration the rating belongs to.
    pub k: u32,
    pub rating: u8,
    pub p: f64,
    pub p_hat: f64,
    pub p_next: f64,
}

/// Current pool plus the append-only update history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPoints {
    pub current: f64,
    pub history: Vec<PointsUpdate>,
}

impl ExplorationPoints {
    pub fn new(p0: f64) -> Self {
        ExplorationPoints {
            current: p0,
            history: Vec::new(),
        }
    }

    /// Runs the feedback law against the current pool and records the step.
    pub fn apply_rating(&mut self, k: u32, rating: u8, cfg: &PointsConfig) -> Result<PointsUpdate> {
        let (p_hat, p_next) = update_points(self.current, rating, cfg)?;
        let update = PointsUpdate {
            k,
            rating,
            p: self.current,
            p_hat,
            p_next,
        };
        self.history.push(update);
        self.current = p_next;
        Ok(update)
    }
}

/// Evaluates one step of the feedback law, clamping the result to
/// [p_min, p_max]. Returns (p_hat, p_next).
pub fn update_points(p: f64, rating: u8, cfg: &PointsConfig) -> Result<(f64, f64)> {
    if !(1..=5).contains(&rating) {
        return Err(Error::InvalidRating(rating as i64));
    }
    if !p.is_finite() || p < 0.0 {
        return Err(Error::InvalidInput(format!("points pool {p} is negative")));
    }
    let p_hat = (cfg.alpha - cfg.beta * rating as f64) * p;
    let raw = cfg.eta * p_hat + (1.0 - cfg.eta) * p;
    let p_next = raw.clamp(cfg.p_min, cfg.p_max);
    Ok((p_hat, p_next))
}

/// Spendable whole points for a round.
pub fn budget(p: f64) -> u32 {
    debug_assert!(p >= 0.0);
    p.floor() as u32
}

/// Whether the plan fits the round budget.
pub fn affordable(plan: &ExplorationPlan, p: f64) -> bool {
    plan.total_cost() <= budget(p)
}
