//! Tabular stochastic policies `p(s, a)` and their reinforcement updates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ShapeMismatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        assert!(n_states > 0 && n_actions > 0);
        PolicyTable {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Builds a table from row-major probabilities. Rows must be distributions.
    pub fn from_rows(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), n_states * n_actions);
        PolicyTable {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let a = self.n_actions;
        &self.probs[state * a..(state + 1) * a]
    }

    fn row_mut(&mut self, state: usize) -> &mut [f64] {
        let a = self.n_actions;
        &mut self.probs[state * a..(state + 1) * a]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    /// Samples an action from row `state`.
    pub fn sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = self.row(state);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (a, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last_nonzero = a;
                acc += p;
                if u < acc {
                    return a;
                }
            }
        }
        // Rounding left u above the cumulative sum.
        last_nonzero
    }

    /// Moves row `state` toward `action`: `p(a) += rate (1 - p(a))`, others scale by `1 - rate`.
    pub fn reinforce(&mut self, state: usize, action: usize, rate: f64) {
        let rate = rate.clamp(0.0, 1.0);
        if rate == 0.0 {
            return;
        }
        for (a, p) in self.row_mut(state).iter_mut().enumerate() {
            if a == action {
                *p += rate * (1.0 - *p);
            } else {
                *p *= 1.0 - rate;
            }
        }
    }

    /// Scales `p(action)` by `1 - rate` and renormalizes the row.
    pub fn penalize(&mut self, state: usize, action: usize, rate: f64) {
        let rate = rate.clamp(0.0, 1.0);
        if rate == 0.0 {
            return;
        }
        let row = self.row_mut(state);
        let before = row[action];
        let after = before * (1.0 - rate);
        let total = 1.0 - before + after;
        if total <= 0.0 {
            // The penalized action held all the mass and rate == 1: fall back to uniform.
            let u = 1.0 / row.len() as f64;
            row.iter_mut().for_each(|p| *p = u);
            return;
        }
        row[action] = after;
        row.iter_mut().for_each(|p| *p /= total);
    }

    /// Largest `|sum(row) - 1|` over all rows.
    pub fn max_row_error(&self) -> f64 {
        self.probs
            .chunks(self.n_actions)
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Mean absolute difference between two tables of the same shape.
pub fn policy_distance(a: &PolicyTable, b: &PolicyTable) -> Result<f64, ShapeMismatch> {
    if a.shape() != b.shape() {
        return Err(ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let sum: f64 = a
        .probs
        .iter()
        .zip(&b.probs)
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(sum / a.probs.len() as f64)
}
