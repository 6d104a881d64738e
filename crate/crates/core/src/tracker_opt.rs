//! Pose estimation by minimising the summed negative-log heatmap cost at
//! the projected model points, using gradient descent with a backtracking
//! line search.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{HeatmapProjector, ObjectModel, Pose};
use crate::heatmap::{smooth, to_cost, CostStack, HeatmapStack, DEFAULT_COST_EPS};

#[derive(Debug, Error, PartialEq)]
pub enum OptError {
    #[error("cost is not finite ({0})")]
    NonFiniteCost(f64),
    #[error("cost stack has {found} channels, model has {expected} points")]
    ChannelMismatch { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptSettings {
    pub max_iters: usize,
    /// First trial step along the negative gradient.
    pub step_init: f64,
    /// Backtracking factor in (0, 1). Accepted steps grow the trial step
    /// by its inverse.
    pub step_shrink: f64,
    pub grad_tol: f64,
    /// Relative cost decrease below which an accepted step ends the run.
    pub cost_tol: f64,
    /// Gaussian blur applied to heatmaps before the cost transform.
    pub blur_sigma: f64,
    /// Central-difference step for the pose parameters (diagnostics).
    pub fd_eps_pose: f64,
    /// Floor added to heatmap values before normalisation.
    pub cost_eps: f64,
}

impl Default for OptSettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            step_init: 1e-2,
            step_shrink: 0.5,
            grad_tol: 1e-8,
            cost_tol: 1e-10,
            blur_sigma: 5.0,
            fd_eps_pose: 1e-6,
            cost_eps: DEFAULT_COST_EPS,
        }
    }
}

impl OptSettings {
    /// Smooths and converts a predicted stack into the cost landscape the
    /// optimiser descends.
    pub fn prepare(&self, stack: &HeatmapStack) -> CostStack {
        to_cost(&smooth(stack, self.blur_sigma), self.cost_eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptStatus {
    Converged,
    MaxIters,
    Stalled,
}

#[derive(Clone, Debug)]
pub struct OptResult {
    pub pose: Pose,
    pub status: OptStatus,
    pub iterations: usize,
    pub cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub history: Vec<f64>,
}

fn check_channels(cost: &CostStack, model: &ObjectModel) -> Result<(), OptError> {
    if cost.channels() != model.len() {
        return Err(OptError::ChannelMismatch {
            expected: model.len(),
            found: cost.channels(),
        });
    }
    Ok(())
}

/// Sum over model points of the bilinearly sampled cost at the projected
/// location. Points off the grid or behind the camera add that channel's
/// out-of-bounds cost.
pub fn pose_cost(pose: &Pose, cost: &CostStack, model: &ObjectModel, projector: &HeatmapProjector) -> f64 {
    model
        .positions()
        .enumerate()
        .map(|(c, p)| match projector.project_point(pose, &p) {
            Some(ph) => cost.sample(c, &ph),
            None => cost.oob_cost(c),
        })
        .sum()
}

/// Analytic gradient of [`pose_cost`] with respect to the update
/// `[omega; delta_t]` of [`Pose::perturbed`].
pub fn pose_gradient(
    pose: &Pose,
    cost: &CostStack,
    model: &ObjectModel,
    projector: &HeatmapProjector,
) -> Vector6<f64> {
    cost_and_gradient(pose, cost, model, projector).1
}

pub fn cost_and_gradient(
    pose: &Pose,
    cost: &CostStack,
    model: &ObjectModel,
    projector: &HeatmapProjector,
) -> (f64, Vector6<f64>) {
    let mut total = 0.0;
    let mut grad = Vector6::zeros();
    for (c, p) in model.positions().enumerate() {
        match projector.project_point_with_jacobian(pose, &p) {
            Some(pp) => {
                let (v, g) = cost.sample_with_gradient(c, &pp.heat);
                total += v;
                grad += pp.jacobian.transpose() * g;
            }
            None => total += cost.oob_cost(c),
        }
    }
    (total, grad)
}

/// Central-difference gradient of [`pose_cost`], for checking.
pub fn numeric_gradient(
    pose: &Pose,
    cost: &CostStack,
    model: &ObjectModel,
    projector: &HeatmapProjector,
    eps: f64,
) -> Vector6<f64> {
    let mut g = Vector6::zeros();
    for j in 0..6 {
        let mut d = Vector6::zeros();
        d[j] = eps;
        let plus = pose_cost(&pose.perturbed6(&d), cost, model, projector);
        let minus = pose_cost(&pose.perturbed6(&-d), cost, model, projector);
        g[j] = (plus - minus) / (2.0 * eps);
    }
    g
}

/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;
/// Backtracking stops once the step falls below this.
const MIN_STEP: f64 = 1e-14;

/// Descends the cost from `init`. Every accepted step lowers the cost.
pub fn optimise(
    init: &Pose,
    cost: &CostStack,
    model: &ObjectModel,
    projector: &HeatmapProjector,
    settings: &OptSettings,
) -> Result<OptResult, OptError> {
    check_channels(cost, model)?;
    let mut pose = *init;
    let (mut phi, mut grad) = cost_and_gradient(&pose, cost, model, projector);
    if !phi.is_finite() {
        return Err(OptError::NonFiniteCost(phi));
    }
    let mut history = vec![phi];
    let mut step = settings.step_init;
    let grow = 1.0 / settings.step_shrink;
    for iter in 0..settings.max_iters {
        let g2 = grad.norm_squared();
        if g2 == 0.0 {
            // every projected point sits on a plateau of its cost channel
            return Ok(finish(pose, OptStatus::Stalled, iter, phi, history));
        }
        if g2.sqrt() < settings.grad_tol {
            return Ok(finish(pose, OptStatus::Converged, iter, phi, history));
        }
        let mut accepted = None;
        while step >= MIN_STEP {
            let candidate = pose.perturbed6(&(-step * grad));
            let value = pose_cost(&candidate, cost, model, projector);
            if value.is_nan() {
                return Err(OptError::NonFiniteCost(value));
            }
            if value <= phi - ARMIJO * step * g2 {
                accepted = Some((candidate, value));
                break;
            }
            step *= settings.step_shrink;
        }
        let Some((next, next_phi)) = accepted else {
            return Ok(finish(pose, OptStatus::Stalled, iter, phi, history));
        };
        let decrease = phi - next_phi;
        pose = next;
        let (value, g) = cost_and_gradient(&pose, cost, model, projector);
        debug_assert!((value - next_phi).abs() <= 1e-9 * (1.0 + value.abs()));
        phi = value;
        grad = g;
        history.push(phi);
        step *= grow;
        if decrease <= settings.cost_tol * (1.0 + phi.abs()) {
            return Ok(finish(pose, OptStatus::Converged, iter + 1, phi, history));
        }
    }
    Ok(finish(pose, OptStatus::MaxIters, settings.max_iters, phi, history))
}

fn finish(pose: Pose, status: OptStatus, iterations: usize, cost: f64, history: Vec<f64>) -> OptResult {
    OptResult {
        pose,
        status,
        iterations,
        cost,
        history,
    }
}
