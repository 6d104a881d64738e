//! Particle-filter pose tracker.
//!
//! Each step perturbs every particle with a zero-velocity random walk,
//! scores it by summing heatmap values at its projected model points,
//! reports the weighted mean pose and resamples systematically.

use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{HeatmapProjector, ObjectModel, Pose};
use crate::heatmap::HeatmapStack;
use crate::rng;

const STREAM_INIT: u64 = 1;
const STREAM_MOTION: u64 = 2;
const STREAM_RESAMPLE: u64 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("weighted quaternion sum has norm {0}; particle rotations are too dispersed to average")]
    DegenerateRotation(f64),
    #[error("heatmap stack has {found} channels, model has {expected} points")]
    ChannelMismatch { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub pose: Pose,
    pub weight: f64,
}

/// Random-walk motion model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    /// Translation std per axis, metres.
    pub sigma_t: f64,
    /// RMS magnitude of the axis-angle rotation perturbation, radians
    /// (each axis gets `sigma_r / sqrt(3)`).
    pub sigma_r: f64,
    pub seed: u64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            sigma_t: 0.01,
            sigma_r: 0.5f64.to_radians(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    normalised: bool,
    seed: u64,
    step: u64,
}

impl ParticleSet {
    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn is_normalised(&self) -> bool {
        self.normalised
    }

    /// Number of completed motion updates.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Builds a set from explicit particles; weights are normalised.
    pub fn from_particles(particles: Vec<Particle>, seed: u64) -> Self {
        assert!(!particles.is_empty(), "particle set must be non-empty");
        let mut set = Self {
            particles,
            normalised: false,
            seed,
            step: 0,
        };
        set.normalise();
        set
    }

    /// Scales weights to sum to one; falls back to uniform weights when
    /// the sum is zero or not finite.
    pub fn normalise(&mut self) {
        let total = self.weight_sum();
        let n = self.particles.len() as f64;
        if total > 0.0 && total.is_finite() {
            for p in &mut self.particles {
                p.weight /= total;
            }
        } else {
            for p in &mut self.particles {
                p.weight = 1.0 / n;
            }
        }
        self.normalised = true;
    }
}

fn perturb<R: Rng>(pose: &Pose, m: &MotionConfig, rng: &mut R) -> Pose {
    let nt = Normal::new(0.0, m.sigma_t).expect("sigma_t >= 0");
    let nr = Normal::new(0.0, m.sigma_r / 3f64.sqrt()).expect("sigma_r >= 0");
    let omega = Vector3::new(nr.sample(rng), nr.sample(rng), nr.sample(rng));
    let dt = Vector3::new(nt.sample(rng), nt.sample(rng), nt.sample(rng));
    pose.perturbed(&omega, &dt)
}

/// `count` particles drawn around `prior` with the spread of `spread`,
/// uniformly weighted.
pub fn init_particles(prior: &Pose, spread: &MotionConfig, count: usize) -> ParticleSet {
    assert!(count >= 1, "need at least one particle");
    let mut rng = rng::stream(spread.seed, &[STREAM_INIT]);
    let w = 1.0 / count as f64;
    let particles = (0..count)
        .map(|_| Particle {
            pose: perturb(prior, spread, &mut rng),
            weight: w,
        })
        .collect();
    ParticleSet {
        particles,
        normalised: true,
        seed: spread.seed,
        step: 0,
    }
}

/// Perturbs every pose independently; weights are untouched.
pub fn motion_update(mut set: ParticleSet, m: &MotionConfig) -> ParticleSet {
    let mut rng = rng::stream(m.seed, &[STREAM_MOTION, set.step]);
    for p in &mut set.particles {
        p.pose = perturb(&p.pose, m, &mut rng);
    }
    set.step += 1;
    set
}

/// Sum of heatmap values at the particle's projected model points; zero if
/// any point is behind the camera.
pub fn particle_score(
    pose: &Pose,
    stack: &HeatmapStack,
    model: &ObjectModel,
    projector: &HeatmapProjector,
) -> f64 {
    let mut w = 0.0;
    for (c, p) in model.positions().enumerate() {
        match projector.project_point(pose, &p) {
            Some(ph) => w += stack.sample_unchecked(c, &ph),
            None => return 0.0,
        }
    }
    w
}

/// Unnormalised particle scores, computed in parallel.
pub fn raw_weights(
    set: &ParticleSet,
    stack: &HeatmapStack,
    model: &ObjectModel,
    projector: &HeatmapProjector,
) -> Result<Vec<f64>, TrackerError> {
    if stack.channels() != model.len() {
        return Err(TrackerError::ChannelMismatch {
            expected: model.len(),
            found: stack.channels(),
        });
    }
    Ok(set
        .particles
        .par_iter()
        .map(|p| particle_score(&p.pose, stack, model, projector))
        .collect())
}

/// Replaces the weights with heatmap scores and normalises them.
pub fn weigh(
    mut set: ParticleSet,
    stack: &HeatmapStack,
    model: &ObjectModel,
    projector: &HeatmapProjector,
) -> Result<ParticleSet, TrackerError> {
    let raw = raw_weights(&set, stack, model, projector)?;
    for (p, w) in set.particles.iter_mut().zip(raw) {
        p.weight = w;
    }
    set.normalise();
    Ok(set)
}

/// Systematic resampling: one uniform offset, `count` evenly spaced
/// pointers into the cumulative weights. Output weights are uniform.
pub fn resample(mut set: ParticleSet) -> ParticleSet {
    if !set.normalised {
        set.normalise();
    }
    let n = set.particles.len();
    let mut rng = rng::stream(set.seed, &[STREAM_RESAMPLE, set.step]);
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = set.particles[0].weight;
    let mut i = 0;
    for j in 0..n {
        let target = u0 + j as f64 / n as f64;
        while cumulative < target && i + 1 < n {
            i += 1;
            cumulative += set.particles[i].weight;
        }
        out.push(Particle {
            pose: set.particles[i].pose,
            weight: 1.0 / n as f64,
        });
    }
    set.particles = out;
    set.normalised = true;
    set
}

/// Weighted mean pose. Quaternions are sign-aligned to the heaviest
/// particle before summing, which is adequate for concentrated sets.
pub fn estimate(set: &ParticleSet) -> Result<Pose, TrackerError> {
    let total = set.weight_sum();
    let scale = if set.normalised || total <= 0.0 { 1.0 } else { 1.0 / total };
    let best = set
        .particles
        .iter()
        .max_by(|a, b| a.weight.total_cmp(&b.weight))
        .expect("non-empty set");
    let reference = best.pose.rotation().coords;
    let mut t = Vector3::zeros();
    let mut q = Vector4::zeros();
    for p in &set.particles {
        let w = p.weight * scale;
        t += p.pose.translation() * w;
        let c = p.pose.rotation().coords;
        q += if c.dot(&reference) < 0.0 { -c * w } else { c * w };
    }
    let norm = q.norm();
    if norm < 1e-6 {
        return Err(TrackerError::DegenerateRotation(norm));
    }
    Ok(Pose::new(
        UnitQuaternion::new_normalize(Quaternion::from(q)),
        t,
    ))
}

/// One filter iteration: motion update, weighting, estimate, resampling.
/// Returns the resampled set and the estimate taken before resampling.
pub fn step(
    set: ParticleSet,
    stack: &HeatmapStack,
    model: &ObjectModel,
    projector: &HeatmapProjector,
    m: &MotionConfig,
) -> Result<(ParticleSet, Pose), TrackerError> {
    let set = motion_update(set, m);
    let set = weigh(set, stack, model, projector)?;
    let pose = estimate(&set)?;
    Ok((resample(set), pose))
}

/// Owns a particle set and its configuration across frames.
#[derive(Clone, Debug)]
pub struct ParticleFilter {
    set: ParticleSet,
    motion: MotionConfig,
    model: ObjectModel,
    projector: HeatmapProjector,
}

impl ParticleFilter {
    pub fn new(
        prior: &Pose,
        model: ObjectModel,
        projector: HeatmapProjector,
        motion: MotionConfig,
        count: usize,
    ) -> Self {
        Self {
            set: init_particles(prior, &motion, count),
            motion,
            model,
            projector,
        }
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.set
    }

    /// Consumes one predicted stack and returns the new pose estimate.
    pub fn update(&mut self, stack: &HeatmapStack) -> Result<Pose, TrackerError> {
        let (next, pose) = step(self.set.clone(), stack, &self.model, &self.projector, &self.motion)?;
        self.set = next;
        Ok(pose)
    }
}
