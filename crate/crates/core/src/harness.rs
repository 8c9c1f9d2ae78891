//! Desk-scale experiment loop.
//!
//! A synthetic denoiser (contraction toward a per-frame target plus
//! seeded drift noise) stands in for the real backbone, and synthetic
//! saliency maps stand in for cross-attention. Each step runs the full
//! intervention chain:
//!
//!   collect maps -> Otsu masks -> physics operator -> identity
//!   injection -> disentangled attention (Q from the smoothed states,
//!   K/V from the identity-enhanced states) -> denoiser update.
//!
//! Metrics are recorded per step on the physics-smoothed trajectory:
//! the masked subject region's mean feature vector per frame is the
//! stand-in for a learned per-frame embedding.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::{disentangled_attention, inject_identity, IdBank, ProjectionSet};
use crate::error::{Error, Result};
use crate::masking::{binarize, otsu_threshold, AttentionMapStack, DEFAULT_WINDOW};
use crate::metrics::{
    adjacent_similarity, first_order_variation, storytelling_quality, temporal_regularity,
    MetricConfig, MetricReport,
};
use crate::params::{derive_params, BaseConstants, ControlParams, OperatorSchedule};
use crate::priors::{run_physics_operator, PriorSpec, PriorTemplate};
use crate::rng::RngHandle;
use crate::sequence::{FeatureSequence, MaskSequence};

/// Contraction rate of the synthetic denoiser.
pub const DENOISER_ETA: f64 = 0.2;

/// Axis-aligned subject rectangle within the (H, W) grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.top
            && row < self.top + self.height
            && col >= self.left
            && col < self.left + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

/// Generation knobs for a synthetic story scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub d: usize,
    /// Std of the character's latent identity components.
    pub identity_scale: f64,
    /// Amplitude of the smooth prompt-driven per-frame offsets.
    pub action_amplitude: f64,
    /// Std of the incoherence noise injected inside the subject region.
    pub drift_amplitude: f64,
    /// Std of the additive saliency noise (signal is 0/1).
    pub saliency_noise: f64,
    pub region_height: usize,
    pub region_width: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            t: 8,
            h: 8,
            w: 8,
            d: 8,
            identity_scale: 1.0,
            action_amplitude: 0.3,
            drift_amplitude: 0.6,
            saliency_noise: 0.15,
            region_height: 4,
            region_width: 4,
        }
    }
}

/// A concrete scenario: identity, per-frame offsets, moving subject
/// region, and the seed stream everything derives from.
#[derive(Debug, Clone)]
pub struct StoryScenario {
    pub id: String,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub identity_vector: Vec<f64>,
    pub action_offsets: Vec<Vec<f64>>,
    pub drift_amplitude: f64,
    pub saliency_noise: f64,
    pub subject_region: Vec<Rect>,
    root: RngHandle,
}

impl StoryScenario {
    /// Builds a scenario from generation knobs and a seed. The subject
    /// rectangle glides horizontally across the frames; the offsets are
    /// a low-frequency two-phase motion shared by every position.
    pub fn from_params(params: &ScenarioParams, seed: u64) -> Result<Self> {
        let ScenarioParams {
            t,
            h,
            w,
            d,
            identity_scale,
            action_amplitude,
            drift_amplitude,
            saliency_noise,
            region_height,
            region_width,
        } = *params;
        if t < 3 {
            return Err(Error::TooFewFrames { needed: 3, got: t });
        }
        for (name, v) in [("H", h), ("W", w), ("d", d)] {
            if v == 0 {
                return Err(Error::ZeroDimension { name });
            }
        }
        if region_height == 0 || region_width == 0 || region_height > h || region_width > w {
            return Err(Error::EmptyRegion(0));
        }
        if drift_amplitude < 0.0 {
            return Err(Error::NegativeConstant {
                name: "drift_amplitude",
                value: drift_amplitude,
            });
        }

        let root = RngHandle::new(seed, "scenario");
        let mut id_rng = root.fork("identity");
        let identity_vector: Vec<f64> = (0..d).map(|_| identity_scale * id_rng.normal()).collect();

        let mut action_rng = root.fork("action");
        let u: Vec<f64> = (0..d).map(|_| action_rng.normal()).collect();
        let v: Vec<f64> = (0..d).map(|_| action_rng.normal()).collect();
        let mut action_offsets = Vec::with_capacity(t);
        for frame in 0..t {
            let theta = 2.0 * std::f64::consts::PI * frame as f64 / t as f64;
            let (sin_t, cos_t) = (theta.sin(), theta.cos());
            let mut grid = vec![0.0; h * w * d];
            for p in 0..h * w {
                for c in 0..d {
                    grid[p * d + c] = action_amplitude * (sin_t * u[c] + cos_t * v[c]);
                }
            }
            action_offsets.push(grid);
        }

        let top = (h - region_height) / 2;
        let span = w - region_width;
        let subject_region = (0..t)
            .map(|frame| {
                let left = if t == 1 {
                    0
                } else {
                    span * frame / (t - 1)
                };
                Rect {
                    top,
                    left,
                    height: region_height,
                    width: region_width,
                }
            })
            .collect();

        Ok(StoryScenario {
            id: format!("desk-T{t}-{h}x{w}x{d}-s{seed}"),
            t,
            h,
            w,
            d,
            identity_vector,
            action_offsets,
            drift_amplitude,
            saliency_noise,
            subject_region,
            root,
        })
    }

    pub fn seed(&self) -> u64 {
        self.root.seed()
    }

    /// Drift-free frames: identity inside the region plus the offsets.
    pub fn clean_features(&self) -> FeatureSequence {
        let mut data = Vec::with_capacity(self.t * self.h * self.w * self.d);
        for frame in 0..self.t {
            let rect = &self.subject_region[frame];
            let offsets = &self.action_offsets[frame];
            for row in 0..self.h {
                for col in 0..self.w {
                    let p = row * self.w + col;
                    let inside = rect.contains(row, col);
                    for c in 0..self.d {
                        let base = offsets[p * self.d + c];
                        data.push(if inside {
                            base + self.identity_vector[c]
                        } else {
                            base
                        });
                    }
                }
            }
        }
        FeatureSequence::new(self.t, self.h, self.w, self.d, data)
            .expect("clean features are finite by construction")
    }

    pub fn truth_masks(&self) -> MaskSequence {
        let mut data = Vec::with_capacity(self.t * self.h * self.w);
        for frame in 0..self.t {
            let rect = &self.subject_region[frame];
            for row in 0..self.h {
                for col in 0..self.w {
                    data.push(rect.contains(row, col) as u8);
                }
            }
        }
        MaskSequence::new(self.t, self.h, self.w, data).expect("truth masks are binary")
    }

    fn saliency_map(&self, frame: usize, rng: &mut RngHandle) -> Vec<f64> {
        let rect = &self.subject_region[frame];
        let mut map = Vec::with_capacity(self.h * self.w);
        for row in 0..self.h {
            for col in 0..self.w {
                let signal = if rect.contains(row, col) { 1.0 } else { 0.0 };
                let v = signal + self.saliency_noise * rng.normal();
                map.push(v.max(0.0));
            }
        }
        map
    }
}

/// Everything `run_algorithm1` consumes: initial features, per-frame
/// saliency windows, the ID bank, and ground-truth masks.
#[derive(Debug, Clone)]
pub struct SynthesizedScenario {
    pub features: FeatureSequence,
    pub saliency: Vec<AttentionMapStack>,
    pub bank: IdBank,
    pub truth_masks: MaskSequence,
}

/// Deterministic synthesis: clean features plus drift noise inside the
/// region, one initial saliency map per frame, and an identity-grid
/// bank entry.
pub fn synthesize_scenario(scenario: &StoryScenario) -> Result<SynthesizedScenario> {
    let mut features = scenario.clean_features();
    if scenario.drift_amplitude > 0.0 {
        let mut drift_rng = scenario.root.fork("init-drift");
        for frame in 0..scenario.t {
            let rect = scenario.subject_region[frame];
            let grid = features.frame_mut(frame);
            for row in 0..scenario.h {
                for col in 0..scenario.w {
                    if !rect.contains(row, col) {
                        continue;
                    }
                    let p = row * scenario.w + col;
                    for c in 0..scenario.d {
                        grid[p * scenario.d + c] += scenario.drift_amplitude * drift_rng.normal();
                    }
                }
            }
        }
    }
    features.check_finite()?;

    let mut saliency_rng = scenario.root.fork("init-saliency");
    let mut saliency = Vec::with_capacity(scenario.t);
    for frame in 0..scenario.t {
        let mut stack = AttentionMapStack::new(scenario.h, scenario.w, DEFAULT_WINDOW)?;
        stack.push(scenario.saliency_map(frame, &mut saliency_rng))?;
        saliency.push(stack);
    }

    let mut bank_grid = vec![0.0; scenario.h * scenario.w * scenario.d];
    for p in 0..scenario.h * scenario.w {
        bank_grid[p * scenario.d..(p + 1) * scenario.d]
            .copy_from_slice(&scenario.identity_vector);
    }
    let bank = IdBank::new(scenario.h, scenario.w, scenario.d, vec![bank_grid])?;

    Ok(SynthesizedScenario {
        features,
        saliency,
        bank,
        truth_masks: scenario.truth_masks(),
    })
}

/// Outcome of one full sampling run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run_id: String,
    pub scenario_id: String,
    pub alpha: f64,
    pub prior: PriorSpec,
    pub seed: u64,
    pub steps: usize,
    pub step_reports: Vec<MetricReport>,
    pub final_report: MetricReport,
    /// Mean |change| of ground-truth background positions between
    /// consecutive smoothed states; the observable for sigma_b.
    pub mean_background_change: f64,
    /// Per-step background changes behind the mean (from step 1 on).
    #[serde(skip)]
    pub background_changes: Vec<f64>,
    /// Mean IoU of the Otsu masks against the ground-truth region.
    pub mean_mask_iou: f64,
    /// Across-frame variance of the subject-mean features, last step.
    pub final_subject_variance: f64,
    pub diverged_at: Option<usize>,
    /// State after the last completed step.
    #[serde(skip)]
    pub final_state: FeatureSequence,
    /// Wall-clock duration; never serialized into CSV (reports must be
    /// byte-identical across reruns).
    #[serde(skip)]
    pub wall_seconds: f64,
}

fn nan_report(t: usize) -> MetricReport {
    MetricReport {
        t,
        r: f64::NAN,
        d: f64::NAN,
        r_hat: f64::NAN,
        d_hat: f64::NAN,
        s: f64::NAN,
        adjacent_cosine: f64::NAN,
    }
}

/// Per-frame mean feature vector of the masked subject region. Frames
/// whose mask is empty fall back to the full-frame mean.
pub fn subject_mean_trajectory(
    features: &FeatureSequence,
    masks: &MaskSequence,
) -> FeatureSequence {
    let (t, h, w, d) = features.shape();
    let mut data = Vec::with_capacity(t * d);
    for frame in 0..t {
        let grid = features.frame(frame);
        let mask = masks.frame(frame);
        let mut mean = vec![0.0; d];
        let mut count = 0usize;
        for p in 0..h * w {
            if mask[p] == 1 {
                count += 1;
                for c in 0..d {
                    mean[c] += grid[p * d + c];
                }
            }
        }
        if count == 0 {
            for v in grid.chunks_exact(d) {
                for c in 0..d {
                    mean[c] += v[c];
                }
            }
            count = h * w;
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }
        data.extend_from_slice(&mean);
    }
    FeatureSequence::new(t, 1, 1, d, data).expect("means of finite values are finite")
}

fn trajectory_report(traj: &FeatureSequence, cfg: &MetricConfig) -> Result<MetricReport> {
    let r = temporal_regularity(traj)?;
    let d = first_order_variation(traj)?;
    let (r_hat, d_hat, s) = storytelling_quality(r, d, cfg)?;
    // A zero-norm frame leaves the cosine undefined; report NaN rather
    // than failing the whole run.
    let adjacent_cosine = adjacent_similarity(traj).unwrap_or(f64::NAN);
    Ok(MetricReport {
        t: traj.frames(),
        r,
        d,
        r_hat,
        d_hat,
        s,
        adjacent_cosine,
    })
}

fn mask_iou(predicted: &MaskSequence, truth: &MaskSequence) -> f64 {
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (&a, &b) in predicted.data().iter().zip(truth.data()) {
        if a == 1 && b == 1 {
            intersection += 1;
        }
        if a == 1 || b == 1 {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}

fn background_change(current: &FeatureSequence, previous: &FeatureSequence, truth: &MaskSequence) -> f64 {
    let (t, h, w, d) = current.shape();
    let mut total = 0.0;
    let mut count = 0usize;
    for frame in 0..t {
        let cur = current.frame(frame);
        let prev = previous.frame(frame);
        let mask = truth.frame(frame);
        for p in 0..h * w {
            if mask[p] == 1 {
                continue;
            }
            for c in 0..d {
                total += (cur[p * d + c] - prev[p * d + c]).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn across_frame_variance(traj: &FeatureSequence) -> f64 {
    let (t, _, _, d) = traj.shape();
    let mut total = 0.0;
    for c in 0..d {
        let mean: f64 = (0..t).map(|f| traj.frame(f)[c]).sum::<f64>() / t as f64;
        let var: f64 = (0..t)
            .map(|f| {
                let dev = traj.frame(f)[c] - mean;
                dev * dev
            })
            .sum::<f64>()
            / t as f64;
        total += var;
    }
    total / d as f64
}

/// Runs the full per-step loop for `steps` sampling steps.
///
/// Numeric blow-ups (operator overflow, non-finite attention or
/// denoiser output) end the run early and are recorded as a divergence,
/// not an error. Identical scenario seeds replay identical runs.
pub fn run_algorithm1(
    scenario: &StoryScenario,
    params: &ControlParams,
    prior: &PriorSpec,
    schedule: &OperatorSchedule,
    steps: usize,
    proj: &ProjectionSet,
    metric_cfg: &MetricConfig,
) -> Result<RunRecord> {
    let started = Instant::now();
    let synth = synthesize_scenario(scenario)?;
    let mut stacks = synth.saliency;
    let bank = synth.bank;
    let truth = synth.truth_masks;
    let target = scenario.clean_features();
    let mut state = synth.features;

    let mut op_rng = scenario.root.fork("operator");
    let mut saliency_rng = scenario.root.fork("saliency");
    let mut drift_rng = scenario.root.fork("drift");

    let mut step_reports = Vec::with_capacity(steps);
    let mut diverged_at = None;
    let mut background_changes = Vec::new();
    let mut iou_sum = 0.0;
    let mut iou_count = 0usize;
    let mut final_subject_variance = f64::NAN;
    let mut prev_phys: Option<FeatureSequence> = None;

    'steps: for step in 0..steps {
        // Collect fresh saliency, then rebuild the masks.
        let mut mask_bits = Vec::with_capacity(scenario.t * scenario.h * scenario.w);
        for (frame, stack) in stacks.iter_mut().enumerate() {
            stack.push(scenario.saliency_map(frame, &mut saliency_rng))?;
            let aggregated = stack.aggregate()?;
            let threshold = otsu_threshold(&aggregated, 256)?;
            mask_bits.extend(binarize(&aggregated, threshold));
        }
        let masks = MaskSequence::new(scenario.t, scenario.h, scenario.w, mask_bits)?;
        iou_sum += mask_iou(&masks, &truth);
        iou_count += 1;

        // Physics operator on the current states.
        let rng_opt = params.noise_enabled().then_some(&mut op_rng);
        let phys = match run_physics_operator(state.clone(), &masks, prior, params, schedule, rng_opt)
        {
            Ok(p) => p,
            Err(Error::NumericOverflow { .. }) => {
                diverged_at = Some(step);
                break 'steps;
            }
            Err(e) => return Err(e),
        };

        // Record the smoothed trajectory through the current masks.
        let traj = subject_mean_trajectory(&phys, &masks);
        step_reports.push(trajectory_report(&traj, metric_cfg)?);
        final_subject_variance = across_frame_variance(&traj);
        if let Some(prev) = &prev_phys {
            background_changes.push(background_change(&phys, prev, &truth));
        }
        prev_phys = Some(phys.clone());

        // Identity enhancement of the raw states feeds K and V.
        let s_id = inject_identity(&state, bank.entry(step), &masks, params)?;
        let attended = match disentangled_attention(&phys, &s_id, proj) {
            Ok(a) => a,
            Err(Error::NonFiniteLogits { .. }) | Err(Error::NonFiniteFeature { .. }) => {
                diverged_at = Some(step);
                break 'steps;
            }
            Err(e) => return Err(e),
        };

        // Synthetic denoiser: contract toward the target, re-inject drift.
        let mut next = attended.data().to_vec();
        for (v, goal) in next.iter_mut().zip(target.data()) {
            *v += DENOISER_ETA * (goal - *v);
        }
        if scenario.drift_amplitude > 0.0 {
            for frame in 0..scenario.t {
                let rect = scenario.subject_region[frame];
                let base = frame * scenario.h * scenario.w * scenario.d;
                for row in 0..scenario.h {
                    for col in 0..scenario.w {
                        if !rect.contains(row, col) {
                            continue;
                        }
                        let p = row * scenario.w + col;
                        for c in 0..scenario.d {
                            next[base + p * scenario.d + c] +=
                                scenario.drift_amplitude * drift_rng.normal();
                        }
                    }
                }
            }
        }
        state = match state.with_data(next) {
            Ok(s) => s,
            Err(Error::NonFiniteFeature { .. }) => {
                diverged_at = Some(step);
                break 'steps;
            }
            Err(e) => return Err(e),
        };
    }

    let final_report = step_reports
        .last()
        .copied()
        .unwrap_or_else(|| nan_report(scenario.t));
    Ok(RunRecord {
        run_id: format!("{}-{}-a{}", scenario.id, prior.kind.name(), params.alpha),
        scenario_id: scenario.id.clone(),
        alpha: params.alpha,
        prior: *prior,
        seed: scenario.seed(),
        steps,
        step_reports,
        final_report,
        mean_background_change: if background_changes.is_empty() {
            0.0
        } else {
            background_changes.iter().sum::<f64>() / background_changes.len() as f64
        },
        background_changes,
        mean_mask_iou: if iou_count == 0 {
            0.0
        } else {
            iou_sum / iou_count as f64
        },
        final_subject_variance,
        diverged_at,
        final_state: state,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One run per update rule, sharing the scenario seed so every arm sees
/// the same noise draws.
pub fn ablation_priors(
    scenario: &StoryScenario,
    params: &ControlParams,
    schedule: &OperatorSchedule,
    steps: usize,
    metric_cfg: &MetricConfig,
) -> Result<Vec<RunRecord>> {
    let mut proj_rng = scenario.root.fork("projections");
    let proj = ProjectionSet::seeded_orthogonal(scenario.d, &mut proj_rng)?;
    PriorSpec::zoo(params, schedule)
        .iter()
        .map(|spec| run_algorithm1(scenario, params, spec, schedule, steps, &proj, metric_cfg))
        .collect()
}

/// One run per alpha with shared seeds; parameters and the prior's
/// alpha-scaled constants are re-derived per arm.
pub fn sweep_alpha(
    scenario: &StoryScenario,
    alphas: &[f64],
    constants: BaseConstants,
    prior: &PriorTemplate,
    schedule: &OperatorSchedule,
    steps: usize,
    metric_cfg: &MetricConfig,
) -> Result<Vec<RunRecord>> {
    let mut proj_rng = scenario.root.fork("projections");
    let proj = ProjectionSet::seeded_orthogonal(scenario.d, &mut proj_rng)?;
    alphas
        .iter()
        .map(|&alpha| {
            let params = derive_params(alpha, constants)?;
            let spec = prior.resolve(&params, schedule);
            run_algorithm1(scenario, &params, &spec, schedule, steps, &proj, metric_cfg)
        })
        .collect()
}

/// Index-ordered parallel map with a thread cap; results merge by input
/// position, never by completion order.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("every index was processed")
        })
        .collect()
}
