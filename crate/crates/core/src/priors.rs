//! The physics operator: temporal stencils over the frame axis.
//!
//! Frames are treated as a 1-D periodic ring; each prior advances the
//! whole sequence one virtual-time step. Insulation substitutes
//! out-of-mask neighbors with the current frame (a zero-flux boundary)
//! and gates the deterministic update by the current mask, so masked-out
//! positions never move. Region-aware noise is added after the
//! deterministic term for every prior kind.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ControlParams, OperatorSchedule};
use crate::rng::RngHandle;
use crate::sequence::{validate_pair, FeatureSequence, MaskSequence};

/// Update-rule selector; serialized names are the ablation row labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    #[serde(rename = "ori")]
    Identity,
    Burgers,
    Wave,
    Conservation,
    Elasticity,
    #[serde(rename = "heat")]
    HeatDiffusion,
}

impl PriorKind {
    pub const ALL: [PriorKind; 6] = [
        PriorKind::Identity,
        PriorKind::Burgers,
        PriorKind::Wave,
        PriorKind::Conservation,
        PriorKind::Elasticity,
        PriorKind::HeatDiffusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PriorKind::Identity => "ori",
            PriorKind::Burgers => "burgers",
            PriorKind::Wave => "wave",
            PriorKind::Conservation => "conservation",
            PriorKind::Elasticity => "elasticity",
            PriorKind::HeatDiffusion => "heat",
        }
    }

    /// Wave and Elasticity carry velocity, so they thread two time levels.
    pub fn is_two_level(self) -> bool {
        matches!(self, PriorKind::Wave | PriorKind::Elasticity)
    }
}

/// Flux function for the conservation-law prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Flux {
    Linear { speed: f64 },
    Quadratic,
}

impl Flux {
    fn apply(self, s: f64) -> f64 {
        match self {
            Flux::Linear { speed } => speed * s,
            Flux::Quadratic => 0.5 * s * s,
        }
    }
}

/// A fully resolved update rule: kind, constants, and masking policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub wave_c: f64,
    pub elastic_c: f64,
    pub flux: Flux,
    pub insulated: bool,
}

impl PriorSpec {
    /// Alpha-controlled defaults: the second-order constants follow the
    /// heat coefficient (`C = C_e = dtau * nu`) and the flux is linear
    /// unit-speed, so the ablation compares kernels under one schedule.
    pub fn alpha_scaled(
        kind: PriorKind,
        params: &ControlParams,
        schedule: &OperatorSchedule,
    ) -> Self {
        let c = schedule.dtau * params.nu;
        PriorSpec {
            kind,
            wave_c: c,
            elastic_c: c,
            flux: Flux::Linear { speed: 1.0 },
            insulated: true,
        }
    }

    /// One spec per ablation row, sharing constants.
    pub fn zoo(params: &ControlParams, schedule: &OperatorSchedule) -> Vec<PriorSpec> {
        PriorKind::ALL
            .iter()
            .map(|&kind| PriorSpec::alpha_scaled(kind, params, schedule))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("wave_c", self.wave_c), ("elastic_c", self.elastic_c)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeConstant { name, value: v });
            }
        }
        if let Flux::Linear { speed } = self.flux {
            if !speed.is_finite() {
                return Err(Error::NegativeConstant {
                    name: "flux speed",
                    value: speed,
                });
            }
        }
        Ok(())
    }
}

/// Config-file form of a prior: unset constants resolve to the
/// alpha-scaled defaults at run time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorTemplate {
    pub kind: PriorKind,
    #[serde(default)]
    pub wave_c: Option<f64>,
    #[serde(default)]
    pub elastic_c: Option<f64>,
    #[serde(default = "default_flux")]
    pub flux: Flux,
    #[serde(default = "default_insulated")]
    pub insulated: bool,
}

fn default_flux() -> Flux {
    Flux::Linear { speed: 1.0 }
}

fn default_insulated() -> bool {
    true
}

impl PriorTemplate {
    pub fn heat() -> Self {
        PriorTemplate {
            kind: PriorKind::HeatDiffusion,
            wave_c: None,
            elastic_c: None,
            flux: default_flux(),
            insulated: true,
        }
    }

    pub fn resolve(&self, params: &ControlParams, schedule: &OperatorSchedule) -> PriorSpec {
        let scaled = schedule.dtau * params.nu;
        PriorSpec {
            kind: self.kind,
            wave_c: self.wave_c.unwrap_or(scaled),
            elastic_c: self.elastic_c.unwrap_or(scaled),
            flux: self.flux,
            insulated: self.insulated,
        }
    }
}

/// Per-frame, per-position noise intensity: sigma_s inside the mask,
/// sigma_b outside, broadcast over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    t: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl NoiseField {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

pub fn build_noise_field(masks: &MaskSequence, params: &ControlParams) -> NoiseField {
    let (t, h, w) = masks.shape();
    let data = masks
        .data()
        .iter()
        .map(|&m| if m == 1 { params.sigma_s } else { params.sigma_b })
        .collect();
    NoiseField { t, h, w, data }
}

fn periodic(t: usize, step: isize, total: usize) -> usize {
    (t as isize + step).rem_euclid(total as isize) as usize
}

/// Temporal neighbor direction along the frame ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn step(self) -> isize {
        match self {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }
}

/// Effective neighbor with zero-flux substitution: where the neighbor
/// frame's mask is 0 the current frame's value is used instead.
pub fn effective_neighbor(
    features: &FeatureSequence,
    masks: &MaskSequence,
    t: usize,
    direction: Direction,
) -> Result<Vec<f64>> {
    validate_pair(features, masks)?;
    let (frames, _, _, d) = features.shape();
    let nb = periodic(t, direction.step(), frames);
    let cur = features.frame(t);
    let neighbor = features.frame(nb);
    let mask = masks.frame(nb);
    let mut out = vec![0.0; features.frame_len()];
    for p in 0..features.positions() {
        let src = if mask[p] == 1 { neighbor } else { cur };
        out[p * d..(p + 1) * d].copy_from_slice(&src[p * d..(p + 1) * d]);
    }
    Ok(out)
}

/// Second difference over the frame ring with substituted neighbors.
///
/// Returns the raw stencil value; current-mask gating is applied by the
/// update step, not here.
pub fn insulated_laplacian(
    features: &FeatureSequence,
    masks: &MaskSequence,
    t: usize,
) -> Result<Vec<f64>> {
    let next = effective_neighbor(features, masks, t, Direction::Forward)?;
    let prev = effective_neighbor(features, masks, t, Direction::Backward)?;
    let cur = features.frame(t);
    Ok((0..cur.len())
        .map(|i| next[i] - 2.0 * cur[i] + prev[i])
        .collect())
}

struct StencilFrame<'a> {
    cur: &'a [f64],
    next: &'a [f64],
    prev: &'a [f64],
    mask_cur: &'a [u8],
    mask_next: &'a [u8],
    mask_prev: &'a [u8],
}

impl<'a> StencilFrame<'a> {
    fn gather(state: &'a FeatureSequence, masks: &'a MaskSequence, t: usize) -> Self {
        let frames = state.frames();
        let next = periodic(t, 1, frames);
        let prev = periodic(t, -1, frames);
        StencilFrame {
            cur: state.frame(t),
            next: state.frame(next),
            prev: state.frame(prev),
            mask_cur: masks.frame(t),
            mask_next: masks.frame(next),
            mask_prev: masks.frame(prev),
        }
    }

    /// Substituted neighbor pair at one element, honoring insulation.
    fn neighbors(&self, p: usize, i: usize, insulated: bool) -> (f64, f64) {
        let next = if !insulated || self.mask_next[p] == 1 {
            self.next[i]
        } else {
            self.cur[i]
        };
        let prev = if !insulated || self.mask_prev[p] == 1 {
            self.prev[i]
        } else {
            self.cur[i]
        };
        (next, prev)
    }
}

/// One virtual-time step of the selected prior.
///
/// Returns `(new_state, state)` so the caller can thread two time
/// levels. `prev_state` is required (and shape-checked) for the
/// two-level rules; `rng` is required exactly when noise is enabled.
pub fn step_prior(
    state: FeatureSequence,
    prev_state: Option<&FeatureSequence>,
    masks: &MaskSequence,
    spec: &PriorSpec,
    params: &ControlParams,
    schedule: &OperatorSchedule,
    rng: Option<&mut RngHandle>,
) -> Result<(FeatureSequence, FeatureSequence)> {
    validate_pair(&state, masks)?;
    spec.validate()?;
    schedule.validate()?;
    let prior = spec.kind.name();

    let prev_state = if spec.kind.is_two_level() {
        let prev = prev_state.ok_or(Error::MissingPrevState { prior })?;
        if prev.shape() != state.shape() {
            let (_, h, w, d) = prev.shape();
            let (_, sh, sw, sd) = state.shape();
            return Err(Error::GridShapeMismatch {
                expected: (sh, sw, sd),
                got: (h, w, d),
            });
        }
        Some(prev)
    } else {
        None
    };

    let noise_on = params.noise_enabled();
    let mut rng = match (noise_on, rng) {
        (true, Some(r)) => Some(r),
        (true, None) => return Err(Error::MissingRng),
        (false, r) => {
            // Noise disabled: never consume draws, even if a handle is given.
            let _ = r;
            None
        }
    };

    let (frames, _, _, d) = state.shape();
    let dtau = schedule.dtau;
    // Zero-coefficient heat is an exact no-op, like the ori baseline.
    let det_noop = matches!(spec.kind, PriorKind::Identity)
        || (matches!(spec.kind, PriorKind::HeatDiffusion) && dtau * params.nu == 0.0);

    let mut new_data = state.data().to_vec();
    for t in 0..frames {
        let frame = StencilFrame::gather(&state, masks, t);
        let out = &mut new_data[t * state.frame_len()..(t + 1) * state.frame_len()];
        if !det_noop {
            for p in 0..state.positions() {
                if spec.insulated && frame.mask_cur[p] == 0 {
                    continue; // gated: masked-out positions hold their value
                }
                for c in 0..d {
                    let i = p * d + c;
                    let cur = frame.cur[i];
                    let (next, prev) = frame.neighbors(p, i, spec.insulated);
                    out[i] = match spec.kind {
                        PriorKind::Identity => cur,
                        PriorKind::Burgers => cur - dtau * cur * (next - prev) / 2.0,
                        PriorKind::Wave => {
                            let lap = next - 2.0 * cur + prev;
                            2.0 * cur - prev_state.unwrap().frame(t)[i] + spec.wave_c * lap
                        }
                        PriorKind::Conservation => {
                            cur - dtau * (spec.flux.apply(next) - spec.flux.apply(prev)) / 2.0
                        }
                        PriorKind::Elasticity => {
                            let lap = next - 2.0 * cur + prev;
                            2.0 * cur - prev_state.unwrap().frame(t)[i] + spec.elastic_c * lap
                        }
                        PriorKind::HeatDiffusion => {
                            let lap = next - 2.0 * cur + prev;
                            cur + dtau * params.nu * lap
                        }
                    };
                }
            }
        }
    }

    if noise_on {
        let sigma = build_noise_field(masks, params);
        let amp = (2.0 * dtau).sqrt();
        let rng = rng.as_mut().expect("checked above");
        let frame_len = state.frame_len();
        let positions = state.positions();
        for t in 0..frames {
            let sig = sigma.frame(t);
            let out = &mut new_data[t * frame_len..(t + 1) * frame_len];
            for p in 0..positions {
                for c in 0..d {
                    // Draw unconditionally so the stream is mask-independent.
                    let eps = rng.normal();
                    if sig[p] != 0.0 {
                        out[p * d + c] += amp * sig[p] * eps;
                    }
                }
            }
        }
    }

    for &v in &new_data {
        if !v.is_finite() {
            return Err(Error::NumericOverflow {
                prior,
                iteration: 0,
            });
        }
    }
    let new_state = state.with_data(new_data)?;
    Ok((new_state, state))
}

/// Runs the virtual-time loop: n_iters steps of `step_prior`, seeding the
/// second time level with the input state (zero initial velocity).
pub fn run_physics_operator(
    state: FeatureSequence,
    masks: &MaskSequence,
    spec: &PriorSpec,
    params: &ControlParams,
    schedule: &OperatorSchedule,
    mut rng: Option<&mut RngHandle>,
) -> Result<FeatureSequence> {
    let mut current = state;
    let mut previous: Option<FeatureSequence> = if spec.kind.is_two_level() {
        Some(current.clone())
    } else {
        None
    };
    for k in 0..schedule.n_iters {
        let (next, old) = step_prior(
            current,
            previous.as_ref(),
            masks,
            spec,
            params,
            schedule,
            rng.as_deref_mut(),
        )
        .map_err(|e| e.at_iteration(k))?;
        previous = Some(old);
        current = next;
    }
    Ok(current)
}
