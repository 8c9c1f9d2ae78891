//! Straight-line reference implementations used as test oracles.
//!
//! These deliberately share no code with the library: plain nested
//! loops over `Vec<Vec<f64>>` frames, explicit modulo indexing, and the
//! update formulas written out term by term.

use physattn_core::RngHandle;

#[derive(Debug, Clone, Copy)]
pub enum RefFlux {
    Linear(f64),
    Quadratic,
}

#[derive(Debug, Clone, Copy)]
pub struct RefParams {
    pub nu: f64,
    pub dtau: f64,
    pub wave_c: f64,
    pub elastic_c: f64,
    pub flux: RefFlux,
    pub insulated: bool,
}

fn flux_value(flux: RefFlux, s: f64) -> f64 {
    match flux {
        RefFlux::Linear(speed) => speed * s,
        RefFlux::Quadratic => 0.5 * s * s,
    }
}

/// One update step of the named rule; `frames` holds T flat (H*W*d)
/// grids, `masks` T flat (H*W) bit grids.
#[allow(clippy::needless_range_loop)] // explicit indices on purpose
pub fn reference_step(
    kind: &str,
    frames: &[Vec<f64>],
    prev: Option<&[Vec<f64>]>,
    masks: &[Vec<u8>],
    d: usize,
    p: &RefParams,
) -> Vec<Vec<f64>> {
    let t_count = frames.len();
    let positions = masks[0].len();
    let mut out: Vec<Vec<f64>> = frames.to_vec();
    for t in 0..t_count {
        let tn = (t + 1) % t_count;
        let tp = (t + t_count - 1) % t_count;
        for pos in 0..positions {
            if p.insulated && masks[t][pos] == 0 {
                continue;
            }
            for c in 0..d {
                let i = pos * d + c;
                let cur = frames[t][i];
                let mut next = frames[tn][i];
                let mut prevv = frames[tp][i];
                if p.insulated {
                    if masks[tn][pos] == 0 {
                        next = cur;
                    }
                    if masks[tp][pos] == 0 {
                        prevv = cur;
                    }
                }
                out[t][i] = match kind {
                    "ori" => cur,
                    "burgers" => cur - p.dtau * cur * (next - prevv) / 2.0,
                    "wave" => {
                        2.0 * cur - prev.expect("wave needs prev")[t][i]
                            + p.wave_c * (next - 2.0 * cur + prevv)
                    }
                    "conservation" => {
                        cur - p.dtau * (flux_value(p.flux, next) - flux_value(p.flux, prevv)) / 2.0
                    }
                    "elasticity" => {
                        2.0 * cur - prev.expect("elasticity needs prev")[t][i]
                            + p.elastic_c * (next - 2.0 * cur + prevv)
                    }
                    "heat" => cur + p.dtau * p.nu * (next - 2.0 * cur + prevv),
                    other => panic!("unknown rule {other}"),
                };
            }
        }
    }
    out
}

/// Plain per-frame self-attention written from the definition: project,
/// scale Q.K, max-subtracted softmax, weight V.
pub fn reference_self_attention(
    frames: &[Vec<f64>],
    tokens: usize,
    d: usize,
    w_q: &[f64],
    w_k: &[f64],
    w_v: &[f64],
) -> Vec<Vec<f64>> {
    let scale = 1.0 / (d as f64).sqrt();
    let project = |x: &[f64], w: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; tokens * d];
        for tok in 0..tokens {
            for c_in in 0..d {
                for c_out in 0..d {
                    out[tok * d + c_out] += x[tok * d + c_in] * w[c_in * d + c_out];
                }
            }
        }
        out
    };
    frames
        .iter()
        .map(|frame| {
            let q = project(frame, w_q);
            let k = project(frame, w_k);
            let v = project(frame, w_v);
            let mut out = vec![0.0; tokens * d];
            for qi in 0..tokens {
                let mut logits = vec![0.0; tokens];
                let mut max_logit = f64::NEG_INFINITY;
                for ki in 0..tokens {
                    let mut dot = 0.0;
                    for c in 0..d {
                        dot += q[qi * d + c] * k[ki * d + c];
                    }
                    let scaled = scale * dot;
                    if scaled > max_logit {
                        max_logit = scaled;
                    }
                    logits[ki] = scaled;
                }
                let mut denom = 0.0;
                for l in logits.iter_mut() {
                    *l = (*l - max_logit).exp();
                    denom += *l;
                }
                for ki in 0..tokens {
                    let weight = logits[ki] / denom;
                    for c in 0..d {
                        out[qi * d + c] += weight * v[ki * d + c];
                    }
                }
            }
            out
        })
        .collect()
}

pub struct RandomInstance {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub frames: Vec<Vec<f64>>,
    pub prev: Vec<Vec<f64>>,
    pub masks: Vec<Vec<u8>>,
}

/// Random stencil instance: T in 3..=8, H and W in 1..=2, d in 1..=4,
/// mixed masks with roughly 70% coverage.
pub fn random_instance(rng: &mut RngHandle) -> RandomInstance {
    let t = 3 + (rng.next_u64() % 6) as usize;
    let h = 1 + (rng.next_u64() % 2) as usize;
    let w = 1 + (rng.next_u64() % 2) as usize;
    let d = 1 + (rng.next_u64() % 4) as usize;
    let frames = (0..t)
        .map(|_| (0..h * w * d).map(|_| rng.normal()).collect())
        .collect();
    let prev = (0..t)
        .map(|_| (0..h * w * d).map(|_| rng.normal()).collect())
        .collect();
    let masks = (0..t)
        .map(|_| (0..h * w).map(|_| (rng.uniform() < 0.7) as u8).collect())
        .collect();
    RandomInstance {
        t,
        h,
        w,
        d,
        frames,
        prev,
        masks,
    }
}
