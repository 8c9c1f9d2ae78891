//! Disentangled self-attention: queries from smoothed states, keys and
//! values from identity-enhanced states. Attention runs per frame over
//! the H*W spatial tokens; cross-frame mixing is the operator's job.

use crate::error::{Error, Result};
use crate::params::ControlParams;
use crate::rng::RngHandle;
use crate::sequence::{validate_pair, FeatureSequence, MaskSequence};

/// Per-sampling-step reference feature grids anchoring subject identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdBank {
    h: usize,
    w: usize,
    d: usize,
    entries: Vec<Vec<f64>>,
}

impl IdBank {
    pub fn new(h: usize, w: usize, d: usize, entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyBank);
        }
        for entry in &entries {
            if entry.len() != h * w * d {
                return Err(Error::DataLength {
                    expected: h * w * d,
                    got: entry.len(),
                });
            }
            if let Some(i) = entry.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature { frame: 0, index: i });
            }
        }
        Ok(IdBank { h, w, d, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false // enforced non-empty at construction
    }

    pub fn entry(&self, step: usize) -> &[f64] {
        &self.entries[step % self.entries.len()]
    }

    pub fn grid_shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.d)
    }
}

/// Square projections for Q, K, V plus the 1/sqrt(d) logit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    d: usize,
    w_q: Vec<f64>,
    w_k: Vec<f64>,
    w_v: Vec<f64>,
    scale: f64,
}

impl ProjectionSet {
    /// Row-major d*d matrices.
    pub fn new(d: usize, w_q: Vec<f64>, w_k: Vec<f64>, w_v: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::ZeroDimension { name: "d" });
        }
        for m in [&w_q, &w_k, &w_v] {
            if m.len() != d * d {
                return Err(Error::BadProjection { d, got: m.len() });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::BadProjection { d, got: m.len() });
            }
        }
        Ok(ProjectionSet {
            d,
            w_q,
            w_k,
            w_v,
            scale: 1.0 / (d as f64).sqrt(),
        })
    }

    pub fn identity(d: usize) -> Result<Self> {
        let mut eye = vec![0.0; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        ProjectionSet::new(d, eye.clone(), eye.clone(), eye)
    }

    /// Three independent random orthogonal matrices (QR by modified
    /// Gram-Schmidt on a Gaussian draw).
    pub fn seeded_orthogonal(d: usize, rng: &mut RngHandle) -> Result<Self> {
        let draw = |label: &str| -> Vec<f64> {
            let mut child = rng.fork(label);
            random_orthogonal(d, &mut child)
        };
        let w_q = draw("w_q");
        let w_k = draw("w_k");
        let w_v = draw("w_v");
        ProjectionSet::new(d, w_q, w_k, w_v)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

fn random_orthogonal(d: usize, rng: &mut RngHandle) -> Vec<f64> {
    let mut m: Vec<f64> = (0..d * d).map(|_| rng.normal()).collect();
    // Orthonormalize rows in place.
    for i in 0..d {
        for j in 0..i {
            let dot: f64 = (0..d).map(|c| m[i * d + c] * m[j * d + c]).sum();
            for c in 0..d {
                m[i * d + c] -= dot * m[j * d + c];
            }
        }
        let norm: f64 = (0..d).map(|c| m[i * d + c] * m[i * d + c]).sum::<f64>().sqrt();
        if norm < 1e-12 {
            // Degenerate draw; fall back to a unit basis row.
            for c in 0..d {
                m[i * d + c] = if c == i { 1.0 } else { 0.0 };
            }
        } else {
            for c in 0..d {
                m[i * d + c] /= norm;
            }
        }
    }
    m
}

/// Blends the bank entry into masked positions: s_inj = (1-lambda) s +
/// lambda bank, then s_id = mask ? s_inj : s. lambda = 0 returns the
/// input unchanged.
pub fn inject_identity(
    state: &FeatureSequence,
    bank_entry: &[f64],
    masks: &MaskSequence,
    params: &ControlParams,
) -> Result<FeatureSequence> {
    validate_pair(state, masks)?;
    let (frames, h, w, d) = state.shape();
    if bank_entry.len() != h * w * d {
        return Err(Error::DataLength {
            expected: h * w * d,
            got: bank_entry.len(),
        });
    }
    let lambda = params.lambda_id;
    if lambda == 0.0 {
        return Ok(state.clone());
    }
    let mut data = state.data().to_vec();
    for t in 0..frames {
        let mask = masks.frame(t);
        let out = &mut data[t * h * w * d..(t + 1) * h * w * d];
        for (p, &bit) in mask.iter().enumerate() {
            if bit == 0 {
                continue; // background untouched
            }
            for c in 0..d {
                let i = p * d + c;
                out[i] = (1.0 - lambda) * out[i] + lambda * bank_entry[i];
            }
        }
    }
    state.with_data(data)
}

/// Scaled dot-product attention per frame over spatial tokens.
///
/// Q comes from `q_source`, K and V from `kv_source`; softmax uses
/// max-subtraction so rows stay a probability simplex.
pub fn disentangled_attention(
    q_source: &FeatureSequence,
    kv_source: &FeatureSequence,
    proj: &ProjectionSet,
) -> Result<FeatureSequence> {
    if q_source.shape() != kv_source.shape() {
        let (_, h, w, d) = kv_source.shape();
        let (_, qh, qw, qd) = q_source.shape();
        return Err(Error::GridShapeMismatch {
            expected: (qh, qw, qd),
            got: (h, w, d),
        });
    }
    let (frames, h, w, d) = q_source.shape();
    if d != proj.d {
        return Err(Error::BadProjection {
            d,
            got: proj.d * proj.d,
        });
    }
    let tokens = h * w;
    let mut out = vec![0.0; frames * tokens * d];

    let mut q = vec![0.0; tokens * d];
    let mut k = vec![0.0; tokens * d];
    let mut v = vec![0.0; tokens * d];
    let mut logits = vec![0.0; tokens];

    for t in 0..frames {
        project(q_source.frame(t), &proj.w_q, tokens, d, &mut q);
        project(kv_source.frame(t), &proj.w_k, tokens, d, &mut k);
        project(kv_source.frame(t), &proj.w_v, tokens, d, &mut v);

        let frame_out = &mut out[t * tokens * d..(t + 1) * tokens * d];
        for qi in 0..tokens {
            let q_row = &q[qi * d..(qi + 1) * d];
            let mut max_logit = f64::NEG_INFINITY;
            for (ki, logit) in logits.iter_mut().enumerate() {
                let k_row = &k[ki * d..(ki + 1) * d];
                let dot: f64 = q_row.iter().zip(k_row).map(|(a, b)| a * b).sum();
                let scaled = proj.scale * dot;
                if !scaled.is_finite() {
                    return Err(Error::NonFiniteLogits { frame: t });
                }
                if scaled > max_logit {
                    max_logit = scaled;
                }
                *logit = scaled;
            }
            let mut denom = 0.0;
            for logit in logits.iter_mut() {
                *logit = (*logit - max_logit).exp();
                denom += *logit;
            }
            let row_out = &mut frame_out[qi * d..(qi + 1) * d];
            for (ki, &weight_raw) in logits.iter().enumerate() {
                let weight = weight_raw / denom;
                let v_row = &v[ki * d..(ki + 1) * d];
                for (o, &vv) in row_out.iter_mut().zip(v_row) {
                    *o += weight * vv;
                }
            }
        }
    }
    q_source.with_data(out)
}

/// token-major X (tokens x d) times row-major W (d x d).
fn project(x: &[f64], w: &[f64], tokens: usize, d: usize, out: &mut [f64]) {
    out.fill(0.0);
    for tk in 0..tokens {
        let x_row = &x[tk * d..(tk + 1) * d];
        let out_row = &mut out[tk * d..(tk + 1) * d];
        for (c_in, &xv) in x_row.iter().enumerate() {
            let w_row = &w[c_in * d..(c_in + 1) * d];
            for (o, &wv) in out_row.iter_mut().zip(w_row) {
                *o += xv * wv;
            }
        }
    }
}

/// Attention weights for one frame; exposed for row-stochasticity checks.
pub fn attention_rows(
    q_source: &FeatureSequence,
    kv_source: &FeatureSequence,
    proj: &ProjectionSet,
    t: usize,
) -> Result<Vec<Vec<f64>>> {
    if q_source.shape() != kv_source.shape() {
        let (_, h, w, d) = kv_source.shape();
        let (_, qh, qw, qd) = q_source.shape();
        return Err(Error::GridShapeMismatch {
            expected: (qh, qw, qd),
            got: (h, w, d),
        });
    }
    let (_, h, w, d) = q_source.shape();
    let tokens = h * w;
    let mut q = vec![0.0; tokens * d];
    let mut k = vec![0.0; tokens * d];
    project(q_source.frame(t), &proj.w_q, tokens, d, &mut q);
    project(kv_source.frame(t), &proj.w_k, tokens, d, &mut k);
    let mut rows = Vec::with_capacity(tokens);
    for qi in 0..tokens {
        let q_row = &q[qi * d..(qi + 1) * d];
        let mut logits: Vec<f64> = (0..tokens)
            .map(|ki| {
                let k_row = &k[ki * d..(ki + 1) * d];
                proj.scale * q_row.iter().zip(k_row).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max_logit).exp();
            denom += *l;
        }
        for l in logits.iter_mut() {
            *l /= denom;
        }
        rows.push(logits);
    }
    Ok(rows)
}
