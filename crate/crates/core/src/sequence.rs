//! Frame sequences, masks, and their file containers.
//!
//! A feature sequence is T frames of an (H, W) grid with d channels.
//! Data is stored frame-major, then row-major spatial, then channel:
//! `idx = ((t*H + h)*W + w)*d + c`. The JSON and binary containers
//! serialize in exactly this order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// T frames of (H, W, d) feature grids. Values are finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    t: usize,
    h: usize,
    w: usize,
    d: usize,
    data: Vec<f64>,
}

/// Overflow-safe T*H*W*d; dimensions can come from untrusted headers.
fn element_count(dims: &[usize]) -> Result<usize> {
    let mut total = 1usize;
    for &v in dims {
        total = total
            .checked_mul(v)
            .ok_or(Error::Parse("container dimensions overflow".to_string()))?;
    }
    Ok(total)
}

impl FeatureSequence {
    pub fn new(t: usize, h: usize, w: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if t == 0 {
            return Err(Error::EmptySequence);
        }
        for (name, v) in [("H", h), ("W", w), ("d", d)] {
            if v == 0 {
                return Err(Error::ZeroDimension { name });
            }
        }
        let expected = element_count(&[t, h, w, d])?;
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                got: data.len(),
            });
        }
        let seq = FeatureSequence { t, h, w, d, data };
        seq.check_finite()?;
        Ok(seq)
    }

    pub fn zeros(t: usize, h: usize, w: usize, d: usize) -> Result<Self> {
        FeatureSequence::new(t, h, w, d, vec![0.0; t * h * w * d])
    }

    /// One scalar per frame (H = W = d = 1); handy for stencil tests.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        FeatureSequence::new(values.len(), 1, 1, 1, values.to_vec())
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.t, self.h, self.w, self.d)
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * self.d
    }

    pub fn positions(&self) -> usize {
        self.h * self.w
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Replaces the payload without reallocating the shape checks.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        FeatureSequence::new(self.t, self.h, self.w, self.d, data)
    }

    pub fn check_finite(&self) -> Result<()> {
        let n = self.frame_len();
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature {
                    frame: i / n,
                    index: i % n,
                });
            }
        }
        Ok(())
    }

    /// Per (position, channel) sum over the frame axis.
    pub fn framewise_sums(&self) -> Vec<f64> {
        let n = self.frame_len();
        let mut sums = vec![0.0; n];
        for t in 0..self.t {
            for (acc, v) in sums.iter_mut().zip(self.frame(t)) {
                *acc += v;
            }
        }
        sums
    }

    /// Sum of squared deviations from the framewise mean; the Lyapunov
    /// quantity the dissipative prior must not increase.
    pub fn temporal_energy(&self) -> f64 {
        let mut mean = self.framewise_sums();
        for m in mean.iter_mut() {
            *m /= self.t as f64;
        }
        let mut energy = 0.0;
        for t in 0..self.t {
            for (v, m) in self.frame(t).iter().zip(&mean) {
                let dev = v - m;
                energy += dev * dev;
            }
        }
        energy
    }
}

/// T binary (H, W) grids gating a feature sequence; broadcast over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSequence {
    t: usize,
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl MaskSequence {
    pub fn new(t: usize, h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if t == 0 {
            return Err(Error::EmptySequence);
        }
        for (name, v) in [("H", h), ("W", w)] {
            if v == 0 {
                return Err(Error::ZeroDimension { name });
            }
        }
        let expected = element_count(&[t, h, w])?;
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                got: data.len(),
            });
        }
        let n = h * w;
        for (i, &v) in data.iter().enumerate() {
            if v > 1 {
                return Err(Error::NonBinaryMask {
                    frame: i / n,
                    index: i % n,
                    value: v as f64,
                });
            }
        }
        Ok(MaskSequence { t, h, w, data })
    }

    pub fn all_ones(t: usize, h: usize, w: usize) -> Result<Self> {
        MaskSequence::new(t, h, w, vec![1; t * h * w])
    }

    /// Accepts exactly 0.0 / 1.0; anything else is a non-binary error.
    pub fn from_f64(t: usize, h: usize, w: usize, values: &[f64]) -> Result<Self> {
        let n = h * w;
        let mut data = Vec::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            if v == 0.0 {
                data.push(0);
            } else if v == 1.0 {
                data.push(1);
            } else {
                return Err(Error::NonBinaryMask {
                    frame: i / n,
                    index: i % n,
                    value: v,
                });
            }
        }
        MaskSequence::new(t, h, w, data)
    }

    /// One scalar mask per frame (H = W = 1).
    pub fn from_frame_bits(bits: &[u8]) -> Result<Self> {
        MaskSequence::new(bits.len(), 1, 1, bits.to_vec())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Checks that a feature sequence and a mask sequence agree on T, H, W.
///
/// Masks gate channels by broadcast, so d is not compared. The error
/// names the first mismatching dimension.
pub fn validate_pair(features: &FeatureSequence, masks: &MaskSequence) -> Result<()> {
    let (ft, fh, fw, _) = features.shape();
    let (mt, mh, mw) = masks.shape();
    if ft != mt {
        return Err(Error::FrameCountMismatch {
            features: ft,
            masks: mt,
        });
    }
    if fh != mh {
        return Err(Error::SpatialMismatch {
            axis: "H",
            features: fh,
            masks: mh,
        });
    }
    if fw != mw {
        return Err(Error::SpatialMismatch {
            axis: "W",
            features: fw,
            masks: mw,
        });
    }
    features.check_finite()
}

// --- file containers ---------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    #[serde(rename = "T")]
    t: u32,
    #[serde(rename = "H")]
    h: u32,
    #[serde(rename = "W")]
    w: u32,
    d: u32,
    data: Vec<f64>,
}

const BINARY_HEADER_LEN: usize = 16;

fn container_to_sequence(c: Container) -> Result<FeatureSequence> {
    FeatureSequence::new(c.t as usize, c.h as usize, c.w as usize, c.d as usize, c.data)
}

impl FeatureSequence {
    pub fn to_json_string(&self) -> String {
        let c = Container {
            t: self.t as u32,
            h: self.h as u32,
            w: self.w as u32,
            d: self.d as u32,
            data: self.data.clone(),
        };
        serde_json::to_string(&c).expect("container serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let c: Container =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("json: {e}")))?;
        container_to_sequence(c)
    }

    /// Little-endian binary layout: four u32 (T, H, W, d) then f64 values.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BINARY_HEADER_LEN + self.data.len() * 8);
        for dim in [self.t, self.h, self.w, self.d] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < BINARY_HEADER_LEN {
            return Err(Error::Parse(format!(
                "binary container too short: {} bytes, header needs {}",
                bytes.len(),
                BINARY_HEADER_LEN
            )));
        }
        let mut dims = [0usize; 4];
        for (i, dim) in dims.iter_mut().enumerate() {
            let mut quad = [0u8; 4];
            quad.copy_from_slice(&bytes[i * 4..i * 4 + 4]);
            *dim = u32::from_le_bytes(quad) as usize;
        }
        let [t, h, w, d] = dims;
        let expected = element_count(&[t, h, w, d, 8])?
            .checked_add(BINARY_HEADER_LEN)
            .ok_or(Error::Parse("container dimensions overflow".to_string()))?;
        if bytes.len() != expected {
            return Err(Error::Parse(format!(
                "binary container length {} does not match header (expected {expected} bytes at offset 16)",
                bytes.len()
            )));
        }
        let data = bytes[BINARY_HEADER_LEN..]
            .chunks_exact(8)
            .map(|chunk| {
                let mut oct = [0u8; 8];
                oct.copy_from_slice(chunk);
                f64::from_le_bytes(oct)
            })
            .collect();
        FeatureSequence::new(t, h, w, d, data)
    }
}

impl MaskSequence {
    fn to_feature_container(&self) -> FeatureSequence {
        let data = self.data.iter().map(|&b| b as f64).collect();
        FeatureSequence::new(self.t, self.h, self.w, 1, data)
            .expect("mask dims are valid by construction")
    }

    fn from_feature_container(seq: &FeatureSequence) -> Result<Self> {
        let (t, h, w, d) = seq.shape();
        if d != 1 {
            return Err(Error::Parse(format!("mask container must have d=1, got d={d}")));
        }
        MaskSequence::from_f64(t, h, w, seq.data())
    }

    pub fn to_json_string(&self) -> String {
        self.to_feature_container().to_json_string()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        MaskSequence::from_feature_container(&FeatureSequence::from_json_str(text)?)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        self.to_feature_container().to_binary()
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        MaskSequence::from_feature_container(&FeatureSequence::from_binary(bytes)?)
    }
}
