//! Classifier input: `[sigma0^2, v, p_0, ..., p_255]`.

use crate::channel::{ChannelCondition, PowerDelayProfile, MAX_PDP_TAPS};
use crate::error::{Error, Result};

pub const PDP_DIM: usize = MAX_PDP_TAPS;
pub const FEATURE_DIM: usize = PDP_DIM + 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub noise_power: f64,
    /// m/s
    pub velocity: f64,
    /// Tap powers, zero-padded to [`PDP_DIM`].
    pub pdp: Vec<f64>,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.push(self.noise_power);
        v.push(self.velocity);
        v.extend_from_slice(&self.pdp);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != FEATURE_DIM {
            return Err(Error::Dimension(format!("feature vector has {} entries, expected {FEATURE_DIM}", v.len())));
        }
        Ok(Self {
            noise_power: v[0],
            velocity: v[1],
            pdp: v[2..].to_vec(),
        })
    }
}

pub fn extract_features(cond: &ChannelCondition, pdp: &PowerDelayProfile) -> Result<FeatureVector> {
    let taps = pdp.taps();
    if taps.len() > PDP_DIM {
        return Err(Error::DelaySpreadTooLong {
            taps: taps.len(),
            limit: PDP_DIM,
        });
    }
    let mut padded = vec![0.0; PDP_DIM];
    padded[..taps.len()].copy_from_slice(taps);
    Ok(FeatureVector {
        noise_power: cond.noise_power,
        velocity: cond.velocity,
        pdp: padded,
    })
}
