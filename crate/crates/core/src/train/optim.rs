//! Gradient-ascent optimizers and their on-disk state (`"PSRO"`, u32
//! version, u64 epoch, u64 step, u64 length, then the two moment vectors as
//! little-endian f64).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PSRO";
const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 8 * 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `φ ← φ + η g`.
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}, expected sgd or adam"))),
        }
    }
}

/// Adam moments; unused (but carried) under SGD.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn ascend(&mut self, config: &TrainConfig, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.step += 1;
        let eta = config.learning_rate;
        match config.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += eta * g;
                }
            }
            Optimizer::Adam => {
                let (b1, b2) = (config.beta1, config.beta2);
                let c1 = 1.0 - b1.powi(self.step as i32);
                let c2 = 1.0 - b2.powi(self.step as i32);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p += eta * (*m / c1) / ((*v / c2).sqrt() + config.adam_eps);
                }
            }
        }
    }
}

pub fn encode_optimizer_state(epoch: usize, state: &OptimizerState) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 16 * state.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(epoch as u64).to_le_bytes());
    out.extend_from_slice(&state.step.to_le_bytes());
    out.extend_from_slice(&(state.len() as u64).to_le_bytes());
    for x in state.m.iter().chain(&state.v) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Returns `(completed epochs, state)`.
pub fn decode_optimizer_state(bytes: &[u8], path: &Path) -> Result<(usize, OptimizerState)> {
    let short = |expected| Error::LengthMismatch {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < HEADER {
        return Err(short(HEADER));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "bad magic, expected PSRO".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("unsupported version {version}"),
        });
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap());
    let (epoch, step, len) = (word(0) as usize, word(1), word(2) as usize);
    let expected = HEADER + 16 * len;
    if bytes.len() != expected {
        return Err(short(expected));
    }
    let mut vals = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let m = vals.by_ref().take(len).collect();
    let v = vals.collect();
    Ok((epoch, OptimizerState { step, m, v }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(optimizer: Optimizer) -> TrainConfig {
        TrainConfig {
            optimizer,
            learning_rate: 0.1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sgd_is_plain_ascent() {
        let mut s = OptimizerState::new(2);
        let mut p = [1.0, -1.0];
        s.ascend(&config(Optimizer::Sgd), &mut p, &[2.0, 0.5]);
        assert_eq!(p, [1.2, -0.95]);
    }

    #[test]
    fn adam_first_step_moves_by_eta() {
        // bias-corrected first step is η·g/(|g| + eps)
        let mut s = OptimizerState::new(2);
        let mut p = [0.0, 0.0];
        s.ascend(&config(Optimizer::Adam), &mut p, &[3.0, -1e-3]);
        assert!((p[0] - 0.1).abs() < 1e-8);
        assert!((p[1] + 0.1).abs() < 1e-5);
    }

    #[test]
    fn adam_matches_reference_recursion() {
        let cfg = config(Optimizer::Adam);
        let grads = [[0.5, -2.0], [0.1, 1.0], [-0.3, 0.2]];
        let mut s = OptimizerState::new(2);
        let mut p = [0.0, 0.0];
        for g in &grads {
            s.ascend(&cfg, &mut p, g);
        }
        for k in 0..2 {
            let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
            for (t, g) in grads.iter().enumerate() {
                m = 0.9 * m + 0.1 * g[k];
                v = 0.999 * v + 0.001 * g[k] * g[k];
                let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
                let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
                x += 0.1 * mh / (vh.sqrt() + 1e-8);
            }
            assert!((p[k] - x).abs() < 1e-14);
        }
    }

    #[test]
    fn state_roundtrip() {
        let s = OptimizerState {
            step: 17,
            m: vec![1.5, -0.0, f64::MIN_POSITIVE],
            v: vec![2.0, 3.0, 4.0],
        };
        let bytes = encode_optimizer_state(4, &s);
        let (epoch, back) = decode_optimizer_state(&bytes, Path::new("mem")).unwrap();
        assert_eq!(epoch, 4);
        assert_eq!(encode_optimizer_state(4, &back), bytes);
        assert!(decode_optimizer_state(&bytes[..bytes.len() - 8], Path::new("mem")).is_err());
    }

    #[test]
    fn parses_names() {
        assert_eq!("adam".parse::<Optimizer>().unwrap(), Optimizer::Adam);
        assert_eq!("sgd".parse::<Optimizer>().unwrap(), Optimizer::Sgd);
        assert!("rmsprop".parse::<Optimizer>().is_err());
    }
}
