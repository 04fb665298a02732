use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::conv_param_count;
use crate::error::{Error, Result};

/// Downscaling factor between the HR and LR lattices.
pub const DOWNSCALE_FACTOR: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Hidden channel count of the residual branch.
    pub channels: usize,
    pub downscale_factor: usize,
    /// Observation noise `ε` of the LR likelihood.
    pub epsilon: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            downscale_factor: DOWNSCALE_FACTOR,
            epsilon: 1e-2,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.downscale_factor != DOWNSCALE_FACTOR {
            return Err(Error::Config(format!(
                "downscale factor must be {DOWNSCALE_FACTOR}, got {}",
                self.downscale_factor
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Shape `(out_ch, in_ch, kh, kw)` of one conv layer; each layer also owns
/// `out_ch` biases stored right after its weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerShape {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
}

impl LayerShape {
    pub fn conv3(out_ch: usize, in_ch: usize) -> Self {
        Self {
            out_ch,
            in_ch,
            kh: 3,
            kw: 3,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.out_ch * self.in_ch * self.kh * self.kw
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_ch
    }
}

/// Layer descriptors plus the flat parameter vector `φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    layers: Vec<LayerShape>,
    values: Vec<f64>,
}

impl NetParams {
    pub fn new(layers: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = layers.iter().map(LayerShape::param_count).sum();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "layers declare {expected} parameters, vector has {}",
                values.len()
            )));
        }
        let params = Self { layers, values };
        params.check_architecture()?;
        Ok(params)
    }

    /// The residual-branch architecture for `channels` hidden channels.
    pub fn architecture(channels: usize) -> Vec<LayerShape> {
        vec![
            LayerShape::conv3(channels, 1),
            LayerShape::conv3(channels, channels),
            LayerShape::conv3(1, channels),
        ]
    }

    pub fn zeros(config: &NetConfig) -> Self {
        let layers = Self::architecture(config.channels);
        let n = layers.iter().map(LayerShape::param_count).sum();
        Self {
            layers,
            values: vec![0.0; n],
        }
    }

    fn check_architecture(&self) -> Result<()> {
        let ok = self.layers.len() == 3
            && self.layers.iter().all(|l| l.kh == 3 && l.kw == 3)
            && self.layers[0].in_ch == 1
            && self.layers[2].out_ch == 1
            && self.layers[1].in_ch == self.layers[0].out_ch
            && self.layers[2].in_ch == self.layers[1].out_ch;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "unsupported layer stack {:?}; expected conv3x3 1->C->C->1",
                self.layers
            )))
        }
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.layers[0].out_ch
    }

    /// Offset of layer `k`'s weights in the flat vector.
    pub fn layer_offset(&self, k: usize) -> usize {
        self.layers[..k].iter().map(LayerShape::param_count).sum()
    }

    /// Weights and bias slices of layer `k`.
    pub fn layer(&self, k: usize) -> (&[f64], &[f64]) {
        let off = self.layer_offset(k);
        let l = self.layers[k];
        let (w, rest) = self.values[off..].split_at(l.weight_count());
        (w, &rest[..l.out_ch])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Hidden weights uniform in `±1/√fan_in`; output-layer weights and all
/// biases zero, so the initial network is exactly bicubic decimation.
pub fn init_params(seed: u64, config: &NetConfig) -> NetParams {
    let mut params = NetParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = params.layers.len() - 1;
    let mut offset = 0;
    for (k, layer) in params.layers.clone().iter().enumerate() {
        if k < hidden {
            let bound = 1.0 / ((layer.in_ch * layer.kh * layer.kw) as f64).sqrt();
            for v in &mut params.values[offset..offset + layer.weight_count()] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        offset += layer.param_count();
    }
    debug_assert_eq!(offset, params.values.len());
    debug_assert_eq!(
        conv_param_count(config.channels, 1),
        params.layers[0].param_count()
    );
    params
}
