//! One-hidden-layer value network `v(s) = -relu(w2 . relu(W1 x + b1) + b2)`.
//!
//! Parameters live in one flat vector laid out as `W1` (input-major,
//! `W1[i * hidden + k]`), `b1`, `w2`, `b2`. The gradient uses the same
//! layout, and the subgradient at every ReLU kink is 0.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{ArgError, Result};
use crate::features::{encode, EncoderConfig, FeatureVector, BLOCK_ORDER_VERSION};
use crate::genetics::State;
use crate::rng::substream;

/// Step size for fixed-sample training.
pub const ALPHA_FIXED: f64 = 1e-4;
/// Step size for generalization training.
pub const ALPHA_GENERALIZE: f64 = 1e-5;
pub const DEFAULT_HIDDEN: usize = 108;

const CHECKPOINT_MAGIC: &str = "argrl-value-model";
const CHECKPOINT_VERSION: u32 = 1;
/// Initial output bias; with non-negative `w2` the output starts alive.
const INITIAL_OUTPUT_BIAS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueModel {
    encoder: EncoderConfig,
    hidden: usize,
    params: Vec<f64>,
    seed: u64,
    episodes: u64,
}

fn param_count(dim: usize, hidden: usize) -> usize {
    dim * hidden + 2 * hidden + 1
}

impl ValueModel {
    /// Fan-based uniform initialisation: `W1 ~ U(-r1, r1)` with
    /// `r1 = sqrt(6 / (d + hidden))`, `w2 ~ U(0, r2)` with
    /// `r2 = sqrt(6 / (hidden + 1))`, `b1 = 0` and a small positive `b2`.
    pub fn init(encoder: EncoderConfig, hidden: usize, seed: u64) -> Result<ValueModel> {
        if hidden == 0 {
            return Err(ArgError::Config("hidden layer needs at least one unit".into()));
        }
        let d = encoder.dim();
        let mut rng = substream(seed, "init");
        let r1 = (6.0 / (d + hidden) as f64).sqrt();
        let r2 = (6.0 / (hidden + 1) as f64).sqrt();
        let first = Uniform::new_inclusive(-r1, r1).expect("finite bounds");
        let second = Uniform::new_inclusive(0.0, r2).expect("finite bounds");
        let mut params = Vec::with_capacity(param_count(d, hidden));
        params.extend((0..d * hidden).map(|_| first.sample(&mut rng)));
        params.extend(std::iter::repeat_n(0.0, hidden));
        params.extend((0..hidden).map(|_| second.sample(&mut rng)));
        params.push(INITIAL_OUTPUT_BIAS);
        Ok(ValueModel {
            encoder,
            hidden,
            params,
            seed,
            episodes: 0,
        })
    }

    pub fn from_parameters(
        encoder: EncoderConfig,
        hidden: usize,
        params: Vec<f64>,
    ) -> Result<ValueModel> {
        let expected = param_count(encoder.dim(), hidden);
        if hidden == 0 || params.len() != expected {
            return Err(ArgError::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(ValueModel {
            encoder,
            hidden,
            params,
            seed: 0,
            episodes: 0,
        })
    }

    pub fn encoder(&self) -> &EncoderConfig {
        &self.encoder
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn set_episodes(&mut self, episodes: u64) {
        self.episodes = episodes;
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn w1_row(&self, i: usize) -> &[f64] {
        &self.params[i * self.hidden..(i + 1) * self.hidden]
    }

    fn b1(&self) -> &[f64] {
        let o = self.dim() * self.hidden;
        &self.params[o..o + self.hidden]
    }

    fn w2(&self) -> &[f64] {
        let o = self.dim() * self.hidden + self.hidden;
        &self.params[o..o + self.hidden]
    }

    fn b2(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    fn check_dim(&self, x: &FeatureVector) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(ArgError::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        Ok(())
    }

    /// `W1 x + b1`.
    pub fn hidden_preactivation(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut pre = self.b1().to_vec();
        for (i, c) in x.nonzero() {
            self.add_input(&mut pre, i, c as f64);
        }
        Ok(pre)
    }

    /// Adds `scale * W1[i, :]` to a hidden pre-activation, for incremental
    /// evaluation of neighbouring states.
    #[inline]
    pub fn add_input(&self, pre: &mut [f64], i: usize, scale: f64) {
        for (p, w) in pre.iter_mut().zip(self.w1_row(i)) {
            *p += scale * w;
        }
    }

    /// Output pre-activation `w2 . relu(pre) + b2`.
    #[inline]
    pub fn output_preactivation(&self, pre: &[f64]) -> f64 {
        let mut out = self.b2();
        for (p, w) in pre.iter().zip(self.w2()) {
            if *p > 0.0 {
                out += p * w;
            }
        }
        out
    }

    /// Value from a hidden pre-activation.
    #[inline]
    pub fn value_from_preactivation(&self, pre: &[f64]) -> f64 {
        -self.output_preactivation(pre).max(0.0)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        let pre = self.hidden_preactivation(x)?;
        Ok(self.value_from_preactivation(&pre))
    }

    pub fn predict_state(&self, state: &State) -> Result<f64> {
        self.predict(&encode(state, &self.encoder)?)
    }

    /// Gradient of [`ValueModel::predict`] with respect to every parameter.
    pub fn gradient(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        let pre = self.hidden_preactivation(x)?;
        let mut grad = vec![0.0; self.params.len()];
        if self.output_preactivation(&pre) <= 0.0 {
            return Ok(grad);
        }
        let (h, d) = (self.hidden, self.dim());
        let w2 = self.w2();
        for k in 0..h {
            if pre[k] > 0.0 {
                let g = -w2[k];
                grad[d * h + k] = g;
                for (i, c) in x.nonzero() {
                    grad[i * h + k] = g * c as f64;
                }
                grad[d * h + h + k] = -pre[k];
            }
        }
        grad[d * h + 2 * h] = -1.0;
        Ok(grad)
    }

    /// One gradient Monte Carlo step, `w <- w + alpha (target - v(x)) grad v(x)`.
    pub fn sgd_update(&mut self, x: &FeatureVector, target: f64, alpha: f64) -> Result<()> {
        if !target.is_finite() {
            return Err(ArgError::NonFinite(format!("target {target}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(ArgError::Config(format!("step size must be positive, got {alpha}")));
        }
        let pre = self.hidden_preactivation(x)?;
        let out = self.output_preactivation(&pre);
        if out <= 0.0 {
            return Ok(());
        }
        let step = alpha * (target + out);
        let (h, d) = (self.hidden, self.dim());
        // Gradient entries are computed from the pre-update parameters.
        let w2: Vec<f64> = self.w2().to_vec();
        for k in 0..h {
            if pre[k] > 0.0 {
                let g = -step * w2[k];
                for (i, c) in x.nonzero() {
                    self.params[i * h + k] += g * c as f64;
                }
                self.params[d * h + k] += g;
                self.params[d * h + h + k] -= step * pre[k];
            }
        }
        self.params[d * h + 2 * h] -= step;
        if !self.params[d * h + 2 * h].is_finite() {
            return Err(ArgError::NonFinite("model parameters diverged".into()));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
        let _ = writeln!(out, "block_order={BLOCK_ORDER_VERSION}");
        let _ = writeln!(out, "markers={}", self.encoder.markers());
        let _ = writeln!(out, "block={}", self.encoder.block());
        let _ = writeln!(out, "shift={}", self.encoder.shift());
        let _ = writeln!(out, "hidden={}", self.hidden);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "episodes={}", self.episodes);
        let _ = writeln!(out, "params={}", self.params.len());
        for p in &self.params {
            let _ = writeln!(out, "{:016x}", p.to_bits());
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<ValueModel> {
        let bad = |m: String| ArgError::Checkpoint(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty checkpoint".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad(format!("not a value-model checkpoint: {header:?}")));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let mut fields = std::collections::HashMap::new();
        let mut count = None;
        for line in lines.by_ref() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
            let v: u64 = v
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad value in {line:?}")))?;
            if k == "params" {
                count = Some(v as usize);
                break;
            }
            fields.insert(k.to_string(), v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| bad(format!("missing field {k}")))
        };
        if get("block_order")? != BLOCK_ORDER_VERSION as u64 {
            return Err(bad("checkpoint uses a different block order".into()));
        }
        let encoder = EncoderConfig::new(
            get("markers")? as usize,
            get("block")? as usize,
            get("shift")? as usize,
        )?;
        let hidden = get("hidden")? as usize;
        let count = count.ok_or_else(|| bad("missing params".into()))?;
        let params = lines
            .take(count)
            .map(|l| {
                u64::from_str_radix(l.trim(), 16)
                    .map(f64::from_bits)
                    .map_err(|_| bad(format!("bad parameter word {l:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if params.len() != count {
            return Err(bad(format!("expected {count} parameters, found {}", params.len())));
        }
        let mut model = ValueModel::from_parameters(encoder, hidden, params)?;
        model.seed = get("seed")?;
        model.episodes = get("episodes")?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| ArgError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ValueModel> {
        let text = std::fs::read_to_string(path).map_err(|e| ArgError::io(path, e))?;
        ValueModel::from_checkpoint(&text)
    }
}

/// Random feature vector with counts in `0..=max`, for tests and probes.
pub fn random_features<R: Rng + ?Sized>(dim: usize, max: u32, rng: &mut R) -> FeatureVector {
    FeatureVector::from((0..dim).map(|_| rng.random_range(0..=max)).collect::<Vec<u32>>())
}
