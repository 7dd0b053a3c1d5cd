//! Price feature extraction: an exponential moving average feeding a
//! single-layer tanh recurrent network with a linear readout.
//!
//! The recurrence consumes the smoothed price standardized by the training
//! mean and standard deviation stored in [`RnnParams`]; the readout maps back
//! to $/MWh. With the default scaling (mean 0, std 1) both maps are the plain
//! textbook forms.
//!
//! Time alignment: after consuming the smoothed price at hour `t` the stream
//! holds `h_t`, and `readout(h_t)` is the prediction of the smoothed price at
//! hour `t + 1`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{PriceSeries, PriceWindow};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState};

const MODEL_FORMAT: &str = "ess-arb/rnn";
const MODEL_VERSION: u32 = 1;
/// Largest double below 1; `tanh` rounds to exactly ±1 for |z| > ~19.
const TANH_LIMIT: f64 = 1.0 - f64::EPSILON / 2.0;

/// EMA coefficient, recurrent weights, readout and input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnParams {
    pub alpha: f64,
    pub hidden: usize,
    /// Row-major `hidden x hidden`.
    pub w_rec: Vec<f64>,
    pub w_in: Vec<f64>,
    pub bias: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
    pub price_mean: f64,
    pub price_std: f64,
}

impl RnnParams {
    pub fn zeros(alpha: f64, hidden: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if hidden == 0 {
            return Err(Error::InvalidInput("hidden width must be at least 1".into()));
        }
        Ok(Self {
            alpha,
            hidden,
            w_rec: vec![0.0; hidden * hidden],
            w_in: vec![0.0; hidden],
            bias: vec![0.0; hidden],
            w_out: vec![0.0; hidden],
            b_out: 0.0,
            price_mean: 0.0,
            price_std: 1.0,
        })
    }

    /// Uniform `±1/sqrt(hidden)` initialization; the output bias starts at 0.
    pub fn random<R: Rng + ?Sized>(alpha: f64, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(alpha, hidden)?;
        let bound = 1.0 / (hidden as f64).sqrt();
        for x in p
            .w_rec
            .iter_mut()
            .chain(&mut p.w_in)
            .chain(&mut p.bias)
            .chain(&mut p.w_out)
        {
            *x = rng.gen_range(-bound..bound);
        }
        Ok(p)
    }

    pub fn with_scaling(mut self, mean: f64, std: f64) -> Self {
        self.price_mean = mean;
        self.price_std = std;
        self
    }

    pub fn num_weights(&self) -> usize {
        self.hidden * self.hidden + 3 * self.hidden + 1
    }

    /// Trainable weights as `[w_rec, w_in, bias, w_out, b_out]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_weights());
        v.extend_from_slice(&self.w_rec);
        v.extend_from_slice(&self.w_in);
        v.extend_from_slice(&self.bias);
        v.extend_from_slice(&self.w_out);
        v.push(self.b_out);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_weights() {
            return Err(Error::Dimension {
                expected: self.num_weights(),
                got: flat.len(),
                context: "flat rnn weights",
            });
        }
        let n = self.hidden;
        let (rec, rest) = flat.split_at(n * n);
        let (inp, rest) = rest.split_at(n);
        let (bias, rest) = rest.split_at(n);
        let (out, rest) = rest.split_at(n);
        self.w_rec.copy_from_slice(rec);
        self.w_in.copy_from_slice(inp);
        self.bias.copy_from_slice(bias);
        self.w_out.copy_from_slice(out);
        self.b_out = rest[0];
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        let n = self.hidden;
        if n == 0
            || self.w_rec.len() != n * n
            || self.w_in.len() != n
            || self.bias.len() != n
            || self.w_out.len() != n
        {
            return Err(Error::Model("rnn weight shapes do not match hidden width".into()));
        }
        if !(self.price_std > 0.0) {
            return Err(Error::Model("rnn input scale must be positive".into()));
        }
        if !self.to_flat().iter().all(|x| x.is_finite()) || !self.price_mean.is_finite() {
            return Err(Error::Model("rnn weights must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    fn scale_input(&self, smoothed: f64) -> f64 {
        (smoothed - self.price_mean) / self.price_std
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("EMA coefficient {alpha} outside [0, 1]")))
    }
}

pub fn ema_step(prev: f64, next_price: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * prev + (1.0 - alpha) * next_price)
}

/// `tanh(W h + w x + b)` with `x` the scaled smoothed price.
pub fn rnn_step(hidden: &[f64], smoothed: f64, params: &RnnParams) -> Result<Vec<f64>> {
    let mut out = vec![0.0; params.hidden];
    rnn_step_into(hidden, smoothed, params, &mut out)?;
    Ok(out)
}

fn rnn_step_into(hidden: &[f64], smoothed: f64, params: &RnnParams, out: &mut [f64]) -> Result<()> {
    let n = params.hidden;
    if hidden.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: hidden.len(),
            context: "rnn hidden state",
        });
    }
    let x = params.scale_input(smoothed);
    for (i, o) in out.iter_mut().enumerate() {
        let row = &params.w_rec[i * n..(i + 1) * n];
        let z: f64 = row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>()
            + params.w_in[i] * x
            + params.bias[i];
        *o = z.tanh().clamp(-TANH_LIMIT, TANH_LIMIT);
    }
    Ok(())
}

/// Predicted next smoothed price in $/MWh.
pub fn readout(hidden: &[f64], params: &RnnParams) -> f64 {
    let y: f64 = params
        .w_out
        .iter()
        .zip(hidden)
        .map(|(w, h)| w * h)
        .sum::<f64>()
        + params.b_out;
    params.price_mean + params.price_std * y
}

/// EMA of a raw price sequence, seeded with the first price.
pub fn smooth(prices: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let mut out = Vec::with_capacity(prices.len());
    let mut acc = match prices.first() {
        Some(&p) => p,
        None => return Ok(out),
    };
    out.push(acc);
    for &p in &prices[1..] {
        acc = alpha * acc + (1.0 - alpha) * p;
        out.push(acc);
    }
    Ok(out)
}

/// Squared prediction error of the smoothed sequence and its exact gradient
/// with respect to the flat weights (see [`RnnParams::to_flat`]).
///
/// The recurrence starts from `h_0 = 0`; the loss sums
/// `(readout(h_{t-1}) - smoothed_t)^2` over `t = 2..T`.
pub fn bptt_loss_and_grads(params: &RnnParams, prices: &[f64]) -> Result<(f64, Vec<f64>)> {
    if prices.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            have: prices.len(),
        });
    }
    let n = params.hidden;
    let len = prices.len();
    let smoothed = smooth(prices, params.alpha)?;
    let inputs: Vec<f64> = smoothed.iter().map(|&s| params.scale_input(s)).collect();

    // states[t] = h_t for t = 0..len (h_0 = 0)
    let mut states = vec![0.0; (len + 1) * n];
    for t in 1..=len {
        let (prev, cur) = states.split_at_mut(t * n);
        rnn_step_into(&prev[(t - 1) * n..], smoothed[t - 1], params, &mut cur[..n])?;
    }

    let mut grads = vec![0.0; params.num_weights()];
    let (g_rec, rest) = grads.split_at_mut(n * n);
    let (g_in, rest) = rest.split_at_mut(n);
    let (g_bias, rest) = rest.split_at_mut(n);
    let (g_out, g_bout) = rest.split_at_mut(n);

    let mut loss = 0.0;
    let mut carry = vec![0.0; n]; // dL/dh_t flowing back from step t+1
    let mut dz = vec![0.0; n];
    for t in (1..=len).rev() {
        let h = &states[t * n..(t + 1) * n];
        let mut dh = carry.clone();
        if t < len {
            let err = readout(h, params) - smoothed[t];
            loss += err * err;
            let dy = 2.0 * err * params.price_std;
            *g_bout.first_mut().unwrap() += dy;
            for i in 0..n {
                g_out[i] += dy * h[i];
                dh[i] += dy * params.w_out[i];
            }
        }
        let h_prev = &states[(t - 1) * n..t * n];
        for i in 0..n {
            dz[i] = dh[i] * (1.0 - h[i] * h[i]);
            g_in[i] += dz[i] * inputs[t - 1];
            g_bias[i] += dz[i];
            let row = &mut g_rec[i * n..(i + 1) * n];
            for (g, hp) in row.iter_mut().zip(h_prev) {
                *g += dz[i] * hp;
            }
        }
        for (j, c) in carry.iter_mut().enumerate() {
            *c = (0..n).map(|i| params.w_rec[i * n + j] * dz[i]).sum();
        }
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub alpha: f64,
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    /// Length of each training sub-sequence.
    pub seq_len: usize,
    /// Sub-sequences per ADAM step.
    pub batch: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            hidden: 16,
            steps: 4000,
            lr: 0.01,
            seq_len: 168,
            batch: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RnnTraining {
    pub params: RnnParams,
    /// Batch loss before each ADAM step.
    pub losses: Vec<f64>,
    /// Loss of the final parameters on one more sampled batch.
    pub final_loss: f64,
}

/// Fits the recurrent predictor on randomly drawn sub-sequences of `train`.
pub fn train_rnn<R: Rng + ?Sized>(
    train: &PriceSeries,
    config: &RnnConfig,
    rng: &mut R,
) -> Result<RnnTraining> {
    if config.seq_len < 2 || config.batch == 0 {
        return Err(Error::InvalidInput(
            "rnn training needs seq_len >= 2 and batch >= 1".into(),
        ));
    }
    if train.len() < config.seq_len {
        return Err(Error::TooShort {
            needed: config.seq_len,
            have: train.len(),
        });
    }
    let (mean, std) = crate::data::mean_std(train.prices());
    if !(std > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut params = RnnParams::random(config.alpha, config.hidden, rng)?.with_scaling(mean, std);
    let mut flat = params.to_flat();
    let mut adam = AdamState::new(flat.len(), AdamConfig::with_lr(config.lr));
    let prices = train.prices();
    let last_start = prices.len() - config.seq_len;

    let batch_loss = |params: &RnnParams, rng: &mut R| -> Result<(f64, Vec<f64>)> {
        let mut loss = 0.0;
        let mut grads = vec![0.0; params.num_weights()];
        for _ in 0..config.batch {
            let s = rng.gen_range(0..=last_start);
            let (l, g) = bptt_loss_and_grads(params, &prices[s..s + config.seq_len])?;
            loss += l;
            for (a, b) in grads.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((loss, grads))
    };

    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let (loss, grads) = batch_loss(&params, rng)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("rnn loss non-finite at step {step}")));
        }
        losses.push(loss);
        adam.step(&mut flat, &grads)?;
        params.set_flat(&flat)?;
    }
    let (final_loss, _) = batch_loss(&params, rng)?;
    Ok(RnnTraining {
        params,
        losses,
        final_loss,
    })
}

/// Per-hour output of [`stream`].
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub price: f64,
    pub smoothed: f64,
    pub hidden: Vec<f64>,
}

/// Streaming cursor over a price sequence: EMA plus recurrent state.
#[derive(Debug, Clone)]
pub struct FeatureStream<'a> {
    params: &'a RnnParams,
    smoothed: Option<f64>,
    hidden: Vec<f64>,
}

impl<'a> FeatureStream<'a> {
    pub fn new(params: &'a RnnParams) -> Self {
        Self {
            params,
            smoothed: None,
            hidden: vec![0.0; params.hidden],
        }
    }

    /// Consumes one raw price and returns the features at that hour.
    pub fn push(&mut self, price: f64) -> Feature {
        let smoothed = match self.smoothed {
            None => price,
            Some(prev) => self.params.alpha * prev + (1.0 - self.params.alpha) * price,
        };
        self.smoothed = Some(smoothed);
        let prev = std::mem::take(&mut self.hidden);
        self.hidden = vec![0.0; self.params.hidden];
        rnn_step_into(&prev, smoothed, self.params, &mut self.hidden)
            .expect("stream hidden width is fixed by its params");
        Feature {
            price,
            smoothed,
            hidden: self.hidden.clone(),
        }
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    pub fn smoothed(&self) -> Option<f64> {
        self.smoothed
    }
}

/// Runs the stream through the warm-up and returns features for the episode.
pub fn stream(window: &PriceWindow, params: &RnnParams) -> Vec<Feature> {
    let mut s = FeatureStream::new(params);
    for &p in &window.warmup {
        s.push(p);
    }
    window.episode.iter().map(|&p| s.push(p)).collect()
}

/// One-step prediction RMSE of the smoothed price over a window's episode,
/// as `(rnn, persistence)`; persistence predicts `ρ̃_{t+1} = ρ̃_t`.
pub fn prediction_rmse(window: &PriceWindow, params: &RnnParams) -> Result<(f64, f64)> {
    let feats = stream(window, params);
    if feats.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            have: feats.len(),
        });
    }
    let (mut se_rnn, mut se_persist) = (0.0, 0.0);
    for t in 0..feats.len() - 1 {
        let target = feats[t + 1].smoothed;
        se_rnn += (readout(&feats[t].hidden, params) - target).powi(2);
        se_persist += (feats[t].smoothed - target).powi(2);
    }
    let n = (feats.len() - 1) as f64;
    Ok(((se_rnn / n).sqrt(), (se_persist / n).sqrt()))
}

#[derive(Debug, Serialize, Deserialize)]
struct RnnModelFile {
    format: String,
    version: u32,
    params: RnnParams,
}

impl RnnParams {
    pub fn to_json(&self) -> String {
        let file = RnnModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            params: self.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("rnn params serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RnnModelFile =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("rnn model: {e}")))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        file.params.validate()?;
        Ok(file.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
