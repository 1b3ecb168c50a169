use std::fmt::Write as _;

use raincast_tensor::{Checkpoint, Padding, Tape, Tensor, Var};

use super::conv::{conv2plus1d, Conv2Plus1DSpec};
use super::lstm::{lstm_layer, lstm_layer_projected};
use super::ModelError;
use crate::preprocess::{Mode, SampleSet};
use crate::rng::{derive_seed, Rng};

const INIT_TAG: u64 = 0x1417;
const ARCH_NAME: &str = "conv2plus1d-lstm-v1";

/// Architecture of one forecaster (one horizon, one mode).
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastModelSpec {
    pub lookback: usize,
    pub horizon: usize,
    pub frame_h: usize,
    pub frame_w: usize,
    /// Kernel extents `(time, height, width)` shared by all conv blocks.
    pub kernel: (usize, usize, usize),
    /// Output channels of each (2+1)D block; the input has one channel.
    pub conv_channels: Vec<usize>,
    pub spatial_padding: Padding,
    pub temporal_padding: Padding,
    /// Average-pooling factor after each block; 1 disables pooling.
    pub pool: usize,
    pub lstm_hidden: Vec<usize>,
    pub mode: Mode,
}

impl Default for ForecastModelSpec {
    fn default() -> Self {
        Self {
            lookback: 32,
            horizon: 8,
            frame_h: 16,
            frame_w: 16,
            kernel: (3, 3, 3),
            conv_channels: vec![8, 16],
            spatial_padding: Padding::Same,
            temporal_padding: Padding::Valid,
            pool: 2,
            lstm_hidden: vec![128, 64, 32, 8],
            mode: Mode::Residual,
        }
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str) -> Option<Vec<usize>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

impl ForecastModelSpec {
    pub fn conv_blocks(&self) -> Vec<Conv2Plus1DSpec> {
        let (t_k, h_k, w_k) = self.kernel;
        let mut c_in = 1;
        self.conv_channels
            .iter()
            .map(|&c_out| {
                let b = Conv2Plus1DSpec {
                    t_k,
                    h_k,
                    w_k,
                    c_in,
                    c_out,
                    spatial_padding: self.spatial_padding,
                    temporal_padding: self.temporal_padding,
                };
                c_in = c_out;
                b
            })
            .collect()
    }

    /// `(steps, features)` of the sequence handed to the LSTM stack.
    pub fn sequence_dims(&self) -> Result<(usize, usize), ModelError> {
        let (mut t, mut h, mut w, mut c) = (self.lookback, self.frame_h, self.frame_w, 1);
        for (i, b) in self.conv_blocks().iter().enumerate() {
            b.validate()?;
            let (t2, h2, w2) = b
                .output_dims(t, h, w)
                .ok_or_else(|| ModelError::InvalidSpec(format!("conv block {i} does not fit a {t}x{h}x{w} input")))?;
            (t, h, w, c) = (t2, h2, w2, b.c_out);
            if self.pool > 1 {
                if h < self.pool || w < self.pool {
                    return Err(ModelError::InvalidSpec(format!("pooling {}x{h}x{w} after block {i}", self.pool)));
                }
                (h, w) = (h / self.pool, w / self.pool);
            }
        }
        Ok((t, h * w * c))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lookback == 0 || self.horizon == 0 {
            return Err(ModelError::InvalidSpec("lookback and horizon must be at least 1".into()));
        }
        if self.frame_h == 0 || self.frame_w == 0 {
            return Err(ModelError::InvalidSpec("empty frame".into()));
        }
        if self.lstm_hidden.is_empty() || self.lstm_hidden.contains(&0) {
            return Err(ModelError::InvalidSpec("lstm_hidden must be non-empty and positive".into()));
        }
        if self.pool == 0 {
            return Err(ModelError::InvalidSpec("pool must be at least 1".into()));
        }
        self.sequence_dims().map(|_| ())
    }

    /// Names, shapes and fan-ins of all trainable tensors, in storage order.
    pub fn param_layout(&self) -> Result<Vec<(String, Vec<usize>, usize)>, ModelError> {
        let (_, features) = self.sequence_dims()?;
        let mut out = Vec::new();
        for (i, b) in self.conv_blocks().iter().enumerate() {
            out.push((format!("conv{i}.spatial.w"), vec![b.h_k, b.w_k, b.c_in, b.c_out], b.h_k * b.w_k * b.c_in));
            out.push((format!("conv{i}.spatial.b"), vec![b.c_out], 0));
            out.push((format!("conv{i}.temporal.w"), vec![b.t_k, b.c_out, b.c_out], b.t_k * b.c_out));
            out.push((format!("conv{i}.temporal.b"), vec![b.c_out], 0));
        }
        let mut input = features;
        for (i, &h) in self.lstm_hidden.iter().enumerate() {
            out.push((format!("lstm{i}.wx"), vec![input, 4 * h], input));
            out.push((format!("lstm{i}.wh"), vec![h, 4 * h], h));
            out.push((format!("lstm{i}.b"), vec![4 * h], 0));
            input = h;
        }
        out.push(("head.w".into(), vec![input, 1], input));
        out.push(("head.b".into(), vec![1], 0));
        Ok(out)
    }

    /// Self-describing `key=value` lines.
    pub fn descriptor(&self) -> String {
        let mut s = String::new();
        let (t, h, w) = self.kernel;
        let _ = writeln!(s, "arch={ARCH_NAME}");
        let _ = writeln!(s, "mode={}", self.mode.as_str());
        let _ = writeln!(s, "lookback={}", self.lookback);
        let _ = writeln!(s, "horizon={}", self.horizon);
        let _ = writeln!(s, "frame={}x{}", self.frame_h, self.frame_w);
        let _ = writeln!(s, "kernel={t}x{h}x{w}");
        let _ = writeln!(s, "conv_channels={}", join(&self.conv_channels));
        let _ = writeln!(s, "spatial_padding={}", self.spatial_padding.as_str());
        let _ = writeln!(s, "temporal_padding={}", self.temporal_padding.as_str());
        let _ = writeln!(s, "pool={}", self.pool);
        let _ = writeln!(s, "lstm_hidden={}", join(&self.lstm_hidden));
        let _ = writeln!(s, "activation=tanh");
        s
    }

    /// Parses [`Self::descriptor`] output; unknown keys are ignored.
    pub fn from_descriptor(text: &str) -> Result<Self, ModelError> {
        let bad = |k: &str| ModelError::InvalidCheckpoint(format!("descriptor field '{k}'"));
        let mut spec = ForecastModelSpec::default();
        let mut seen_arch = false;
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else { continue };
            match k {
                "arch" => {
                    if v != ARCH_NAME {
                        return Err(ModelError::InvalidCheckpoint(format!("unknown architecture '{v}'")));
                    }
                    seen_arch = true;
                }
                "mode" => spec.mode = v.parse().map_err(|_| bad(k))?,
                "lookback" => spec.lookback = v.parse().map_err(|_| bad(k))?,
                "horizon" => spec.horizon = v.parse().map_err(|_| bad(k))?,
                "frame" => {
                    let d = v.split('x').map(str::parse).collect::<Result<Vec<usize>, _>>().map_err(|_| bad(k))?;
                    let [h, w] = d[..] else { return Err(bad(k)) };
                    (spec.frame_h, spec.frame_w) = (h, w);
                }
                "kernel" => {
                    let d = v.split('x').map(str::parse).collect::<Result<Vec<usize>, _>>().map_err(|_| bad(k))?;
                    let [t, h, w] = d[..] else { return Err(bad(k)) };
                    spec.kernel = (t, h, w);
                }
                "conv_channels" => spec.conv_channels = parse_list(v).ok_or_else(|| bad(k))?,
                "spatial_padding" => spec.spatial_padding = v.parse().map_err(|_| bad(k))?,
                "temporal_padding" => spec.temporal_padding = v.parse().map_err(|_| bad(k))?,
                "pool" => spec.pool = v.parse().map_err(|_| bad(k))?,
                "lstm_hidden" => spec.lstm_hidden = parse_list(v).ok_or_else(|| bad(k))?,
                _ => {}
            }
        }
        if !seen_arch {
            return Err(bad("arch"));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Trainable tensors plus the scaling constants fitted on the training set.
///
/// The network sees `input / input_scale` and emits `y`; the forecast in cm
/// is `target_offset + target_scale · y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub spec: ForecastModelSpec,
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
    pub input_scale: f64,
    pub target_offset: f64,
    pub target_scale: f64,
}

impl ModelParams {
    /// Uniform `±1/√fan_in` kernels, zero biases except the LSTM forget gate (1).
    pub fn init(spec: &ForecastModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = Rng::new(derive_seed(&[seed, INIT_TAG]));
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape, fan_in) in spec.param_layout()? {
            let n: usize = shape.iter().product();
            let data = if fan_in > 0 {
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.uniform_in(-bound, bound)).collect()
            } else if name.starts_with("lstm") {
                let h = n / 4;
                (0..n).map(|i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }).collect()
            } else {
                vec![0.0; n]
            };
            names.push(name);
            tensors.push(Tensor::new(shape, data)?.with_grad());
        }
        Ok(Self {
            spec: spec.clone(),
            names,
            tensors,
            input_scale: 1.0,
            target_offset: 0.0,
            target_scale: 1.0,
        })
    }

    /// Every weight and bias zero; the network output is identically 0.
    pub fn zeros(spec: &ForecastModelSpec) -> Result<Self, ModelError> {
        let mut p = Self::init(spec, 0)?;
        for t in &mut p.tensors {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(p)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t)).collect()
    }

    pub fn to_cm(&self, y: f64) -> f64 {
        self.target_offset + self.target_scale * y
    }

    /// Checkpoint with the architecture descriptor followed by `extra` lines.
    pub fn to_checkpoint(&self, extra: &[(&str, String)]) -> Checkpoint {
        let mut descriptor = self.spec.descriptor();
        for (k, v) in extra {
            let _ = writeln!(descriptor, "{k}={v}");
        }
        Checkpoint {
            descriptor,
            constants: vec![
                ("input_scale".into(), self.input_scale),
                ("target_offset".into(), self.target_offset),
                ("target_scale".into(), self.target_scale),
            ],
            tensors: self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let spec = ForecastModelSpec::from_descriptor(&ckpt.descriptor)?;
        let layout = spec.param_layout()?;
        if layout.len() != ckpt.tensors.len() {
            return Err(ModelError::InvalidCheckpoint(format!(
                "{} tensors, architecture needs {}",
                ckpt.tensors.len(),
                layout.len()
            )));
        }
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for ((name, shape, _), (cname, t)) in layout.into_iter().zip(&ckpt.tensors) {
            if &name != cname || t.shape() != shape.as_slice() {
                return Err(ModelError::InvalidCheckpoint(format!(
                    "tensor '{cname}' {:?}, expected '{name}' {shape:?}",
                    t.shape()
                )));
            }
            names.push(name);
            tensors.push(t.clone().with_grad());
        }
        let constant = |k: &str| {
            ckpt.constant(k)
                .filter(|v| v.is_finite())
                .ok_or_else(|| ModelError::InvalidCheckpoint(format!("constant '{k}'")))
        };
        Ok(Self {
            spec,
            names,
            tensors,
            input_scale: constant("input_scale")?,
            target_offset: constant("target_offset")?,
            target_scale: constant("target_scale")?,
        })
    }

    /// Scaled network input for the given samples: `[batch, L, H, W, 1]`.
    pub fn input_batch(&self, samples: &SampleSet, indices: &[usize]) -> Vec<f64> {
        let inv = 1.0 / self.input_scale;
        let mut data = Vec::with_capacity(indices.len() * samples.lookback_steps * samples.frame_len());
        for &i in indices {
            data.extend(samples.input(i).iter().map(|v| v * inv));
        }
        data
    }

    pub(crate) fn check_samples(&self, samples: &SampleSet) -> Result<(), ModelError> {
        let s = &self.spec;
        if (samples.lookback_steps, samples.frame_h, samples.frame_w) != (s.lookback, s.frame_h, s.frame_w) {
            return Err(ModelError::ShapeMismatch(format!(
                "samples have lookback {} and {}x{} frames, model expects {} and {}x{}",
                samples.lookback_steps, samples.frame_h, samples.frame_w, s.lookback, s.frame_h, s.frame_w
            )));
        }
        if samples.horizon_steps != s.horizon {
            return Err(ModelError::ShapeMismatch(format!(
                "samples have horizon {}, model expects {}",
                samples.horizon_steps, s.horizon
            )));
        }
        Ok(())
    }

    /// Raw network outputs `y` for the given samples, in batches.
    pub fn outputs(&self, samples: &SampleSet, indices: &[usize], batch: usize) -> Result<Vec<f64>, ModelError> {
        self.check_samples(samples)?;
        let mut out = Vec::with_capacity(indices.len());
        for chunk in indices.chunks(batch.max(1)) {
            let mut tape = Tape::new();
            let vars = self.leaves(&mut tape);
            let x = tape.constant(self.input_shape(chunk.len()), self.input_batch(samples, chunk))?;
            let y = network_forward(&mut tape, &self.spec, &vars, x)?;
            out.extend_from_slice(tape.value(y));
        }
        Ok(out)
    }

    pub fn input_shape(&self, batch: usize) -> Vec<usize> {
        vec![batch, self.spec.lookback, self.spec.frame_h, self.spec.frame_w, 1]
    }
}

/// Records the network on `tape`. `vars` follow [`ForecastModelSpec::param_layout`];
/// `x` is `[batch, L, H, W, 1]`. Returns `[batch, 1]`.
pub fn network_forward(tape: &mut Tape, spec: &ForecastModelSpec, vars: &[Var], x: Var) -> Result<Var, ModelError> {
    let blocks = spec.conv_blocks();
    let expected = 4 * blocks.len() + 3 * spec.lstm_hidden.len() + 2;
    if vars.len() != expected {
        return Err(ModelError::ShapeMismatch(format!("{} parameter vars, expected {expected}", vars.len())));
    }
    let mut h = x;
    for (i, b) in blocks.iter().enumerate() {
        let w = [vars[4 * i], vars[4 * i + 1], vars[4 * i + 2], vars[4 * i + 3]];
        h = conv2plus1d(tape, h, b, w)?;
        h = tape.tanh(h);
        if spec.pool > 1 {
            h = tape.avg_pool2d(h, spec.pool)?;
        }
    }
    let seq = tape.flatten(h)?;
    let mut off = 4 * blocks.len();
    let mut hs: Option<Vec<Var>> = None;
    for &hidden in &spec.lstm_hidden {
        let w = [vars[off], vars[off + 1], vars[off + 2]];
        off += 3;
        hs = Some(match hs {
            None => lstm_layer_projected(tape, seq, w, hidden)?,
            Some(prev) => lstm_layer(tape, &prev, w, hidden)?,
        });
    }
    let last = *hs.expect("at least one lstm layer").last().expect("at least one step");
    Ok(tape.linear(last, vars[off], vars[off + 1])?)
}

/// One forecast issued at `issue_time` for `horizon_steps` ahead.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub issue_time: i64,
    pub horizon_steps: usize,
    pub predicted_level_cm: f64,
    /// Set for residual models: `predicted_level_cm = anchor_level_cm + predicted_residual_cm`.
    pub predicted_residual_cm: Option<f64>,
    pub anchor_level_cm: f64,
}

fn single_sample_outputs(params: &ModelParams, inputs: &[f64]) -> Result<f64, ModelError> {
    let s = &params.spec;
    let need = s.lookback * s.frame_h * s.frame_w;
    if inputs.len() != need {
        return Err(ModelError::ShapeMismatch(format!("{} input values, expected {need}", inputs.len())));
    }
    let mut tape = Tape::new();
    let vars = params.leaves(&mut tape);
    let inv = 1.0 / params.input_scale;
    let x = tape.constant(params.input_shape(1), inputs.iter().map(|v| v * inv).collect())?;
    let y = network_forward(&mut tape, s, &vars, x)?;
    Ok(tape.scalar(y))
}

/// Level forecast (cm) of an absolute-mode network for one `[L, H, W]` input.
pub fn strpm_forward(params: &ModelParams, inputs: &[f64]) -> Result<f64, ModelError> {
    Ok(params.to_cm(single_sample_outputs(params, inputs)?))
}

/// Residual forecast reconstructed on top of `anchor`.
pub fn strpmr_forward(params: &ModelParams, inputs: &[f64], anchor: f64, issue_time: i64) -> Result<Forecast, ModelError> {
    if !anchor.is_finite() {
        return Err(ModelError::NonFiniteAnchor(anchor));
    }
    let residual = params.to_cm(single_sample_outputs(params, inputs)?);
    Ok(Forecast {
        issue_time,
        horizon_steps: params.spec.horizon,
        predicted_level_cm: anchor + residual,
        predicted_residual_cm: Some(residual),
        anchor_level_cm: anchor,
    })
}

/// "No change" forecast.
pub fn persistence_forecast(anchor: f64, horizon_steps: usize, issue_time: i64) -> Result<Forecast, ModelError> {
    if !anchor.is_finite() {
        return Err(ModelError::NonFiniteAnchor(anchor));
    }
    Ok(Forecast {
        issue_time,
        horizon_steps,
        predicted_level_cm: anchor,
        predicted_residual_cm: None,
        anchor_level_cm: anchor,
    })
}

/// Forecasts for every sample, reconstructing levels according to the
/// model's mode.
pub fn predict(params: &ModelParams, samples: &SampleSet, batch: usize) -> Result<Vec<Forecast>, ModelError> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let ys = params.outputs(samples, &idx, batch)?;
    ys.iter()
        .enumerate()
        .map(|(i, &y)| {
            let anchor = samples.anchor_levels[i];
            if !anchor.is_finite() {
                return Err(ModelError::NonFiniteAnchor(anchor));
            }
            let v = params.to_cm(y);
            Ok(match params.spec.mode {
                Mode::Absolute => Forecast {
                    issue_time: samples.issue_times[i],
                    horizon_steps: params.spec.horizon,
                    predicted_level_cm: v,
                    predicted_residual_cm: None,
                    anchor_level_cm: anchor,
                },
                Mode::Residual => Forecast {
                    issue_time: samples.issue_times[i],
                    horizon_steps: params.spec.horizon,
                    predicted_level_cm: anchor + v,
                    predicted_residual_cm: Some(v),
                    anchor_level_cm: anchor,
                },
            })
        })
        .collect()
}
