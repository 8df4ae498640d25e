//! Coordinate-network representation of a Stokes cube.
//!
//! The network maps `(p_x, p_y, c)` to a Stokes vector in two stages. A
//! per-pixel MLP consumes the Fourier features of the pixel coordinate and
//! emits a feature vector; a spectral MLP consumes that feature together with
//! the Fourier features of the channel coordinate and emits the four Stokes
//! elements. Coordinates are mapped to `[-1, 1]` before encoding.
//!
//! Gradients are computed by a hand-written reverse pass over the dense
//! layers; parameters live in one flat buffer so the optimizer and the
//! finite-difference checks can treat them uniformly.

use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codecs::{bpp, positional_encode_into};
use crate::error::{Error, Result};
use crate::image::StokesImage;
use crate::reconstruct::quality;
use crate::stokes::StokesVector;

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InrConfig {
    /// Hidden layers in total; the per-pixel stage gets `ceil(layers / 2)`.
    pub layers: usize,
    pub hidden: usize,
    /// Width of the per-pixel feature handed to the spectral stage.
    pub feature_dim: usize,
    pub k_spatial: usize,
    pub k_channel: usize,
}

impl Default for InrConfig {
    fn default() -> Self {
        Self {
            layers: 8,
            hidden: 256,
            feature_dim: 256,
            k_spatial: 10,
            k_channel: 1,
        }
    }
}

impl InrConfig {
    pub fn new(layers: usize, hidden: usize) -> Self {
        Self {
            layers,
            hidden,
            feature_dim: hidden,
            ..Self::default()
        }
    }

    fn spatial_in(&self) -> usize {
        2 * (2 * self.k_spatial + 3)
    }

    fn channel_in(&self) -> usize {
        2 * self.k_channel + 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 layers, got {}",
                self.layers
            )));
        }
        if self.hidden == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidArgument(
                "hidden and feature widths must be positive".into(),
            ));
        }
        if self.k_spatial > 30 || self.k_channel > 30 {
            return Err(Error::InvalidArgument("encoding order too large".into()));
        }
        Ok(())
    }
}

const LINEAR_GAIN: f64 = 0.003;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Dense {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
    relu: bool,
}

impl Dense {
    fn weights<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.inp, self.out), &params[self.w..self.w + self.inp * self.out])
            .expect("layer shape")
    }

    fn forward(&self, params: &[f64], x: &Array2<f64>) -> Array2<f64> {
        let bias = ndarray::ArrayView1::from(&params[self.b..self.b + self.out]);
        let mut z = x.dot(&self.weights(params));
        z += &bias;
        if self.relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        z
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    fn backward(
        &self,
        params: &[f64],
        grad: &mut [f64],
        input: &Array2<f64>,
        output: &Array2<f64>,
        mut d_out: Array2<f64>,
        need_input: bool,
    ) -> Option<Array2<f64>> {
        if self.relu {
            ndarray::Zip::from(&mut d_out).and(output).for_each(|d, &o| {
                if o <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        let dw = input.t().dot(&d_out);
        for (g, v) in grad[self.w..self.w + self.inp * self.out].iter_mut().zip(dw.iter()) {
            *g += v;
        }
        let db = d_out.sum_axis(Axis(0));
        for (g, v) in grad[self.b..self.b + self.out].iter_mut().zip(db.iter()) {
            *g += v;
        }
        need_input.then(|| d_out.dot(&self.weights(params).t()))
    }
}

fn build_layout(cfg: &InrConfig) -> (Vec<Dense>, Vec<Dense>, usize) {
    let mut off = 0;
    let mut push = |inp: usize, out: usize, relu: bool| {
        let d = Dense {
            inp,
            out,
            w: off,
            b: off + inp * out,
            relu,
        };
        off += inp * out + out;
        d
    };
    let n_spatial = cfg.layers.div_ceil(2);
    let n_spectral = cfg.layers - n_spatial;
    let mut spatial = Vec::new();
    let mut inp = cfg.spatial_in();
    for _ in 0..n_spatial {
        spatial.push(push(inp, cfg.hidden, true));
        inp = cfg.hidden;
    }
    spatial.push(push(inp, cfg.feature_dim, false));
    let mut spectral = Vec::new();
    let mut inp = cfg.feature_dim + cfg.channel_in();
    for _ in 0..n_spectral {
        spectral.push(push(inp, cfg.hidden, true));
        inp = cfg.hidden;
    }
    spectral.push(push(inp, 4, false));
    (spatial, spectral, off)
}

/// A trained (or freshly initialized) coordinate network.
#[derive(Clone, Debug, PartialEq)]
pub struct InrModel {
    pub config: InrConfig,
    pub params: Vec<f64>,
    /// Largest `(x, y, channel)` index; coordinates are scaled by these to `[-1, 1]`.
    pub coord_max: [f64; 3],
    spatial: Vec<Dense>,
    spectral: Vec<Dense>,
}

/// Maps an index in `0..=max` to `[-1, 1]`.
#[inline]
fn normalize_coord(v: f64, max: f64) -> f64 {
    if max > 0.0 {
        2.0 * v / max - 1.0
    } else {
        0.0
    }
}

/// Randomly initialized network. ReLU layers use He-uniform weights; the two
/// linear layers start near zero so early predictions sit at the output bias.
/// Biases start at zero.
pub fn inr_init(config: InrConfig, seed: u64) -> Result<InrModel> {
    config.validate()?;
    let (spatial, spectral, total) = build_layout(&config);
    let mut params = vec![0.0; total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in spatial.iter().chain(spectral.iter()) {
        let gain = if layer.relu { 6.0 } else { LINEAR_GAIN };
        let bound = (gain / layer.inp as f64).sqrt();
        for p in &mut params[layer.w..layer.w + layer.inp * layer.out] {
            *p = rng.random_range(-bound..bound);
        }
    }
    Ok(InrModel {
        config,
        params,
        coord_max: [0.0; 3],
        spatial,
        spectral,
    })
}

/// Rebuilds a model from stored parameters.
pub fn inr_from_parts(config: InrConfig, params: Vec<f64>, coord_max: [f64; 3]) -> Result<InrModel> {
    config.validate()?;
    let (spatial, spectral, total) = build_layout(&config);
    if params.len() != total {
        return Err(Error::Corrupt(format!(
            "parameter count {} does not match architecture ({total})",
            params.len()
        )));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Corrupt("non-finite network weight".into()));
    }
    Ok(InrModel {
        config,
        params,
        coord_max,
        spatial,
        spectral,
    })
}

/// A set of sample coordinates with optional targets.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `(x, y)` pixel indices.
    pub pixels: Vec<(f64, f64)>,
    /// Channel indices evaluated for every pixel.
    pub channels: Vec<f64>,
    /// `(pixels · channels) × 4`, row `b · C + c`.
    pub targets: Array2<f64>,
    /// Per-row loss weight, 0 for masked sites.
    pub weights: Array1<f64>,
}

struct Activations {
    spatial: Vec<Array2<f64>>,
    spectral: Vec<Array2<f64>>,
}

impl InrModel {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Storage at 32 bits per parameter.
    pub fn stored_bits(&self) -> f64 {
        (self.params.len() * 32) as f64
    }

    pub fn bpp(&self, width: usize, height: usize) -> f64 {
        bpp(self.stored_bits(), width, height)
    }

    fn spatial_inputs(&self, pixels: &[(f64, f64)]) -> Array2<f64> {
        let k = self.config.k_spatial;
        let width = self.config.spatial_in();
        let mut flat = Vec::with_capacity(pixels.len() * width);
        for &(x, y) in pixels {
            positional_encode_into(normalize_coord(x, self.coord_max[0]), k, &mut flat);
            positional_encode_into(normalize_coord(y, self.coord_max[1]), k, &mut flat);
        }
        Array2::from_shape_vec((pixels.len(), width), flat).expect("encoding width")
    }

    fn channel_codes(&self, channels: &[f64]) -> Vec<Vec<f64>> {
        channels
            .iter()
            .map(|&c| {
                let mut v = Vec::with_capacity(self.config.channel_in());
                positional_encode_into(normalize_coord(c, self.coord_max[2]), self.config.k_channel, &mut v);
                v
            })
            .collect()
    }

    fn forward_all(&self, pixels: &[(f64, f64)], channels: &[f64]) -> Activations {
        let mut spatial = vec![self.spatial_inputs(pixels)];
        for layer in &self.spatial {
            let next = layer.forward(&self.params, spatial.last().unwrap());
            spatial.push(next);
        }
        let feat = spatial.last().unwrap();
        let codes = self.channel_codes(channels);
        let (nb, nc, fd) = (pixels.len(), channels.len(), self.config.feature_dim);
        let cin = self.config.channel_in();
        let mut x = Array2::zeros((nb * nc, fd + cin));
        for b in 0..nb {
            for (c, code) in codes.iter().enumerate() {
                let mut row = x.row_mut(b * nc + c);
                row.slice_mut(s![..fd]).assign(&feat.row(b));
                row.slice_mut(s![fd..])
                    .assign(&ndarray::ArrayView1::from(code.as_slice()));
            }
        }
        let mut spectral = vec![x];
        for layer in &self.spectral {
            let next = layer.forward(&self.params, spectral.last().unwrap());
            spectral.push(next);
        }
        Activations { spatial, spectral }
    }

    /// Network outputs, row `b · C + c`.
    pub fn predict(&self, pixels: &[(f64, f64)], channels: &[f64]) -> Array2<f64> {
        self.forward_all(pixels, channels).spectral.pop().unwrap()
    }

    /// Weighted mean squared error over the batch.
    pub fn loss(&self, batch: &Batch) -> f64 {
        let out = self.predict(&batch.pixels, &batch.channels);
        weighted_mse(&out, batch).0
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &Batch) -> (f64, Vec<f64>) {
        let acts = self.forward_all(&batch.pixels, &batch.channels);
        let out = acts.spectral.last().unwrap();
        let (loss, denom) = weighted_mse(out, batch);
        let mut grad = vec![0.0; self.params.len()];
        if denom == 0.0 {
            return (loss, grad);
        }
        let mut d = out - &batch.targets;
        let scale = 2.0 / denom;
        for (mut row, w) in d.axis_iter_mut(Axis(0)).zip(batch.weights.iter()) {
            row *= w * scale;
        }
        for (i, layer) in self.spectral.iter().enumerate().rev() {
            d = layer
                .backward(
                    &self.params,
                    &mut grad,
                    &acts.spectral[i],
                    &acts.spectral[i + 1],
                    d,
                    true,
                )
                .expect("input gradient");
        }
        // Channel rows of one pixel share its feature.
        let (nb, nc, fd) = (batch.pixels.len(), batch.channels.len(), self.config.feature_dim);
        let mut d_feat = Array2::zeros((nb, fd));
        for b in 0..nb {
            let mut acc = d_feat.row_mut(b);
            for c in 0..nc {
                acc += &d.slice(s![b * nc + c, ..fd]);
            }
        }
        let mut d = d_feat;
        for (i, layer) in self.spatial.iter().enumerate().rev() {
            match layer.backward(
                &self.params,
                &mut grad,
                &acts.spatial[i],
                &acts.spatial[i + 1],
                d,
                i > 0,
            ) {
                Some(next) => d = next,
                None => break,
            }
        }
        (loss, grad)
    }
}

fn weighted_mse(out: &Array2<f64>, batch: &Batch) -> (f64, f64) {
    let denom = 4.0 * batch.weights.sum();
    if denom == 0.0 {
        return (0.0, 0.0);
    }
    let mut sse = 0.0;
    for ((o, t), w) in out
        .axis_iter(Axis(0))
        .zip(batch.targets.axis_iter(Axis(0)))
        .zip(batch.weights.iter())
    {
        if *w != 0.0 {
            sse += w * o.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    (sse / denom, denom)
}

/// Evaluates the network at one coordinate.
pub fn inr_forward(model: &InrModel, p_x: f64, p_y: f64, c: f64) -> StokesVector {
    let out = model.predict(&[(p_x, p_y)], &[c]);
    StokesVector::new(out[(0, 0)], out[(0, 1)], out[(0, 2)], out[(0, 3)])
}

/// Learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to `base · min_factor` over the run.
    Cosine {
        min_factor: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
    pub schedule: LrSchedule,
    /// Pixels per step; every channel of each sampled pixel is used. A batch
    /// at least as large as the image uses every pixel each step.
    pub batch_pixels: usize,
    pub seed: u64,
    pub log_every: usize,
    /// Start the output bias at the per-element mean of the valid targets.
    pub init_output_bias: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 1e-3,
            schedule: LrSchedule::Cosine { min_factor: 0.0 },
            batch_pixels: 1024,
            seed: 0,
            log_every: 100,
            init_output_bias: true,
        }
    }
}

impl TrainOptions {
    pub fn lr_at(&self, step: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine { min_factor } => {
                let t = step as f64 / self.steps.max(1) as f64;
                let f = min_factor + (1.0 - min_factor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
                self.lr * f
            }
        }
    }
}

/// Outcome of a training run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    /// `(step, batch mse)` every `log_every` steps and at the last step.
    pub loss_curve: Vec<(usize, f64)>,
    /// `(step, learning rate)` at the same steps.
    pub lr_curve: Vec<(usize, f64)>,
    pub final_mse: f64,
    pub final_psnr: f64,
    pub wall_clock_secs: f64,
    pub steps: usize,
}

/// Adaptive-moment optimizer state over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Builds a batch for the given pixels using every channel of `img`.
pub fn make_batch(img: &StokesImage, pixels: &[(usize, usize)]) -> Batch {
    let nc = img.channels;
    let mut targets = Array2::zeros((pixels.len() * nc, 4));
    let mut weights = Array1::zeros(pixels.len() * nc);
    for (b, &(x, y)) in pixels.iter().enumerate() {
        for c in 0..nc {
            let r = b * nc + c;
            if img.is_valid_at(x, y, c) {
                let s = img.get(x, y, c).to_array();
                for k in 0..4 {
                    targets[(r, k)] = s[k];
                }
                weights[r] = 1.0;
            }
        }
    }
    Batch {
        pixels: pixels.iter().map(|&(x, y)| (x as f64, y as f64)).collect(),
        channels: (0..nc).map(|c| c as f64).collect(),
        targets,
        weights,
    }
}

/// Fits the network to `img` by minimizing MSE over valid sites.
pub fn inr_train(mut model: InrModel, img: &StokesImage, opts: &TrainOptions) -> Result<(InrModel, TrainReport)> {
    let start = Instant::now();
    let usable: Vec<(usize, usize)> = (0..img.height)
        .flat_map(|y| (0..img.width).map(move |x| (x, y)))
        .filter(|&(x, y)| (0..img.channels).any(|c| img.is_valid_at(x, y, c)))
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptySelection("image has no valid pixels to train on".into()));
    }
    model.coord_max = [
        img.width.saturating_sub(1) as f64,
        img.height.saturating_sub(1) as f64,
        img.channels.saturating_sub(1) as f64,
    ];
    if opts.init_output_bias {
        let mut mean = [0.0f64; 4];
        let mut n = 0usize;
        for (_, _, _, s) in img.valid_vectors() {
            for (m, v) in mean.iter_mut().zip(s.to_array()) {
                *m += v;
            }
            n += 1;
        }
        let out = *model.spectral.last().expect("output layer");
        for (k, m) in mean.iter().enumerate() {
            model.params[out.b + k] = m / n as f64;
        }
    }
    let full = (opts.batch_pixels >= usable.len()).then(|| make_batch(img, &usable));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = Adam::new(model.params.len());
    let mut checkpoint = model.clone();
    let mut loss_curve = Vec::new();
    let mut lr_curve = Vec::new();
    let log_every = opts.log_every.max(1);

    for step in 0..opts.steps {
        let sampled;
        let batch = match &full {
            Some(b) => b,
            None => {
                let pix: Vec<(usize, usize)> = (0..opts.batch_pixels)
                    .map(|_| usable[rng.random_range(0..usable.len())])
                    .collect();
                sampled = make_batch(img, &pix);
                &sampled
            }
        };
        let (loss, grad) = model.loss_and_grad(batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step,
                loss,
                checkpoint: Box::new(checkpoint),
            });
        }
        let lr = opts.lr_at(step);
        if step % log_every == 0 {
            loss_curve.push((step, loss));
            lr_curve.push((step, lr));
            checkpoint = model.clone();
        }
        adam.step(&mut model.params, &grad, lr);
    }
    let decoded = inr_decode(&model, img.width, img.height, img.channels);
    let q = quality(img, &decoded)?;
    if opts.steps > 0 && loss_curve.last().map(|l| l.0) != Some(opts.steps) {
        let last = match &full {
            Some(b) => model.loss(b),
            None => q.mse,
        };
        loss_curve.push((opts.steps, last));
        lr_curve.push((opts.steps, opts.lr_at(opts.steps)));
    }
    Ok((
        model,
        TrainReport {
            loss_curve,
            lr_curve,
            final_mse: q.mse,
            final_psnr: q.psnr,
            wall_clock_secs: start.elapsed().as_secs_f64(),
            steps: opts.steps,
        },
    ))
}

/// Evaluates the network on the full coordinate grid.
pub fn inr_decode(model: &InrModel, width: usize, height: usize, channels: usize) -> StokesImage {
    let chans: Vec<f64> = (0..channels).map(|c| c as f64).collect();
    let rows: Vec<Array2<f64>> = (0..height)
        .into_par_iter()
        .map(|y| {
            let pixels: Vec<(f64, f64)> = (0..width).map(|x| (x as f64, y as f64)).collect();
            model.predict(&pixels, &chans)
        })
        .collect();
    let mut img = StokesImage::new(width, height, channels);
    for (y, out) in rows.iter().enumerate() {
        for x in 0..width {
            for c in 0..channels {
                let r = out.row(x * channels + c);
                img.set(x, y, c, StokesVector::new(r[0], r[1], r[2], r[3]));
            }
        }
    }
    img
}
