use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, ModelConfig, ModelError};
use crate::ndgrad::{
    bce_loss, dropout, dropout_backward, maxpool1d, maxpool1d_backward, relu, relu_backward,
    sigmoid, sigmoid_backward, BatchNorm1d, BatchNormCache, Conv1d, Dense, GradError, LstmCache,
    LstmLayer, Mode, ParameterSet, Tensor,
};
use crate::preprocess::FeatureWindow;

#[derive(Debug, Clone)]
struct ConvBlock {
    conv: Conv1d,
    bn: BatchNorm1d,
}

#[derive(Debug, Clone)]
enum Encoder {
    /// conv → max-pool → dropout → batch norm, per block.
    Cnn(Vec<ConvBlock>),
    Lstm(Vec<LstmLayer>),
}

/// Layer structure of a network; parameter values live in a separate
/// [`ParameterSet`] so the same graph can be evaluated on perturbed copies.
#[derive(Debug, Clone)]
pub struct Graph {
    architecture: Architecture,
    encoder: Encoder,
    head: Vec<Dense>,
    conv_dropout: f64,
    fc_dropout: f64,
    pool_size: usize,
    channels: usize,
    window_length: usize,
    embedding: usize,
}

struct BlockCache {
    input: Tensor,
    conv_shape: Vec<usize>,
    argmax: Vec<usize>,
    mask: Option<Vec<f64>>,
    bn: BatchNormCache,
}

enum EncoderCache {
    Cnn(Vec<BlockCache>),
    Lstm(Vec<LstmCache>),
}

struct HeadCache {
    inputs: Vec<Tensor>,
    pre_activations: Vec<Tensor>,
    masks: Vec<Option<Vec<f64>>>,
    probs: Tensor,
}

/// One training mini-batch. Windows are `[B, channels, length]`; pairs
/// index into the window tensor, so each distinct window is encoded once.
#[derive(Debug, Clone, Copy)]
pub enum Batch<'a> {
    Windows {
        x: &'a Tensor,
        targets: &'a [f64],
    },
    Pairs {
        x: &'a Tensor,
        pairs: &'a [(usize, usize)],
        targets: &'a [f64],
    },
}

fn to_time_major(x: &Tensor) -> Result<Tensor, GradError> {
    let [b, c, l] = *x.shape() else {
        return Err(GradError::Shape(format!(
            "expected [B, C, L], got {:?}",
            x.shape()
        )));
    };
    let mut out = vec![0.0; b * c * l];
    let d = x.data();
    for s in 0..b {
        for ch in 0..c {
            for t in 0..l {
                out[s * l * c + t * c + ch] = d[s * c * l + ch * l + t];
            }
        }
    }
    Tensor::new(&[b, l, c], out)
}

fn abs_diff(ea: &[f64], eb: &[f64]) -> Vec<f64> {
    ea.iter().zip(eb).map(|(a, b)| (a - b).abs()).collect()
}

impl Graph {
    fn build(cfg: &ModelConfig, params: &mut ParameterSet) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let encoder = if cfg.architecture.is_recurrent() {
            let mut layers = Vec::with_capacity(cfg.lstm_layers);
            let mut input = cfg.channels;
            for i in 0..cfg.lstm_layers {
                layers.push(LstmLayer::new(
                    params,
                    &format!("encoder.lstm{}", i + 1),
                    input,
                    cfg.lstm_hidden,
                    &mut rng,
                ));
                input = cfg.lstm_hidden;
            }
            Encoder::Lstm(layers)
        } else {
            let mut blocks = Vec::with_capacity(cfg.conv_filters.len());
            let mut input = cfg.channels;
            for (i, &f) in cfg.conv_filters.iter().enumerate() {
                let name = format!("encoder.block{}", i + 1);
                let conv = Conv1d::new(
                    params,
                    &format!("{name}.conv"),
                    input,
                    f,
                    cfg.kernel_size,
                    &mut rng,
                );
                let bn = BatchNorm1d::new(params, &format!("{name}.bn"), f);
                blocks.push(ConvBlock { conv, bn });
                input = f;
            }
            Encoder::Cnn(blocks)
        };
        let embedding = cfg.embedding_width()?;
        let mut head = Vec::with_capacity(cfg.fc_layers.len() + 1);
        let mut width = embedding;
        for (i, &w) in cfg.fc_layers.iter().chain(std::iter::once(&1)).enumerate() {
            head.push(Dense::new(
                params,
                &format!("head.fc{}", i + 1),
                width,
                w,
                &mut rng,
            ));
            width = w;
        }
        Ok(Self {
            architecture: cfg.architecture,
            encoder,
            head,
            conv_dropout: cfg.conv_dropout,
            fc_dropout: cfg.fc_dropout,
            pool_size: cfg.pool_size,
            channels: cfg.channels,
            window_length: cfg.window_length,
            embedding,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<usize, GradError> {
        match *x.shape() {
            [b, c, l] if c == self.channels && l == self.window_length => Ok(b),
            _ => Err(GradError::Shape(format!(
                "expected [B, {}, {}] input, got {:?}",
                self.channels,
                self.window_length,
                x.shape()
            ))),
        }
    }

    fn encode_train(
        &self,
        params: &mut ParameterSet,
        x: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, EncoderCache), GradError> {
        let b = self.check_input(x)?;
        match &self.encoder {
            Encoder::Cnn(blocks) => {
                let mut h = x.clone();
                let mut caches = Vec::with_capacity(blocks.len());
                for blk in blocks {
                    let c = blk.conv.forward(params, &h)?;
                    let pooled = maxpool1d(&c, self.pool_size)?;
                    let (d, mask) = dropout(&pooled.output, self.conv_dropout, rng, Mode::Train)?;
                    let (out, bn) = blk.bn.forward(params, &d, Mode::Train)?;
                    caches.push(BlockCache {
                        input: h,
                        conv_shape: c.shape().to_vec(),
                        argmax: pooled.argmax,
                        mask,
                        bn: bn.expect("train mode returns a cache"),
                    });
                    h = out;
                }
                Ok((h.reshape(&[b, self.embedding])?, EncoderCache::Cnn(caches)))
            }
            Encoder::Lstm(layers) => {
                let mut h = to_time_major(x)?;
                let mut caches = Vec::with_capacity(layers.len());
                for layer in layers {
                    let (out, cache) = layer.forward(params, &h)?;
                    caches.push(cache);
                    h = out;
                }
                Ok((h.reshape(&[b, self.embedding])?, EncoderCache::Lstm(caches)))
            }
        }
    }

    fn encode_backward(
        &self,
        params: &mut ParameterSet,
        cache: &EncoderCache,
        grad: Tensor,
    ) -> Result<(), GradError> {
        match (&self.encoder, cache) {
            (Encoder::Cnn(blocks), EncoderCache::Cnn(caches)) => {
                let last = &caches[caches.len() - 1];
                let (b, c, l) = (
                    last.conv_shape[0],
                    last.conv_shape[1],
                    last.conv_shape[2] / self.pool_size,
                );
                let mut g = grad.reshape(&[b, c, l])?;
                for (blk, bc) in blocks.iter().zip(caches).rev() {
                    g = blk.bn.backward(params, &bc.bn, &g)?;
                    g = dropout_backward(bc.mask.as_deref(), &g);
                    g = maxpool1d_backward(&bc.conv_shape, &bc.argmax, &g)?;
                    g = blk.conv.backward(params, &bc.input, &g)?;
                }
                Ok(())
            }
            (Encoder::Lstm(layers), EncoderCache::Lstm(caches)) => {
                let h = layers[layers.len() - 1].hidden_size;
                let b = grad.len() / self.embedding;
                let mut g = grad.reshape(&[b, self.window_length, h])?;
                for (layer, lc) in layers.iter().zip(caches).rev() {
                    g = layer.backward(params, lc, &g)?;
                }
                Ok(())
            }
            _ => unreachable!("cache kind always matches the encoder"),
        }
    }

    fn encode_eval(&self, params: &ParameterSet, x: &Tensor) -> Result<Tensor, GradError> {
        let b = self.check_input(x)?;
        let h = match &self.encoder {
            Encoder::Cnn(blocks) => {
                let mut h = x.clone();
                for blk in blocks {
                    let c = blk.conv.forward(params, &h)?;
                    let pooled = maxpool1d(&c, self.pool_size)?;
                    h = blk.bn.forward_eval(params, &pooled.output)?;
                }
                h
            }
            Encoder::Lstm(layers) => {
                let mut h = to_time_major(x)?;
                for layer in layers {
                    h = layer.forward(params, &h)?.0;
                }
                h
            }
        };
        h.reshape(&[b, self.embedding])
    }

    fn head_forward(
        &self,
        params: &ParameterSet,
        e: Tensor,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<HeadCache, GradError> {
        let n = self.head.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n - 1);
        let mut masks = Vec::with_capacity(n - 1);
        let mut a = e;
        for layer in &self.head[..n - 1] {
            let z = layer.forward(params, &a)?;
            let r = relu(&z);
            let (r, mask) = dropout(&r, self.fc_dropout, rng, mode)?;
            inputs.push(a);
            pre_activations.push(z);
            masks.push(mask);
            a = r;
        }
        let logits = self.head[n - 1].forward(params, &a)?;
        inputs.push(a);
        let probs = sigmoid(&logits);
        probs.check_finite("sigmoid")?;
        Ok(HeadCache {
            inputs,
            pre_activations,
            masks,
            probs,
        })
    }

    fn head_backward(
        &self,
        params: &mut ParameterSet,
        cache: &HeadCache,
        grad_probs: &Tensor,
    ) -> Result<Tensor, GradError> {
        let n = self.head.len();
        let dlogits = sigmoid_backward(&cache.probs, grad_probs);
        let mut g = self.head[n - 1].backward(params, &cache.inputs[n - 1], &dlogits)?;
        for i in (0..n - 1).rev() {
            g = dropout_backward(cache.masks[i].as_deref(), &g);
            g = relu_backward(&cache.pre_activations[i], &g);
            g = self.head[i].backward(params, &cache.inputs[i], &g)?;
        }
        Ok(g)
    }

    /// Training-mode loss of a batch; with `backward` the parameter
    /// gradients are accumulated into `params`. Dropout masks are drawn from
    /// a generator seeded with `seed`, so the loss is a pure function of
    /// `(params, batch, seed)`.
    pub fn run(
        &self,
        params: &mut ParameterSet,
        batch: Batch<'_>,
        seed: u64,
        backward: bool,
    ) -> Result<f64, GradError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match batch {
            Batch::Windows { x, targets } => {
                if self.architecture.is_siamese() {
                    return Err(GradError::Shape("Siamese networks train on pairs".into()));
                }
                let b = self.check_input(x)?;
                if targets.len() != b {
                    return Err(GradError::Shape(format!(
                        "{} targets for {b} windows",
                        targets.len()
                    )));
                }
                let (e, enc) = self.encode_train(params, x, &mut rng)?;
                let head = self.head_forward(params, e, Mode::Train, &mut rng)?;
                let (loss, dp) = bce_loss(head.probs.data(), targets);
                if !loss.is_finite() {
                    return Err(GradError::NonFinite("bce"));
                }
                if backward {
                    let de = self.head_backward(params, &head, &Tensor::new(&[b, 1], dp)?)?;
                    self.encode_backward(params, &enc, de)?;
                }
                Ok(loss)
            }
            Batch::Pairs { x, pairs, targets } => {
                if !self.architecture.is_siamese() {
                    return Err(GradError::Shape("single networks train on windows".into()));
                }
                let u = self.check_input(x)?;
                if targets.len() != pairs.len() || pairs.iter().any(|&(a, b)| a >= u || b >= u) {
                    return Err(GradError::Shape(
                        "pair indices or targets do not match the window batch".into(),
                    ));
                }
                let w = self.embedding;
                let (e, enc) = self.encode_train(params, x, &mut rng)?;
                let ed = e.data();
                let mut diff = Vec::with_capacity(pairs.len() * w);
                for &(a, b) in pairs {
                    diff.extend(abs_diff(&ed[a * w..(a + 1) * w], &ed[b * w..(b + 1) * w]));
                }
                let head = self.head_forward(
                    params,
                    Tensor::new(&[pairs.len(), w], diff)?,
                    Mode::Train,
                    &mut rng,
                )?;
                let (loss, dp) = bce_loss(head.probs.data(), targets);
                if !loss.is_finite() {
                    return Err(GradError::NonFinite("bce"));
                }
                if backward {
                    let dd =
                        self.head_backward(params, &head, &Tensor::new(&[pairs.len(), 1], dp)?)?;
                    let mut de = vec![0.0; u * w];
                    for (p, &(a, b)) in pairs.iter().enumerate() {
                        for k in 0..w {
                            let s = (ed[a * w + k] - ed[b * w + k]).signum();
                            let s = if ed[a * w + k] == ed[b * w + k] {
                                0.0
                            } else {
                                s
                            };
                            let g = dd.data()[p * w + k] * s;
                            de[a * w + k] += g;
                            de[b * w + k] -= g;
                        }
                    }
                    self.encode_backward(params, &enc, Tensor::new(&[u, w], de)?)?;
                }
                Ok(loss)
            }
        }
    }
}

/// A built network: layer graph plus parameters.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub params: ParameterSet,
    graph: Graph,
}

/// Build one of the four architectures with seeded initialization. All
/// values are rounded to `f32` so checkpoints are lossless.
pub fn build_model(config: &ModelConfig) -> Result<Network, ModelError> {
    let mut params = ParameterSet::new();
    let graph = Graph::build(config, &mut params)?;
    params.round_to_f32();
    Ok(Network {
        config: config.clone(),
        params,
        graph,
    })
}

/// Stack windows into a `[B, channels, length]` tensor.
pub fn windows_tensor(windows: &[&FeatureWindow]) -> Result<Tensor, ModelError> {
    let Some(first) = windows.first() else {
        return Err(ModelError::Shape("no windows".into()));
    };
    let (c, l) = (crate::preprocess::NUM_CHANNELS, first.length());
    let mut data = Vec::with_capacity(windows.len() * c * l);
    for w in windows {
        if w.data.len() != c * l {
            return Err(ModelError::Shape("windows differ in length".into()));
        }
        data.extend_from_slice(&w.data);
    }
    Ok(Tensor::new(&[windows.len(), c, l], data)?)
}

impl Network {
    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn embedding_width(&self) -> usize {
        self.graph.embedding
    }

    /// Training-mode forward and backward; gradients accumulate in `self.params`.
    pub fn backprop(&mut self, batch: Batch<'_>, seed: u64) -> Result<f64, GradError> {
        self.graph.run(&mut self.params, batch, seed, true)
    }

    /// Training-mode loss evaluated on an arbitrary parameter set.
    pub fn batch_loss(
        &self,
        params: &mut ParameterSet,
        batch: Batch<'_>,
        seed: u64,
    ) -> Result<f64, GradError> {
        self.graph.run(params, batch, seed, false)
    }

    /// Inference-mode encoder output, `[B, E]`.
    pub fn embed(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.graph.encode_eval(&self.params, x)?)
    }

    /// Inference-mode head on encoder outputs (or Siamese differences).
    pub fn head_probabilities(&self, e: Tensor) -> Result<Vec<f64>, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self
            .graph
            .head_forward(&self.params, e, Mode::Eval, &mut rng)?
            .probs
            .into_data())
    }

    /// Error probabilities of a single network for `[B, C, L]` windows.
    pub fn predict_batch(&self, x: &Tensor) -> Result<Vec<f64>, ModelError> {
        if self.architecture().is_siamese() {
            return Err(ModelError::Config(
                "Siamese networks score pairs, not windows".into(),
            ));
        }
        self.head_probabilities(self.embed(x)?)
    }

    /// Siamese "different class" probabilities for aligned pairs of `[B, C, L]` windows.
    pub fn pair_probabilities(&self, xa: &Tensor, xb: &Tensor) -> Result<Vec<f64>, ModelError> {
        if !self.architecture().is_siamese() {
            return Err(ModelError::Config(
                "only Siamese networks score pairs".into(),
            ));
        }
        if xa.shape() != xb.shape() {
            return Err(ModelError::Shape("pair batches differ in shape".into()));
        }
        let (ea, eb) = (self.embed(xa)?, self.embed(xb)?);
        let d = abs_diff(ea.data(), eb.data());
        self.head_probabilities(Tensor::new(ea.shape(), d)?)
    }

    /// Head output for `|query − reference_j|` over every reference embedding.
    pub fn compare_embeddings(
        &self,
        query: &[f64],
        references: &Tensor,
    ) -> Result<Vec<f64>, ModelError> {
        let w = self.graph.embedding;
        if query.len() != w || !references.len().is_multiple_of(w) {
            return Err(ModelError::Shape("embedding width mismatch".into()));
        }
        let r = references.len() / w;
        let mut d = Vec::with_capacity(r * w);
        for j in 0..r {
            d.extend(abs_diff(query, &references.data()[j * w..(j + 1) * w]));
        }
        self.head_probabilities(Tensor::new(&[r, w], d)?)
    }
}
