use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::examples::PretrainExample;
use super::loss::HeadPredictions;
use super::pause::BinningScheme;
use super::vocab::{Vocabulary, CLS};
use super::{EncoderError, Mode};
use crate::numcore::{Checkpoint, DType, Graph, ParamId, ParamStore, Tensor, Var};
use crate::seeding;

/// Transformer encoder dimensions. `max_len` counts the classification
/// token, so at most `max_len - 1` words fit in one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn_hidden: 128,
            max_len: 32,
            dropout: 0.1,
            layer_norm_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::Config(m.to_owned()));
        if self.hidden == 0 || self.layers == 0 || self.heads == 0 || self.ffn_hidden == 0 {
            return bad("encoder dimensions must be positive");
        }
        if self.hidden % self.heads != 0 {
            return bad("hidden size must be divisible by the number of heads");
        }
        if self.max_len < 2 {
            return bad("max_len must leave room for at least one token");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.layer_norm_eps > 0.0) || !(self.init_std > 0.0) {
            return bad("layer_norm_eps and init_std must be positive");
        }
        Ok(())
    }

    pub fn max_tokens(&self) -> usize {
        self.max_len - 1
    }
}

#[derive(Clone, Debug)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct Layer {
    q: Dense,
    k: Dense,
    v: Dense,
    o: Dense,
    norm1: Norm,
    ff1: Dense,
    ff2: Dense,
    norm2: Norm,
}

#[derive(Clone, Debug)]
enum PauseHead {
    None,
    Hbc { coarse: Dense, fine: Dense },
    Nlr { out: Dense },
}

/// Summed losses over a batch; `total = bert + lambda * aux`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bert: f64,
    pub aux: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.bert.is_finite() && self.aux.is_finite() && self.total.is_finite()
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    mode: Mode,
    config: EncoderConfig,
    binning: BinningScheme,
    vocab: Vocabulary,
}

const META_KIND: &str = "encoder";

/// Pretrained contextual encoder with its masked-token head and, outside
/// baseline mode, one pause head.
#[derive(Clone, Debug)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub mode: Mode,
    pub binning: BinningScheme,
    vocab: Vocabulary,
    params: ParamStore,
    tok_emb: ParamId,
    pos_emb: ParamId,
    emb_norm: Norm,
    layers: Vec<Layer>,
    mlm: Dense,
    pause: PauseHead,
}

fn dense<R: Rng>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Dense {
    Dense {
        w: store.insert(&format!("{name}.w"), Tensor::glorot(fan_in, fan_out, rng)),
        b: store.insert(&format!("{name}.b"), Tensor::zeros(&[fan_out])),
    }
}

fn norm(store: &mut ParamStore, name: &str, dim: usize) -> Norm {
    Norm {
        gain: store.insert(&format!("{name}.gain"), Tensor::filled(&[dim], 1.0)),
        bias: store.insert(&format!("{name}.bias"), Tensor::zeros(&[dim])),
    }
}

impl EncoderModel {
    /// Fresh model. The trunk, masked-token head and pause head draw from
    /// separate random streams, so the trunk initialisation does not depend
    /// on the mode.
    pub fn new(
        config: EncoderConfig,
        mode: Mode,
        vocab: Vocabulary,
        binning: BinningScheme,
        seed: u64,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        binning.validate()?;
        let d = config.hidden;
        let mut store = ParamStore::new();
        let mut rng = seeding::stream(seed, "encoder-init", 0);
        let tok_emb = store.insert("emb.tok", Tensor::randn(&[vocab.len(), d], config.init_std, &mut rng));
        let pos_emb = store.insert("emb.pos", Tensor::randn(&[config.max_len, d], config.init_std, &mut rng));
        let emb_norm = norm(&mut store, "emb.norm", d);
        let layers = (0..config.layers)
            .map(|i| {
                let p = format!("layer{i}");
                Layer {
                    q: dense(&mut store, &format!("{p}.attn.q"), d, d, &mut rng),
                    k: dense(&mut store, &format!("{p}.attn.k"), d, d, &mut rng),
                    v: dense(&mut store, &format!("{p}.attn.v"), d, d, &mut rng),
                    o: dense(&mut store, &format!("{p}.attn.o"), d, d, &mut rng),
                    norm1: norm(&mut store, &format!("{p}.norm1"), d),
                    ff1: dense(&mut store, &format!("{p}.ff1"), d, config.ffn_hidden, &mut rng),
                    ff2: dense(&mut store, &format!("{p}.ff2"), config.ffn_hidden, d, &mut rng),
                    norm2: norm(&mut store, &format!("{p}.norm2"), d),
                }
            })
            .collect();
        let mut rng = seeding::stream(seed, "encoder-init-mlm", 0);
        let mlm = dense(&mut store, "mlm", d, vocab.len(), &mut rng);
        let pause = match mode {
            Mode::Baseline => PauseHead::None,
            Mode::Hbc => {
                let mut rng = seeding::stream(seed, "encoder-init-hbc", 0);
                PauseHead::Hbc {
                    coarse: dense(&mut store, "hbc.coarse", d, 2, &mut rng),
                    fine: dense(&mut store, "hbc.fine", d, 3, &mut rng),
                }
            }
            Mode::Nlr => {
                let mut rng = seeding::stream(seed, "encoder-init-nlr", 0);
                PauseHead::Nlr {
                    out: dense(&mut store, "nlr.out", d, 1, &mut rng),
                }
            }
        };
        Ok(EncoderModel {
            config,
            mode,
            binning,
            vocab,
            params: store,
            tok_emb,
            pos_emb,
            emb_norm,
            layers,
            mlm,
            pause,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    /// Names of the pause-head parameters (empty in baseline mode).
    pub fn pause_head_params(&self) -> Vec<ParamId> {
        match &self.pause {
            PauseHead::None => vec![],
            PauseHead::Hbc { coarse, fine } => vec![coarse.w, coarse.b, fine.w, fine.b],
            PauseHead::Nlr { out } => vec![out.w, out.b],
        }
    }

    fn linear(&self, g: &mut Graph, x: Var, d: &Dense) -> Result<Var, EncoderError> {
        let w = g.param(&self.params, d.w);
        let b = g.param(&self.params, d.b);
        let y = g.matmul(x, w)?;
        Ok(g.add_row(y, b)?)
    }

    fn norm(&self, g: &mut Graph, x: Var, n: &Norm) -> Result<Var, EncoderError> {
        let z = g.layer_norm(x, self.config.layer_norm_eps);
        let gain = g.param(&self.params, n.gain);
        let bias = g.param(&self.params, n.bias);
        let z = g.mul_row(z, gain)?;
        Ok(g.add_row(z, bias)?)
    }

    fn dropout(&self, g: &mut Graph, x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var, EncoderError> {
        let p = self.config.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 - p;
                let mask = (0..g.value(x).numel())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                Ok(g.dropout(x, mask)?)
            }
            _ => Ok(x),
        }
    }

    /// Contextual states for `ids` (classification token prepended
    /// internally, excluded from the result): `[n, hidden]`. Dropout is
    /// applied only when `rng` is given.
    pub fn encode(&self, g: &mut Graph, ids: &[usize], mut rng: Option<&mut ChaCha8Rng>) -> Result<Var, EncoderError> {
        let n = ids.len();
        if n == 0 || n > self.config.max_tokens() {
            return Err(EncoderError::Length {
                len: n,
                max: self.config.max_tokens(),
            });
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab.len()) {
            return Err(EncoderError::Predictions(format!("token id {bad} outside vocabulary")));
        }
        let full: Vec<usize> = std::iter::once(CLS).chain(ids.iter().copied()).collect();
        let tok_table = g.param(&self.params, self.tok_emb);
        let pos_table = g.param(&self.params, self.pos_emb);
        let tok = g.embedding(tok_table, &full)?;
        let pos = g.slice(pos_table, 0, 0, n + 1)?;
        let x = g.add(tok, pos)?;
        let x = self.norm(g, x, &self.emb_norm)?;
        let mut x = self.dropout(g, x, rng.as_deref_mut())?;

        let heads = self.config.heads;
        let dh = self.config.hidden / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for layer in &self.layers {
            let q = self.linear(g, x, &layer.q)?;
            let k = self.linear(g, x, &layer.k)?;
            let v = self.linear(g, x, &layer.v)?;
            let mut outs = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = g.slice(q, 1, h * dh, dh)?;
                let kh = g.slice(k, 1, h * dh, dh)?;
                let vh = g.slice(v, 1, h * dh, dh)?;
                let kt = g.transpose(kh)?;
                let scores = g.matmul(qh, kt)?;
                let scores = g.scale(scores, scale);
                let att = g.softmax(scores);
                outs.push(g.matmul(att, vh)?);
            }
            let cat = g.concat(&outs, 1)?;
            let a = self.linear(g, cat, &layer.o)?;
            let a = self.dropout(g, a, rng.as_deref_mut())?;
            let r = g.add(x, a)?;
            x = self.norm(g, r, &layer.norm1)?;
            let f = self.linear(g, x, &layer.ff1)?;
            let f = g.relu(f);
            let f = self.linear(g, f, &layer.ff2)?;
            let f = self.dropout(g, f, rng.as_deref_mut())?;
            let r = g.add(x, f)?;
            x = self.norm(g, r, &layer.norm2)?;
        }
        Ok(g.slice(x, 0, 1, n)?)
    }

    /// Per-example loss terms on the graph: `(bert, aux)` scalars. `aux` is
    /// `None` in baseline mode or when the example has no pause targets.
    pub fn example_losses(
        &self,
        g: &mut Graph,
        ex: &PretrainExample,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Option<Var>, Option<Var>), EncoderError> {
        let h = self.encode(g, &ex.input_ids, rng)?;
        let bert = if ex.mlm_positions.is_empty() {
            None
        } else {
            let rows = g.embedding(h, &ex.mlm_positions)?;
            let logits = self.linear(g, rows, &self.mlm)?;
            let logp = g.log_softmax(logits);
            let targets: Vec<usize> = ex.mlm_positions.iter().map(|&p| ex.original_ids[p]).collect();
            let picked = g.pick(logp, &targets)?;
            let s = g.sum(picked);
            Some(g.scale(s, -1.0))
        };
        if ex.pause_targets.is_empty() {
            return Ok((bert, None));
        }
        let positions: Vec<usize> = ex.pause_targets.iter().map(|t| t.position).collect();
        let aux = match &self.pause {
            PauseHead::None => None,
            PauseHead::Hbc { coarse, fine } => {
                let rows = g.embedding(h, &positions)?;
                let logits = self.linear(g, rows, coarse)?;
                let logp = g.log_softmax(logits);
                let cls: Vec<usize> = ex.pause_targets.iter().map(|t| t.bin.coarse_index()).collect();
                let picked = g.pick(logp, &cls)?;
                let mut total = g.sum(picked);
                let present: Vec<(usize, usize)> = ex
                    .pause_targets
                    .iter()
                    .filter_map(|t| t.bin.fine.map(|b| (t.position, b.index())))
                    .collect();
                if !present.is_empty() {
                    let pos: Vec<usize> = present.iter().map(|p| p.0).collect();
                    let bins: Vec<usize> = present.iter().map(|p| p.1).collect();
                    let rows = g.embedding(h, &pos)?;
                    let logits = self.linear(g, rows, fine)?;
                    let logp = g.log_softmax(logits);
                    let picked = g.pick(logp, &bins)?;
                    let s = g.sum(picked);
                    total = g.add(total, s)?;
                }
                Some(g.scale(total, -1.0))
            }
            PauseHead::Nlr { out } => {
                let rows = g.embedding(h, &positions)?;
                let z = self.linear(g, rows, out)?;
                let y = g.sigmoid(z);
                let target = Tensor::new(
                    vec![positions.len(), 1],
                    ex.pause_targets.iter().map(|t| t.normalized).collect(),
                )?;
                let target = g.constant(target);
                let diff = g.sub(y, target)?;
                let sq = g.square(diff);
                Some(g.sum(sq))
            }
        };
        Ok((bert, aux))
    }

    /// Builds the summed batch loss `Σ bert + lambda * Σ aux` on `g`.
    pub fn batch_loss(
        &self,
        g: &mut Graph,
        batch: &[&PretrainExample],
        lambda: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, LossBreakdown), EncoderError> {
        let mut berts = Vec::new();
        let mut auxes = Vec::new();
        for ex in batch {
            let (b, a) = self.example_losses(g, ex, rng.as_deref_mut())?;
            berts.extend(b);
            auxes.extend(a);
        }
        let sum_all = |g: &mut Graph, vars: &[Var]| -> Result<Option<Var>, EncoderError> {
            let mut it = vars.iter().copied();
            let Some(first) = it.next() else { return Ok(None) };
            it.try_fold(first, |acc, v| g.add(acc, v)).map(Some).map_err(EncoderError::from)
        };
        let bert = sum_all(g, &berts)?;
        let aux = sum_all(g, &auxes)?;
        let zero = || Tensor::scalar(0.0);
        let bert = bert.unwrap_or_else(|| g.constant(zero()));
        let breakdown_bert = g.value(bert).item();
        let (total, breakdown_aux) = match aux {
            Some(a) => {
                let av = g.value(a).item();
                let scaled = g.scale(a, lambda);
                (g.add(bert, scaled)?, av)
            }
            None => (bert, 0.0),
        };
        let breakdown = LossBreakdown {
            bert: breakdown_bert,
            aux: breakdown_aux,
            total: g.value(total).item(),
        };
        Ok((total, breakdown))
    }

    /// Evaluation-mode head probabilities for one example, in the layout the
    /// reference loss functions expect.
    pub fn predict(&self, ex: &PretrainExample) -> Result<HeadPredictions, EncoderError> {
        let mut g = Graph::new();
        let h = self.encode(&mut g, &ex.input_ids, None)?;
        let mut pred = HeadPredictions::default();
        if !ex.mlm_positions.is_empty() {
            let rows = g.embedding(h, &ex.mlm_positions)?;
            let logits = self.linear(&mut g, rows, &self.mlm)?;
            let p = g.softmax(logits);
            pred.mlm = g.value(p).to_rows();
        }
        if ex.pause_targets.is_empty() {
            return Ok(pred);
        }
        let positions: Vec<usize> = ex.pause_targets.iter().map(|t| t.position).collect();
        let rows = g.embedding(h, &positions)?;
        match &self.pause {
            PauseHead::None => {}
            PauseHead::Hbc { coarse, fine } => {
                let c = self.linear(&mut g, rows, coarse)?;
                let c = g.softmax(c);
                let f = self.linear(&mut g, rows, fine)?;
                let f = g.softmax(f);
                pred.coarse = g.value(c).to_rows().into_iter().map(|r| [r[0], r[1]]).collect();
                pred.fine = g.value(f).to_rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
            }
            PauseHead::Nlr { out } => {
                let z = self.linear(&mut g, rows, out)?;
                let y = g.sigmoid(z);
                pred.regression = g.value(y).data().to_vec();
            }
        }
        Ok(pred)
    }

    /// Frozen contextual embeddings for token ids, `[n, hidden]`. Sequences
    /// longer than one window are encoded window by window.
    pub fn embed_ids(&self, ids: &[usize]) -> Result<Tensor, EncoderError> {
        if ids.is_empty() {
            return Err(EncoderError::Length {
                len: 0,
                max: self.config.max_tokens(),
            });
        }
        let d = self.config.hidden;
        let mut data = Vec::with_capacity(ids.len() * d);
        for window in ids.chunks(self.config.max_tokens()) {
            let mut g = Graph::new();
            let h = self.encode(&mut g, window, None)?;
            data.extend_from_slice(g.value(h).data());
        }
        Ok(Tensor::new(vec![ids.len(), d], data)?)
    }

    pub fn embed(&self, words: &[&str]) -> Result<Tensor, EncoderError> {
        self.embed_ids(&self.vocab.encode(words))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Meta {
            kind: META_KIND.to_owned(),
            mode: self.mode,
            config: self.config,
            binning: self.binning,
            vocab: self.vocab.clone(),
        };
        Checkpoint {
            meta: serde_json::to_string(&meta).expect("metadata serialises"),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, EncoderError> {
        let meta: Meta = serde_json::from_str(&ckpt.meta).map_err(|e| EncoderError::Meta(e.to_string()))?;
        if meta.kind != META_KIND {
            return Err(EncoderError::Meta(format!("expected an {META_KIND} checkpoint, found {:?}", meta.kind)));
        }
        let mut model = EncoderModel::new(meta.config, meta.mode, meta.vocab, meta.binning, 0)?;
        if ckpt.params.len() != model.params.len() {
            return Err(EncoderError::Meta(format!(
                "checkpoint holds {} tensors, model expects {}",
                ckpt.params.len(),
                model.params.len()
            )));
        }
        for (name, tensor) in ckpt.params.iter() {
            let id = model
                .params
                .id(name)
                .ok_or_else(|| EncoderError::Meta(format!("unexpected tensor {name:?}")))?;
            if model.params.get(id).shape() != tensor.shape() {
                return Err(EncoderError::Meta(format!(
                    "tensor {name:?} has shape {:?}, expected {:?}",
                    tensor.shape(),
                    model.params.get(id).shape()
                )));
            }
            if !tensor.is_finite() {
                return Err(EncoderError::Meta(format!("tensor {name:?} holds non-finite values")));
            }
            *model.params.get_mut(id) = tensor.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path, dtype: DType) -> Result<(), EncoderError> {
        Ok(self.to_checkpoint().save(path, dtype)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EncoderError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
