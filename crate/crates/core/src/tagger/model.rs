use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::crf::{CrfNll, TagLattice};
use super::{LabelAlphabet, TaggerError};
use crate::numcore::{AdamConfig, Checkpoint, DType, Graph, ParamId, ParamStore, Tensor, Var};
use crate::seeding;

/// Parser hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerConfig {
    pub seed: u64,
    /// Recurrent state size per direction.
    pub hidden: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    /// Forbid `I-x` after anything but `B-x`/`I-x` in training and decoding.
    pub bio_mask: bool,
    pub adam: AdamConfig,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            seed: 0,
            hidden: 64,
            max_epochs: 50,
            patience: 5,
            batch_size: 8,
            clip_norm: Some(5.0),
            bio_mask: false,
            adam: AdamConfig::default(),
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<(), TaggerError> {
        if self.hidden == 0 || self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(TaggerError::Config(
                "hidden, max_epochs, patience and batch_size must be positive".into(),
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(TaggerError::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, TaggerError> {
        let cfg: TaggerConfig = toml::from_str(text).map_err(|e| TaggerError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
struct LstmDir {
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    input_dim: usize,
    hidden: usize,
    bio_mask: bool,
    labels: LabelAlphabet,
}

const META_KIND: &str = "tagger";

/// Single-layer bidirectional LSTM, linear emission layer and CRF
/// transitions.
#[derive(Clone, Debug)]
pub struct TaggerModel {
    pub labels: LabelAlphabet,
    pub input_dim: usize,
    pub hidden: usize,
    pub bio_mask: bool,
    params: ParamStore,
    fwd: LstmDir,
    bwd: LstmDir,
    emit_w: ParamId,
    emit_b: ParamId,
    transitions: ParamId,
}

fn lstm_dir(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut rand_chacha::ChaCha8Rng) -> LstmDir {
    // gate order: input, forget, cell, output; forget bias starts at 1
    let mut bias = Tensor::zeros(&[4 * hidden]);
    bias.data_mut()[hidden..2 * hidden].fill(1.0);
    LstmDir {
        w: store.insert(&format!("{name}.w"), Tensor::glorot(input, 4 * hidden, rng)),
        u: store.insert(&format!("{name}.u"), Tensor::glorot(hidden, 4 * hidden, rng)),
        b: store.insert(&format!("{name}.b"), bias),
    }
}

impl TaggerModel {
    pub fn new(labels: LabelAlphabet, input_dim: usize, hidden: usize, bio_mask: bool, seed: u64) -> Result<Self, TaggerError> {
        if input_dim == 0 || hidden == 0 || labels.is_empty() {
            return Err(TaggerError::Config("tagger dimensions must be positive".into()));
        }
        let k = labels.len();
        let mut store = ParamStore::new();
        let mut rng = seeding::stream(seed, "tagger-init", 0);
        let fwd = lstm_dir(&mut store, "lstm.fwd", input_dim, hidden, &mut rng);
        let bwd = lstm_dir(&mut store, "lstm.bwd", input_dim, hidden, &mut rng);
        let emit_w = store.insert("emit.w", Tensor::glorot(2 * hidden, k, &mut rng));
        let emit_b = store.insert("emit.b", Tensor::zeros(&[k]));
        let transitions = store.insert("crf.transitions", Tensor::zeros(&[k + 2, k + 2]));
        Ok(TaggerModel {
            labels,
            input_dim,
            hidden,
            bio_mask,
            params: store,
            fwd,
            bwd,
            emit_w,
            emit_b,
            transitions,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn transitions(&self) -> &Tensor {
        self.params.get(self.transitions)
    }

    fn run_direction(&self, g: &mut Graph, x: Var, n: usize, dir: &LstmDir, reverse: bool) -> Result<Vec<Var>, TaggerError> {
        let h = self.hidden;
        let w = g.param(&self.params, dir.w);
        let u = g.param(&self.params, dir.u);
        let b = g.param(&self.params, dir.b);
        let xw = g.matmul(x, w)?;
        let xw = g.add_row(xw, b)?;
        let mut state: Option<(Var, Var)> = None;
        let mut outs = vec![None; n];
        let steps: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in steps {
            let mut z = g.slice(xw, 0, t, 1)?;
            if let Some((hp, _)) = state {
                let hu = g.matmul(hp, u)?;
                z = g.add(z, hu)?;
            }
            let i = g.slice(z, 1, 0, h)?;
            let i = g.sigmoid(i);
            let f = g.slice(z, 1, h, h)?;
            let f = g.sigmoid(f);
            let c_in = g.slice(z, 1, 2 * h, h)?;
            let c_in = g.tanh(c_in);
            let o = g.slice(z, 1, 3 * h, h)?;
            let o = g.sigmoid(o);
            let mut c = g.mul(i, c_in)?;
            if let Some((_, cp)) = state {
                let keep = g.mul(f, cp)?;
                c = g.add(c, keep)?;
            }
            let tc = g.tanh(c);
            let hn = g.mul(o, tc)?;
            outs[t] = Some(hn);
            state = Some((hn, c));
        }
        Ok(outs.into_iter().map(|v| v.expect("every step visited")).collect())
    }

    /// Emission scores `[n, k]` and the effective transition matrix (masked
    /// when the BIO switch is on) for one utterance's embeddings.
    pub fn lattice_vars(&self, g: &mut Graph, embeddings: &Tensor) -> Result<(Var, Var), TaggerError> {
        let shape = embeddings.shape();
        if shape.len() != 2 || shape[0] == 0 {
            return Err(TaggerError::Lattice(format!("embeddings of shape {shape:?}")));
        }
        if shape[1] != self.input_dim {
            return Err(TaggerError::InputDim {
                expected: self.input_dim,
                got: shape[1],
            });
        }
        let n = shape[0];
        let x = g.constant(embeddings.clone());
        let f = self.run_direction(g, x, n, &self.fwd, false)?;
        let b = self.run_direction(g, x, n, &self.bwd, true)?;
        let f = g.concat(&f, 0)?;
        let b = g.concat(&b, 0)?;
        let hcat = g.concat(&[f, b], 1)?;
        let w = g.param(&self.params, self.emit_w);
        let bias = g.param(&self.params, self.emit_b);
        let e = g.matmul(hcat, w)?;
        let e = g.add_row(e, bias)?;
        let mut t = g.param(&self.params, self.transitions);
        if self.bio_mask {
            let m = g.constant(self.labels.bio_mask());
            t = g.add(t, m)?;
        }
        Ok((e, t))
    }

    /// CRF negative log-likelihood of `gold` on the graph.
    pub fn nll(&self, g: &mut Graph, embeddings: &Tensor, gold: &[usize]) -> Result<Var, TaggerError> {
        if gold.len() != embeddings.shape()[0] {
            return Err(TaggerError::GoldLength {
                expected: embeddings.shape()[0],
                got: gold.len(),
            });
        }
        if let Some(&bad) = gold.iter().find(|&&y| y >= self.labels.len()) {
            return Err(TaggerError::LabelRange {
                label: bad,
                labels: self.labels.len(),
            });
        }
        let (e, t) = self.lattice_vars(g, embeddings)?;
        Ok(g.custom(Arc::new(CrfNll { gold: gold.to_vec() }), &[e, t])?)
    }

    pub fn lattice(&self, embeddings: &Tensor) -> Result<TagLattice, TaggerError> {
        let mut g = Graph::new();
        let (e, t) = self.lattice_vars(&mut g, embeddings)?;
        TagLattice::new(g.value(e).clone(), g.value(t).clone())
    }

    /// Viterbi label ids for one utterance.
    pub fn decode(&self, embeddings: &Tensor) -> Result<Vec<usize>, TaggerError> {
        Ok(self.lattice(embeddings)?.viterbi().0)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Meta {
            kind: META_KIND.to_owned(),
            input_dim: self.input_dim,
            hidden: self.hidden,
            bio_mask: self.bio_mask,
            labels: self.labels.clone(),
        };
        Checkpoint {
            meta: serde_json::to_string(&meta).expect("metadata serialises"),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, TaggerError> {
        let meta: Meta = serde_json::from_str(&ckpt.meta).map_err(|e| TaggerError::Meta(e.to_string()))?;
        if meta.kind != META_KIND {
            return Err(TaggerError::Meta(format!("expected a {META_KIND} checkpoint, found {:?}", meta.kind)));
        }
        let mut model = TaggerModel::new(meta.labels, meta.input_dim, meta.hidden, meta.bio_mask, 0)?;
        if ckpt.params.len() != model.params.len() {
            return Err(TaggerError::Meta(format!(
                "checkpoint holds {} tensors, model expects {}",
                ckpt.params.len(),
                model.params.len()
            )));
        }
        for (name, tensor) in ckpt.params.iter() {
            let id = model
                .params
                .id(name)
                .ok_or_else(|| TaggerError::Meta(format!("unexpected tensor {name:?}")))?;
            if model.params.get(id).shape() != tensor.shape() || !tensor.is_finite() {
                return Err(TaggerError::Meta(format!("tensor {name:?} has the wrong shape or non-finite values")));
            }
            *model.params.get_mut(id) = tensor.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path, dtype: DType) -> Result<(), TaggerError> {
        Ok(self.to_checkpoint().save(path, dtype)?)
    }

    pub fn load(path: &Path) -> Result<Self, TaggerError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
