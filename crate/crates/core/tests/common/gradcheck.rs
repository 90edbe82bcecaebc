//! Central-difference checks of every graph primitive and of the composite
//! losses.

use std::sync::Arc;

use pausetag::corpus::{BioTag, Token, Utterance};
use pausetag::encoder::{make_example, BinningScheme, EncoderConfig, EncoderModel, MaskingConfig, Mode, Vocabulary};
use pausetag::numcore::{finite_difference, max_relative_error, Gradients, Graph, Tensor, Var};
use pausetag::tagger::CrfNll;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

type Build = dyn Fn(&mut Graph, &[Var]) -> Var;

/// Values with magnitude in [0.1, 1] so kinks (relu) are never straddled.
pub fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn normal(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

/// Scalar `Σ w ⊙ build(inputs)` with fixed random weights `w`.
fn scalarize(g: &mut Graph, out: Var, weights: &Tensor) -> Var {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w).unwrap();
    g.sum(prod)
}

/// Max relative error between reverse-mode and finite-difference gradients
/// over all inputs.
pub fn check(inputs: &[Tensor], build: &Build, rng: &mut ChaCha8Rng) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars);
    let out_shape = g.value(out).shape().to_vec();
    let weights = normal(&out_shape, rng);
    let loss = scalarize(&mut g, out, &weights);
    let grads = g.backward(loss).unwrap();
    let eval = |xs: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars);
        let loss = scalarize(&mut g, out, &weights);
        g.value(loss).item()
    };
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        let numeric = finite_difference(&inputs[i], H, |x| {
            let mut xs = inputs.to_vec();
            xs[i] = x.clone();
            eval(&xs)
        });
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

pub struct Case {
    pub name: &'static str,
    pub inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    pub build: Box<Build>,
}

fn case(name: &'static str, inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var + 'static) -> Case {
    Case {
        name,
        inputs,
        build: Box::new(build),
    }
}

pub fn primitive_cases() -> Vec<Case> {
    vec![
        case("matmul", |r| vec![normal(&[3, 4], r), normal(&[4, 2], r)], |g, v| g.matmul(v[0], v[1]).unwrap()),
        case("add", |r| vec![normal(&[2, 3], r), normal(&[2, 3], r)], |g, v| g.add(v[0], v[1]).unwrap()),
        case("sub", |r| vec![normal(&[2, 3], r), normal(&[2, 3], r)], |g, v| g.sub(v[0], v[1]).unwrap()),
        case("mul", |r| vec![normal(&[2, 3], r), normal(&[2, 3], r)], |g, v| g.mul(v[0], v[1]).unwrap()),
        case("scale", |r| vec![normal(&[3, 2], r)], |g, v| g.scale(v[0], -1.7)),
        case("add_row", |r| vec![normal(&[3, 4], r), normal(&[4], r)], |g, v| g.add_row(v[0], v[1]).unwrap()),
        case("mul_row", |r| vec![normal(&[3, 4], r), normal(&[4], r)], |g, v| g.mul_row(v[0], v[1]).unwrap()),
        case("transpose", |r| vec![normal(&[2, 5], r)], |g, v| g.transpose(v[0]).unwrap()),
        case("concat_rows", |r| vec![normal(&[2, 3], r), normal(&[1, 3], r)], |g, v| {
            g.concat(&[v[0], v[1], v[0]], 0).unwrap()
        }),
        case("concat_cols", |r| vec![normal(&[2, 3], r), normal(&[2, 2], r)], |g, v| {
            g.concat(&[v[0], v[1]], 1).unwrap()
        }),
        case("slice_rows", |r| vec![normal(&[4, 3], r)], |g, v| g.slice(v[0], 0, 1, 2).unwrap()),
        case("slice_cols", |r| vec![normal(&[3, 5], r)], |g, v| g.slice(v[0], 1, 2, 3).unwrap()),
        case("embedding", |r| vec![normal(&[5, 3], r)], |g, v| g.embedding(v[0], &[4, 0, 4, 2]).unwrap()),
        case("pick", |r| vec![normal(&[3, 4], r)], |g, v| g.pick(v[0], &[3, 0, 3]).unwrap()),
        case("softmax", |r| vec![normal(&[3, 4], r)], |g, v| g.softmax(v[0])),
        case("log_softmax", |r| vec![normal(&[3, 4], r)], |g, v| g.log_softmax(v[0])),
        case("logsumexp", |r| vec![normal(&[3, 4], r)], |g, v| g.logsumexp(v[0])),
        case("sigmoid", |r| vec![normal(&[3, 3], r)], |g, v| g.sigmoid(v[0])),
        case("tanh", |r| vec![normal(&[3, 3], r)], |g, v| g.tanh(v[0])),
        case("relu", |r| vec![away_from_zero(&[3, 3], r)], |g, v| g.relu(v[0])),
        case("square", |r| vec![normal(&[3, 3], r)], |g, v| g.square(v[0])),
        case("layer_norm", |r| vec![normal(&[3, 5], r)], |g, v| g.layer_norm(v[0], 1e-5)),
        case("dropout", |r| vec![normal(&[2, 4], r)], |g, v| {
            g.dropout(v[0], vec![2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 2.0, 2.0]).unwrap()
        }),
        case("sum", |r| vec![normal(&[2, 3], r)], |g, v| g.sum(v[0])),
        case("mean", |r| vec![normal(&[2, 3], r)], |g, v| g.mean(v[0])),
        case("shared_input", |r| vec![normal(&[3, 3], r)], |g, v| {
            let a = g.tanh(v[0]);
            let b = g.matmul(a, v[0]).unwrap();
            g.mul(b, v[0]).unwrap()
        }),
        case("mlp_nll", |r| vec![normal(&[4, 3], r), normal(&[3, 5], r), normal(&[5], r), normal(&[5, 3], r)], |g, v| {
            let h = g.matmul(v[0], v[1]).unwrap();
            let h = g.add_row(h, v[2]).unwrap();
            let h = g.tanh(h);
            let o = g.matmul(h, v[3]).unwrap();
            let lp = g.log_softmax(o);
            let picked = g.pick(lp, &[2, 0, 1, 2]).unwrap();
            let m = g.mean(picked);
            g.scale(m, -1.0)
        }),
        case("crf_nll", |r| vec![normal(&[4, 3], r), normal(&[5, 5], r)], |g, v| {
            g.custom(Arc::new(CrfNll { gold: vec![2, 0, 0, 1] }), &[v[0], v[1]]).unwrap()
        }),
    ]
}

/// Runs every primitive on `instances` random draws; returns the worst
/// error per case.
pub fn primitive_suite(instances: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    primitive_cases()
        .into_iter()
        .map(|c| {
            let worst = (0..instances)
                .map(|_| {
                    let inputs = (c.inputs)(&mut rng);
                    check(&inputs, c.build.as_ref(), &mut rng)
                })
                .fold(0.0, f64::max);
            (c.name, worst)
        })
        .collect()
}

fn tiny_model(mode: Mode, seed: u64) -> (EncoderModel, Vec<Utterance>) {
    let words = ["play", "blue", "moon", "now", "the", "lions", "score"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<Utterance> = (0..4)
        .map(|i| {
            let n = rng.random_range(3..7);
            let tokens = (0..n)
                .map(|_| {
                    let w = words[rng.random_range(0..words.len())];
                    let pause = if rng.random::<bool>() { 0.0 } else { rng.random_range(1.0..900.0) };
                    Token::new(w, pause, BioTag::outside())
                })
                .collect();
            Utterance::new(&format!("u{i}"), "d", tokens).unwrap()
        })
        .collect();
    let vocab = Vocabulary::build(&corpus, 32).unwrap();
    let config = EncoderConfig {
        hidden: 8,
        layers: 1,
        heads: 2,
        ffn_hidden: 8,
        max_len: 8,
        dropout: 0.0,
        ..EncoderConfig::default()
    };
    let model = EncoderModel::new(config, mode, vocab, BinningScheme::default(), seed).unwrap();
    (model, corpus)
}

/// Gradient of each pretraining loss with respect to head and trunk
/// parameters; returns the worst error per (loss, parameter).
pub fn loss_suite(instances: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (mode, params, aux) in [
        (Mode::Baseline, &["mlm.w", "mlm.b", "layer0.ff2.w"][..], false),
        (Mode::Hbc, &["hbc.coarse.w", "hbc.coarse.b", "hbc.fine.w", "hbc.fine.b", "layer0.attn.q.w"][..], true),
        (Mode::Nlr, &["nlr.out.w", "nlr.out.b", "emb.norm.gain"][..], true),
    ] {
        let label = if aux { mode.as_str() } else { "bert" };
        for seed in 0..instances as u64 {
            let (model, corpus) = tiny_model(mode, seed);
            let masking = MaskingConfig {
                pause_fraction: 0.6,
                ..MaskingConfig::default()
            };
            let ex = make_example(&corpus[0], model.vocab(), &model.binning, &masking, 7, seed).unwrap();
            let loss_value = |m: &EncoderModel| -> (f64, Gradients) {
                let mut g = Graph::new();
                let (b, a) = m.example_losses(&mut g, &ex, None).unwrap();
                let v = if aux { a.expect("pause targets") } else { b.expect("mlm targets") };
                (g.value(v).item(), g.backward(v).unwrap())
            };
            let (_, grads) = loss_value(&model);
            for name in params {
                let id = model.params().id(name).unwrap();
                let analytic = grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(model.params().get(id).shape()));
                let numeric = finite_difference(model.params().get(id), H, |x| {
                    let mut m = model.clone();
                    *m.params_mut().get_mut(id) = x.clone();
                    loss_value(&m).0
                });
                let err = max_relative_error(&analytic, &numeric);
                match out.iter_mut().find(|(n, _): &&mut (String, f64)| n == &format!("{label}/{name}")) {
                    Some((_, e)) => *e = f64::max(*e, err),
                    None => out.push((format!("{label}/{name}"), err)),
                }
            }
        }
    }
    out
}
