//! Linear-chain CRF over `k` labels with implicit START and STOP states.
//!
//! The transition matrix is `(k + 2) x (k + 2)`; row `k` holds START -> label
//! scores and column `k + 1` holds label -> STOP scores. A path
//! `y_0 .. y_{n-1}` scores
//!
//! ```text
//! trans[START, y_0] + Σ_t emit[t, y_t] + Σ_t trans[y_{t-1}, y_t] + trans[y_{n-1}, STOP]
//! ```
//!
//! Entries into START or out of STOP are never read.

use crate::numcore::{logsumexp, CustomOp, NumError, Tensor};

use super::TaggerError;

/// Emission and transition scores for one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct TagLattice {
    /// `[n, k]`
    pub emissions: Tensor,
    /// `[k + 2, k + 2]`
    pub transitions: Tensor,
}

impl TagLattice {
    pub fn new(emissions: Tensor, transitions: Tensor) -> Result<Self, TaggerError> {
        let es = emissions.shape();
        let ts = transitions.shape();
        if es.len() != 2 || es[0] == 0 || ts.len() != 2 || ts[0] != es[1] + 2 || ts[1] != es[1] + 2 {
            return Err(TaggerError::Lattice(format!(
                "emissions {es:?} and transitions {ts:?} are incompatible"
            )));
        }
        if !emissions.is_finite() || !transitions.is_finite() {
            return Err(TaggerError::Lattice("non-finite score".into()));
        }
        Ok(TagLattice {
            emissions,
            transitions,
        })
    }

    pub fn len(&self) -> usize {
        self.emissions.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_labels(&self) -> usize {
        self.emissions.shape()[1]
    }

    fn emit(&self, t: usize, y: usize) -> f64 {
        self.emissions.row(t)[y]
    }

    fn trans(&self, from: usize, to: usize) -> f64 {
        self.transitions.row(from)[to]
    }

    fn start(&self) -> usize {
        self.num_labels()
    }

    fn stop(&self) -> usize {
        self.num_labels() + 1
    }

    pub fn path_score(&self, labels: &[usize]) -> Result<f64, TaggerError> {
        let k = self.num_labels();
        if labels.len() != self.len() {
            return Err(TaggerError::GoldLength {
                expected: self.len(),
                got: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(TaggerError::LabelRange { label: bad, labels: k });
        }
        let mut s = self.trans(self.start(), labels[0]);
        for (t, &y) in labels.iter().enumerate() {
            s += self.emit(t, y);
            if t > 0 {
                s += self.trans(labels[t - 1], y);
            }
        }
        Ok(s + self.trans(labels[labels.len() - 1], self.stop()))
    }

    /// Forward log-messages `alpha[t][y]`, STOP excluded.
    fn forward(&self) -> Vec<Vec<f64>> {
        let (n, k) = (self.len(), self.num_labels());
        let mut alpha = vec![vec![0.0; k]; n];
        for y in 0..k {
            alpha[0][y] = self.trans(self.start(), y) + self.emit(0, y);
        }
        let mut buf = vec![0.0; k];
        for t in 1..n {
            for y in 0..k {
                for (p, b) in buf.iter_mut().enumerate() {
                    *b = alpha[t - 1][p] + self.trans(p, y);
                }
                alpha[t][y] = logsumexp(&buf) + self.emit(t, y);
            }
        }
        alpha
    }

    /// Backward log-messages `beta[t][y]`, STOP included.
    fn backward(&self) -> Vec<Vec<f64>> {
        let (n, k) = (self.len(), self.num_labels());
        let mut beta = vec![vec![0.0; k]; n];
        for y in 0..k {
            beta[n - 1][y] = self.trans(y, self.stop());
        }
        let mut buf = vec![0.0; k];
        for t in (0..n - 1).rev() {
            for y in 0..k {
                for (q, b) in buf.iter_mut().enumerate() {
                    *b = self.trans(y, q) + self.emit(t + 1, q) + beta[t + 1][q];
                }
                beta[t][y] = logsumexp(&buf);
            }
        }
        beta
    }

    pub fn log_partition(&self) -> f64 {
        let alpha = self.forward();
        let last = &alpha[self.len() - 1];
        let ends: Vec<f64> = (0..self.num_labels())
            .map(|y| last[y] + self.trans(y, self.stop()))
            .collect();
        logsumexp(&ends)
    }

    /// Gradient of `log Z` with respect to emissions and transitions, i.e.
    /// unary and pairwise marginals laid out like the inputs.
    pub fn marginals(&self) -> (Tensor, Tensor, f64) {
        let (n, k) = (self.len(), self.num_labels());
        let alpha = self.forward();
        let beta = self.backward();
        let log_z = logsumexp(&(0..k).map(|y| alpha[n - 1][y] + beta[n - 1][y]).collect::<Vec<_>>());
        let mut d_emit = Tensor::zeros(&[n, k]);
        let mut d_trans = Tensor::zeros(&[k + 2, k + 2]);
        {
            let de = d_emit.data_mut();
            for t in 0..n {
                for y in 0..k {
                    de[t * k + y] = (alpha[t][y] + beta[t][y] - log_z).exp();
                }
            }
        }
        let w = k + 2;
        let dt = d_trans.data_mut();
        for y in 0..k {
            dt[self.start() * w + y] = (alpha[0][y] + beta[0][y] - log_z).exp();
            dt[y * w + self.stop()] = (alpha[n - 1][y] + beta[n - 1][y] - log_z).exp();
        }
        for t in 1..n {
            for p in 0..k {
                for q in 0..k {
                    let lp = alpha[t - 1][p] + self.trans(p, q) + self.emit(t, q) + beta[t][q] - log_z;
                    dt[p * w + q] += lp.exp();
                }
            }
        }
        (d_emit, d_trans, log_z)
    }

    /// Highest-scoring path. Ties go to the lowest label id, both for the
    /// final label and at every backpointer.
    pub fn viterbi(&self) -> (Vec<usize>, f64) {
        let (n, k) = (self.len(), self.num_labels());
        let mut score: Vec<f64> = (0..k).map(|y| self.trans(self.start(), y) + self.emit(0, y)).collect();
        let mut back = vec![vec![0usize; k]; n];
        for t in 1..n {
            let mut next = vec![0.0; k];
            for y in 0..k {
                let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
                for (p, s) in score.iter().enumerate() {
                    let v = s + self.trans(p, y);
                    if v > best {
                        best = v;
                        arg = p;
                    }
                }
                next[y] = best + self.emit(t, y);
                back[t][y] = arg;
            }
            score = next;
        }
        let (mut best, mut last) = (f64::NEG_INFINITY, 0);
        for (y, s) in score.iter().enumerate() {
            let v = s + self.trans(y, self.stop());
            if v > best {
                best = v;
                last = y;
            }
        }
        let mut path = vec![last; n];
        for t in (1..n).rev() {
            path[t - 1] = back[t][path[t]];
        }
        (path, best)
    }
}

pub fn crf_log_partition(lattice: &TagLattice) -> f64 {
    lattice.log_partition()
}

/// `log Z - score(gold)`.
pub fn crf_nll(lattice: &TagLattice, gold: &[usize]) -> Result<f64, TaggerError> {
    let gold_score = lattice.path_score(gold)?;
    Ok(lattice.log_partition() - gold_score)
}

pub fn viterbi_decode(lattice: &TagLattice) -> (Vec<usize>, f64) {
    lattice.viterbi()
}

/// CRF negative log-likelihood as a graph operation over
/// `[emissions, transitions]`, with the marginal-based gradient.
pub struct CrfNll {
    pub gold: Vec<usize>,
}

impl CustomOp for CrfNll {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, NumError> {
        let shape_err = || NumError::Shape {
            op: "crf_nll",
            shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
        };
        if inputs.len() != 2 {
            return Err(shape_err());
        }
        let lattice = TagLattice::new(inputs[0].clone(), inputs[1].clone()).map_err(|_| shape_err())?;
        let nll = crf_nll(&lattice, &self.gold).map_err(|_| shape_err())?;
        Ok(Tensor::scalar(nll))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let lattice = TagLattice {
            emissions: inputs[0].clone(),
            transitions: inputs[1].clone(),
        };
        let (mut d_emit, mut d_trans, _) = lattice.marginals();
        let k = lattice.num_labels();
        let w = k + 2;
        {
            let de = d_emit.data_mut();
            let dt = d_trans.data_mut();
            for (t, &y) in self.gold.iter().enumerate() {
                de[t * k + y] -= 1.0;
                if t > 0 {
                    dt[self.gold[t - 1] * w + y] -= 1.0;
                }
            }
            dt[k * w + self.gold[0]] -= 1.0;
            dt[self.gold[self.gold.len() - 1] * w + k + 1] -= 1.0;
        }
        let g = grad.item();
        for t in [&mut d_emit, &mut d_trans] {
            for v in t.data_mut() {
                *v *= g;
            }
        }
        vec![d_emit, d_trans]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize, k: usize, emit: Vec<f64>, trans: Option<Vec<f64>>) -> TagLattice {
        let t = trans.unwrap_or_else(|| vec![0.0; (k + 2) * (k + 2)]);
        TagLattice::new(Tensor::new(vec![n, k], emit).unwrap(), Tensor::new(vec![k + 2, k + 2], t).unwrap()).unwrap()
    }

    #[test]
    fn single_token_partition_is_logsumexp() {
        let l = lattice(1, 2, vec![0.3, -1.2], None);
        assert!((l.log_partition() - logsumexp(&[0.3, -1.2])).abs() < 1e-14);
    }

    #[test]
    fn emission_shift_shifts_partition() {
        let l = lattice(3, 2, vec![0.1, 0.5, -0.3, 0.2, 1.0, -1.0], Some((0..16).map(|i| i as f64 * 0.05).collect()));
        let mut e = l.emissions.clone();
        e.data_mut()[2] += 1.75;
        e.data_mut()[3] += 1.75;
        let shifted = TagLattice::new(e, l.transitions.clone()).unwrap();
        assert!((shifted.log_partition() - l.log_partition() - 1.75).abs() < 1e-12);
    }

    #[test]
    fn dominant_gold_path_has_near_zero_nll() {
        let mut emit = vec![0.0; 4 * 3];
        let gold = [2, 0, 1, 1];
        for (t, &y) in gold.iter().enumerate() {
            emit[t * 3 + y] = 50.0;
        }
        let l = lattice(4, 3, emit, None);
        let nll = crf_nll(&l, &gold).unwrap();
        assert!((0.0..1e-18).contains(&nll) || nll.abs() < 1e-15, "{nll}");
        assert_eq!(viterbi_decode(&l).0, gold.to_vec());
    }

    #[test]
    fn uniform_lattice_nll_is_n_ln_k() {
        // constant scores give every path the same weight
        let l = lattice(3, 4, vec![0.7; 12], Some(vec![0.25; 36]));
        let nll = crf_nll(&l, &[0, 1, 2]).unwrap();
        assert!((nll - 3.0 * 4f64.ln()).abs() < 1e-12, "{nll}");
    }

    #[test]
    fn all_zero_scores_decode_to_label_zero() {
        let l = lattice(5, 3, vec![0.0; 15], None);
        assert_eq!(viterbi_decode(&l), (vec![0; 5], 0.0));
    }

    #[test]
    fn bad_gold_is_error() {
        let l = lattice(2, 2, vec![0.0; 4], None);
        assert!(matches!(crf_nll(&l, &[0, 2]), Err(TaggerError::LabelRange { .. })));
        assert!(matches!(crf_nll(&l, &[0]), Err(TaggerError::GoldLength { .. })));
    }

    #[test]
    fn incompatible_shapes_rejected() {
        assert!(TagLattice::new(Tensor::zeros(&[2, 3]), Tensor::zeros(&[4, 4])).is_err());
        assert!(TagLattice::new(Tensor::zeros(&[0, 3]), Tensor::zeros(&[5, 5])).is_err());
    }
}
