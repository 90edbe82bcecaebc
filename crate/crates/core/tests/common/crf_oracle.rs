//! Exhaustive enumeration over every label path of small lattices.

use pausetag::numcore::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Score of one path with START = k and STOP = k + 1 rows/columns in a
/// `(k + 2) x (k + 2)` transition matrix.
pub fn path_score(emissions: &[Vec<f64>], transitions: &[Vec<f64>], path: &[usize]) -> f64 {
    let k = emissions[0].len();
    let (start, stop) = (k, k + 1);
    let mut s = transitions[start][path[0]] + transitions[path[path.len() - 1]][stop];
    for (t, &y) in path.iter().enumerate() {
        s += emissions[t][y];
        if t > 0 {
            s += transitions[path[t - 1]][y];
        }
    }
    s
}

/// All `k^n` paths in lexicographic order.
pub fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(k.pow(n as u32));
    let mut cur = vec![0; n];
    loop {
        out.push(cur.clone());
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < k {
                break;
            }
            cur[i] = 0;
        }
    }
}

pub struct Exhaustive {
    pub log_z: f64,
    pub best: Vec<usize>,
    pub best_score: f64,
}

pub fn exhaustive(emissions: &[Vec<f64>], transitions: &[Vec<f64>]) -> Exhaustive {
    let k = emissions[0].len();
    let paths = all_paths(emissions.len(), k);
    let scores: Vec<f64> = paths.iter().map(|p| path_score(emissions, transitions, p)).collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Exhaustive {
        log_z,
        best: paths[best].clone(),
        best_score: scores[best],
    }
}

pub struct Instance {
    pub emissions: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<f64>>,
    pub gold: Vec<usize>,
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_len: usize, max_labels: usize, scale: f64) -> Instance {
    let n = rng.random_range(1..=max_len);
    let k = rng.random_range(1..=max_labels);
    let mut draw = |r: usize, c: usize| -> Vec<Vec<f64>> {
        (0..r)
            .map(|_| (0..c).map(|_| rng.random_range(-scale..scale)).collect())
            .collect()
    };
    let emissions = draw(n, k);
    let transitions = draw(k + 2, k + 2);
    let gold = (0..n).map(|_| rng.random_range(0..k)).collect();
    Instance {
        emissions,
        transitions,
        gold,
    }
}

pub fn to_tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
