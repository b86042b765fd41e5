//! Linear SVM with squared hinge loss.
//!
//! Minimizes `½‖w‖² + C Σ max(0, 1 − y(w·x + b))²` by seeded stochastic
//! gradient descent with variance reduction (SVRG): each epoch anchors a full
//! gradient at the current checkpoint and corrects every per-sample step
//! with it, so a constant step converges to the exact optimum. An epoch that
//! raises the objective is discarded and the step halved, which keeps the
//! recorded checkpoint objectives non-increasing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tfidf::SparseVector;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
    /// Step size as a fraction of the inverse per-sample smoothness bound.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 200,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    weights: Vec<f64>,
    bias: f64,
    c: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SvmTrace {
    /// Objective at the zero model followed by one entry per epoch checkpoint.
    pub objectives: Vec<f64>,
    pub rejected_epochs: usize,
}

impl SvmModel {
    pub fn new(weights: Vec<f64>, bias: f64, c: f64) -> Self {
        Self { weights, bias, c }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Signed margin `w·x + b`; positive means legitimate.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias)
    }

    pub fn decision_sparse(&self, x: &SparseVector) -> Result<f64> {
        if x.dim != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.dim,
            });
        }
        Ok(x.dot(&self.weights) + self.bias)
    }

    pub fn objective(&self, xs: &[SparseVector], ys: &[f64]) -> f64 {
        objective(&self.weights, self.bias, self.c, xs, ys)
    }
}

pub fn svm_decision(m: &SvmModel, x: &[f64]) -> Result<f64> {
    m.decision(x)
}

pub fn objective(w: &[f64], b: f64, c: f64, xs: &[SparseVector], ys: &[f64]) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let slack = 1.0 - y * (x.dot(w) + b);
            if slack > 0.0 {
                slack * slack
            } else {
                0.0
            }
        })
        .sum();
    reg + c * loss
}

/// Trains on labels `+1` (legitimate) and `−1` (bogus).
pub fn svm_train(xs: &[SparseVector], ys: &[f64], params: &SvmParams) -> Result<(SvmModel, SvmTrace)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if ys.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid("SVM labels must be +1 or -1"));
    }
    if !ys.contains(&1.0) || !ys.contains(&-1.0) {
        return Err(Error::SingleClass);
    }
    if !(params.c > 0.0) || !(params.learning_rate > 0.0) {
        return Err(Error::invalid("C and learning rate must be positive"));
    }
    let dim = xs[0].dim;
    if let Some(x) = xs.iter().find(|x| x.dim != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: x.dim,
        });
    }

    let n = xs.len() as f64;
    let c = params.c;
    // Per-sample objective ‖w‖²/(2n) + C·slack² has gradient Lipschitz
    // constant at most 1/n + 2C(‖x‖² + 1), the +1 covering the bias.
    let max_norm = xs.iter().map(SparseVector::norm_squared).fold(0.0, f64::max);
    let mut step = params.learning_rate / (1.0 / n + 2.0 * c * (max_norm + 1.0));

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    // d(slack²)/d(margin) with the label folded in.
    let dloss = |z: f64, y: f64| -2.0 * y * (1.0 - y * z).max(0.0);

    let mut best_w = vec![0.0; dim];
    let mut best_b = 0.0;
    let mut best_obj = objective(&best_w, best_b, c, xs, ys);
    let mut trace = SvmTrace {
        objectives: vec![best_obj],
        rejected_epochs: 0,
    };
    let mut anchor_grad = vec![0.0; xs.len()];
    let mut drift = vec![0.0; dim];

    for _ in 0..params.epochs {
        // Variance-reduced epoch anchored at the current checkpoint.
        let mut drift_b = 0.0;
        drift.iter_mut().for_each(|v| *v = 0.0);
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            let g = dloss(x.dot(&best_w) + best_b, y);
            anchor_grad[i] = g;
            for &(j, xv) in &x.entries {
                drift[j] += g * xv;
            }
            drift_b += g;
        }
        // The regularizer terms cancel, leaving d = -ηC Σ g_j x_j / n.
        let k = -step * c / n;
        drift.iter_mut().for_each(|v| *v *= k);
        drift_b *= k;

        // w = scale * v + count * drift keeps every update O(nnz).
        let mut v = best_w.clone();
        let mut scale = 1.0f64;
        let mut count = 0.0f64;
        let mut bias = best_b;
        let shrink = 1.0 - step / n;
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &xs[i];
            let y = ys[i];
            let z = scale * x.dot(&v) + count * x.dot(&drift) + bias;
            let delta = c * (dloss(z, y) - anchor_grad[i]);
            scale *= shrink;
            count = count * shrink + 1.0;
            let coef = step * delta / scale;
            for &(j, xv) in &x.entries {
                v[j] -= coef * xv;
            }
            bias += drift_b - step * delta;
            if scale < 1e-9 {
                v.iter_mut().for_each(|e| *e *= scale);
                scale = 1.0;
            }
        }
        let w: Vec<f64> = v.iter().zip(&drift).map(|(e, d)| scale * e + count * d).collect();
        let obj = objective(&w, bias, c, xs, ys);
        if obj.is_finite() && obj <= best_obj {
            best_obj = obj;
            best_w = w;
            best_b = bias;
        } else {
            trace.rejected_epochs += 1;
            step *= 0.5;
        }
        trace.objectives.push(best_obj);
    }

    Ok((
        SvmModel {
            weights: best_w,
            bias: best_b,
            c,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dense(points: &[[f64; 2]]) -> Vec<SparseVector> {
        points.iter().map(|p| SparseVector::from_dense(p)).collect()
    }

    /// 20 points on either side of the line x + 2y = 1, at distance >= 0.5.
    fn separable_set() -> (Vec<SparseVector>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let normal = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        let offset = 1.0 / 5f64.sqrt();
        let mut pts = Vec::new();
        let mut ys = Vec::new();
        while pts.len() < 20 {
            let p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let dist = p[0] * normal[0] + p[1] * normal[1] - offset;
            if dist.abs() >= 0.5 {
                pts.push(p);
                ys.push(if dist > 0.0 { 1.0 } else { -1.0 });
            }
        }
        assert!(ys.contains(&1.0) && ys.contains(&-1.0));
        (dense(&pts), ys)
    }

    fn accuracy(m: &SvmModel, xs: &[SparseVector], ys: &[f64]) -> f64 {
        let ok = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| (m.decision_sparse(x).unwrap() > 0.0) == (y > 0.0))
            .count();
        ok as f64 / xs.len() as f64
    }

    #[test]
    fn separable_pair() {
        let xs = dense(&[[-1.0, 0.0], [1.0, 0.0]]).into_iter().map(|mut x| {
            x.dim = 1;
            x.entries.retain(|e| e.0 == 0);
            x
        });
        let xs: Vec<SparseVector> = xs.collect();
        let ys = [-1.0, 1.0];
        let (m, _) = svm_train(&xs, &ys, &SvmParams::default()).unwrap();
        assert!(m.decision(&[-1.0]).unwrap() < 0.0);
        assert!(m.decision(&[1.0]).unwrap() > 0.0);
    }

    #[test]
    fn separable_set_fully_classified() {
        let (xs, ys) = separable_set();
        let params = SvmParams { epochs: 1000, ..Default::default() };
        let (m, trace) = svm_train(&xs, &ys, &params).unwrap();
        assert_eq!(accuracy(&m, &xs, &ys), 1.0);
        assert!(m.objective(&xs, &ys) <= objective(&[0.0, 0.0], 0.0, 1.0, &xs, &ys));
        for w in trace.objectives.windows(2) {
            assert!(w[1] <= w[0] + 1e-6);
        }
    }

    #[test]
    fn duplicated_points_keep_direction() {
        let (xs, ys) = separable_set();
        let params = SvmParams { epochs: 3000, ..Default::default() };
        let (m1, _) = svm_train(&xs, &ys, &params).unwrap();
        let xs2: Vec<SparseVector> = xs.iter().chain(&xs).cloned().collect();
        let ys2: Vec<f64> = ys.iter().chain(&ys).copied().collect();
        // Halving C keeps the objective identical to the original problem.
        let params2 = SvmParams { c: 0.5, ..params };
        let (m2, _) = svm_train(&xs2, &ys2, &params2).unwrap();
        let unit = |w: &[f64]| {
            let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            w.iter().map(|v| v / n).collect::<Vec<_>>()
        };
        let (a, b) = (unit(m1.weights()), unit(m2.weights()));
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-3, "direction moved by {diff}: {a:?} vs {b:?}");
    }

    #[test]
    fn decision_examples() {
        let m = SvmModel::new(vec![1.0, 0.0], -1.0, 1.0);
        assert_eq!(m.decision(&[3.0, 5.0]).unwrap(), 2.0);
        assert_eq!(m.decision(&[1.0, 7.0]).unwrap(), 0.0);
        let neg = SvmModel::new(vec![-1.0, 0.0], 1.0, 1.0);
        assert_eq!(neg.decision(&[3.0, 5.0]).unwrap(), -2.0);
        assert!(matches!(m.decision(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_bad_input() {
        let xs = dense(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(svm_train(&xs, &[1.0, 1.0], &SvmParams::default()), Err(Error::SingleClass)));
        assert!(svm_train(&xs, &[1.0], &SvmParams::default()).is_err());
        assert!(svm_train(&xs, &[1.0, 0.0], &SvmParams::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let (xs, ys) = separable_set();
        let p = SvmParams { epochs: 50, seed: 4, ..Default::default() };
        assert_eq!(svm_train(&xs, &ys, &p).unwrap(), svm_train(&xs, &ys, &p).unwrap());
    }
}
