//! Embedding → LSTM → dense ReLU → two-way softmax sequence classifier.
//!
//! Sequences are tag-index vectors where 0 is padding. Padding steps are
//! masked: the recurrent state is carried through them unchanged, so a
//! sequence behaves as its compacted non-zero prefix. A minibatch is sorted
//! by length, which makes the rows still running at step `t` a prefix of the
//! batch and lets every step run as one matrix product.

use std::fmt::Debug;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis, LinalgScalar, ScalarOperand};
use num_traits::Float;
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::corpus::Label;
use crate::error::{Error, Result};

pub trait Real:
    Float + LinalgScalar + ScalarOperand + Debug + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// `exp` used by the activations.
    fn act_exp(self) -> Self {
        self.exp()
    }
}

impl Real for f32 {
    /// Branch-free Cephes `expf`, within 2 ulp of libm and vectorizable.
    #[inline(always)]
    fn act_exp(self) -> f32 {
        let x = self.clamp(-87.0, 88.0);
        const SHIFT: f32 = 12_582_912.0;
        let n = (x * std::f32::consts::LOG2_E + SHIFT) - SHIFT;
        let r = x - n * 0.693_359_4 + n * 2.121_944_4e-4;
        let p = ((((1.987_569_1e-4 * r + 1.398_199_9e-3) * r + 8.333_452e-3) * r + 4.166_579_6e-2) * r
            + 1.666_666_5e-1)
            * r
            + 0.5;
        let y = p * r * r + r + 1.0;
        y * f32::from_bits(((n as i32 + 127) as u32) << 23)
    }
}
impl Real for f64 {}

fn lit<T: Real>(x: f64) -> T {
    T::from(x).expect("representable constant")
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).act_exp())
}

/// `tanh` through one exponential; libm's `tanhf` is several times slower.
fn tanh<T: Real>(x: T) -> T {
    let two = T::one() + T::one();
    two / (T::one() + (-two * x).act_exp()) - T::one()
}

/// Rows of `a` with at most this many entries skip the packed GEMM.
const SMALL_ROWS: usize = 4;

/// `c = a · w + beta · c`.
fn matmul_into<T: Real>(a: ArrayView2<T>, w: &Array2<T>, beta: T, c: &mut ArrayViewMut2<T>) {
    if a.nrows() > SMALL_ROWS {
        general_mat_mul(T::one(), &a, w, beta, c);
        return;
    }
    for (arow, mut crow) in a.outer_iter().zip(c.outer_iter_mut()) {
        let cr = crow.as_slice_mut().unwrap();
        if beta == T::zero() {
            cr.fill(T::zero());
        }
        for (&x, wrow) in arow.iter().zip(w.outer_iter()) {
            for (cv, &wv) in cr.iter_mut().zip(wrow.as_slice().unwrap()) {
                *cv = *cv + x * wv;
            }
        }
    }
}

/// `c = a · wᵀ`.
fn matmul_t_into<T: Real>(a: ArrayView2<T>, w: &Array2<T>, c: &mut ArrayViewMut2<T>) {
    if a.nrows() > SMALL_ROWS {
        general_mat_mul(T::one(), &a, &w.t(), T::zero(), c);
        return;
    }
    for (arow, mut crow) in a.outer_iter().zip(c.outer_iter_mut()) {
        let ar = arow.as_slice().unwrap();
        for (cv, wrow) in crow.iter_mut().zip(w.outer_iter()) {
            *cv = dot(ar, wrow.as_slice().unwrap());
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ac.zip(bc) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDims {
    /// Number of real tags; the embedding has one extra padding row.
    pub vocab: usize,
    pub embedding: usize,
    pub hidden: usize,
    pub dense: usize,
}

/// Gate columns of `w_input`, `w_recurrent` and `b_gates` are laid out as
/// `[input | forget | candidate | output]`, each `hidden` wide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    pub embedding: Array2<T>,
    pub w_input: Array2<T>,
    pub w_recurrent: Array2<T>,
    pub b_gates: Array1<T>,
    pub w_dense: Array2<T>,
    pub b_dense: Array1<T>,
    pub w_out: Array2<T>,
    pub b_out: Array1<T>,
}

struct Cache<T> {
    /// `order[k]` is the caller's index of sorted row `k`.
    order: Vec<usize>,
    active: Vec<usize>,
    offsets: Vec<usize>,
    tokens: Vec<u32>,
    x: Array2<T>,
    gates: Array2<T>,
    c_prev: Array2<T>,
    tanh_c: Array2<T>,
    h_prev: Array2<T>,
    h: Array2<T>,
    dense_pre: Array2<T>,
    dense: Array2<T>,
    logits: Array2<T>,
}

impl<T: Real> Cache<T> {
    fn p_bogus(&self, k: usize) -> f64 {
        let d = self.logits[[k, 1]].to_f64().unwrap() - self.logits[[k, 0]].to_f64().unwrap();
        1.0 / (1.0 + (-d).exp())
    }
}

impl<T: Real> Network<T> {
    pub fn zeros(d: NetworkDims) -> Self {
        let g = 4 * d.hidden;
        Self {
            embedding: Array2::zeros((d.vocab + 1, d.embedding)),
            w_input: Array2::zeros((d.embedding, g)),
            w_recurrent: Array2::zeros((d.hidden, g)),
            b_gates: Array1::zeros(g),
            w_dense: Array2::zeros((d.hidden, d.dense)),
            b_dense: Array1::zeros(d.dense),
            w_out: Array2::zeros((d.dense, 2)),
            b_out: Array1::zeros(2),
        }
    }

    /// Weights uniform in `[-scale, scale]`, forget-gate bias 1, other biases
    /// zero, padding row zero.
    pub fn init(d: NetworkDims, scale: f64, seed: u64) -> Self {
        let mut net = Self::zeros(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-scale, scale).expect("finite scale");
        for w in [
            &mut net.embedding,
            &mut net.w_input,
            &mut net.w_recurrent,
            &mut net.w_dense,
            &mut net.w_out,
        ] {
            w.mapv_inplace(|_| lit(dist.sample(&mut rng)));
        }
        net.embedding.row_mut(0).fill(T::zero());
        net.b_gates
            .slice_mut(s![d.hidden..2 * d.hidden])
            .fill(T::one());
        net
    }

    pub fn dims(&self) -> NetworkDims {
        NetworkDims {
            vocab: self.embedding.nrows() - 1,
            embedding: self.embedding.ncols(),
            hidden: self.w_recurrent.nrows(),
            dense: self.w_dense.ncols(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn slices(&self) -> [&[T]; 8] {
        [
            self.embedding.as_slice().unwrap(),
            self.w_input.as_slice().unwrap(),
            self.w_recurrent.as_slice().unwrap(),
            self.b_gates.as_slice().unwrap(),
            self.w_dense.as_slice().unwrap(),
            self.b_dense.as_slice().unwrap(),
            self.w_out.as_slice().unwrap(),
            self.b_out.as_slice().unwrap(),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [T]; 8] {
        [
            self.embedding.as_slice_mut().unwrap(),
            self.w_input.as_slice_mut().unwrap(),
            self.w_recurrent.as_slice_mut().unwrap(),
            self.b_gates.as_slice_mut().unwrap(),
            self.w_dense.as_slice_mut().unwrap(),
            self.b_dense.as_slice_mut().unwrap(),
            self.w_out.as_slice_mut().unwrap(),
            self.b_out.as_slice_mut().unwrap(),
        ]
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::from(v).unwrap());
        let c1 = |a: &Array1<T>| a.mapv(|v| U::from(v).unwrap());
        Network {
            embedding: c2(&self.embedding),
            w_input: c2(&self.w_input),
            w_recurrent: c2(&self.w_recurrent),
            b_gates: c1(&self.b_gates),
            w_dense: c2(&self.w_dense),
            b_dense: c1(&self.b_dense),
            w_out: c2(&self.w_out),
            b_out: c1(&self.b_out),
        }
    }

    /// Drops padding and rejects out-of-range indices.
    pub fn compact(&self, seq: &[u32]) -> Result<Vec<u32>> {
        let vocab = self.embedding.nrows() - 1;
        if let Some(&bad) = seq.iter().find(|&&i| i as usize > vocab) {
            return Err(Error::invalid(format!("tag index {bad} outside vocabulary of {vocab}")));
        }
        Ok(seq.iter().copied().filter(|&i| i != 0).collect())
    }

    fn forward(&self, seqs: &[Vec<u32>]) -> Cache<T> {
        let b = seqs.len();
        let hd = self.w_recurrent.nrows();
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&x, &y| seqs[y].len().cmp(&seqs[x].len()).then(x.cmp(&y)));
        let steps = order.first().map_or(0, |&i| seqs[i].len());
        let active: Vec<usize> = (0..steps)
            .map(|t| order.iter().take_while(|&&i| seqs[i].len() > t).count())
            .collect();
        let mut offsets = Vec::with_capacity(steps + 1);
        offsets.push(0);
        for &n in &active {
            offsets.push(offsets.last().unwrap() + n);
        }
        let rows = *offsets.last().unwrap();

        let mut tokens = Vec::with_capacity(rows);
        for (t, &n) in active.iter().enumerate() {
            tokens.extend(order[..n].iter().map(|&i| seqs[i][t]));
        }
        let mut x = Array2::zeros((rows, self.embedding.ncols()));
        for (r, &tok) in tokens.iter().enumerate() {
            x.row_mut(r).assign(&self.embedding.row(tok as usize));
        }

        let mut gates = Array2::zeros((rows, 4 * hd));
        gates.assign(&self.b_gates);
        general_mat_mul(T::one(), &x, &self.w_input, T::one(), &mut gates);
        let mut c_prev = Array2::zeros((rows, hd));
        let mut tanh_c = Array2::zeros((rows, hd));
        let mut h_prev = Array2::zeros((rows, hd));
        let mut h: Array2<T> = Array2::zeros((b, hd));
        let mut c: Array2<T> = Array2::zeros((b, hd));

        for t in 0..steps {
            let (n, off) = (active[t], offsets[t]);
            h_prev.slice_mut(s![off..off + n, ..]).assign(&h.slice(s![..n, ..]));
            c_prev.slice_mut(s![off..off + n, ..]).assign(&c.slice(s![..n, ..]));
            let mut z = gates.slice_mut(s![off..off + n, ..]);
            // The state starts at zero, so step 0 has no recurrent term.
            if t > 0 {
                matmul_into(h.slice(s![..n, ..]), &self.w_recurrent, T::one(), &mut z);
            }
            for k in 0..n {
                let mut zrow = z.row_mut(k);
                let zr = zrow.as_slice_mut().unwrap();
                let mut crow = c.row_mut(k);
                let cr = crow.as_slice_mut().unwrap();
                let mut hrow = h.row_mut(k);
                let hr = hrow.as_slice_mut().unwrap();
                let mut trow = tanh_c.row_mut(off + k);
                let tr = trow.as_slice_mut().unwrap();
                let (ifg, o) = zr.split_at_mut(3 * hd);
                let (if_, g) = ifg.split_at_mut(2 * hd);
                if_.iter_mut().chain(o.iter_mut()).for_each(|v| *v = sigmoid(*v));
                g.iter_mut().for_each(|v| *v = tanh(*v));
                let (i, f) = if_.split_at(hd);
                for j in 0..hd {
                    cr[j] = f[j] * cr[j] + i[j] * g[j];
                }
                for j in 0..hd {
                    tr[j] = tanh(cr[j]);
                    hr[j] = o[j] * tr[j];
                }
            }
        }

        let mut dense_pre = Array2::zeros((b, self.w_dense.ncols()));
        dense_pre.assign(&self.b_dense);
        general_mat_mul(T::one(), &h, &self.w_dense, T::one(), &mut dense_pre);
        let dense = dense_pre.mapv(|v| v.max(T::zero()));
        let mut logits = Array2::zeros((b, 2));
        logits.assign(&self.b_out);
        general_mat_mul(T::one(), &dense, &self.w_out, T::one(), &mut logits);

        Cache {
            order,
            active,
            offsets,
            tokens,
            x,
            gates,
            c_prev,
            tanh_c,
            h_prev,
            h,
            dense_pre,
            dense,
            logits,
        }
    }

    /// `P(bogus)` for each compacted sequence, in input order.
    pub fn bogus_probabilities(&self, seqs: &[Vec<u32>]) -> Vec<f64> {
        let cache = self.forward(seqs);
        let mut out = vec![0.0; seqs.len()];
        for (k, &i) in cache.order.iter().enumerate() {
            out[i] = cache.p_bogus(k);
        }
        out
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, seqs: &[Vec<u32>], bogus: &[bool]) -> f64 {
        let cache = self.forward(seqs);
        batch_loss(&cache, bogus)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, seqs: &[Vec<u32>], bogus: &[bool]) -> (f64, Network<T>) {
        let cache = self.forward(seqs);
        let loss = batch_loss(&cache, bogus);
        (loss, self.backward(&cache, bogus))
    }

    fn backward(&self, cache: &Cache<T>, bogus: &[bool]) -> Network<T> {
        let b = cache.order.len();
        let hd = self.w_recurrent.nrows();
        let mut grad = Network::zeros(self.dims());
        if b == 0 {
            return grad;
        }
        let inv_b = 1.0 / b as f64;

        let mut dlogits = Array2::zeros((b, 2));
        for (k, &i) in cache.order.iter().enumerate() {
            let y = if bogus[i] { 1.0 } else { 0.0 };
            let d = (cache.p_bogus(k) - y) * inv_b;
            dlogits[[k, 1]] = lit(d);
            dlogits[[k, 0]] = lit(-d);
        }
        general_mat_mul(T::one(), &cache.dense.t(), &dlogits, T::zero(), &mut grad.w_out);
        grad.b_out = dlogits.sum_axis(Axis(0));

        let mut ddense = dlogits.dot(&self.w_out.t());
        ddense.zip_mut_with(&cache.dense_pre, |d, &a| {
            if a <= T::zero() {
                *d = T::zero();
            }
        });
        general_mat_mul(T::one(), &cache.h.t(), &ddense, T::zero(), &mut grad.w_dense);
        grad.b_dense = ddense.sum_axis(Axis(0));

        let mut dh = ddense.dot(&self.w_dense.t());
        let mut dc: Array2<T> = Array2::zeros((b, hd));
        let rows = cache.tokens.len();
        let mut dz: Array2<T> = Array2::zeros((rows, 4 * hd));
        let one = T::one();

        for t in (0..cache.active.len()).rev() {
            let (n, off) = (cache.active[t], cache.offsets[t]);
            for k in 0..n {
                let r = off + k;
                let gr = cache.gates.row(r);
                let gr = gr.as_slice().unwrap();
                let tc = cache.tanh_c.row(r);
                let tc = tc.as_slice().unwrap();
                let cp = cache.c_prev.row(r);
                let cp = cp.as_slice().unwrap();
                let mut dzrow = dz.row_mut(r);
                let dzr = dzrow.as_slice_mut().unwrap();
                let mut dcrow = dc.row_mut(k);
                let dcr = dcrow.as_slice_mut().unwrap();
                let dhrow = dh.row(k);
                let dhr = dhrow.as_slice().unwrap();
                for j in 0..hd {
                    let (i, f, g, o) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
                    let dhv = dhr[j];
                    let dcv = dcr[j] + dhv * o * (one - tc[j] * tc[j]);
                    dzr[j] = dcv * g * i * (one - i);
                    dzr[hd + j] = dcv * cp[j] * f * (one - f);
                    dzr[2 * hd + j] = dcv * i * (one - g * g);
                    dzr[3 * hd + j] = dhv * tc[j] * o * (one - o);
                    dcr[j] = dcv * f;
                }
            }
            if t > 0 {
                let mut dh_t = dh.slice_mut(s![..n, ..]);
                matmul_t_into(dz.slice(s![off..off + n, ..]), &self.w_recurrent, &mut dh_t);
            }
        }

        // Step-0 rows of h_prev are zero.
        let first = cache.offsets.get(1).copied().unwrap_or(rows);
        general_mat_mul(
            one,
            &cache.h_prev.slice(s![first.., ..]).t(),
            &dz.slice(s![first.., ..]),
            T::zero(),
            &mut grad.w_recurrent,
        );
        general_mat_mul(one, &cache.x.t(), &dz, T::zero(), &mut grad.w_input);
        grad.b_gates = dz.sum_axis(Axis(0));
        let dx = dz.dot(&self.w_input.t());
        for (r, &tok) in cache.tokens.iter().enumerate() {
            grad.embedding
                .row_mut(tok as usize)
                .zip_mut_with(&dx.row(r), |g, &d| *g = *g + d);
        }
        grad
    }
}

fn batch_loss<T: Real>(cache: &Cache<T>, bogus: &[bool]) -> f64 {
    let b = cache.order.len();
    if b == 0 {
        return 0.0;
    }
    let total: f64 = cache
        .order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let d = cache.logits[[k, 1]].to_f64().unwrap() - cache.logits[[k, 0]].to_f64().unwrap();
            if bogus[i] {
                softplus(-d)
            } else {
                softplus(d)
            }
        })
        .sum();
    total / b as f64
}

/// Adam with bias correction folded into the step size.
pub struct Adam<T> {
    m: Network<T>,
    v: Network<T>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(dims: NetworkDims, lr: f64) -> Self {
        Self {
            m: Network::zeros(dims),
            v: Network::zeros(dims),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn update(&mut self, params: &mut Network<T>, grad: &Network<T>) {
        self.step += 1;
        let lr_t = self.lr * (1.0 - self.beta2.powi(self.step)).sqrt() / (1.0 - self.beta1.powi(self.step));
        let (b1, b2, eps, lr_t) = (lit::<T>(self.beta1), lit::<T>(self.beta2), lit::<T>(self.eps), lit::<T>(lr_t));
        let one = T::one();
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grad.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                p[j] = p[j] - lr_t * m[j] / (v[j].sqrt() + eps);
            }
        }
        params.embedding.row_mut(0).fill(T::zero());
    }
}

/// Production network plus the sequence length it reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralModel {
    pub network: Network<f32>,
    pub sequence_length: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Entry 0 is the loss at initialization; later entries are epoch means.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Index into the history vectors of the kept checkpoint.
    pub best_epoch: usize,
}

/// `(p_legit, p_bogus)` for one padded index sequence.
pub fn nn_forward(m: &NeuralModel, seq: &[u32]) -> Result<(f64, f64)> {
    if seq.len() != m.sequence_length {
        return Err(Error::DimensionMismatch {
            expected: m.sequence_length,
            actual: seq.len(),
        });
    }
    let compact = m.network.compact(seq)?;
    let p = m.network.bogus_probabilities(&[compact])[0];
    Ok((1.0 - p, p))
}

impl NeuralModel {
    /// Batched `P(bogus)`; sequences may be padded.
    pub fn bogus_probabilities(&self, seqs: &[Vec<u32>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(256) {
            let compact = chunk
                .iter()
                .map(|s| self.network.compact(s))
                .collect::<Result<Vec<_>>>()?;
            out.extend(self.network.bogus_probabilities(&compact));
        }
        Ok(out)
    }
}

fn evaluate(net: &Network<f32>, seqs: &[Vec<u32>], bogus: &[bool]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (xs, ys) in seqs.chunks(256).zip(bogus.chunks(256)) {
        loss += net.loss(xs, ys) * xs.len() as f64;
        let ps = net.bogus_probabilities(xs);
        correct += ps.iter().zip(ys).filter(|(&p, &y)| (p > 0.5) == y).count();
    }
    (loss / seqs.len() as f64, correct as f64 / seqs.len() as f64)
}

/// Stratified split: `fraction` of each class (at least one) goes to validation.
fn stratified_split(labels: &[bool], fraction: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let n_val = ((idx.len() as f64 * fraction).round() as usize).max(1);
        if n_val >= idx.len() {
            return Err(Error::invalid(format!(
                "validation split {fraction} leaves no training examples of one class"
            )));
        }
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Minibatch Adam on cross-entropy with validation-based checkpointing: an
/// epoch is eligible when its validation loss is within `tolerance` of the
/// lowest seen so far, and the eligible epoch with the best validation
/// accuracy (then lowest loss) is kept. Training stops after `patience`
/// epochs without a new checkpoint.
pub fn nn_train(
    seqs: &[Vec<u32>],
    labels: &[Label],
    vocab_size: usize,
    cfg: &TrainConfig,
) -> Result<(NeuralModel, TrainHistory)> {
    cfg.validate()?;
    if seqs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: seqs.len(),
            actual: labels.len(),
        });
    }
    let bogus: Vec<bool> = labels
        .iter()
        .map(|l| match l {
            Label::Bogus => Ok(true),
            Label::Legitimate => Ok(false),
            Label::Unlabeled => Err(Error::invalid("training data contains unlabeled examples")),
        })
        .collect::<Result<_>>()?;
    if !bogus.contains(&true) || !bogus.contains(&false) {
        return Err(Error::SingleClass);
    }
    let dims = NetworkDims {
        vocab: vocab_size,
        embedding: cfg.embedding_dim,
        hidden: cfg.hidden_units,
        dense: cfg.dense_units,
    };
    let mut net: Network<f32> = Network::init(dims, 0.05, cfg.seed);
    let compact: Vec<Vec<u32>> = seqs
        .iter()
        .map(|s| net.compact(&s[..s.len().min(cfg.sequence_length)]))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let (train_idx, val_idx) = stratified_split(&bogus, cfg.validation_split, &mut rng)?;
    let pick = |idx: &[usize]| -> (Vec<Vec<u32>>, Vec<bool>) {
        (idx.iter().map(|&i| compact[i].clone()).collect(), idx.iter().map(|&i| bogus[i]).collect())
    };
    let (train_x, train_y) = pick(&train_idx);
    let (val_x, val_y) = pick(&val_idx);

    let mut history = TrainHistory::default();
    let (init_train, _) = evaluate(&net, &train_x, &train_y);
    let (mut best_loss, mut best_acc) = evaluate(&net, &val_x, &val_y);
    history.train_loss.push(init_train);
    history.val_loss.push(best_loss);
    history.val_accuracy.push(best_acc);
    let mut running_min = best_loss;
    let mut best = net.clone();
    let mut since_best = 0;

    let mut adam = Adam::new(dims, cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<Vec<u32>> = batch.iter().map(|&i| train_x[i].clone()).collect();
            let ys: Vec<bool> = batch.iter().map(|&i| train_y[i]).collect();
            let (loss, grad) = net.loss_and_gradient(&xs, &ys);
            adam.update(&mut net, &grad);
            epoch_loss += loss * batch.len() as f64;
        }
        let (val_loss, val_acc) = evaluate(&net, &val_x, &val_y);
        history.train_loss.push(epoch_loss / train_x.len() as f64);
        history.val_loss.push(val_loss);
        history.val_accuracy.push(val_acc);
        running_min = running_min.min(val_loss);

        // Eligibility is judged against the minimum as of this epoch, so a
        // kept checkpoint is never displaced by later loss improvements alone.
        let eligible = val_loss <= running_min * (1.0 + cfg.tolerance);
        let better = val_acc > best_acc || (val_acc == best_acc && val_loss < best_loss);
        if eligible && better {
            best = net.clone();
            best_loss = val_loss;
            best_acc = val_acc;
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((
        NeuralModel {
            network: best,
            sequence_length: cfg.sequence_length,
        },
        history,
    ))
}
