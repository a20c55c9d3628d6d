//! Reverse-mode differentiation over f64 matrices.
//!
//! A [`Tape`] records a forward computation as a flat list of nodes; each op
//! stores a closure that routes the output gradient to its inputs. Nodes only
//! ever reference earlier nodes, so walking the list backwards is a valid
//! topological order. Leaf nodes bound to a [`ParamId`] scatter their
//! gradient into the [`ParameterStore`] during [`Tape::backward`]; using the
//! same parameter through several leaves (weight sharing, two decoding
//! passes) accumulates naturally.
//!
//! Everything is f64 end to end and single threaded, which keeps runs
//! bit-reproducible and lets analytic gradients face central finite
//! differences directly.

use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::store::{ParamId, ParameterStore};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Gradient slots during a backward pass, indexed by node.
pub struct GradSink {
    slots: Vec<Option<Array2<f64>>>,
}

impl GradSink {
    fn add(&mut self, node: usize, contribution: Array2<f64>) {
        match &mut self.slots[node] {
            Some(g) => *g += &contribution,
            slot @ None => *slot = Some(contribution),
        }
    }
}

type BackFn = Box<dyn FnOnce(&Array2<f64>, &mut GradSink)>;

struct Node {
    value: Array2<f64>,
    backward: Option<BackFn>,
    param: Option<ParamId>,
}

/// Tape of one forward computation.
pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Tape {
    /// A recording tape: ops capture what their backward pass needs.
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), recording: true }
    }

    /// A non-recording tape for pure inference; [`Tape::backward`] must not
    /// be called on it.
    pub fn eval() -> Self {
        Tape { nodes: Vec::new(), recording: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.dim(), (1, 1), "expected scalar node");
        val[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, backward: Option<BackFn>, param: Option<ParamId>) -> Var {
        self.nodes.push(Node { value, backward, param });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf; no gradient flows into it.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, None, None)
    }

    /// A parameter leaf; backward accumulates its gradient into the store.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), None, Some(id))
    }

    /// Runs the backward pass from a scalar loss, accumulating parameter
    /// gradients into `store` (on top of whatever is already there).
    pub fn backward(&mut self, loss: Var, store: &mut ParameterStore) {
        assert!(self.recording, "backward on a non-recording tape");
        assert_eq!(self.nodes[loss.0].value.dim(), (1, 1), "loss must be scalar");
        let n = self.nodes.len();
        let mut sink = GradSink { slots: vec![None; n] };
        sink.slots[loss.0] = Some(Array2::from_elem((1, 1), 1.0));
        for id in (0..n).rev() {
            let Some(grad) = sink.slots[id].take() else { continue };
            if let Some(pid) = self.nodes[id].param {
                store.accumulate_grad(pid, &grad);
            }
            if let Some(back) = self.nodes[id].backward.take() {
                back(&grad, &mut sink);
            }
        }
    }

    // ----- elementwise and shape ops -------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                sink.add(a.0, g.clone());
                sink.add(b.0, g.clone());
            }) as BackFn
        });
        self.push(value, back, None)
    }

    /// Adds a (1, d) bias row to every row of x.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let value = &self.nodes[x.0].value + &self.nodes[bias.0].value;
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                sink.add(x.0, g.clone());
                sink.add(bias.0, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }) as BackFn
        });
        self.push(value, back, None)
    }

    /// Adds a constant matrix (an attention mask, say); gradient passes
    /// through unchanged.
    pub fn add_const(&mut self, x: Var, constant: &Array2<f64>) -> Var {
        let value = &self.nodes[x.0].value + constant;
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                sink.add(x.0, g.clone());
            }) as BackFn
        });
        self.push(value, back, None)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = &self.nodes[x.0].value * c;
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                sink.add(x.0, g * c);
            }) as BackFn
        });
        self.push(value, back, None)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (rows, cols) = self.nodes[x.0].value.dim();
        assert!(start + len <= cols, "column slice out of range");
        let value = self.nodes[x.0].value.slice(s![.., start..start + len]).to_owned();
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                let mut full = Array2::zeros((rows, cols));
                full.slice_mut(s![.., start..start + len]).assign(g);
                sink.add(x.0, full);
            }) as BackFn
        });
        self.push(value, back, None)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0].0].value.nrows();
        let widths: Vec<usize> = parts.iter().map(|p| self.nodes[p.0].value.ncols()).collect();
        let total: usize = widths.iter().sum();
        let mut value = Array2::zeros((rows, total));
        let mut col = 0;
        for (p, w) in parts.iter().zip(&widths) {
            value.slice_mut(s![.., col..col + w]).assign(&self.nodes[p.0].value);
            col += w;
        }
        let parts_owned: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                let mut col = 0;
                for (node, w) in parts_owned.iter().zip(&widths) {
                    sink.add(*node, g.slice(s![.., col..col + *w]).to_owned());
                    col += w;
                }
            }) as BackFn
        });
        self.push(value, back, None)
    }

    /// Mean over rows, result shape (1, d).
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].value.nrows();
        assert!(n > 0, "mean over zero rows");
        let value = (self.nodes[x.0].value.sum_axis(Axis(0)) / n as f64).insert_axis(Axis(0));
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                let row = g / n as f64;
                let mut full = Array2::zeros((n, row.ncols()));
                for mut r in full.rows_mut() {
                    r.assign(&row.row(0));
                }
                sink.add(x.0, full);
            }) as BackFn
        });
        self.push(value, back, None)
    }

    /// Sum of all entries, result shape (1, 1). Mostly for tests.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let dim = self.nodes[x.0].value.dim();
        let value = Array2::from_elem((1, 1), self.nodes[x.0].value.sum());
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                sink.add(x.0, Array2::from_elem(dim, g[[0, 0]]));
            }) as BackFn
        });
        self.push(value, back, None)
    }

    // ----- matrix products -----------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        let back: Option<BackFn> = self.recording.then(|| {
            let a_val = self.nodes[a.0].value.clone();
            let b_val = self.nodes[b.0].value.clone();
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                sink.add(a.0, g.dot(&b_val.t()));
                sink.add(b.0, a_val.t().dot(g));
            }) as BackFn
        });
        self.push(value, back, None)
    }

    /// a . b^T without materialising the transpose on the tape.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value.t());
        let back: Option<BackFn> = self.recording.then(|| {
            let a_val = self.nodes[a.0].value.clone();
            let b_val = self.nodes[b.0].value.clone();
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                sink.add(a.0, g.dot(&b_val));
                sink.add(b.0, g.t().dot(&a_val));
            }) as BackFn
        });
        self.push(value, back, None)
    }

    // ----- nonlinearities -------------------------------------------------

    /// Gaussian error linear unit, tanh approximation. Smooth everywhere,
    /// which keeps finite-difference checks clean.
    pub fn gelu(&mut self, x: Var) -> Var {
        const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        const A: f64 = 0.044715;
        let x_val = self.nodes[x.0].value.clone();
        let value = x_val.mapv(|v| 0.5 * v * (1.0 + (C * (v + A * v * v * v)).tanh()));
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                let mut dx = x_val.clone();
                dx.mapv_inplace(|v| {
                    let u = C * (v + A * v * v * v);
                    let t = u.tanh();
                    0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * C * (1.0 + 3.0 * A * v * v)
                });
                sink.add(x.0, g * &dx);
            }) as BackFn
        });
        self.push(value, back, None)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut value = self.nodes[x.0].value.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        let back: Option<BackFn> = self.recording.then(|| {
            let y = value.clone();
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                let mut dx = g * &y;
                for (mut row, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
                    let dot: f64 = row.sum();
                    row.zip_mut_with(&yrow.to_owned(), |r, &yv| *r -= dot * yv);
                }
                sink.add(x.0, dx);
            }) as BackFn
        });
        self.push(value, back, None)
    }

    /// Per-row layer normalisation with learned scale and shift (both (1, d)).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let x_val = &self.nodes[x.0].value;
        let d = x_val.ncols() as f64;
        let mut xhat = x_val.clone();
        let mut inv_sigma = Vec::with_capacity(x_val.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / d;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| v * inv);
            inv_sigma.push(inv);
        }
        let gamma_val = self.nodes[gamma.0].value.clone();
        let value = &xhat * &gamma_val + &self.nodes[beta.0].value;
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                sink.add(beta.0, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                sink.add(gamma.0, (g * &xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                let dxhat = g * &gamma_val;
                let mut dx = Array2::zeros(dxhat.raw_dim());
                for (i, inv) in inv_sigma.iter().enumerate() {
                    let dxh = dxhat.row(i);
                    let xh = xhat.row(i);
                    let mean_dxh = dxh.sum() / d;
                    let mean_dxh_xh = dxh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
                    for j in 0..dxhat.ncols() {
                        dx[[i, j]] = inv * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
                sink.add(x.0, dx);
            }) as BackFn
        });
        self.push(value, back, None)
    }

    // ----- embedding and loss --------------------------------------------

    /// Gathers rows of an embedding table: out[i] = table[indices[i]].
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Var {
        let table_val = &self.nodes[table.0].value;
        let (vocab, dim) = table_val.dim();
        for &i in indices {
            assert!(i < vocab, "gather index {i} out of vocabulary {vocab}");
        }
        let mut value = Array2::zeros((indices.len(), dim));
        for (row, &i) in indices.iter().enumerate() {
            value.row_mut(row).assign(&table_val.row(i));
        }
        let idx: Vec<usize> = indices.to_vec();
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                let mut dt = Array2::zeros((vocab, dim));
                for (row, &i) in idx.iter().enumerate() {
                    let mut target = dt.row_mut(i);
                    target += &g.row(row);
                }
                sink.add(table.0, dt);
            }) as BackFn
        });
        self.push(value, back, None)
    }

    /// Mean cross entropy of logits (n, V) against target ids, shape (1, 1).
    /// Computed via a stable log-sum-exp; gradient is (softmax - onehot)/n.
    pub fn cross_entropy_mean(&mut self, logits: Var, targets: &[usize]) -> Var {
        let logits_val = &self.nodes[logits.0].value;
        let (n, vocab) = logits_val.dim();
        assert_eq!(n, targets.len(), "one target per logits row");
        for &t in targets {
            assert!(t < vocab, "target {t} out of vocabulary {vocab}");
        }
        let mut probs = logits_val.clone();
        let mut loss = 0.0;
        for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss -= row[targets[i]] - lse;
            row.mapv_inplace(|v| (v - lse).exp());
        }
        let value = Array2::from_elem((1, 1), loss / n as f64);
        let tgt: Vec<usize> = targets.to_vec();
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                let mut dl = probs;
                for (i, &t) in tgt.iter().enumerate() {
                    dl[[i, t]] -= 1.0;
                }
                dl *= g[[0, 0]] / n as f64;
                sink.add(logits.0, dl);
            }) as BackFn
        });
        self.push(value, back, None)
    }

    // ----- convolution helper --------------------------------------------

    /// Unfolds rows into sliding windows: out row t is the concatenation of
    /// x[t*stride - pad_left + j] for j in 0..kernel, with zeros outside the
    /// input. A strided 1-d convolution is unfold followed by matmul.
    pub fn unfold_rows(
        &mut self,
        x: Var,
        kernel: usize,
        stride: usize,
        pad_left: usize,
        pad_right: usize,
    ) -> Var {
        let x_val = &self.nodes[x.0].value;
        let (t_in, d) = x_val.dim();
        let padded = t_in + pad_left + pad_right;
        assert!(padded >= kernel, "input too short for kernel");
        let t_out = (padded - kernel) / stride + 1;
        let mut value = Array2::zeros((t_out, kernel * d));
        for t in 0..t_out {
            for j in 0..kernel {
                let src = (t * stride + j) as isize - pad_left as isize;
                if src >= 0 && (src as usize) < t_in {
                    value
                        .slice_mut(s![t, j * d..(j + 1) * d])
                        .assign(&x_val.row(src as usize));
                }
            }
        }
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                let mut dx = Array2::zeros((t_in, d));
                for t in 0..t_out {
                    for j in 0..kernel {
                        let src = (t * stride + j) as isize - pad_left as isize;
                        if src >= 0 && (src as usize) < t_in {
                            let mut row = dx.row_mut(src as usize);
                            row += &g.slice(s![t, j * d..(j + 1) * d]);
                        }
                    }
                }
                sink.add(x.0, dx);
            }) as BackFn
        });
        self.push(value, back, None)
    }

    /// Inverted dropout with a caller-supplied rng; a no-op at rate 0.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, rng: &mut R) -> Var {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        if rate == 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let dim = self.nodes[x.0].value.raw_dim();
        let mut mask = Array2::zeros(dim);
        for v in mask.iter_mut() {
            *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
        }
        let value = &self.nodes[x.0].value * &mask;
        let back: Option<BackFn> = self.recording.then(|| {
            Box::new(move |g: &Array2<f64>, sink: &mut GradSink| {
                sink.add(x.0, g * &mask);
            }) as BackFn
        });
        self.push(value, back, None)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}
