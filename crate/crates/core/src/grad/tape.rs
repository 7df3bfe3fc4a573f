//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive executed during a forward pass and
//! replays the records in reverse to accumulate gradients. One tape serves
//! one forward/backward pair: utterance lengths vary per sample, so a fresh
//! graph per utterance is simpler than a static one.

use crate::error::{Error, Result};
use crate::grad::kernels::{axpy, dot, matmul_acc};
use crate::grad::tensor::Tensor;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    leaf: bool,
}

impl Node {
    fn numel(&self) -> usize {
        self.values.len()
    }
}

enum Op {
    MatMul { a: Var, b: Var, out: Var },
    Add { a: Var, b: Var, out: Var, broadcast: bool },
    Mul { a: Var, b: Var, out: Var },
    Sigmoid { x: Var, out: Var },
    Tanh { x: Var, out: Var },
    Relu { x: Var, out: Var },
    Conv1dSame { input: Var, kernel: Var, out: Var },
    EmbeddingGather { table: Var, indices: Vec<usize>, out: Var },
    ConcatLastAxis { parts: Vec<Var>, out: Var },
    SliceRows { x: Var, start: usize, out: Var },
    SoftmaxCrossEntropy { logits: Var, target: usize, out: Var },
}

/// Records primitives in execution order; operands always precede consumers.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    ops: Vec<Op>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Register an input or parameter. The tape keeps its own copy of the
    /// values, so later mutation of the source tensor cannot skew backward.
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var> {
        self.ensure_recording()?;
        if !t.is_finite() {
            return Err(Error::Numeric("leaf tensor".into()));
        }
        Ok(self.push_node(t.shape().to_vec(), t.values().to_vec(), true))
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    /// Snapshot of a recorded value as an owned tensor.
    pub fn value(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].values.clone())
            .expect("node shapes are valid by construction")
    }

    /// Gradient of a value, if one was accumulated. After `backward`, every
    /// leaf has a gradient (zero when the loss does not reach it).
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.nodes[v.0].shape.clone(), g.clone()).expect("grad shape"))
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    // ---- primitives ------------------------------------------------------

    /// (m x k) * (k x n) -> (m x n).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ensure_recording()?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_acc(self.values(a), m, k, self.values(b), n, &mut out);
        self.finish_op("matmul", vec![m, n], out, |out| Op::MatMul { a, b, out })
    }

    /// Elementwise sum. Also accepts (r x c) + (1 x c), broadcasting the
    /// second operand across rows (bias addition).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ensure_recording()?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        let broadcast = sa != sb;
        if broadcast && !(sa.len() == 2 && sb.len() == 2 && sb[0] == 1 && sa[1] == sb[1]) {
            return Err(Error::shape("add", sa, sb));
        }
        let shape = sa.to_vec();
        let cols = *shape.last().unwrap();
        let bv = self.values(b);
        let out: Vec<f64> = if broadcast {
            self.values(a)
                .iter()
                .enumerate()
                .map(|(i, &x)| x + bv[i % cols])
                .collect()
        } else {
            self.values(a).iter().zip(bv).map(|(&x, &y)| x + y).collect()
        };
        self.finish_op("add", shape, out, |out| Op::Add { a, b, out, broadcast })
    }

    /// Hadamard product of same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ensure_recording()?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape("elementwise-multiply", sa, sb));
        }
        let shape = sa.to_vec();
        let out: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x * y)
            .collect();
        self.finish_op("elementwise-multiply", shape, out, |out| Op::Mul { a, b, out })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.ensure_recording()?;
        let shape = self.shape(x).to_vec();
        let out: Vec<f64> = self.values(x).iter().map(|&v| sigmoid(v)).collect();
        self.finish_op("sigmoid", shape, out, |out| Op::Sigmoid { x, out })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.ensure_recording()?;
        let shape = self.shape(x).to_vec();
        let out: Vec<f64> = self.values(x).iter().map(|&v| v.tanh()).collect();
        self.finish_op("tanh", shape, out, |out| Op::Tanh { x, out })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.ensure_recording()?;
        let shape = self.shape(x).to_vec();
        let out: Vec<f64> = self.values(x).iter().map(|&v| v.max(0.0)).collect();
        self.finish_op("relu", shape, out, |out| Op::Relu { x, out })
    }

    /// Length-preserving 1-D convolution: input (T x C_in) against a kernel
    /// (K x C_in x C_out) with K odd, zero-padding (K-1)/2 on each side.
    pub fn conv1d_same(&mut self, input: Var, kernel: Var) -> Result<Var> {
        self.ensure_recording()?;
        let (si, sk) = (self.shape(input), self.shape(kernel));
        if si.len() != 2 || sk.len() != 3 || sk[1] != si[1] || sk[0] % 2 == 0 {
            return Err(Error::shape("conv1d-same", si, sk));
        }
        let (t_len, c_in) = (si[0], si[1]);
        let (k_len, c_out) = (sk[0], sk[2]);
        let pad = (k_len - 1) / 2;
        let inp = self.values(input);
        let ker = self.values(kernel);
        let mut out = vec![0.0; t_len * c_out];
        for t in 0..t_len {
            let out_row = &mut out[t * c_out..(t + 1) * c_out];
            for dk in 0..k_len {
                let s = t + dk;
                if s < pad || s - pad >= t_len {
                    continue;
                }
                let in_row = &inp[(s - pad) * c_in..(s - pad + 1) * c_in];
                let ker_tap = &ker[dk * c_in * c_out..(dk + 1) * c_in * c_out];
                for (ci, &iv) in in_row.iter().enumerate() {
                    axpy(iv, &ker_tap[ci * c_out..(ci + 1) * c_out], out_row);
                }
            }
        }
        self.finish_op("conv1d-same", vec![t_len, c_out], out, |out| Op::Conv1dSame {
            input,
            kernel,
            out,
        })
    }

    /// Gather rows of an embedding table (V x E) by index -> (T x E).
    pub fn embedding_gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        self.ensure_recording()?;
        let st = self.shape(table);
        if st.len() != 2 {
            return Err(Error::shape("embedding-gather", st, &[indices.len()]));
        }
        let (vocab, embed) = (st[0], st[1]);
        if indices.is_empty() {
            return Err(Error::EmptyInput("embedding-gather index sequence"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(Error::Vocab {
                index: bad,
                vocab_size: vocab,
            });
        }
        let tv = self.values(table);
        let mut out = Vec::with_capacity(indices.len() * embed);
        for &i in indices {
            out.extend_from_slice(&tv[i * embed..(i + 1) * embed]);
        }
        let indices = indices.to_vec();
        self.finish_op("embedding-gather", vec![indices.len(), embed], out, |out| {
            Op::EmbeddingGather { table, indices, out }
        })
    }

    /// Concatenate along the last axis. Operands must agree on rank and on
    /// every leading extent.
    pub fn concat_last_axis(&mut self, parts: &[Var]) -> Result<Var> {
        self.ensure_recording()?;
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat-last-axis operand list"));
        }
        let first = self.shape(parts[0]).to_vec();
        let mut last_total = 0;
        for &p in parts {
            let sp = self.shape(p);
            if sp.len() != first.len() || sp[..sp.len() - 1] != first[..first.len() - 1] {
                return Err(Error::shape("concat-last-axis", &first, sp));
            }
            last_total += sp[sp.len() - 1];
        }
        let rows: usize = first[..first.len() - 1].iter().product();
        let mut out = Vec::with_capacity(rows * last_total);
        for r in 0..rows {
            for &p in parts {
                let w = *self.shape(p).last().unwrap();
                out.extend_from_slice(&self.values(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = first;
        *shape.last_mut().unwrap() = last_total;
        let parts = parts.to_vec();
        self.finish_op("concat-last-axis", shape, out, |out| Op::ConcatLastAxis {
            parts,
            out,
        })
    }

    /// Contiguous slice along the first axis: rows `start..start+len` of a
    /// matrix, or elements of a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.ensure_recording()?;
        let sx = self.shape(x).to_vec();
        if len == 0 || start + len > sx[0] {
            return Err(Error::shape("slice", &sx, &[start, len]));
        }
        let stride: usize = sx[1..].iter().product();
        let out = self.values(x)[start * stride..(start + len) * stride].to_vec();
        let mut shape = sx;
        shape[0] = len;
        self.finish_op("slice", shape, out, |out| Op::SliceRows { x, start, out })
    }

    /// Fused softmax + negative log likelihood of `target`, returning a
    /// scalar. Logits may be a vector or a single-row matrix.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.ensure_recording()?;
        let sl = self.shape(logits);
        let classes = match sl {
            [n] => *n,
            [1, n] => *n,
            other => return Err(Error::shape("softmax-cross-entropy", other, &[1])),
        };
        if target >= classes {
            return Err(Error::Label {
                label: target,
                num_intents: classes,
            });
        }
        let lv = self.values(logits);
        let max = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum_exp = max + lv.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let loss = log_sum_exp - lv[target];
        self.finish_op("softmax-cross-entropy", vec![1], vec![loss], |out| {
            Op::SoftmaxCrossEntropy { logits, target, out }
        })
    }

    // ---- backward --------------------------------------------------------

    /// Accumulate gradients of `loss` into every node, sweeping the record
    /// once in reverse. Consumes the tape: recording or a second backward
    /// afterwards is a usage error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::Usage("backward already ran on this tape".into()));
        }
        if self.nodes[loss.0].numel() != 1 {
            return Err(Error::shape("backward", &self.nodes[loss.0].shape, &[1]));
        }
        self.consumed = true;
        self.grads[loss.0] = Some(vec![1.0]);
        for op in self.ops.iter().rev() {
            apply_vjp(op, &self.nodes, &mut self.grads);
        }
        // Leaves the loss never reached still get a (zero) gradient.
        for (node, grad) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if node.leaf && grad.is_none() {
                *grad = Some(vec![0.0; node.numel()]);
            }
        }
        Ok(())
    }

    // ---- internals -------------------------------------------------------

    fn ensure_recording(&self) -> Result<()> {
        if self.consumed {
            Err(Error::Usage(
                "tape already consumed by backward; start a new tape".into(),
            ))
        } else {
            Ok(())
        }
    }

    fn push_node(&mut self, shape: Vec<usize>, values: Vec<f64>, leaf: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { shape, values, leaf });
        self.grads.push(None);
        Var(id)
    }

    fn finish_op(
        &mut self,
        name: &'static str,
        shape: Vec<usize>,
        values: Vec<f64>,
        make: impl FnOnce(Var) -> Op,
    ) -> Result<Var> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("output of {name}")));
        }
        let out = self.push_node(shape, values, false);
        self.ops.push(make(out));
        Ok(out)
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn grad_buf<'a>(grads: &'a mut [Option<Vec<f64>>], v: Var, numel: usize) -> &'a mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; numel])
}

fn apply_vjp(op: &Op, nodes: &[Node], grads: &mut [Option<Vec<f64>>]) {
    match op {
        Op::MatMul { a, b, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
            let n = nodes[b.0].shape[1];
            let (av, bv) = (&nodes[a.0].values, &nodes[b.0].values);
            {
                // dA[i, l] = dOut row i . B row l
                let da = grad_buf(grads, *a, m * k);
                for i in 0..m {
                    let d_row = &d_out[i * n..(i + 1) * n];
                    for l in 0..k {
                        da[i * k + l] += dot(d_row, &bv[l * n..(l + 1) * n]);
                    }
                }
            }
            // dB += A^T dOut
            let db = grad_buf(grads, *b, k * n);
            for i in 0..m {
                let d_row = &d_out[i * n..(i + 1) * n];
                for l in 0..k {
                    axpy(av[i * k + l], d_row, &mut db[l * n..(l + 1) * n]);
                }
            }
        }
        Op::Add { a, b, out, broadcast } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            axpy(1.0, &d_out, grad_buf(grads, *a, nodes[a.0].numel()));
            let db = grad_buf(grads, *b, nodes[b.0].numel());
            if *broadcast {
                let cols = db.len();
                for (i, &g) in d_out.iter().enumerate() {
                    db[i % cols] += g;
                }
            } else {
                axpy(1.0, &d_out, db);
            }
        }
        Op::Mul { a, b, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let (av, bv) = (&nodes[a.0].values, &nodes[b.0].values);
            let da = grad_buf(grads, *a, av.len());
            for ((g, &d), &y) in da.iter_mut().zip(&d_out).zip(bv) {
                *g += d * y;
            }
            let db = grad_buf(grads, *b, bv.len());
            for ((g, &d), &x) in db.iter_mut().zip(&d_out).zip(av) {
                *g += d * x;
            }
        }
        Op::Sigmoid { x, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let yv = &nodes[out.0].values;
            let dx = grad_buf(grads, *x, yv.len());
            for ((g, &d), &y) in dx.iter_mut().zip(&d_out).zip(yv) {
                *g += d * y * (1.0 - y);
            }
        }
        Op::Tanh { x, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let yv = &nodes[out.0].values;
            let dx = grad_buf(grads, *x, yv.len());
            for ((g, &d), &y) in dx.iter_mut().zip(&d_out).zip(yv) {
                *g += d * (1.0 - y * y);
            }
        }
        Op::Relu { x, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let xv = &nodes[x.0].values;
            let dx = grad_buf(grads, *x, xv.len());
            for ((g, &d), &v) in dx.iter_mut().zip(&d_out).zip(xv) {
                if v > 0.0 {
                    *g += d;
                }
            }
        }
        Op::Conv1dSame { input, kernel, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let (t_len, c_in) = (nodes[input.0].shape[0], nodes[input.0].shape[1]);
            let (k_len, c_out) = (nodes[kernel.0].shape[0], nodes[kernel.0].shape[2]);
            let pad = (k_len - 1) / 2;
            let ker = &nodes[kernel.0].values;
            let inp = &nodes[input.0].values;
            {
                let d_in = grad_buf(grads, *input, t_len * c_in);
                for t in 0..t_len {
                    let d_row = &d_out[t * c_out..(t + 1) * c_out];
                    for dk in 0..k_len {
                        let s = t + dk;
                        if s < pad || s - pad >= t_len {
                            continue;
                        }
                        let d_in_row = &mut d_in[(s - pad) * c_in..(s - pad + 1) * c_in];
                        let ker_tap = &ker[dk * c_in * c_out..(dk + 1) * c_in * c_out];
                        for (ci, g) in d_in_row.iter_mut().enumerate() {
                            *g += dot(d_row, &ker_tap[ci * c_out..(ci + 1) * c_out]);
                        }
                    }
                }
            }
            let d_ker = grad_buf(grads, *kernel, k_len * c_in * c_out);
            for t in 0..t_len {
                let d_row = &d_out[t * c_out..(t + 1) * c_out];
                for dk in 0..k_len {
                    let s = t + dk;
                    if s < pad || s - pad >= t_len {
                        continue;
                    }
                    let in_row = &inp[(s - pad) * c_in..(s - pad + 1) * c_in];
                    let d_tap = &mut d_ker[dk * c_in * c_out..(dk + 1) * c_in * c_out];
                    for (ci, &iv) in in_row.iter().enumerate() {
                        axpy(iv, d_row, &mut d_tap[ci * c_out..(ci + 1) * c_out]);
                    }
                }
            }
        }
        Op::EmbeddingGather { table, indices, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let embed = nodes[table.0].shape[1];
            let dt = grad_buf(grads, *table, nodes[table.0].numel());
            for (t, &i) in indices.iter().enumerate() {
                axpy(
                    1.0,
                    &d_out[t * embed..(t + 1) * embed],
                    &mut dt[i * embed..(i + 1) * embed],
                );
            }
        }
        Op::ConcatLastAxis { parts, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let out_w = *nodes[out.0].shape.last().unwrap();
            let rows = nodes[out.0].numel() / out_w;
            let mut offset = 0;
            for &p in parts {
                let w = *nodes[p.0].shape.last().unwrap();
                let dp = grad_buf(grads, p, nodes[p.0].numel());
                for r in 0..rows {
                    axpy(
                        1.0,
                        &d_out[r * out_w + offset..r * out_w + offset + w],
                        &mut dp[r * w..(r + 1) * w],
                    );
                }
                offset += w;
            }
        }
        Op::SliceRows { x, start, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let stride: usize = nodes[x.0].shape[1..].iter().product();
            let dx = grad_buf(grads, *x, nodes[x.0].numel());
            axpy(1.0, &d_out, &mut dx[start * stride..start * stride + d_out.len()]);
        }
        Op::SoftmaxCrossEntropy { logits, target, out } => {
            let Some(d_out) = grads[out.0].clone() else { return };
            let scale = d_out[0];
            let lv = &nodes[logits.0].values;
            let max = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = lv.iter().map(|&v| (v - max).exp()).sum();
            let dl = grad_buf(grads, *logits, lv.len());
            for (j, (g, &v)) in dl.iter_mut().zip(lv).enumerate() {
                let p = (v - max).exp() / denom;
                *g += scale * (p - if j == *target { 1.0 } else { 0.0 });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: Vec<usize>, values: Vec<f64>) -> Var {
        tape.leaf(&Tensor::new(shape, values).unwrap()).unwrap()
    }

    #[test]
    fn matmul_identity_passthrough() {
        let mut tape = Tape::new();
        let m = leaf(&mut tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let id = leaf(&mut tape, vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let out = tape.matmul(m, id).unwrap();
        assert_eq!(tape.values(out), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1], vec![0.0]);
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.values(y), &[0.5]);
    }

    #[test]
    fn sigmoid_gradient_at_zero_is_quarter() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1], vec![0.0]);
        let y = tape.sigmoid(x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().values(), &[0.25]);
    }

    #[test]
    fn product_rule() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1], vec![2.0]);
        let y = leaf(&mut tape, vec![1], vec![3.0]);
        let xy = tape.mul(x, y).unwrap();
        tape.backward(xy).unwrap();
        assert_eq!(tape.grad(x).unwrap().values(), &[3.0]);
        assert_eq!(tape.grad(y).unwrap().values(), &[2.0]);
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        // Kernel with a 1 at the center tap on the matching channel copies
        // the input through unchanged.
        let t_len = 4;
        let c = 3;
        let k = 3;
        let input: Vec<f64> = (0..t_len * c).map(|i| i as f64 * 0.37 - 1.0).collect();
        let mut kernel = vec![0.0; k * c * c];
        for ci in 0..c {
            kernel[(k / 2) * c * c + ci * c + ci] = 1.0;
        }
        let mut tape = Tape::new();
        let iv = leaf(&mut tape, vec![t_len, c], input.clone());
        let kv = leaf(&mut tape, vec![k, c, c], kernel);
        let out = tape.conv1d_same(iv, kv).unwrap();
        assert_eq!(tape.values(out), input.as_slice());
    }

    #[test]
    fn cross_entropy_matches_scalar_oracle() {
        // Independent evaluation: ln(e^1 + e^2 + e^3) - 3.
        let expected = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0;
        let mut tape = Tape::new();
        let logits = leaf(&mut tape, vec![3], vec![1.0, 2.0, 3.0]);
        let loss = tape.softmax_cross_entropy(logits, 2).unwrap();
        assert!((tape.values(loss)[0] - expected).abs() < 1e-12);
        assert!((expected - 0.40760596444438013).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_classes() {
        for classes in [2usize, 4, 7] {
            let mut tape = Tape::new();
            let logits = leaf(&mut tape, vec![classes], vec![0.3; classes]);
            let loss = tape.softmax_cross_entropy(logits, 0).unwrap();
            assert!((tape.values(loss)[0] - (classes as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1], vec![1.5]);
        let y = tape.tanh(x).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Usage(_))));
        assert!(matches!(tape.tanh(x), Err(Error::Usage(_))));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2], vec![1.0, 2.0]);
        let y = tape.relu(x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Shape { .. })));
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1], vec![1.0]);
        let unused = leaf(&mut tape, vec![2], vec![5.0, 6.0]);
        let y = tape.sigmoid(x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(unused).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_leaf_is_rejected() {
        let mut tape = Tape::new();
        let t = Tensor::new(vec![1], vec![f64::NAN]).unwrap();
        assert!(matches!(tape.leaf(&t), Err(Error::Numeric(_))));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![2, 3], vec![0.0; 6]);
        let b = leaf(&mut tape, vec![2, 3], vec![0.0; 6]);
        match tape.matmul(a, b) {
            Err(Error::Shape { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn even_conv_kernel_is_rejected() {
        let mut tape = Tape::new();
        let i = leaf(&mut tape, vec![4, 2], vec![0.0; 8]);
        let k = leaf(&mut tape, vec![2, 2, 2], vec![0.0; 8]);
        assert!(matches!(tape.conv1d_same(i, k), Err(Error::Shape { .. })));
    }

    #[test]
    fn gather_rejects_out_of_range_index() {
        let mut tape = Tape::new();
        let table = leaf(&mut tape, vec![3, 2], vec![0.0; 6]);
        assert!(matches!(
            tape.embedding_gather(table, &[0, 3]),
            Err(Error::Vocab { index: 3, vocab_size: 3 })
        ));
    }

    #[test]
    fn concat_then_slice_round_trips() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = leaf(&mut tape, vec![2, 1], vec![5.0, 6.0]);
        let cat = tape.concat_last_axis(&[a, b]).unwrap();
        assert_eq!(tape.shape(cat), &[2, 3]);
        assert_eq!(tape.values(cat), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let top = tape.slice(cat, 0, 1).unwrap();
        assert_eq!(tape.values(top), &[1.0, 2.0, 5.0]);
    }

    #[test]
    fn backward_is_linear_over_summed_losses() {
        // d(l1 + l2)/dx == dl1/dx + dl2/dx, computed on separate tapes.
        let x0 = Tensor::new(vec![1, 2], vec![0.7, -0.4]).unwrap();
        let build = |tape: &mut Tape, x: Var, which: usize| -> Var {
            let s = tape.sigmoid(x).unwrap();
            let t = tape.tanh(x).unwrap();
            let m = tape.mul(s, t).unwrap();
            let picked = tape.slice(m, 0, 1).unwrap();
            let flatten = tape.concat_last_axis(&[picked]).unwrap();
            let loss = tape.softmax_cross_entropy(flatten, which).unwrap();
            loss
        };

        let grad_of = |which: Option<usize>| -> Vec<f64> {
            let mut tape = Tape::new();
            let x = tape.leaf(&x0).unwrap();
            let loss = match which {
                Some(w) => build(&mut tape, x, w),
                None => {
                    let l0 = build(&mut tape, x, 0);
                    let l1 = build(&mut tape, x, 1);
                    tape.add(l0, l1).unwrap()
                }
            };
            tape.backward(loss).unwrap();
            tape.grad(x).unwrap().values().to_vec()
        };

        let summed = grad_of(None);
        let separate: Vec<f64> = grad_of(Some(0))
            .iter()
            .zip(grad_of(Some(1)))
            .map(|(a, b)| a + b)
            .collect();
        for (s, p) in summed.iter().zip(&separate) {
            assert!((s - p).abs() < 1e-12, "linearity violated: {s} vs {p}");
        }
    }
}
