//! Reverse-mode automatic differentiation over a flat operation record.
//!
//! Every operation appends a node holding its output value and enough
//! information to push gradients back to its inputs. Nodes are appended in
//! execution order, so a reverse sweep over the record is a valid
//! topological order and visits each node once.

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScaleRows(Var, Vec<f64>),
    Relu(Var),
    Sigmoid(Var),
    Gather(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<f64>),
    Sum(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        // batch statistics feed back into dx only in train mode
        batch_stats: bool,
    },
    Dropout(Var, Vec<f64>),
    BceMasked {
        logits: Var,
        targets: Vec<f64>,
        mask: Vec<f64>,
        denom: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation. One tape per forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the value does not influence the loss or is not tracked.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

fn add_into(acc: &mut Option<Tensor>, shape: &[usize], delta: &[f64]) {
    match acc {
        Some(t) => {
            for (a, d) in t.data_mut().iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => {
            *acc = Some(
                Tensor::new(shape.to_vec(), delta.to_vec()).expect("gradient matches value shape"),
            );
        }
    }
}

/// `out[m x n] = a[m x k] * b[k x n]`, optionally transposing either input.
fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, ta: bool, tb: bool) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = if ta { a[p * m + i] } else { a[i * k + p] };
            if av == 0.0 {
                continue;
            }
            if tb {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += av * b[j * k + p];
                }
            } else {
                for (o, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

pub(crate) fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Gradients are only propagated to leaves created
    /// with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).dims2().map_err(|_| {
            shape_err(
                op,
                format!("expected a matrix, got {:?}", self.value(v).shape()),
            )
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m}x{k}] @ [{k2}x{n}]")));
        }
        let data = gemm(
            self.value(a).data(),
            self.value(b).data(),
            m,
            k,
            n,
            false,
            false,
        );
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::MatMul(a, b), &[a, b]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul(a, b), &[a, b]))
    }

    fn row_broadcast(&self, x: Var, r: Var, op: &'static str) -> Result<(usize, usize)> {
        let (n, h) = self.dims2(x, op)?;
        if self.value(r).numel() != h {
            return Err(shape_err(
                op,
                format!(
                    "row of {} values against {h} columns",
                    self.value(r).numel()
                ),
            ));
        }
        Ok((n, h))
    }

    /// `x[n x h] + row[h]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (n, h) = self.row_broadcast(x, row, "add_row")?;
        let r = self.value(row).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + r[i % h])
            .collect();
        Ok(self.push(
            Tensor::new(vec![n, h], data)?,
            Op::AddRow(x, row),
            &[x, row],
        ))
    }

    /// `x[n x h] * row[h]` elementwise, broadcast over rows.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (n, h) = self.row_broadcast(x, row, "mul_row")?;
        let r = self.value(row).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * r[i % h])
            .collect();
        Ok(self.push(
            Tensor::new(vec![n, h], data)?,
            Op::MulRow(x, row),
            &[x, row],
        ))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * c).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Scale(x, c), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v + c).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::AddScalar(x), &[x])
    }

    /// Multiplies row `i` of `x` by the constant `coeffs[i]`.
    pub fn scale_rows(&mut self, x: Var, coeffs: Vec<f64>) -> Result<Var> {
        let (n, h) = self.dims2(x, "scale_rows")?;
        if coeffs.len() != n {
            return Err(shape_err(
                "scale_rows",
                format!("{} coefficients for {n} rows", coeffs.len()),
            ));
        }
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * coeffs[i / h.max(1)])
            .collect();
        Ok(self.push(
            Tensor::new(vec![n, h], data)?,
            Op::ScaleRows(x, coeffs),
            &[x],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| stable_sigmoid(v)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Sigmoid(x), &[x])
    }

    /// `out[r] = x[idx[r]]` row-wise.
    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let (n, h) = self.dims2(x, "gather_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                what: "gather_rows".into(),
                index: bad,
                bound: n,
            });
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(idx.len() * h);
        for &i in &idx {
            data.extend_from_slice(&src[i * h..(i + 1) * h]);
        }
        let value = Tensor::new(vec![idx.len(), h], data)?;
        Ok(self.push(value, Op::Gather(x, idx), &[x]))
    }

    fn segment_totals(
        &self,
        x: Var,
        ids: &[usize],
        num_segments: usize,
        op: &'static str,
    ) -> Result<Vec<f64>> {
        let (m, h) = self.dims2(x, op)?;
        if ids.len() != m {
            return Err(shape_err(
                op,
                format!("{} segment ids for {m} rows", ids.len()),
            ));
        }
        if let Some(&bad) = ids.iter().find(|&&s| s >= num_segments) {
            return Err(Error::IndexOutOfRange {
                what: op.into(),
                index: bad,
                bound: num_segments,
            });
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; num_segments * h];
        for (r, &s) in ids.iter().enumerate() {
            for (o, v) in out[s * h..(s + 1) * h]
                .iter_mut()
                .zip(&src[r * h..(r + 1) * h])
            {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Sums rows of `x` into `num_segments` buckets; empty buckets are zero.
    pub fn segment_sum(&mut self, x: Var, ids: Vec<usize>, num_segments: usize) -> Result<Var> {
        let h = self.dims2(x, "segment_sum")?.1;
        let data = self.segment_totals(x, &ids, num_segments, "segment_sum")?;
        let value = Tensor::new(vec![num_segments, h], data)?;
        Ok(self.push(value, Op::SegmentSum(x, ids), &[x]))
    }

    /// Row mean per bucket; empty buckets are zero.
    pub fn segment_mean(&mut self, x: Var, ids: Vec<usize>, num_segments: usize) -> Result<Var> {
        let h = self.dims2(x, "segment_mean")?.1;
        let mut data = self.segment_totals(x, &ids, num_segments, "segment_mean")?;
        let mut counts = vec![0usize; num_segments];
        for &s in &ids {
            counts[s] += 1;
        }
        let inv: Vec<f64> = counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
            .collect();
        for (s, &w) in inv.iter().enumerate() {
            for v in &mut data[s * h..(s + 1) * h] {
                *v *= w;
            }
        }
        let value = Tensor::new(vec![num_segments, h], data)?;
        Ok(self.push(value, Op::SegmentMean(x, ids, inv), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Batch normalisation with batch statistics over rows. Returns the
    /// output together with the batch mean and unbiased variance, which the
    /// caller folds into its running statistics.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (n, h) = self.row_broadcast(x, gamma, "batchnorm")?;
        self.row_broadcast(x, beta, "batchnorm")?;
        if n == 0 {
            return Err(shape_err("batchnorm", "zero-size batch".into()));
        }
        let xs = self.value(x).data();
        let mut mean = vec![0.0; h];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(&xs[r * h..(r + 1) * h]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; h];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(&xs[r * h..(r + 1) * h]).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let unbiased = if n > 1 {
            var.iter().map(|v| v * n as f64 / (n - 1) as f64).collect()
        } else {
            var.clone()
        };
        let out = self.affine_norm(x, gamma, beta, &mean, inv_std, true)?;
        Ok((out, mean, unbiased))
    }

    /// Batch normalisation with fixed statistics (inference).
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (n, h) = self.row_broadcast(x, gamma, "batchnorm")?;
        self.row_broadcast(x, beta, "batchnorm")?;
        if n == 0 {
            return Err(shape_err("batchnorm", "zero-size batch".into()));
        }
        if running_mean.len() != h || running_var.len() != h {
            return Err(shape_err("batchnorm", "running statistics width".into()));
        }
        let inv_std = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        self.affine_norm(x, gamma, beta, running_mean, inv_std, false)
    }

    fn affine_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: Vec<f64>,
        batch_stats: bool,
    ) -> Result<Var> {
        let (n, h) = self.dims2(x, "batchnorm")?;
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Vec::with_capacity(n * h);
        let mut out = Vec::with_capacity(n * h);
        for (i, v) in xs.iter().enumerate() {
            let j = i % h;
            let z = (v - mean[j]) * inv_std[j];
            xhat.push(z);
            out.push(z * g[j] + b[j]);
        }
        let value = Tensor::new(vec![n, h], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        ))
    }

    /// Inverted dropout: zeroes entries with probability `p` and scales the
    /// survivors by `1 / (1 - p)`. `p == 0` returns `x` unchanged.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut (impl Rng + ?Sized)) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability {p} not in [0, 1)"
            )));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Dropout(x, mask), &[x]))
    }

    /// Mean binary cross-entropy over entries where `mask` is 1, computed
    /// from logits in the overflow-free form
    /// `max(z, 0) - z * y + ln(1 + exp(-|z|))`. An all-zero mask gives 0.
    pub fn bce_with_logits_masked(
        &mut self,
        logits: Var,
        targets: Vec<f64>,
        mask: Vec<f64>,
    ) -> Result<Var> {
        let z = self.value(logits);
        if targets.len() != z.numel() || mask.len() != z.numel() {
            return Err(shape_err(
                "bce_with_logits_masked",
                format!(
                    "{} logits, {} targets, {} mask entries",
                    z.numel(),
                    targets.len(),
                    mask.len()
                ),
            ));
        }
        let denom: f64 = mask.iter().sum();
        let mut total = 0.0;
        for ((&z, &y), &m) in z.data().iter().zip(&targets).zip(&mask) {
            if m != 0.0 {
                total += m * (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
            }
        }
        let loss = if denom > 0.0 { total / denom } else { 0.0 };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceMasked {
                logits,
                targets,
                mask,
                denom,
            },
            &[logits],
        ))
    }

    /// Sum over fields of per-field table lookups: row `i` of the result is
    /// `sum_f tables[f][idx[f][i]]`. With no fields the result is zero.
    pub fn embedding_sum(
        &mut self,
        tables: &[Var],
        idx: &[Vec<usize>],
        rows: usize,
        width: usize,
    ) -> Result<Var> {
        if tables.len() != idx.len() {
            return Err(shape_err(
                "embedding_sum",
                format!("{} tables for {} index fields", tables.len(), idx.len()),
            ));
        }
        let mut acc: Option<Var> = None;
        for (f, (&table, column)) in tables.iter().zip(idx).enumerate() {
            let (card, w) = self.dims2(table, "embedding_sum")?;
            if w != width || column.len() != rows {
                return Err(shape_err(
                    "embedding_sum",
                    format!("field {f} table or index shape"),
                ));
            }
            if let Some(&bad) = column.iter().find(|&&i| i >= card) {
                return Err(Error::IndexOutOfRange {
                    what: format!("embedding field {f}"),
                    index: bad,
                    bound: card,
                });
            }
            let looked_up = self.gather_rows(table, column.clone())?;
            acc = Some(match acc {
                None => looked_up,
                Some(a) => self.add(a, looked_up)?,
            });
        }
        Ok(acc.unwrap_or_else(|| self.constant(Tensor::zeros(vec![rows, width]))))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(shape_err(
                "backward",
                format!(
                    "loss must be scalar, got shape {:?}",
                    self.value(loss).shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        // only tracked values carry gradients
        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.needs_grad {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: &[f64]) {
        let node = &self.nodes[v.0];
        if node.needs_grad {
            add_into(&mut grads[v.0], node.value.shape(), delta);
        }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().expect("checked in forward");
                let n = self.value(*b).dims2().expect("checked in forward").1;
                if self.nodes[a.0].needs_grad {
                    let da = gemm(gd, self.value(*b).data(), m, n, k, false, true);
                    self.accumulate(grads, *a, &da);
                }
                if self.nodes[b.0].needs_grad {
                    let db = gemm(self.value(*a).data(), gd, k, m, n, true, false);
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gd);
                self.accumulate(grads, *b, gd);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let da: Vec<f64> = gd.iter().zip(bv).map(|(g, y)| g * y).collect();
                let db: Vec<f64> = gd.iter().zip(av).map(|(g, x)| g * x).collect();
                self.accumulate(grads, *a, &da);
                self.accumulate(grads, *b, &db);
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, gd);
                let h = self.value(*row).numel();
                let mut dr = vec![0.0; h];
                for (i, v) in gd.iter().enumerate() {
                    dr[i % h] += v;
                }
                self.accumulate(grads, *row, &dr);
            }
            Op::MulRow(x, row) => {
                let r = self.value(*row).data();
                let h = r.len();
                let dx: Vec<f64> = gd.iter().enumerate().map(|(i, v)| v * r[i % h]).collect();
                self.accumulate(grads, *x, &dx);
                let xs = self.value(*x).data();
                let mut dr = vec![0.0; h];
                for (i, (v, xv)) in gd.iter().zip(xs).enumerate() {
                    dr[i % h] += v * xv;
                }
                self.accumulate(grads, *row, &dr);
            }
            Op::Scale(x, c) => {
                let dx: Vec<f64> = gd.iter().map(|v| v * c).collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::AddScalar(x) => self.accumulate(grads, *x, gd),
            Op::ScaleRows(x, coeffs) => {
                let h = out.shape()[1].max(1);
                let dx: Vec<f64> = gd
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * coeffs[i / h])
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Relu(x) => {
                let xs = self.value(*x).data();
                let dx: Vec<f64> = gd
                    .iter()
                    .zip(xs)
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Sigmoid(x) => {
                let dx: Vec<f64> = gd
                    .iter()
                    .zip(out.data())
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Gather(x, idx) => {
                if self.nodes[x.0].needs_grad {
                    let src = self.value(*x);
                    let h = src.shape()[1];
                    let mut dx = vec![0.0; src.numel()];
                    for (r, &i) in idx.iter().enumerate() {
                        for (d, v) in dx[i * h..(i + 1) * h]
                            .iter_mut()
                            .zip(&gd[r * h..(r + 1) * h])
                        {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *x, &dx);
                }
            }
            Op::SegmentSum(x, ids) | Op::SegmentMean(x, ids, _) => {
                if self.nodes[x.0].needs_grad {
                    let h = out.shape()[1];
                    let weights = match op {
                        Op::SegmentMean(_, _, w) => Some(w),
                        _ => None,
                    };
                    let mut dx = Vec::with_capacity(ids.len() * h);
                    for &s in ids {
                        let w = weights.map_or(1.0, |w| w[s]);
                        dx.extend(gd[s * h..(s + 1) * h].iter().map(|v| v * w));
                    }
                    self.accumulate(grads, *x, &dx);
                }
            }
            Op::Sum(x) => {
                let dx = vec![gd[0]; self.value(*x).numel()];
                self.accumulate(grads, *x, &dx);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let h = inv_std.len();
                let n = gd.len() / h;
                let gm = self.value(*gamma).data();
                let mut dbeta = vec![0.0; h];
                let mut dgamma = vec![0.0; h];
                for (i, (v, z)) in gd.iter().zip(xhat).enumerate() {
                    dbeta[i % h] += v;
                    dgamma[i % h] += v * z;
                }
                if self.nodes[x.0].needs_grad {
                    let dx: Vec<f64> = if *batch_stats {
                        let nf = n as f64;
                        gd.iter()
                            .zip(xhat)
                            .enumerate()
                            .map(|(i, (v, z))| {
                                let j = i % h;
                                gm[j] * inv_std[j] / nf * (nf * v - dbeta[j] - z * dgamma[j])
                            })
                            .collect()
                    } else {
                        gd.iter()
                            .enumerate()
                            .map(|(i, v)| v * gm[i % h] * inv_std[i % h])
                            .collect()
                    };
                    self.accumulate(grads, *x, &dx);
                }
                self.accumulate(grads, *gamma, &dgamma);
                self.accumulate(grads, *beta, &dbeta);
            }
            Op::Dropout(x, mask) => {
                let dx: Vec<f64> = gd.iter().zip(mask).map(|(g, m)| g * m).collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::BceMasked {
                logits,
                targets,
                mask,
                denom,
            } => {
                let z = self.value(*logits).data();
                let dz: Vec<f64> = if *denom > 0.0 {
                    z.iter()
                        .zip(targets)
                        .zip(mask)
                        .map(|((&z, &y), &m)| gd[0] * m * (stable_sigmoid(z) - y) / denom)
                        .collect()
                } else {
                    vec![0.0; z.len()]
                };
                self.accumulate(grads, *logits, &dz);
            }
        }
    }
}
