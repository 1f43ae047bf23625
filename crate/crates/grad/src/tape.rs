// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use crate::{GradError, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Gelu(Var),
    LeakyRelu(Var, f64),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    SoftmaxRows(Var),
    GatherRows(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<[usize]>),
    SegmentMax {
        x: Var,
        argmax: Vec<usize>,
    },
    SegmentSoftmax(Var, Arc<[usize]>),
    HeadDot {
        z: Var,
        a: Var,
        heads: usize,
    },
    HeadScale {
        x: Var,
        alpha: Var,
        heads: usize,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        ranges: Arc<[(usize, usize)]>,
        heads: usize,
        probs: Vec<f64>,
    },
    Sum(Var),
    MaskedMse {
        pred: Var,
        diff: Vec<f64>,
        scale: f64,
    },
}

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Record of primitive operations for one forward pass.
///
/// A tape supports exactly one [`backward`](Tape::backward) call; build a
/// fresh tape for each forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Accumulated gradients of every `requires_grad` leaf, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of length `len` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; len],
        }
    }
}

fn shape_err(op: &'static str, detail: String) -> GradError {
    GradError::Shape { op, detail }
}

/// C = beta*C + op(A) * op(B), with op(A) m x k and op(B) k x n.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_trans: bool, b: &[f64], b_trans: bool, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    // op(A) is m x k; stored A is m x k (row stride k) or k x m (row stride m).
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths checked above cover every strided access.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
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

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        // Nothing downstream can ask for gradients through this node, so the
        // saved state is dropped right away.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(shape_err(
                "constant",
                format!("{}x{} needs {} values, got {}", rows, cols, rows * cols, data.len()),
            ));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::from_vec(vec![n.rows, n.cols], n.value.clone()).expect("node shape")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{}x{} * {}x{}", m, k, k2, n)));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(m, n, out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(shape_err(op, format!("{:?} vs {:?}", sa, sb)));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("sub", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Mul(a, b), rg))
    }

    /// Adds a single row `b` (shape 1 x c) to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let (br, bc) = self.shape(b);
        if br * bc != c {
            return Err(shape_err("add_row", format!("{}x{} + row of {}", r, c, br * bc)));
        }
        let bv = self.value(b);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(c.max(1)) {
            for (o, x) in row.iter_mut().zip(bv) {
                *o += x;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::AddRow(a, b), rg))
    }

    /// Affine map `x * w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * s).collect();
        let rg = self.rg(a);
        self.push(r, c, out, Op::Scale(a, s), rg)
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat", "no inputs".into()));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(shape_err("concat", format!("row counts {} vs {}", rows, r)));
            }
            cols += c;
        }
        let mut out = vec![0.0; rows * cols];
        let mut off = 0;
        for &p in parts {
            let c = self.shape(p).1;
            let v = self.value(p);
            for i in 0..rows {
                out[i * cols + off..i * cols + off + c].copy_from_slice(&v[i * c..(i + 1) * c]);
            }
            off += c;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(rows, cols, out, Op::Concat(parts.to_vec()), rg))
    }

    /// GELU (tanh approximation).
    pub fn gelu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| gelu(x)).collect();
        let rg = self.rg(a);
        self.push(r, c, out, Op::Gelu(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .map(|&x| if x > 0.0 { x } else { slope * x })
            .collect();
        let rg = self.rg(a);
        self.push(r, c, out, Op::LeakyRelu(a, slope), rg)
    }

    /// Per-row normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let gl = self.shape(gamma);
        let bl = self.shape(beta);
        if gl.0 * gl.1 != c || bl.0 * bl.1 != c {
            return Err(shape_err(
                "layer_norm",
                format!("width {} vs gain {:?} bias {:?}", c, gl, bl),
            ));
        }
        let xv = self.value(x);
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut xhat = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            r,
            c,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(c.max(1)) {
            softmax_in_place(row);
        }
        let rg = self.rg(a);
        self.push(r, c, out, Op::SoftmaxRows(a), rg)
    }

    /// Row `i` of the output is row `idx[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &Arc<[usize]>) -> Result<Var> {
        let (r, c) = self.shape(a);
        let v = self.value(a);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            if i >= r {
                return Err(GradError::Index {
                    op: "gather_rows",
                    index: i,
                    len: r,
                });
            }
            out.extend_from_slice(&v[i * c..(i + 1) * c]);
        }
        let rg = self.rg(a);
        Ok(self.push(idx.len(), c, out, Op::GatherRows(a, idx.clone()), rg))
    }

    fn check_segments(&self, op: &'static str, a: Var, seg: &[usize], n: usize) -> Result<(usize, usize)> {
        let (r, c) = self.shape(a);
        if seg.len() != r {
            return Err(shape_err(op, format!("{} rows but {} segment ids", r, seg.len())));
        }
        if let Some(&bad) = seg.iter().find(|&&s| s >= n) {
            return Err(GradError::Index { op, index: bad, len: n });
        }
        Ok((r, c))
    }

    /// Sums rows of `a` into `n` buckets keyed by `seg`.
    pub fn segment_sum(&mut self, a: Var, seg: &Arc<[usize]>, n: usize) -> Result<Var> {
        let (_, c) = self.check_segments("segment_sum", a, seg, n)?;
        let v = self.value(a);
        let mut out = vec![0.0; n * c];
        for (e, &s) in seg.iter().enumerate() {
            let dst = &mut out[s * c..(s + 1) * c];
            for (o, x) in dst.iter_mut().zip(&v[e * c..(e + 1) * c]) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(n, c, out, Op::SegmentSum(a, seg.clone()), rg))
    }

    /// Column-wise maximum of rows per bucket; empty buckets yield 0.
    pub fn segment_max(&mut self, a: Var, seg: &Arc<[usize]>, n: usize) -> Result<Var> {
        let (_, c) = self.check_segments("segment_max", a, seg, n)?;
        let v = self.value(a);
        let mut out = vec![f64::NEG_INFINITY; n * c];
        let mut argmax = vec![usize::MAX; n * c];
        for (e, &s) in seg.iter().enumerate() {
            for j in 0..c {
                let x = v[e * c + j];
                if x > out[s * c + j] {
                    out[s * c + j] = x;
                    argmax[s * c + j] = e;
                }
            }
        }
        for (o, a) in out.iter_mut().zip(&argmax) {
            if *a == usize::MAX {
                *o = 0.0;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(n, c, out, Op::SegmentMax { x: a, argmax }, rg))
    }

    /// Softmax over the rows sharing a bucket, independently per column.
    pub fn segment_softmax(&mut self, a: Var, seg: &Arc<[usize]>, n: usize) -> Result<Var> {
        let (r, c) = self.check_segments("segment_softmax", a, seg, n)?;
        let v = self.value(a);
        let mut mx = vec![f64::NEG_INFINITY; n * c];
        for (e, &s) in seg.iter().enumerate() {
            for j in 0..c {
                mx[s * c + j] = mx[s * c + j].max(v[e * c + j]);
            }
        }
        let mut out = vec![0.0; r * c];
        let mut denom = vec![0.0; n * c];
        for (e, &s) in seg.iter().enumerate() {
            for j in 0..c {
                let ex = (v[e * c + j] - mx[s * c + j]).exp();
                out[e * c + j] = ex;
                denom[s * c + j] += ex;
            }
        }
        for (e, &s) in seg.iter().enumerate() {
            for j in 0..c {
                out[e * c + j] /= denom[s * c + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(r, c, out, Op::SegmentSoftmax(a, seg.clone()), rg))
    }

    /// Per-head inner product: `z` is `E x (heads*C)`, `a` holds `heads*C`
    /// weights, and the output is `E x heads`.
    pub fn head_dot(&mut self, z: Var, a: Var, heads: usize) -> Result<Var> {
        let (e, hc) = self.shape(z);
        let (ar, ac) = self.shape(a);
        if heads == 0 || hc % heads != 0 || ar * ac != hc {
            return Err(shape_err(
                "head_dot",
                format!("{}x{} with {} weights over {} heads", e, hc, ar * ac, heads),
            ));
        }
        let ch = hc / heads;
        let zv = self.value(z);
        let av = self.value(a);
        let mut out = vec![0.0; e * heads];
        for i in 0..e {
            for h in 0..heads {
                let base = i * hc + h * ch;
                out[i * heads + h] = (0..ch).map(|k| zv[base + k] * av[h * ch + k]).sum();
            }
        }
        let rg = self.rg(z) || self.rg(a);
        Ok(self.push(e, heads, out, Op::HeadDot { z, a, heads }, rg))
    }

    /// Scales each head's channel block of `x` (`E x heads*C`) by `alpha` (`E x heads`).
    pub fn head_scale(&mut self, x: Var, alpha: Var) -> Result<Var> {
        let (e, hc) = self.shape(x);
        let (ea, heads) = self.shape(alpha);
        if ea != e || heads == 0 || hc % heads != 0 {
            return Err(shape_err("head_scale", format!("{}x{} by {}x{}", e, hc, ea, heads)));
        }
        let ch = hc / heads;
        let xv = self.value(x);
        let al = self.value(alpha);
        let mut out = vec![0.0; e * hc];
        for i in 0..e {
            for h in 0..heads {
                let s = al[i * heads + h];
                for k in 0..ch {
                    out[i * hc + h * ch + k] = xv[i * hc + h * ch + k] * s;
                }
            }
        }
        let rg = self.rg(x) || self.rg(alpha);
        Ok(self.push(e, hc, out, Op::HeadScale { x, alpha, heads }, rg))
    }

    /// Multi-head scaled dot-product attention, dense within each row range
    /// and masked across ranges (block-diagonal).
    pub fn segment_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        ranges: &Arc<[(usize, usize)]>,
        heads: usize,
    ) -> Result<Var> {
        let (n, hc) = self.same_shape("segment_attention", q, k)?;
        self.same_shape("segment_attention", q, v)?;
        if heads == 0 || hc % heads != 0 {
            return Err(shape_err(
                "segment_attention",
                format!("width {} over {} heads", hc, heads),
            ));
        }
        let mut covered = 0;
        for &(s, e) in ranges.iter() {
            if s != covered || e < s || e > n {
                return Err(shape_err(
                    "segment_attention",
                    format!("ranges must tile 0..{} contiguously, got ({}, {})", n, s, e),
                ));
            }
            covered = e;
        }
        if covered != n {
            return Err(shape_err(
                "segment_attention",
                format!("ranges cover {} of {} rows", covered, n),
            ));
        }
        let ch = hc / heads;
        let inv = 1.0 / (ch as f64).sqrt();
        let qv = self.value(q);
        let kv = self.value(k);
        let vv = self.value(v);
        let mut out = vec![0.0; n * hc];
        let mut probs = Vec::with_capacity(ranges.iter().map(|(s, e)| (e - s) * (e - s)).sum::<usize>() * heads);
        for &(s, e) in ranges.iter() {
            let m = e - s;
            for h in 0..heads {
                let off = probs.len();
                probs.resize(off + m * m, 0.0);
                let p = &mut probs[off..];
                for i in 0..m {
                    let qi = &qv[(s + i) * hc + h * ch..(s + i) * hc + (h + 1) * ch];
                    let row = &mut p[i * m..(i + 1) * m];
                    for j in 0..m {
                        let kj = &kv[(s + j) * hc + h * ch..(s + j) * hc + (h + 1) * ch];
                        row[j] = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * inv;
                    }
                    softmax_in_place(row);
                    let o = &mut out[(s + i) * hc + h * ch..(s + i) * hc + (h + 1) * ch];
                    for j in 0..m {
                        let w = row[j];
                        let vj = &vv[(s + j) * hc + h * ch..(s + j) * hc + (h + 1) * ch];
                        for (ok, vk) in o.iter_mut().zip(vj) {
                            *ok += w * vk;
                        }
                    }
                }
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(
            n,
            hc,
            out,
            Op::Attention {
                q,
                k,
                v,
                ranges: ranges.clone(),
                heads,
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(1, 1, vec![s], Op::Sum(a), rg)
    }

    /// Mean over selected rows of the squared row error against `target`.
    ///
    /// `rows` lists which rows count; `None` uses every row. A prediction
    /// with zero selected rows yields a zero loss.
    pub fn masked_mse(&mut self, pred: Var, target: &[f64], rows: Option<&[bool]>) -> Result<Var> {
        let (r, c) = self.shape(pred);
        if target.len() != r * c {
            return Err(shape_err(
                "masked_mse",
                format!("{}x{} vs {} targets", r, c, target.len()),
            ));
        }
        if let Some(m) = rows {
            if m.len() != r {
                return Err(shape_err("masked_mse", format!("{} rows vs mask of {}", r, m.len())));
            }
        }
        let p = self.value(pred);
        let mut diff = vec![0.0; r * c];
        let mut count = 0usize;
        let mut total = 0.0;
        for i in 0..r {
            if rows.is_some_and(|m| !m[i]) {
                continue;
            }
            count += 1;
            for j in 0..c {
                let d = p[i * c + j] - target[i * c + j];
                diff[i * c + j] = d;
                total += d * d;
            }
        }
        let scale = if count == 0 { 0.0 } else { 1.0 / count as f64 };
        let rg = self.rg(pred);
        Ok(self.push(1, 1, vec![total * scale], Op::MaskedMse { pred, diff, scale }, rg))
    }

    /// Runs the reverse pass from a scalar `loss`, consuming the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(GradError::TapeConsumed);
        }
        let (r, c) = self.shape(loss);
        if r * c != 1 {
            return Err(GradError::NonScalarLoss { rows: r, cols: c });
        }
        let lv = self.value(loss)[0];
        if !lv.is_finite() {
            return Err(GradError::NonFiniteLoss(lv));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
        }
        // Only leaves keep their gradients.
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) || !n.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let (rows, cols) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = cols;
                if self.rg(*a) {
                    let ga = accumulate(&mut grads[a.0], m * k);
                    gemm(m, n, k, g, false, self.value(*b), true, 1.0, ga);
                }
                if self.rg(*b) {
                    let gb = accumulate(&mut grads[b.0], k * n);
                    gemm(k, m, n, self.value(*a), true, g, false, 1.0, gb);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.rg(v) {
                        let gv = accumulate(&mut grads[v.0], g.len());
                        gv.iter_mut().zip(g).for_each(|(o, x)| *o += x);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    let gv = accumulate(&mut grads[a.0], g.len());
                    gv.iter_mut().zip(g).for_each(|(o, x)| *o += x);
                }
                if self.rg(*b) {
                    let gv = accumulate(&mut grads[b.0], g.len());
                    gv.iter_mut().zip(g).for_each(|(o, x)| *o -= x);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let bv = self.value(*b);
                    let gv = accumulate(&mut grads[a.0], g.len());
                    for i in 0..g.len() {
                        gv[i] += g[i] * bv[i];
                    }
                }
                if self.rg(*b) {
                    let av = self.value(*a);
                    let gv = accumulate(&mut grads[b.0], g.len());
                    for i in 0..g.len() {
                        gv[i] += g[i] * av[i];
                    }
                }
            }
            Op::AddRow(a, b) => {
                if self.rg(*a) {
                    let gv = accumulate(&mut grads[a.0], g.len());
                    gv.iter_mut().zip(g).for_each(|(o, x)| *o += x);
                }
                if self.rg(*b) {
                    let gb = accumulate(&mut grads[b.0], cols);
                    for row in g.chunks(cols.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(o, x)| *o += x);
                    }
                }
            }
            Op::Scale(a, s) => {
                if self.rg(*a) {
                    let gv = accumulate(&mut grads[a.0], g.len());
                    gv.iter_mut().zip(g).for_each(|(o, x)| *o += x * s);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    if self.rg(p) {
                        let gp = accumulate(&mut grads[p.0], rows * c);
                        for i in 0..rows {
                            for j in 0..c {
                                gp[i * c + j] += g[i * cols + off + j];
                            }
                        }
                    }
                    off += c;
                }
            }
            Op::Gelu(a) => {
                let av = self.value(*a);
                let gv = accumulate(&mut grads[a.0], g.len());
                for i in 0..g.len() {
                    gv[i] += g[i] * gelu_grad(av[i]);
                }
            }
            Op::LeakyRelu(a, slope) => {
                let av = self.value(*a);
                let gv = accumulate(&mut grads[a.0], g.len());
                for i in 0..g.len() {
                    gv[i] += if av[i] > 0.0 { g[i] } else { g[i] * slope };
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let gam = self.value(*gamma);
                if self.rg(*gamma) {
                    let gg = accumulate(&mut grads[gamma.0], cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            gg[j] += g[i * cols + j] * xhat[i * cols + j];
                        }
                    }
                }
                if self.rg(*beta) {
                    let gb = accumulate(&mut grads[beta.0], cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            gb[j] += g[i * cols + j];
                        }
                    }
                }
                if self.rg(*x) {
                    let gx = accumulate(&mut grads[x.0], rows * cols);
                    let inv_c = 1.0 / cols as f64;
                    for i in 0..rows {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..cols {
                            let d = g[i * cols + j] * gam[j];
                            mean_d += d;
                            mean_dx += d * xhat[i * cols + j];
                        }
                        mean_d *= inv_c;
                        mean_dx *= inv_c;
                        for j in 0..cols {
                            let d = g[i * cols + j] * gam[j];
                            gx[i * cols + j] += rstd[i] * (d - mean_d - xhat[i * cols + j] * mean_dx);
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let gv = accumulate(&mut grads[a.0], g.len());
                for i in 0..rows {
                    let r = i * cols..(i + 1) * cols;
                    let dot: f64 = g[r.clone()].iter().zip(&y[r.clone()]).map(|(a, b)| a * b).sum();
                    for j in r {
                        gv[j] += y[j] * (g[j] - dot);
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                let n = self.shape(*a).0;
                let gv = accumulate(&mut grads[a.0], n * cols);
                for (e, &i) in idx.iter().enumerate() {
                    for j in 0..cols {
                        gv[i * cols + j] += g[e * cols + j];
                    }
                }
            }
            Op::SegmentSum(a, seg) => {
                let gv = accumulate(&mut grads[a.0], seg.len() * cols);
                for (e, &s) in seg.iter().enumerate() {
                    for j in 0..cols {
                        gv[e * cols + j] += g[s * cols + j];
                    }
                }
            }
            Op::SegmentMax { x, argmax } => {
                let (r, _) = self.shape(*x);
                let gv = accumulate(&mut grads[x.0], r * cols);
                for (slot, &e) in argmax.iter().enumerate() {
                    if e != usize::MAX {
                        let j = slot % cols;
                        gv[e * cols + j] += g[slot];
                    }
                }
            }
            Op::SegmentSoftmax(a, seg) => {
                let y = &node.value;
                let n = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dots = vec![0.0; n * cols];
                for (e, &s) in seg.iter().enumerate() {
                    for j in 0..cols {
                        dots[s * cols + j] += g[e * cols + j] * y[e * cols + j];
                    }
                }
                let gv = accumulate(&mut grads[a.0], rows * cols);
                for (e, &s) in seg.iter().enumerate() {
                    for j in 0..cols {
                        let k = e * cols + j;
                        gv[k] += y[k] * (g[k] - dots[s * cols + j]);
                    }
                }
            }
            Op::HeadDot { z, a, heads } => {
                let (e, hc) = self.shape(*z);
                let ch = hc / heads;
                if self.rg(*z) {
                    let av = self.value(*a);
                    let gz = accumulate(&mut grads[z.0], e * hc);
                    for i in 0..e {
                        for h in 0..*heads {
                            let gi = g[i * heads + h];
                            for k in 0..ch {
                                gz[i * hc + h * ch + k] += gi * av[h * ch + k];
                            }
                        }
                    }
                }
                if self.rg(*a) {
                    let zv = self.value(*z);
                    let ga = accumulate(&mut grads[a.0], hc);
                    for i in 0..e {
                        for h in 0..*heads {
                            let gi = g[i * heads + h];
                            for k in 0..ch {
                                ga[h * ch + k] += gi * zv[i * hc + h * ch + k];
                            }
                        }
                    }
                }
            }
            Op::HeadScale { x, alpha, heads } => {
                let ch = cols / heads;
                if self.rg(*x) {
                    let al = self.value(*alpha);
                    let gx = accumulate(&mut grads[x.0], rows * cols);
                    for i in 0..rows {
                        for h in 0..*heads {
                            let s = al[i * heads + h];
                            for k in 0..ch {
                                gx[i * cols + h * ch + k] += g[i * cols + h * ch + k] * s;
                            }
                        }
                    }
                }
                if self.rg(*alpha) {
                    let xv = self.value(*x);
                    let ga = accumulate(&mut grads[alpha.0], rows * heads);
                    for i in 0..rows {
                        for h in 0..*heads {
                            let base = i * cols + h * ch;
                            ga[i * heads + h] += (0..ch).map(|k| g[base + k] * xv[base + k]).sum::<f64>();
                        }
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                ranges,
                heads,
                probs,
            } => {
                let hc = cols;
                let ch = hc / heads;
                let inv = 1.0 / (ch as f64).sqrt();
                let qv = self.value(*q);
                let kv = self.value(*k);
                let vv = self.value(*v);
                let mut gq = vec![0.0; rows * hc];
                let mut gk = vec![0.0; rows * hc];
                let mut gvv = vec![0.0; rows * hc];
                let mut off = 0;
                let mut ds = Vec::new();
                for &(s, e) in ranges.iter() {
                    let m = e - s;
                    for h in 0..*heads {
                        let p = &probs[off..off + m * m];
                        off += m * m;
                        ds.clear();
                        ds.resize(m * m, 0.0);
                        for i in 0..m {
                            let go = &g[(s + i) * hc + h * ch..(s + i) * hc + (h + 1) * ch];
                            // dP_ij = dO_i . V_j ; dV_j += P_ij dO_i
                            let mut dot = 0.0;
                            for j in 0..m {
                                let vj = &vv[(s + j) * hc + h * ch..(s + j) * hc + (h + 1) * ch];
                                let dp: f64 = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                                ds[i * m + j] = dp;
                                dot += dp * p[i * m + j];
                                let w = p[i * m + j];
                                let gvj = &mut gvv[(s + j) * hc + h * ch..(s + j) * hc + (h + 1) * ch];
                                for (o, x) in gvj.iter_mut().zip(go) {
                                    *o += w * x;
                                }
                            }
                            for j in 0..m {
                                ds[i * m + j] = p[i * m + j] * (ds[i * m + j] - dot) * inv;
                            }
                        }
                        for i in 0..m {
                            for j in 0..m {
                                let d = ds[i * m + j];
                                if d == 0.0 {
                                    continue;
                                }
                                for c in 0..ch {
                                    gq[(s + i) * hc + h * ch + c] += d * kv[(s + j) * hc + h * ch + c];
                                    gk[(s + j) * hc + h * ch + c] += d * qv[(s + i) * hc + h * ch + c];
                                }
                            }
                        }
                    }
                }
                for (var, gl) in [(*q, gq), (*k, gk), (*v, gvv)] {
                    if self.rg(var) {
                        let slot = accumulate(&mut grads[var.0], rows * hc);
                        slot.iter_mut().zip(&gl).for_each(|(o, x)| *o += x);
                    }
                }
            }
            Op::Sum(a) => {
                let n = {
                    let (r, c) = self.shape(*a);
                    r * c
                };
                let gv = accumulate(&mut grads[a.0], n);
                gv.iter_mut().for_each(|o| *o += g[0]);
            }
            Op::MaskedMse { pred, diff, scale } => {
                let gv = accumulate(&mut grads[pred.0], diff.len());
                let f = 2.0 * scale * g[0];
                gv.iter_mut().zip(diff).for_each(|(o, d)| *o += f * d);
            }
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = (*x - mx).exp();
        s += *x;
    }
    for x in row.iter_mut() {
        *x /= s;
    }
}
