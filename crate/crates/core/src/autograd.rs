//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its materialized output. Nodes are
//! only ever appended, so the tape is topologically ordered by construction
//! and `backward` is a single reverse sweep.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::{check_permutation, inverse_permutation, permute_data, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Deliberate adjoint corruption, used to prove the gradient checker can fail.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    MatmulAdjoint,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        a_batched: bool,
        b_batched: bool,
    },
    Add(Var, Var),
    Mul(Var, Var),
    AddBias { x: Var, bias: Var },
    Scale { x: Var, c: T },
    Relu(Var),
    Dropout { x: Var, mask: Vec<T> },
    Softmax(Var),
    Permute { x: Var, axes: Vec<usize> },
    Reshape(Var),
    Conv3d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Sum(Var),
    MeanTrailing { x: Var, inner: usize },
    Concat { parts: Vec<(Var, usize)> },
    Bce { z: Var, labels: Vec<T> },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Record of executed operations. One tape per forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    fault: Option<Fault>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. It receives a gradient iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs_grad)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.set_requires_grad(false);
        tensor.zero_grad();
        self.push(tensor, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn derived(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        let needs = self.needs(inputs);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, op, needs))
    }

    /// Matrix product over the last two axes. Leading axes are batch axes; a
    /// rank-2 operand is broadcast across the other operand's batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::dim(format!("matmul needs rank >= 2 operands, got {sa:?} and {sb:?}")));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let lead_a = &sa[..sa.len() - 2];
        let lead_b = &sb[..sb.len() - 2];
        let a_batched = !lead_a.is_empty();
        let b_batched = !lead_b.is_empty();
        if k != k2 || (a_batched && b_batched && lead_a != lead_b) {
            return Err(Error::dim(format!("matmul shape mismatch: {sa:?} x {sb:?}")));
        }
        let lead = if a_batched { lead_a } else { lead_b };
        let batch: usize = lead.iter().product();
        let mut out = vec![T::zero(); batch * m * n];
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            for i in 0..batch {
                let ap = if a_batched { &av[i * m * k..(i + 1) * m * k] } else { av };
                let bp = if b_batched { &bv[i * k * n..(i + 1) * k * n] } else { bv };
                kernels::gemm_nn(ap, bp, &mut out[i * m * n..(i + 1) * m * n], m, k, n);
            }
        }
        let mut shape = lead.to_vec();
        shape.extend([m, n]);
        self.derived(
            shape,
            out,
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                a_batched,
                b_batched,
            },
            &[a, b],
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(format!("add shape mismatch: {sa:?} vs {sb:?}")));
        }
        let shape = sa.to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        self.derived(shape, data, Op::Add(a, b), &[a, b])
    }

    /// Sums any number of same-shaped tensors.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let (&first, rest) = vars
            .split_first()
            .ok_or_else(|| Error::Usage("add_all of an empty list".into()))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(format!("mul shape mismatch: {sa:?} vs {sb:?}")));
        }
        let shape = sa.to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        self.derived(shape, data, Op::Mul(a, b), &[a, b])
    }

    /// Adds a vector along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sb = self.shape(bias);
        let last = *sx.last().ok_or_else(|| Error::dim("add_bias on rank-0 tensor"))?;
        if sb != [last] {
            return Err(Error::dim(format!("bias of shape {sb:?} cannot broadcast over {sx:?}")));
        }
        let bv = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks_exact(last)
            .flat_map(|row| row.iter().zip(bv).map(|(&a, &b)| a + b))
            .collect();
        self.derived(sx, data, Op::AddBias { x, bias }, &[x, bias])
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let data = self.value(x).data().iter().map(|&v| v * c).collect();
        self.derived(shape, data, Op::Scale { x, c }, &[x])
    }

    /// `x·W + b` with `x: [n, f_in]`, `W: [f_in, f_out]`, `b: [f_out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] || sb != [sw[1]] {
            return Err(Error::dim(format!(
                "affine shape mismatch: x {sx:?}, W {sw:?}, b {sb:?}"
            )));
        }
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        self.derived(shape, data, Op::Relu(x), &[x])
    }

    /// Inverted dropout: survivors are scaled by `1/(1-p)`, eval mode is identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let n = self.value(x).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let shape = self.shape(x).to_vec();
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        self.derived(shape, data, Op::Dropout { x, mask }, &[x])
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let cols = *shape.last().ok_or_else(|| Error::dim("softmax of rank-0 tensor"))?;
        let data = kernels::softmax_rows(self.value(x).data(), cols);
        self.derived(shape, data, Op::Softmax(x), &[x])
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_permutation(axes, shape.len())?;
        let (out_shape, data) = permute_data(&shape, self.value(x).data(), axes);
        self.derived(
            out_shape,
            data,
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
            &[x],
        )
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let r = self.shape(x).len();
        if r < 2 {
            return Err(Error::dim("transpose needs rank >= 2"));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(x, &axes)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).numel() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(x)
            )));
        }
        let data = self.value(x).data().to_vec();
        self.derived(shape.to_vec(), data, Op::Reshape(x), &[x])
    }

    /// 3D cross-correlation. `x: [B, C_in, D, H, W]`, `w: [C_out, C_in, kd, kh, kw]`,
    /// optional `bias: [C_out]`, symmetric zero padding per axis.
    pub fn conv3d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: [usize; 3]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 5 || sw.len() != 5 {
            return Err(Error::dim(format!("conv3d expects 5-d input and weights, got {sx:?} and {sw:?}")));
        }
        if sx[1] != sw[1] {
            return Err(Error::dim(format!(
                "conv3d channel mismatch: input {sx:?} has {} channels, weights {sw:?} expect {}",
                sx[1], sw[1]
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [sw[0]] {
                return Err(Error::dim(format!("conv3d bias {:?} for {} output channels", self.shape(b), sw[0])));
            }
        }
        let mut output = [0; 3];
        for ax in 0..3 {
            output[ax] = ConvGeom::output_extent(sx[2 + ax], sw[2 + ax], stride, pad[ax]).ok_or_else(|| {
                Error::dim(format!("conv3d kernel {sw:?} does not fit input {sx:?} with padding {pad:?}"))
            })?;
        }
        let geom = ConvGeom {
            batch: sx[0],
            c_in: sx[1],
            c_out: sw[0],
            input: [sx[2], sx[3], sx[4]],
            kernel: [sw[2], sw[3], sw[4]],
            stride,
            pad,
            output,
        };
        let data = kernels::conv3d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            bias.map(|b| self.value(b).data()),
        );
        let shape = vec![geom.batch, geom.c_out, output[0], output[1], output[2]];
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        self.derived(shape, data, Op::Conv3d { x, w, b: bias, geom }, &inputs)
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.derived(vec![1], vec![s], Op::Sum(x), &[x])
    }

    /// Mean over every axis after the first `keep` axes.
    pub fn mean_trailing(&mut self, x: Var, keep: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if keep == 0 || keep >= shape.len() {
            return Err(Error::dim(format!("cannot average trailing axes of {shape:?} keeping {keep}")));
        }
        let inner: usize = shape[keep..].iter().product();
        let inv = T::lit(1.0 / inner as f64);
        let data = self
            .value(x)
            .data()
            .chunks_exact(inner)
            .map(|c| c.iter().copied().sum::<T>() * inv)
            .collect();
        self.derived(shape[..keep].to_vec(), data, Op::MeanTrailing { x, inner }, &[x])
    }

    /// Concatenation along the last axis; all leading extents must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::Usage("concat of nothing".into()))?)
            .to_vec();
        let lead = &first[..first.len() - 1];
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(Error::dim(format!("concat shape mismatch: {first:?} vs {s:?}")));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let op = Op::Concat {
            parts: parts.iter().copied().zip(widths).collect(),
        };
        self.derived(shape, data, op, parts)
    }

    /// Mean binary cross-entropy on logits, in the overflow-safe form
    /// `max(z,0) − z·y + ln(1 + e^{−|z|})`.
    pub fn bce_with_logits(&mut self, z: Var, labels: &[T]) -> Result<Var> {
        let n = self.value(z).numel();
        if labels.len() != n {
            return Err(Error::dim(format!("{n} logits but {} labels", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != T::zero() && y != T::one()) {
            return Err(Error::Data(format!("non-binary label {bad}")));
        }
        let total: T = self
            .value(z)
            .data()
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let loss = total / T::lit(n as f64);
        self.derived(
            vec![1],
            vec![loss],
            Op::Bce {
                z,
                labels: labels.to_vec(),
            },
            &[z],
        )
    }

    /// Accumulates `∂loss/∂leaf` into every leaf that requires a gradient.
    /// Calling it again without resetting adds a second copy.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&g)?;
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let wants = |v: &Var| nodes[v.0].needs_grad;
        let val = |v: &Var| nodes[v.0].value.data();
        // adds `d` into the adjoint buffer of `v`
        fn acc<T: Scalar>(adj: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
            adj[v.0].get_or_insert_with(|| vec![T::zero(); len])
        }
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                a_batched,
                b_batched,
            } => {
                let (m, k, n) = (*m, *k, *n);
                if wants(a) {
                    let bv = val(b);
                    let ga = acc(adj, *a, nodes[a.0].value.numel());
                    for t in 0..*batch {
                        let bp = if *b_batched { &bv[t * k * n..(t + 1) * k * n] } else { bv };
                        let gp = &g[t * m * n..(t + 1) * m * n];
                        let gap = if *a_batched { &mut ga[t * m * k..(t + 1) * m * k] } else { &mut ga[..] };
                        // dA = dC · Bᵀ
                        kernels::gemm_nt(gp, bp, gap, m, n, k);
                    }
                    if self.fault == Some(Fault::MatmulAdjoint) {
                        ga.iter_mut().for_each(|v| *v = *v * T::lit(1.5));
                    }
                }
                if wants(b) {
                    let av = val(a);
                    let gb = acc(adj, *b, nodes[b.0].value.numel());
                    for t in 0..*batch {
                        let ap = if *a_batched { &av[t * m * k..(t + 1) * m * k] } else { av };
                        let gp = &g[t * m * n..(t + 1) * m * n];
                        let gbp = if *b_batched { &mut gb[t * k * n..(t + 1) * k * n] } else { &mut gb[..] };
                        // dB = Aᵀ · dC
                        kernels::gemm_tn(ap, gp, gbp, m, k, n);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if wants(v) {
                        let d = acc(adj, *v, g.len());
                        d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    if wants(v) {
                        let o = val(other);
                        let d = acc(adj, *v, g.len());
                        for ((d, &g), &o) in d.iter_mut().zip(g).zip(o) {
                            *d = *d + g * o;
                        }
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if wants(x) {
                    let d = acc(adj, *x, g.len());
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
                }
                if wants(bias) {
                    let w = nodes[bias.0].value.numel();
                    let d = acc(adj, *bias, w);
                    for row in g.chunks_exact(w) {
                        d.iter_mut().zip(row).for_each(|(d, &g)| *d = *d + g);
                    }
                }
            }
            Op::Scale { x, c } => {
                if wants(x) {
                    let d = acc(adj, *x, g.len());
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g * *c);
                }
            }
            Op::Relu(x) => {
                if wants(x) {
                    let xv = val(x);
                    let d = acc(adj, *x, g.len());
                    for ((d, &g), &v) in d.iter_mut().zip(g).zip(xv) {
                        if v > T::zero() {
                            *d = *d + g;
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if wants(x) {
                    let d = acc(adj, *x, g.len());
                    for ((d, &g), &m) in d.iter_mut().zip(g).zip(mask) {
                        *d = *d + g * m;
                    }
                }
            }
            Op::Softmax(x) => {
                if wants(x) {
                    let y = nodes[i].value.data();
                    let cols = *nodes[i].value.shape().last().unwrap();
                    let d = acc(adj, *x, g.len());
                    kernels::softmax_rows_backward(y, g, cols, d);
                }
            }
            Op::Permute { x, axes } => {
                if wants(x) {
                    let out_shape = nodes[i].value.shape();
                    let inv = inverse_permutation(axes);
                    let (_, back) = permute_data(out_shape, g, &inv);
                    let d = acc(adj, *x, g.len());
                    d.iter_mut().zip(&back).for_each(|(d, &g)| *d = *d + g);
                }
            }
            Op::Reshape(x) => {
                if wants(x) {
                    let d = acc(adj, *x, g.len());
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
                }
            }
            Op::Conv3d { x, w, b, geom } => {
                let xv = val(x);
                let wv = val(w);
                let mut gx = wants(x).then(|| vec![T::zero(); xv.len()]);
                let mut gw = wants(w).then(|| vec![T::zero(); wv.len()]);
                let mut gb = b.filter(|b| wants(b)).map(|_| vec![T::zero(); geom.c_out]);
                kernels::conv3d_backward(geom, xv, wv, g, gx.as_deref_mut(), gw.as_deref_mut(), gb.as_deref_mut());
                for (v, grad) in [(Some(*x), gx), (Some(*w), gw), (*b, gb)] {
                    if let (Some(v), Some(grad)) = (v, grad) {
                        let d = acc(adj, v, grad.len());
                        d.iter_mut().zip(&grad).for_each(|(d, &g)| *d = *d + g);
                    }
                }
            }
            Op::Sum(x) => {
                if wants(x) {
                    let n = nodes[x.0].value.numel();
                    let d = acc(adj, *x, n);
                    d.iter_mut().for_each(|d| *d = *d + g[0]);
                }
            }
            Op::MeanTrailing { x, inner } => {
                if wants(x) {
                    let n = nodes[x.0].value.numel();
                    let inv = T::lit(1.0 / *inner as f64);
                    let d = acc(adj, *x, n);
                    for (chunk, &gv) in d.chunks_exact_mut(*inner).zip(g) {
                        chunk.iter_mut().for_each(|d| *d = *d + gv * inv);
                    }
                }
            }
            Op::Concat { parts } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let rows = g.len() / total;
                let mut offset = 0;
                for (v, w) in parts {
                    if wants(v) {
                        let d = acc(adj, *v, rows * w);
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            d[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, &g)| *d = *d + g);
                        }
                    }
                    offset += w;
                }
            }
            Op::Bce { z, labels } => {
                if wants(z) {
                    let zv = val(z);
                    let inv_n = T::lit(1.0 / labels.len() as f64);
                    let d = acc(adj, *z, zv.len());
                    for ((d, &z), &y) in d.iter_mut().zip(zv).zip(labels) {
                        let s = T::one() / (T::one() + (-z).exp());
                        *d = *d + g[0] * (s - y) * inv_n;
                    }
                }
            }
        }
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
