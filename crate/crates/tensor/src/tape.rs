//! Recording tape for reverse-mode differentiation.
//!
//! Every forward op appends a node holding its output value. Nodes only ever
//! reference earlier nodes, so the tape is topologically sorted by construction
//! and `backward` is a single reverse sweep.

use crate::kernels;
use crate::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Border handling for convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1`.
    Valid,
    /// Zero padding so the output extent equals the input extent.
    Same,
}

impl Padding {
    pub(crate) fn output_len(self, input: usize, kernel: usize) -> Option<usize> {
        match self {
            Padding::Valid => input.checked_sub(kernel).map(|d| d + 1),
            Padding::Same => Some(input),
        }
    }

    pub(crate) fn leading_pad(self, kernel: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same => (kernel - 1) / 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }
}

impl std::str::FromStr for Padding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(format!("unknown padding '{other}'")),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Var },
    Tanh(Var),
    Sigmoid(Var),
    Conv2dSpatial { x: Var, w: Var, b: Var, geom: kernels::SpatialGeom },
    Conv1dTemporal { x: Var, w: Var, b: Var, geom: kernels::TemporalGeom },
    AvgPool2d { x: Var, geom: kernels::PoolGeom },
    Reshape(Var),
    SliceTime { x: Var, t: usize, steps: usize },
    SliceCols { x: Var, start: usize, cols: usize },
    Sum(Var),
    Mse { pred: Var, target: Var },
    Mae { pred: Var, target: Var },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![a, b],
            Op::Scale(a, _) | Op::Tanh(a) | Op::Sigmoid(a) | Op::Reshape(a) | Op::Sum(a) => {
                vec![a]
            }
            Op::Linear { x, w, b }
            | Op::Conv2dSpatial { x, w, b, .. }
            | Op::Conv1dTemporal { x, w, b, .. } => vec![x, w, b],
            Op::AvgPool2d { x, .. } | Op::SliceTime { x, .. } | Op::SliceCols { x, .. } => {
                vec![x]
            }
            Op::Mse { pred, target } | Op::Mae { pred, target } => vec![pred, target],
        }
    }
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], kept for leaf nodes only.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` is a tracked leaf
    /// that the loss depends on.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `var`, zero-filled when the loss does not reach it.
    pub fn get_or_zeros(&self, var: Var, len: usize) -> Vec<f64> {
        self.get(var).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }

    /// Stores the gradient of `var` into `tensor.grad`.
    pub fn write_to(&self, var: Var, tensor: &mut Tensor) -> Result<(), TensorError> {
        let g = self.get_or_zeros(var, tensor.len());
        tensor.set_grad(g)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(msg: String) -> TensorError {
    TensorError::ShapeMismatch(msg)
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let needs_grad = op
            .inputs()
            .iter()
            .any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies a tensor onto the tape. Gradients are tracked when
    /// `tensor.requires_grad` is set.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: tensor.shape().to_vec(),
            value: tensor.data().to_vec(),
            op: Op::Leaf,
            needs_grad: tensor.requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds an untracked input.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var, TensorError> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Single value of a scalar (or one-element) node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(format!("{op}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_map(&mut self, op_name: &str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, TensorError> {
        self.same_shape(op_name, a, b)?;
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(self.shape(a).to_vec(), value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_map("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_map("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_map("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).iter().map(|&x| x * factor).collect();
        self.push(self.shape(a).to_vec(), value, Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|&x| x.tanh()).collect();
        self.push(self.shape(a).to_vec(), value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(self.shape(a).to_vec(), value, Op::Sigmoid(a))
    }

    fn matrix_dims(&self, op: &str, v: Var) -> Result<(usize, usize), TensorError> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(shape_err(format!("{op}: expected a matrix, got {s:?}"))),
        }
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(shape_err(format!("matmul: inner dims {k} vs {k2}")));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b)))
    }

    /// `x [batch, in] · w [in, out] + b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.matrix_dims("linear", x)?;
        let (k2, n) = self.matrix_dims("linear", w)?;
        if k != k2 || self.shape(b) != [n] {
            return Err(shape_err(format!(
                "linear: x {:?}, w {:?}, b {:?}",
                self.shape(x),
                self.shape(w),
                self.shape(b)
            )));
        }
        let bias = self.value(b);
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(bias);
        }
        kernels::matmul_acc(self.value(x), self.value(w), &mut out, m, k, n);
        Ok(self.push(vec![m, n], out, Op::Linear { x, w, b }))
    }

    /// 2D convolution over the two axes preceding the channel axis.
    ///
    /// `x [..., height, width, c_in]`, `w [k_h, k_w, c_in, c_out]`, `b [c_out]`.
    /// All leading axes are treated as independent frames.
    pub fn conv2d_spatial(&mut self, x: Var, w: Var, b: Var, padding: Padding) -> Result<Var, TensorError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() < 3 || ws.len() != 4 || xs[xs.len() - 1] != ws[2] || self.shape(b) != [ws[3]] {
            return Err(shape_err(format!(
                "conv2d_spatial: x {xs:?}, w {ws:?}, b {:?}",
                self.shape(b)
            )));
        }
        let r = xs.len();
        let (h, wd, cin) = (xs[r - 3], xs[r - 2], xs[r - 1]);
        let (kh, kw, cout) = (ws[0], ws[1], ws[3]);
        let (Some(ho), Some(wo)) = (padding.output_len(h, kh), padding.output_len(wd, kw)) else {
            return Err(shape_err(format!(
                "conv2d_spatial: kernel {kh}x{kw} larger than input {h}x{wd}"
            )));
        };
        let geom = kernels::SpatialGeom {
            frames: xs[..r - 3].iter().product(),
            h,
            w: wd,
            cin,
            kh,
            kw,
            cout,
            ho,
            wo,
            pad_y: padding.leading_pad(kh),
            pad_x: padding.leading_pad(kw),
        };
        let out = kernels::conv2d_forward(&geom, self.value(x), self.value(w), self.value(b));
        let mut shape = xs[..r - 3].to_vec();
        shape.extend([ho, wo, cout]);
        Ok(self.push(shape, out, Op::Conv2dSpatial { x, w, b, geom }))
    }

    /// 1D convolution along the time axis of `x [..., time, height, width, c_in]`.
    ///
    /// `w [k_t, c_in, c_out]`, `b [c_out]`. Each spatial site is convolved
    /// independently.
    pub fn conv1d_temporal(&mut self, x: Var, w: Var, b: Var, padding: Padding) -> Result<Var, TensorError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() < 4 || ws.len() != 3 || xs[xs.len() - 1] != ws[1] || self.shape(b) != [ws[2]] {
            return Err(shape_err(format!(
                "conv1d_temporal: x {xs:?}, w {ws:?}, b {:?}",
                self.shape(b)
            )));
        }
        let r = xs.len();
        let (t, cin) = (xs[r - 4], xs[r - 1]);
        let (kt, cout) = (ws[0], ws[2]);
        let Some(to) = padding.output_len(t, kt) else {
            return Err(shape_err(format!(
                "conv1d_temporal: kernel {kt} longer than {t} steps"
            )));
        };
        let geom = kernels::TemporalGeom {
            batch: xs[..r - 4].iter().product(),
            t,
            sites: xs[r - 3] * xs[r - 2],
            cin,
            kt,
            cout,
            to,
            pad_t: padding.leading_pad(kt),
        };
        let out = kernels::conv1d_forward(&geom, self.value(x), self.value(w), self.value(b));
        let mut shape = xs[..r - 4].to_vec();
        shape.extend([to, xs[r - 3], xs[r - 2], cout]);
        Ok(self.push(shape, out, Op::Conv1dTemporal { x, w, b, geom }))
    }

    /// Non-overlapping `k x k` average pooling of `x [..., height, width, c]`.
    /// Trailing rows/columns that do not fill a window are dropped.
    pub fn avg_pool2d(&mut self, x: Var, k: usize) -> Result<Var, TensorError> {
        let xs = self.shape(x).to_vec();
        let r = xs.len();
        if r < 3 || k == 0 || xs[r - 3] < k || xs[r - 2] < k {
            return Err(shape_err(format!("avg_pool2d: x {xs:?}, k {k}")));
        }
        let geom = kernels::PoolGeom {
            frames: xs[..r - 3].iter().product(),
            h: xs[r - 3],
            w: xs[r - 2],
            c: xs[r - 1],
            k,
        };
        let out = kernels::avg_pool_forward(&geom, self.value(x));
        let mut shape = xs[..r - 3].to_vec();
        shape.extend([geom.h / k, geom.w / k, geom.c]);
        Ok(self.push(shape, out, Op::AvgPool2d { x, geom }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(shape_err(format!(
                "reshape: {:?} -> {shape:?}",
                self.shape(x)
            )));
        }
        let value = self.value(x).to_vec();
        Ok(self.push(shape, value, Op::Reshape(x)))
    }

    /// `[batch, time, ...] -> [batch, time, features]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var, TensorError> {
        let xs = self.shape(x);
        if xs.len() < 2 {
            return Err(shape_err(format!("flatten: rank {} < 2", xs.len())));
        }
        let shape = vec![xs[0], xs[1], xs[2..].iter().product()];
        self.reshape(x, shape)
    }

    /// Picks step `t` of `x [batch, time, features]`, giving `[batch, features]`.
    pub fn slice_time(&mut self, x: Var, t: usize) -> Result<Var, TensorError> {
        let &[b, steps, f] = self.shape(x) else {
            return Err(shape_err(format!("slice_time: x {:?}", self.shape(x))));
        };
        if t >= steps {
            return Err(shape_err(format!("slice_time: step {t} of {steps}")));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(b * f);
        for bi in 0..b {
            let off = (bi * steps + t) * f;
            out.extend_from_slice(&src[off..off + f]);
        }
        Ok(self.push(vec![b, f], out, Op::SliceTime { x, t, steps }))
    }

    /// Columns `start..start + cols` of `x [rows, n]`.
    pub fn slice_cols(&mut self, x: Var, start: usize, cols: usize) -> Result<Var, TensorError> {
        let (m, n) = self.matrix_dims("slice_cols", x)?;
        if start + cols > n {
            return Err(shape_err(format!("slice_cols: {start}+{cols} > {n}")));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(m * cols);
        for row in src.chunks_exact(n) {
            out.extend_from_slice(&row[start..start + cols]);
        }
        Ok(self.push(vec![m, cols], out, Op::SliceCols { x, start, cols }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![], vec![s], Op::Sum(x))
    }

    /// Mean of squared differences.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        self.same_shape("mse_loss", pred, target)?;
        let v = crate::loss::mse(self.value(pred), self.value(target));
        Ok(self.push(vec![], vec![v], Op::Mse { pred, target }))
    }

    /// Mean of absolute differences. The subgradient at zero difference is 0.
    pub fn mae(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        self.same_shape("mae", pred, target)?;
        let v = crate::loss::mae(self.value(pred), self.value(target));
        Ok(self.push(vec![], vec![v], Op::Mae { pred, target }))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(shape_err(format!(
                "backward: loss must be scalar, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for input in node.op.inputs() {
                assert!(input.0 < i, "tape node {i} references later node {}", input.0);
            }
            self.propagate(node, &g, &mut grads);
        }
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !matches!(node.op, Op::Leaf) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.tracked(v) {
                        add_into(slot(grads, v, g.len()), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.tracked(a) {
                    add_into(slot(grads, a, g.len()), g);
                }
                if self.tracked(b) {
                    for (d, &gi) in slot(grads, b, g.len()).iter_mut().zip(g) {
                        *d -= gi;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.tracked(a) {
                    let other = self.value(b);
                    for ((d, &gi), &o) in slot(grads, a, g.len()).iter_mut().zip(g).zip(other) {
                        *d += gi * o;
                    }
                }
                if self.tracked(b) {
                    let other = self.value(a);
                    for ((d, &gi), &o) in slot(grads, b, g.len()).iter_mut().zip(g).zip(other) {
                        *d += gi * o;
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.tracked(a) {
                    for (d, &gi) in slot(grads, a, g.len()).iter_mut().zip(g) {
                        *d += gi * c;
                    }
                }
            }
            Op::Tanh(a) => {
                if self.tracked(a) {
                    for ((d, &gi), &y) in slot(grads, a, g.len()).iter_mut().zip(g).zip(&node.value) {
                        *d += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if self.tracked(a) {
                    for ((d, &gi), &y) in slot(grads, a, g.len()).iter_mut().zip(g).zip(&node.value) {
                        *d += gi * y * (1.0 - y);
                    }
                }
            }
            Op::MatMul(a, b) => self.matmul_backward(a, b, None, g, grads),
            Op::Linear { x, w, b } => self.matmul_backward(x, w, Some(b), g, grads),
            Op::Conv2dSpatial { x, w, b, ref geom } => {
                let (dx, dw, db) = kernels::conv2d_backward(
                    geom,
                    self.value(x),
                    self.value(w),
                    g,
                    self.tracked(x),
                );
                if let Some(dx) = dx {
                    add_into(slot(grads, x, dx.len()), &dx);
                }
                if self.tracked(w) {
                    add_into(slot(grads, w, dw.len()), &dw);
                }
                if self.tracked(b) {
                    add_into(slot(grads, b, db.len()), &db);
                }
            }
            Op::Conv1dTemporal { x, w, b, ref geom } => {
                let (dx, dw, db) = kernels::conv1d_backward(
                    geom,
                    self.value(x),
                    self.value(w),
                    g,
                    self.tracked(x),
                );
                if let Some(dx) = dx {
                    add_into(slot(grads, x, dx.len()), &dx);
                }
                if self.tracked(w) {
                    add_into(slot(grads, w, dw.len()), &dw);
                }
                if self.tracked(b) {
                    add_into(slot(grads, b, db.len()), &db);
                }
            }
            Op::AvgPool2d { x, ref geom } => {
                if self.tracked(x) {
                    let len = self.value(x).len();
                    kernels::avg_pool_backward(geom, g, slot(grads, x, len));
                }
            }
            Op::Reshape(x) => {
                if self.tracked(x) {
                    add_into(slot(grads, x, g.len()), g);
                }
            }
            Op::SliceTime { x, t, steps } => {
                if self.tracked(x) {
                    let len = self.value(x).len();
                    let f = node.shape[1];
                    let dst = slot(grads, x, len);
                    for (bi, gr) in g.chunks_exact(f).enumerate() {
                        let off = (bi * steps + t) * f;
                        add_into(&mut dst[off..off + f], gr);
                    }
                }
            }
            Op::SliceCols { x, start, cols } => {
                if self.tracked(x) {
                    let len = self.value(x).len();
                    let n = self.shape(x)[1];
                    let dst = slot(grads, x, len);
                    for (row, gr) in dst.chunks_exact_mut(n).zip(g.chunks_exact(cols)) {
                        add_into(&mut row[start..start + cols], gr);
                    }
                }
            }
            Op::Sum(x) => {
                if self.tracked(x) {
                    let len = self.value(x).len();
                    for d in slot(grads, x, len).iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(pred), self.value(target));
                let scale = 2.0 * g[0] / p.len() as f64;
                if self.tracked(pred) {
                    for ((d, &pi), &ti) in slot(grads, pred, p.len()).iter_mut().zip(p).zip(t) {
                        *d += scale * (pi - ti);
                    }
                }
                if self.tracked(target) {
                    for ((d, &pi), &ti) in slot(grads, target, p.len()).iter_mut().zip(p).zip(t) {
                        *d -= scale * (pi - ti);
                    }
                }
            }
            Op::Mae { pred, target } => {
                let (p, t) = (self.value(pred), self.value(target));
                let scale = g[0] / p.len() as f64;
                let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
                if self.tracked(pred) {
                    for ((d, &pi), &ti) in slot(grads, pred, p.len()).iter_mut().zip(p).zip(t) {
                        *d += scale * sign(pi - ti);
                    }
                }
                if self.tracked(target) {
                    for ((d, &pi), &ti) in slot(grads, target, p.len()).iter_mut().zip(p).zip(t) {
                        *d -= scale * sign(pi - ti);
                    }
                }
            }
        }
    }

    fn matmul_backward(&self, a: Var, b: Var, bias: Option<Var>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let [m, k] = self.shape(a)[..] else { unreachable!() };
        let n = self.shape(b)[1];
        if self.tracked(a) {
            kernels::matmul_bt_acc(g, self.value(b), slot(grads, a, m * k), m, n, k);
        }
        if self.tracked(b) {
            kernels::matmul_at_acc(self.value(a), g, slot(grads, b, k * n), m, k, n);
        }
        if let Some(bias) = bias {
            if self.tracked(bias) {
                let db = slot(grads, bias, n);
                for row in g.chunks_exact(n) {
                    add_into(db, row);
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.index()].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
