use super::tensor::{Shape, Tensor};
use super::{sigmoid, sigmoid_grad, tanh_bounded, tanh_grad};
use crate::error::{Error, Result};
use crate::field::{
    conv_accumulate, conv_input_adjoint, conv_kernel_adjoint, gaussian_kernel,
    gaussian_kernel_sigma_derivative, gradient_l1, gradient_l1_adjoint, shift_adjoint,
    shift_dx_derivative, shift_plane, Field2D, Kernel2D, GAUSSIAN_KERNEL_SIZE,
};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations the tape can differentiate.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Input value; created through [`Tape::leaf`].
    Leaf,
    /// Elementwise with broadcasting over size-1 dimensions.
    Add,
    Sub,
    Mul,
    /// `scale * x + offset`.
    Affine {
        scale: f64,
        offset: f64,
    },
    Sigmoid,
    Tanh,
    Relu,
    Abs,
    /// Gradient passes strictly inside `(lo, hi)` and is zero elsewhere.
    Clamp {
        lo: f64,
        hi: f64,
    },
    /// Same kernel applied to every channel.
    Conv(Kernel2D),
    /// Learnable layer `(x, weights, bias)`: `weights` is `(cout*cin) x kh x kw`
    /// with the input-channel index fastest, `bias` is `cout x 1 x 1`.
    ConvLayer,
    /// `(x, sigma)`: 7x7 Gaussian blur, passthrough when `sigma <= threshold`.
    GaussBlur {
        threshold: f64,
    },
    /// `(x, dx)`: `keep * x + moved * shift_x(x, dx)`, passthrough at `dx == 0`.
    Shift {
        keep: f64,
        moved: f64,
    },
    Mean,
    /// `(a, b)`: mean squared difference.
    Mse,
    /// Mean forward-difference gradient magnitude of a single-channel image.
    GradL1,
}

impl Op {
    fn arity(&self) -> usize {
        match self {
            Op::Leaf => 0,
            Op::Add | Op::Sub | Op::Mul | Op::Mse | Op::GaussBlur { .. } | Op::Shift { .. } => 2,
            Op::ConvLayer => 3,
            _ => 1,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Affine { .. } => "affine",
            Op::Sigmoid => "sigmoid",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Abs => "abs",
            Op::Clamp { .. } => "clamp",
            Op::Conv(_) => "conv",
            Op::ConvLayer => "conv_layer",
            Op::GaussBlur { .. } => "gauss_blur",
            Op::Shift { .. } => "shift",
            Op::Mean => "mean",
            Op::Mse => "mse",
            Op::GradL1 => "grad_l1",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
}

/// Eager reverse-mode tape. Values are computed as nodes are recorded;
/// [`Tape::backward`] fills adjoints for everything reachable from the loss.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    adjoints: Option<Vec<Option<Vec<f64>>>>,
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    if a == b || b == 1 {
        Some(a)
    } else if a == 1 {
        Some(b)
    } else {
        None
    }
}

fn broadcast_shape(a: Shape, b: Shape) -> Option<Shape> {
    Some((
        broadcast_dim(a.0, b.0)?,
        broadcast_dim(a.1, b.1)?,
        broadcast_dim(a.2, b.2)?,
    ))
}

/// Strides that map an output index onto a (possibly broadcast) source.
fn strides(src: Shape) -> (usize, usize, usize) {
    let (c, h, w) = src;
    (
        if c == 1 { 0 } else { h * w },
        if h == 1 { 0 } else { w },
        if w == 1 { 0 } else { 1 },
    )
}

/// Visits every output element with the flat indices of both operands.
fn for_each_pair(a: Shape, b: Shape, out: Shape, mut f: impl FnMut(usize, usize, usize)) {
    if a == out && b == out {
        for i in 0..out.0 * out.1 * out.2 {
            f(i, i, i);
        }
        return;
    }
    let (sa, sb) = (strides(a), strides(b));
    let mut o = 0;
    for c in 0..out.0 {
        for y in 0..out.1 {
            for x in 0..out.2 {
                f(
                    o,
                    c * sa.0 + y * sa.1 + x * sa.2,
                    c * sb.0 + y * sb.1 + x * sb.2,
                );
                o += 1;
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn plane_field(t: &Tensor) -> Field2D {
    Field2D::from_fn(t.width(), t.height(), 1.0, |r, c| {
        t.data()[r * t.width() + c]
    })
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

    /// Clears all nodes and adjoints so the tape can be recorded again.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.adjoints = None;
    }

    fn ensure_open(&self) -> Result<()> {
        if self.adjoints.is_some() {
            return Err(Error::Contract(
                "tape already differentiated; reset before recording".into(),
            ));
        }
        Ok(())
    }

    pub fn leaf(&mut self, value: Tensor) -> Result<NodeId> {
        self.ensure_open()?;
        if let Some(v) = value.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite leaf value {v}")));
        }
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn scalar(&mut self, v: f64) -> Result<NodeId> {
        self.leaf(Tensor::scalar(v))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    /// Records `op` applied to `inputs`, computing its value immediately.
    pub fn record(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        self.ensure_open()?;
        if matches!(op, Op::Leaf) {
            return Err(Error::Contract(
                "leaf nodes are created with Tape::leaf".into(),
            ));
        }
        if inputs.len() != op.arity() {
            return Err(Error::Contract(format!(
                "{} takes {} inputs, got {}",
                op.name(),
                op.arity(),
                inputs.len()
            )));
        }
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::Contract(format!(
                "node {} is not on this tape",
                bad.0
            )));
        }
        let vals: Vec<&Tensor> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
        let value = forward(&op, &vals)?;
        self.nodes.push(Node {
            op,
            inputs: inputs.iter().map(|id| id.0).collect(),
            value,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul, &[a, b])
    }

    pub fn affine(&mut self, a: NodeId, scale: f64, offset: f64) -> Result<NodeId> {
        self.record(Op::Affine { scale, offset }, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Tanh, &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Relu, &[a])
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Abs, &[a])
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.record(Op::Clamp { lo, hi }, &[a])
    }

    pub fn conv(&mut self, a: NodeId, kernel: &Kernel2D) -> Result<NodeId> {
        self.record(Op::Conv(kernel.clone()), &[a])
    }

    pub fn conv_layer(&mut self, x: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        self.record(Op::ConvLayer, &[x, weights, bias])
    }

    pub fn gauss_blur(&mut self, x: NodeId, sigma: NodeId, threshold: f64) -> Result<NodeId> {
        self.record(Op::GaussBlur { threshold }, &[x, sigma])
    }

    pub fn shift(&mut self, x: NodeId, dx: NodeId, keep: f64, moved: f64) -> Result<NodeId> {
        self.record(Op::Shift { keep, moved }, &[x, dx])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Mean, &[a])
    }

    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mse, &[a, b])
    }

    pub fn grad_l1(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::GradL1, &[a])
    }

    /// Reverse pass from a scalar `loss`. Adjoints are recomputed from scratch
    /// on every call, so repeated calls give identical results. Recording is
    /// refused afterwards until [`Tape::reset`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract(format!(
                "node {} is not on this tape",
                loss.0
            )));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            let (c, h, w) = self.nodes[loss.0].value.shape();
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {c}x{h}x{w}"
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.inputs.is_empty() {
                let vals: Vec<&Tensor> =
                    node.inputs.iter().map(|&j| &self.nodes[j].value).collect();
                let local = backward_op(&node.op, &vals, &node.value, &g);
                for (&j, lg) in node.inputs.iter().zip(local) {
                    match &mut adj[j] {
                        Some(acc) => acc.iter_mut().zip(&lg).for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(lg),
                    }
                }
            }
            adj[i] = Some(g);
        }
        self.adjoints = Some(adj);
        Ok(())
    }

    /// Adjoint of `id` after [`Tape::backward`]; zeros when `id` does not
    /// influence the loss.
    pub fn grad(&self, id: NodeId) -> Result<Tensor> {
        let adj = self
            .adjoints
            .as_ref()
            .ok_or_else(|| Error::Contract("backward has not been run".into()))?;
        let (c, h, w) = self.nodes[id.0].value.shape();
        Ok(match &adj[id.0] {
            Some(g) => Tensor::new(c, h, w, g.clone())?,
            None => Tensor::zeros(c, h, w),
        })
    }
}

fn check_scalar(t: &Tensor, what: &str) -> Result<()> {
    if t.is_scalar() {
        Ok(())
    } else {
        let (c, h, w) = t.shape();
        Err(Error::dim(format!(
            "{what} must be scalar, got {c}x{h}x{w}"
        )))
    }
}

fn check_kernel_fits(t: &Tensor, kh: usize, kw: usize) -> Result<()> {
    if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
        return Err(Error::dim(format!("kernel {kh}x{kw} has an even side")));
    }
    if kh > t.height() || kw > t.width() {
        return Err(Error::dim(format!(
            "{kh}x{kw} kernel larger than {}x{} input",
            t.height(),
            t.width()
        )));
    }
    Ok(())
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let (c, h, w) = t.shape();
    Tensor::new(c, h, w, t.data().iter().map(|&v| f(v)).collect()).expect("same shape")
}

fn conv_planes(x: &Tensor, kernel: &[f64], kh: usize, kw: usize) -> Tensor {
    let (c, h, w) = x.shape();
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let p = h * w;
        conv_accumulate(
            x.channel(ch),
            h,
            w,
            kernel,
            kh,
            kw,
            &mut out[ch * p..(ch + 1) * p],
        );
    }
    Tensor::new(c, h, w, out).expect("same shape")
}

fn forward(op: &Op, v: &[&Tensor]) -> Result<Tensor> {
    Ok(match op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::Add | Op::Sub | Op::Mul => {
            let (a, b) = (v[0], v[1]);
            let shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| {
                Error::dim(format!(
                    "{}: cannot broadcast {:?} with {:?}",
                    op.name(),
                    a.shape(),
                    b.shape()
                ))
            })?;
            let mut out = vec![0.0; shape.0 * shape.1 * shape.2];
            let (ad, bd) = (a.data(), b.data());
            match op {
                Op::Add => for_each_pair(a.shape(), b.shape(), shape, |o, i, j| {
                    out[o] = ad[i] + bd[j]
                }),
                Op::Sub => for_each_pair(a.shape(), b.shape(), shape, |o, i, j| {
                    out[o] = ad[i] - bd[j]
                }),
                _ => for_each_pair(a.shape(), b.shape(), shape, |o, i, j| {
                    out[o] = ad[i] * bd[j]
                }),
            }
            Tensor::new(shape.0, shape.1, shape.2, out)?
        }
        Op::Affine { scale, offset } => map(v[0], |x| scale * x + offset),
        Op::Sigmoid => map(v[0], sigmoid),
        Op::Tanh => map(v[0], tanh_bounded),
        Op::Relu => map(v[0], |x| x.max(0.0)),
        Op::Abs => map(v[0], f64::abs),
        Op::Clamp { lo, hi } => {
            if lo > hi {
                return Err(Error::param(format!("clamp bounds {lo} > {hi}")));
            }
            map(v[0], |x| x.clamp(*lo, *hi))
        }
        Op::Conv(k) => {
            check_kernel_fits(v[0], k.size(), k.size())?;
            conv_planes(v[0], k.weights(), k.size(), k.size())
        }
        Op::ConvLayer => {
            let (x, wt, b) = (v[0], v[1], v[2]);
            let (cin, h, w) = x.shape();
            let cout = b.channels();
            if b.shape() != (cout, 1, 1) {
                return Err(Error::dim(format!("bias shape {:?}", b.shape())));
            }
            if wt.channels() != cout * cin {
                return Err(Error::dim(format!(
                    "{} weight planes for {cin} -> {cout} channels",
                    wt.channels()
                )));
            }
            let (kh, kw) = (wt.height(), wt.width());
            check_kernel_fits(x, kh, kw)?;
            let p = h * w;
            let mut out = vec![0.0; cout * p];
            for co in 0..cout {
                let dst = &mut out[co * p..(co + 1) * p];
                dst.fill(b.data()[co]);
                for ci in 0..cin {
                    conv_accumulate(x.channel(ci), h, w, wt.channel(co * cin + ci), kh, kw, dst);
                }
            }
            Tensor::new(cout, h, w, out)?
        }
        Op::GaussBlur { threshold } => {
            check_scalar(v[1], "blur sigma")?;
            let sigma = v[1].item();
            if sigma <= *threshold {
                v[0].clone()
            } else {
                check_kernel_fits(v[0], GAUSSIAN_KERNEL_SIZE, GAUSSIAN_KERNEL_SIZE)?;
                let k = gaussian_kernel(sigma)?;
                conv_planes(v[0], k.weights(), k.size(), k.size())
            }
        }
        Op::Shift { keep, moved } => {
            check_scalar(v[1], "shift displacement")?;
            let dx = v[1].item();
            if dx == 0.0 {
                v[0].clone()
            } else {
                let x = v[0];
                let (c, h, w) = x.shape();
                let mut out = Vec::with_capacity(x.len());
                for ch in 0..c {
                    let plane = x.channel(ch);
                    let shifted = shift_plane(plane, h, w, dx);
                    out.extend(
                        plane
                            .iter()
                            .zip(&shifted)
                            .map(|(&a, &s)| keep * a + moved * s),
                    );
                }
                Tensor::new(c, h, w, out)?
            }
        }
        Op::Mean => Tensor::scalar(v[0].data().iter().sum::<f64>() / v[0].len() as f64),
        Op::Mse => {
            if v[0].shape() != v[1].shape() {
                return Err(Error::dim(format!(
                    "mse: {:?} vs {:?}",
                    v[0].shape(),
                    v[1].shape()
                )));
            }
            let mut acc = 0.0;
            for (a, b) in v[0].data().iter().zip(v[1].data()) {
                let d = a - b;
                acc += d * d;
            }
            Tensor::scalar(acc / v[0].len() as f64)
        }
        Op::GradL1 => {
            let x = v[0];
            if x.channels() != 1 || x.height() < 2 || x.width() < 2 {
                return Err(Error::dim(format!(
                    "grad_l1 needs one >= 2x2 plane, got {:?}",
                    x.shape()
                )));
            }
            Tensor::scalar(gradient_l1(&plane_field(x)))
        }
    })
}

/// Local vector-Jacobian products, one per input, given output adjoint `g`.
fn backward_op(op: &Op, v: &[&Tensor], out: &Tensor, g: &[f64]) -> Vec<Vec<f64>> {
    match op {
        Op::Leaf => Vec::new(),
        Op::Add | Op::Sub | Op::Mul => {
            let (a, b) = (v[0], v[1]);
            let mut ga = vec![0.0; a.len()];
            let mut gb = vec![0.0; b.len()];
            let (ad, bd) = (a.data(), b.data());
            match op {
                Op::Add => for_each_pair(a.shape(), b.shape(), out.shape(), |o, i, j| {
                    ga[i] += g[o];
                    gb[j] += g[o];
                }),
                Op::Sub => for_each_pair(a.shape(), b.shape(), out.shape(), |o, i, j| {
                    ga[i] += g[o];
                    gb[j] -= g[o];
                }),
                _ => for_each_pair(a.shape(), b.shape(), out.shape(), |o, i, j| {
                    ga[i] += g[o] * bd[j];
                    gb[j] += g[o] * ad[i];
                }),
            }
            vec![ga, gb]
        }
        Op::Affine { scale, .. } => vec![g.iter().map(|&gi| scale * gi).collect()],
        Op::Sigmoid => vec![v[0]
            .data()
            .iter()
            .zip(g)
            .map(|(&x, &gi)| gi * sigmoid_grad(x))
            .collect()],
        Op::Tanh => vec![v[0]
            .data()
            .iter()
            .zip(g)
            .map(|(&x, &gi)| gi * tanh_grad(x))
            .collect()],
        Op::Relu => vec![v[0]
            .data()
            .iter()
            .zip(g)
            .map(|(&x, &gi)| if x > 0.0 { gi } else { 0.0 })
            .collect()],
        Op::Abs => vec![v[0]
            .data()
            .iter()
            .zip(g)
            .map(|(&x, &gi)| gi * sign(x))
            .collect()],
        Op::Clamp { lo, hi } => vec![v[0]
            .data()
            .iter()
            .zip(g)
            .map(|(&x, &gi)| if *lo < x && x < *hi { gi } else { 0.0 })
            .collect()],
        Op::Conv(k) => {
            let (c, h, w) = v[0].shape();
            let p = h * w;
            let mut gx = vec![0.0; v[0].len()];
            for ch in 0..c {
                conv_input_adjoint(
                    &g[ch * p..(ch + 1) * p],
                    h,
                    w,
                    k.weights(),
                    k.size(),
                    k.size(),
                    &mut gx[ch * p..(ch + 1) * p],
                );
            }
            vec![gx]
        }
        Op::ConvLayer => {
            let (x, wt, b) = (v[0], v[1], v[2]);
            let (cin, h, w) = x.shape();
            let cout = b.channels();
            let (kh, kw) = (wt.height(), wt.width());
            let (p, kp) = (h * w, kh * kw);
            let mut gx = vec![0.0; x.len()];
            let mut gw = vec![0.0; wt.len()];
            let mut gb = vec![0.0; cout];
            for co in 0..cout {
                let go = &g[co * p..(co + 1) * p];
                gb[co] = go.iter().sum();
                for ci in 0..cin {
                    let plane = co * cin + ci;
                    conv_input_adjoint(
                        go,
                        h,
                        w,
                        wt.channel(plane),
                        kh,
                        kw,
                        &mut gx[ci * p..(ci + 1) * p],
                    );
                    conv_kernel_adjoint(
                        go,
                        x.channel(ci),
                        h,
                        w,
                        kh,
                        kw,
                        &mut gw[plane * kp..(plane + 1) * kp],
                    );
                }
            }
            vec![gx, gw, gb]
        }
        Op::GaussBlur { threshold } => {
            let sigma = v[1].item();
            if sigma <= *threshold {
                return vec![g.to_vec(), vec![0.0]];
            }
            let k = gaussian_kernel(sigma).expect("validated on record");
            let dk = gaussian_kernel_sigma_derivative(sigma);
            let (c, h, w) = v[0].shape();
            let (p, n) = (h * w, k.size());
            let mut gx = vec![0.0; v[0].len()];
            let mut gk = vec![0.0; n * n];
            for ch in 0..c {
                let go = &g[ch * p..(ch + 1) * p];
                conv_input_adjoint(go, h, w, k.weights(), n, n, &mut gx[ch * p..(ch + 1) * p]);
                conv_kernel_adjoint(go, v[0].channel(ch), h, w, n, n, &mut gk);
            }
            let gs = gk.iter().zip(&dk).map(|(a, b)| a * b).sum();
            vec![gx, vec![gs]]
        }
        Op::Shift { keep, moved } => {
            let dx = v[1].item();
            if dx == 0.0 {
                // Identity in x; the displacement derivative is the right-hand one.
                let (c, h, w) = v[0].shape();
                let p = h * w;
                let mut gd = 0.0;
                for ch in 0..c {
                    gd += moved
                        * shift_dx_derivative(v[0].channel(ch), &g[ch * p..(ch + 1) * p], h, w, dx);
                }
                return vec![g.to_vec(), vec![gd]];
            }
            let (c, h, w) = v[0].shape();
            let p = h * w;
            let mut gx = Vec::with_capacity(v[0].len());
            let mut gd = 0.0;
            for ch in 0..c {
                let go = &g[ch * p..(ch + 1) * p];
                let back = shift_adjoint(go, h, w, dx);
                gx.extend(go.iter().zip(&back).map(|(&a, &s)| keep * a + moved * s));
                gd += moved * shift_dx_derivative(v[0].channel(ch), go, h, w, dx);
            }
            vec![gx, vec![gd]]
        }
        Op::Mean => {
            let s = g[0] / v[0].len() as f64;
            vec![vec![s; v[0].len()]]
        }
        Op::Mse => {
            let scale = 2.0 * g[0] / v[0].len() as f64;
            let ga: Vec<f64> = v[0]
                .data()
                .iter()
                .zip(v[1].data())
                .map(|(a, b)| scale * (a - b))
                .collect();
            let gb = ga.iter().map(|x| -x).collect();
            vec![ga, gb]
        }
        Op::GradL1 => vec![gradient_l1_adjoint(&plane_field(v[0]), g[0])],
    }
}
