use super::{Tensor, TensorError};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// Right operand has one entry per column and is repeated down the rows.
    Row,
    /// Right operand is `rows × 1` and is repeated across the columns.
    Column,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId, Broadcast),
    Mul(NodeId, NodeId, Broadcast),
    Concat { inputs: Vec<NodeId>, axis: usize },
    Slice { input: NodeId, axis: usize, start: usize },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Sum(NodeId),
    SoftmaxCrossEntropy { logits: NodeId, targets: Vec<usize>, probs: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Sum(_) => "sum",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only computation graph with reverse-mode gradient propagation.
///
/// Nodes are stored in creation order, which is a topological order: every
/// operation can only refer to nodes that already exist. Leaves created with
/// [`Graph::param`] receive gradients; leaves created with
/// [`Graph::constant`] do not, and neither does anything computed purely
/// from constants.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient of the last [`Graph::backward`] target with respect to `id`.
    /// `None` when the node does not require gradients or was not reached.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<NodeId, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let requires_grad = match &op {
            Op::Leaf => unreachable!("leaves are pushed directly"),
            Op::MatMul(a, b) | Op::Add(a, b, _) | Op::Mul(a, b, _) => self.requires_grad(*a) || self.requires_grad(*b),
            Op::Concat { inputs, .. } => inputs.iter().any(|i| self.requires_grad(*i)),
            Op::Slice { input: a, .. }
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::SoftmaxCrossEntropy { logits: a, .. } => self.requires_grad(*a),
        };
        self.nodes.push(Node { op, value, requires_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn matrix_dims(&self, id: NodeId, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.value(id).shape() {
            [r, c] => Ok((*r, *c)),
            other => Err(TensorError::Shape { op, detail: format!("expected a matrix, got shape {:?}", other) }),
        }
    }

    /// Matrix product of an `m×k` and a `k×n` matrix.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(TensorError::Shape { op: "matmul", detail: format!("inner dimensions disagree: {}x{} times {}x{}", m, k, k2, n) });
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), (k, 1), self.value(b).data(), (n, 1), &mut out, 0.0);
        self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?)
    }

    fn broadcast_kind(&self, a: NodeId, b: NodeId, op: &'static str) -> Result<Broadcast, TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            return Ok(Broadcast::Same);
        }
        if let [m, n] = *sa {
            match *sb {
                [len] if len == n => return Ok(Broadcast::Row),
                [1, len] if len == n => return Ok(Broadcast::Row),
                [rows, 1] if rows == m => return Ok(Broadcast::Column),
                _ => {}
            }
        }
        Err(TensorError::Shape { op, detail: format!("cannot combine {:?} with {:?}", sa, sb) })
    }

    fn zip_broadcast(&self, a: NodeId, b: NodeId, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let (_, cols) = va.as_matrix_dims();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &x)| {
                let y = match kind {
                    Broadcast::Same => vb.data()[idx],
                    Broadcast::Row => vb.data()[idx % cols],
                    Broadcast::Column => vb.data()[idx / cols],
                };
                f(x, y)
            })
            .collect();
        Tensor::new(va.shape().to_vec(), data).expect("shape preserved")
    }

    /// Elementwise sum. `b` may also be a per-column vector (broadcast over
    /// rows) or a `rows × 1` column (broadcast over columns).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let kind = self.broadcast_kind(a, b, "add")?;
        let value = self.zip_broadcast(a, b, kind, |x, y| x + y);
        self.push(Op::Add(a, b, kind), value)
    }

    /// Elementwise product, with the same broadcasting rules as [`Graph::add`].
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let kind = self.broadcast_kind(a, b, "mul")?;
        let value = self.zip_broadcast(a, b, kind, |x, y| x * y);
        self.push(Op::Mul(a, b, kind), value)
    }

    /// Concatenates tensors of equal rank whose shapes agree except on `axis`.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId, TensorError> {
        let first = inputs.first().ok_or(TensorError::Shape { op: "concat", detail: "no inputs".into() })?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(TensorError::Axis { op: "concat", axis, rank: base.len() });
        }
        let mut along = 0;
        for id in inputs {
            let s = self.value(*id).shape();
            let compatible = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TensorError::Shape { op: "concat", detail: format!("{:?} and {:?} differ off axis {}", base, s, axis) });
            }
            along += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * along * inner);
        for o in 0..outer {
            for id in inputs {
                let v = self.value(*id);
                let block = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = along;
        let value = Tensor::new(shape, data)?;
        self.push(Op::Concat { inputs: inputs.to_vec(), axis }, value)
    }

    /// Takes the half-open range `start..end` along `axis`.
    pub fn slice(&mut self, input: NodeId, axis: usize, start: usize, end: usize) -> Result<NodeId, TensorError> {
        let shape = self.value(input).shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Axis { op: "slice", axis, rank: shape.len() });
        }
        if start > end || end > shape[axis] {
            return Err(TensorError::Shape {
                op: "slice",
                detail: format!("range {}..{} out of bounds for axis {} of {:?}", start, end, axis, shape),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * shape[axis] * inner;
            data.extend_from_slice(&src[base + start * inner..base + end * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = end - start;
        let value = Tensor::new(out_shape, data)?;
        self.push(Op::Slice { input, axis, start }, value)
    }

    fn map(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> Result<NodeId, TensorError> {
        let v = self.value(a);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())?;
        self.push(op, value)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Mean over rows of `-log softmax(logits)[target]`, computed with the
    /// row maximum subtracted before exponentiation.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId, TensorError> {
        let (n, classes) = self.matrix_dims(logits, "softmax_cross_entropy")?;
        if targets.len() != n {
            return Err(TensorError::Shape {
                op: "softmax_cross_entropy",
                detail: format!("{} logit rows but {} targets", n, targets.len()),
            });
        }
        if n == 0 {
            return Err(TensorError::Shape { op: "softmax_cross_entropy", detail: "empty batch".into() });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(TensorError::Target { target: bad, classes });
        }
        let v = self.value(logits);
        let mut probs = Vec::with_capacity(n * classes);
        let mut total = 0.0;
        for (r, &target) in targets.iter().enumerate() {
            let row = v.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            total += z.ln() + max - row[target];
            probs.extend(exps.iter().map(|e| e / z));
        }
        let loss = Tensor::scalar(total / n as f64);
        self.push(Op::SoftmaxCrossEntropy { logits, targets: targets.to_vec(), probs }, loss)
    }

    /// Propagates gradients from the scalar `loss` back to every node that
    /// requires them, summing contributions over fan-out. Gradients from any
    /// previous call are discarded.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.requires_grad(loss) {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = self.grads[idx].take() else { continue };
            propagate(&self.nodes, &mut self.grads, idx, &g);
            if !g.iter().all(|v| v.is_finite()) {
                return Err(TensorError::NonFinite { op: "backward" });
            }
            self.grads[idx] = Some(g);
        }
        Ok(())
    }
}

fn accumulate<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], id: NodeId) -> Option<&'g mut Vec<f64>> {
    let node = &nodes[id.0];
    if !node.requires_grad {
        return None;
    }
    let len = node.value.len();
    Some(grads[id.0].get_or_insert_with(|| vec![0.0; len]))
}

/// Adds the contribution of node `idx`, whose output gradient is `g`, to the
/// gradients of its inputs.
fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], idx: usize, g: &[f64]) {
    let node = &nodes[idx];
    let value = |id: NodeId| &nodes[id.0].value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = value(*a).as_matrix_dims();
            let (_, n) = value(*b).as_matrix_dims();
            if let Some(ga) = accumulate(nodes, grads, *a) {
                gemm(m, n, k, g, (n, 1), value(*b).data(), (1, n), ga, 1.0);
            }
            if let Some(gb) = accumulate(nodes, grads, *b) {
                gemm(k, m, n, value(*a).data(), (1, k), g, (n, 1), gb, 1.0);
            }
        }
        Op::Add(a, b, kind) => {
            let cols = value(*a).as_matrix_dims().1;
            if let Some(ga) = accumulate(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = accumulate(nodes, grads, *b) {
                reduce_broadcast(gb, g, cols, *kind, |gi, _| gi);
            }
        }
        Op::Mul(a, b, kind) => {
            let cols = value(*a).as_matrix_dims().1;
            let (av, bv) = (value(*a).data(), value(*b).data());
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for (i, (x, gi)) in ga.iter_mut().zip(g).enumerate() {
                    let y = match kind {
                        Broadcast::Same => bv[i],
                        Broadcast::Row => bv[i % cols],
                        Broadcast::Column => bv[i / cols],
                    };
                    *x += gi * y;
                }
            }
            if let Some(gb) = accumulate(nodes, grads, *b) {
                reduce_broadcast(gb, g, cols, *kind, |gi, i| gi * av[i]);
            }
        }
        Op::Concat { inputs, axis } => {
            let shape = value(inputs[0]).shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let along: usize = inputs.iter().map(|i| value(*i).shape()[*axis]).sum();
            let mut offset = 0;
            for id in inputs {
                let width = value(*id).shape()[*axis] * inner;
                if let Some(gi) = accumulate(nodes, grads, *id) {
                    for o in 0..outer {
                        let src = &g[o * along * inner + offset..o * along * inner + offset + width];
                        gi[o * width..(o + 1) * width].iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    }
                }
                offset += width;
            }
        }
        Op::Slice { input, axis, start } => {
            let shape = value(*input).shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let taken = g.len() / outer.max(1);
            let full = shape[*axis] * inner;
            if let Some(gi) = accumulate(nodes, grads, *input) {
                for o in 0..outer {
                    let base = o * full + start * inner;
                    gi[base..base + taken].iter_mut().zip(&g[o * taken..(o + 1) * taken]).for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::Tanh(a) => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for ((x, gi), y) in ga.iter_mut().zip(g).zip(node.value.data()) {
                    *x += gi * (1.0 - y * y);
                }
            }
        }
        Op::Sigmoid(a) => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for ((x, gi), y) in ga.iter_mut().zip(g).zip(node.value.data()) {
                    *x += gi * y * (1.0 - y);
                }
            }
        }
        Op::Relu(a) => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for ((x, gi), y) in ga.iter_mut().zip(g).zip(node.value.data()) {
                    if *y > 0.0 {
                        *x += gi;
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                ga.iter_mut().for_each(|x| *x += g[0]);
            }
        }
        Op::SoftmaxCrossEntropy { logits, targets, probs } => {
            let classes = probs.len() / targets.len();
            let scale = g[0] / targets.len() as f64;
            if let Some(gl) = accumulate(nodes, grads, *logits) {
                for (i, (x, p)) in gl.iter_mut().zip(probs).enumerate() {
                    let onehot = if targets[i / classes] == i % classes { 1.0 } else { 0.0 };
                    *x += scale * (p - onehot);
                }
            }
        }
    }
}

fn reduce_broadcast(gb: &mut [f64], g: &[f64], cols: usize, kind: Broadcast, term: impl Fn(f64, usize) -> f64) {
    for (i, &gi) in g.iter().enumerate() {
        let slot = match kind {
            Broadcast::Same => i,
            Broadcast::Row => i % cols,
            Broadcast::Column => i / cols,
        };
        gb[slot] += term(gi, i);
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c = a·b + beta·c` for an `m×k` times `k×n` product with explicit
/// (row, column) strides for the operands; `c` is dense row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize), c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    debug_assert!(a.len() > (m - 1) * sa.0 + (k - 1) * sa.1);
    debug_assert!(b.len() > (k - 1) * sb.0 + (n - 1) * sb.1);
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: the debug assertions above spell out the bounds every caller
    // satisfies; matrixmultiply reads and writes strictly within them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
