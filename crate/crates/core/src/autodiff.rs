//! A minimal reverse-mode tape over dense row-major matrices.
//!
//! Only the operations the encoder needs are provided. Each call appends a
//! node holding its forward value; [`Tape::backward`] walks the nodes in
//! reverse and returns the adjoint of every node with respect to a scalar
//! output.

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `a + row` with `row` a `1 x cols` matrix broadcast over rows.
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Gelu(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    /// Zero-mean, unit-variance rows; caches `1 / std` per row.
    LayerNorm(Var, Vec<f64>),
    /// Column-wise max over consecutive groups of rows; caches argmax rows.
    GroupMax(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    /// Scalar function of `input` whose gradient was computed in the forward pass.
    External(Var, Matrix),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Inputs and parameters both enter as leaves.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape());
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p - q).collect();
        let v = Matrix::from_vec(x.rows, x.cols, data);
        self.push(v, Op::Sub(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((1, x.cols), r.shape(), "broadcast row shape");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((1, x.cols), r.shape(), "broadcast row shape");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *o *= b;
            }
        }
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x >= 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows {
            let row = v.row_mut(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows);
        let n = x.cols as f64;
        for i in 0..v.rows {
            let row = v.row_mut(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            for r in row.iter_mut() {
                *r = (*r - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(v, Op::LayerNorm(a, inv_std))
    }

    /// Max over consecutive groups of `group` rows, per column. Ties keep the
    /// first row of the group.
    pub fn group_max(&mut self, a: Var, group: usize) -> Var {
        let x = self.value(a);
        assert!(group > 0 && x.rows % group == 0, "group_max: {} rows, group {group}", x.rows);
        let n_groups = x.rows / group;
        let mut v = Matrix::zeros(n_groups, x.cols);
        let mut arg = vec![0usize; n_groups * x.cols];
        for g in 0..n_groups {
            for c in 0..x.cols {
                let mut best_r = g * group;
                let mut best = x.get(best_r, c);
                for r in g * group + 1..(g + 1) * group {
                    let val = x.get(r, c);
                    if val > best {
                        best = val;
                        best_r = r;
                    }
                }
                v.data[g * x.cols + c] = best;
                arg[g * x.cols + c] = best_r;
            }
        }
        self.push(v, Op::GroupMax(a, arg))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let x = self.value(a);
        let mut v = Matrix::zeros(idx.len(), x.cols);
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).copy_from_slice(x.row(i));
        }
        self.push(v, Op::GatherRows(a, idx))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Matrix::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows, "concat_cols row count");
            for i in 0..rows {
                v.data[i * cols + off..i * cols + off + m.cols].copy_from_slice(m.row(i));
            }
            off += m.cols;
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols);
        let mut v = Matrix::zeros(x.rows, len);
        for i in 0..x.rows {
            v.row_mut(i).copy_from_slice(&x.row(i)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start))
    }

    /// Appends a scalar node `value = f(input)` whose gradient `df/dinput`
    /// the caller already knows.
    pub fn external(&mut self, input: Var, value: f64, grad: Matrix) -> Var {
        assert_eq!(self.value(input).shape(), grad.shape(), "external gradient shape");
        self.push(Matrix::from_vec(1, 1, vec![value]), Op::External(input, grad))
    }

    /// Adjoints of every node with respect to the `1 x 1` node `out`.
    /// Nodes that do not influence `out` get `None`.
    pub fn backward(&self, out: Var) -> Vec<Option<Matrix>> {
        assert_eq!(self.value(out).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Matrix::filled(1, 1, 1.0));
        for id in (0..=out.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let acc = |v: Var, d: Matrix, grads: &mut Vec<Option<Matrix>>| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot @ None => *slot = Some(d),
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    acc(*a, g.matmul(&y.transpose()), &mut grads);
                    acc(*b, x.transpose().matmul(&g), &mut grads);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.clone(), &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|v| -v), &mut grads);
                    acc(*a, g.clone(), &mut grads);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Matrix::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for (d, v) in dr.data.iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    acc(*row, dr, &mut grads);
                    acc(*a, g.clone(), &mut grads);
                }
                Op::MulRow(a, row) => {
                    let (x, r) = (self.value(*a), self.value(*row));
                    let mut dr = Matrix::zeros(1, g.cols);
                    let mut dx = g.clone();
                    for i in 0..g.rows {
                        for c in 0..g.cols {
                            dr.data[c] += g.get(i, c) * x.get(i, c);
                            dx.data[i * g.cols + c] *= r.data[c];
                        }
                    }
                    acc(*row, dr, &mut grads);
                    acc(*a, dx, &mut grads);
                }
                Op::Scale(a, s) => acc(*a, g.map(|v| v * s), &mut grads),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut d = g.clone();
                    for (dv, &xv) in d.data.iter_mut().zip(&x.data) {
                        if xv <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::LeakyRelu(a, slope) => {
                    let x = self.value(*a);
                    let mut d = g.clone();
                    for (dv, &xv) in d.data.iter_mut().zip(&x.data) {
                        if xv < 0.0 {
                            *dv *= slope;
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut d = g.clone();
                    for (dv, &xv) in d.data.iter_mut().zip(&x.data) {
                        *dv *= gelu_grad(xv);
                    }
                    acc(*a, d, &mut grads);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(p, q)| p * q).sum();
                        for c in 0..y.cols {
                            d.data[i * y.cols + c] = y.get(i, c) * (g.get(i, c) - dot);
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::Transpose(a) => acc(*a, g.transpose(), &mut grads),
                Op::LayerNorm(a, inv_std) => {
                    let y = &node.value;
                    let n = y.cols as f64;
                    let mut d = Matrix::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let gr = g.row(i);
                        let yr = y.row(i);
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / n;
                        for c in 0..y.cols {
                            d.data[i * y.cols + c] = inv_std[i] * (gr[c] - mean_g - yr[c] * mean_gy);
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::GroupMax(a, arg) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    for (k, &r) in arg.iter().enumerate() {
                        let c = k % x.cols;
                        d.data[r * x.cols + c] += g.data[k];
                    }
                    acc(*a, d, &mut grads);
                }
                Op::GatherRows(a, idx) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    for (r, &i) in idx.iter().enumerate() {
                        for (dv, gv) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                            *dv += gv;
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let cols = self.value(p).cols;
                        let mut d = Matrix::zeros(g.rows, cols);
                        for i in 0..g.rows {
                            d.row_mut(i).copy_from_slice(&g.row(i)[off..off + cols]);
                        }
                        off += cols;
                        acc(p, d, &mut grads);
                    }
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    for i in 0..g.rows {
                        d.row_mut(i)[*start..*start + g.cols].copy_from_slice(g.row(i));
                    }
                    acc(*a, d, &mut grads);
                }
                Op::External(a, local) => {
                    let s = g.data[0];
                    acc(*a, local.map(|v| v * s), &mut grads);
                }
            }
            grads[id] = Some(g);
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_for(seed, &[]);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Sums `out` against fixed random weights so every output entry matters.
    fn reduce(t: &mut Tape, out: Var, seed: u64) -> Var {
        let (r, c) = t.value(out).shape();
        let w = t.leaf(random(r, c, seed));
        let prod = t.concat_cols(&[out]);
        let total: f64 = t.value(prod).data.iter().zip(&t.value(w).data).map(|(a, b)| a * b).sum();
        let grad = t.value(w).clone();
        t.external(prod, total, grad)
    }

    /// Finite-difference check of every leaf entry for a graph builder.
    fn check(build: impl Fn(&mut Tape, &[Var]) -> Var, shapes: &[(usize, usize)]) {
        let inputs: Vec<Matrix> =
            shapes.iter().enumerate().map(|(i, &(r, c))| random(r, c, 100 + i as u64)).collect();
        let run = |vals: &[Matrix]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = vals.iter().map(|m| t.leaf(m.clone())).collect();
            let out = build(&mut t, &vars);
            let loss = reduce(&mut t, out, 9);
            (t, vars, loss)
        };
        let (t, vars, loss) = run(&inputs);
        let grads = t.backward(loss);
        let h = 1e-6;
        for (k, v) in vars.iter().enumerate() {
            let g = grads[v.index()].clone().unwrap_or_else(|| Matrix::zeros(shapes[k].0, shapes[k].1));
            for e in 0..inputs[k].data.len() {
                let eval = |d: f64| {
                    let mut vals = inputs.clone();
                    vals[k].data[e] += d;
                    let (t, _, l) = run(&vals);
                    t.value(l).data[0]
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                assert!((fd - g.data[e]).abs() < 1e-6, "input {k} entry {e}: fd {fd} vs {}", g.data[e]);
            }
        }
    }

    #[test]
    fn matmul_transpose_grad() {
        check(|t, v| { let bt = t.transpose(v[1]); t.matmul(v[0], bt) }, &[(3, 4), (2, 4)]);
    }

    #[test]
    fn broadcast_and_elementwise_grads() {
        check(
            |t, v| {
                let a = t.add_row(v[0], v[1]);
                let m = t.mul_row(a, v[2]);
                let s = t.sub(m, v[3]);
                let l = t.leaky_relu(s, 0.2);
                let g = t.gelu(l);
                let sc = t.scale(g, -1.7);
                t.add(sc, v[0])
            },
            &[(4, 3), (1, 3), (1, 3), (4, 3)],
        );
    }

    #[test]
    fn softmax_layernorm_grads() {
        check(
            |t, v| {
                let n = t.layer_norm(v[0], 1e-5);
                t.softmax_rows(n)
            },
            &[(3, 5)],
        );
    }

    #[test]
    fn gather_groupmax_slice_concat_grads() {
        check(
            |t, v| {
                let g = t.gather_rows(v[0], vec![2, 0, 1, 2, 3, 0]);
                let m = t.group_max(g, 3);
                let a = t.slice_cols(m, 1, 2);
                let r = t.relu(v[1]);
                t.concat_cols(&[a, r])
            },
            &[(4, 3), (2, 2)],
        );
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Tape::new();
        let x = t.leaf(random(4, 7, 3));
        let y = t.softmax_rows(x);
        for i in 0..4 {
            let s: f64 = t.value(y).row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
