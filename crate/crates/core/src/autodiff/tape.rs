use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU32, Ordering};

use libm::{exp, sqrt, tanh};

use crate::error::{Error, Result};
use crate::liegroup::{hat, matmul, rodrigues, rodrigues_coefficients, rot2_matrix};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u32,
    idx: u32,
}

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param { offset: usize },
    MatVec { w: usize, x: usize, rows: usize, cols: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Slice { src: usize, start: usize },
    Concat(Vec<usize>),
    Dot(usize, usize),
    Sum(usize),
    SumScalars(Vec<usize>),
    Normalize { src: usize, norm: f64 },
    Rodrigues(usize),
    Rot2(usize),
    /// `M · A` with `M` constant `n×n` and `A` an `n×k` node.
    LeftMatMul { m: Vec<f64>, n: usize, a: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Append-only record of vector-valued operations. Nodes only reference
/// earlier nodes, so reverse insertion order is a reverse topological order.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    num_params: usize,
    nodes: Vec<Node>,
}

impl Tape {
    /// A tape whose parameter nodes index into a flat vector of `num_params`.
    pub fn new(num_params: usize) -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), num_params, nodes: Vec::new() }
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var { tape: self.id, idx: (self.nodes.len() - 1) as u32 }
    }

    fn get(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx as usize >= self.nodes.len() {
            return Err(Error::DetachedNode);
        }
        Ok(v.idx as usize)
    }

    fn ix(&self, v: Var) -> usize {
        debug_assert_eq!(v.tape, self.id, "variable from another tape");
        v.idx as usize
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[self.ix(v)].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[self.ix(v)].value[0]
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Const)
    }

    /// Leaf reading `params[offset..offset + len]`.
    pub fn param(&mut self, params: &[f64], offset: usize, len: usize) -> Var {
        assert!(offset + len <= self.num_params, "parameter slice out of range");
        self.push(params[offset..offset + len].to_vec(), Op::Param { offset })
    }

    /// `W x` for a row-major `rows×cols` node `w`.
    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize) -> Var {
        let (wi, xi) = (self.ix(w), self.ix(x));
        let (wv, xv) = (&self.nodes[wi].value, &self.nodes[xi].value);
        assert_eq!(wv.len(), rows * cols, "matvec weight shape");
        assert_eq!(xv.len(), cols, "matvec input shape");
        let out = (0..rows)
            .map(|r| wv[r * cols..(r + 1) * cols].iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        self.push(out, Op::MatVec { w: wi, x: xi, rows, cols })
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: fn(usize, usize) -> Op) -> Var {
        let (ai, bi) = (self.ix(a), self.ix(b));
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        assert_eq!(av.len(), bv.len(), "elementwise shape mismatch");
        let out = av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect();
        self.push(out, op(ai, bi))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ai = self.ix(a);
        let out = self.nodes[ai].value.iter().map(|x| x * c).collect();
        self.push(out, Op::Scale(ai, c))
    }

    pub fn add_const(&mut self, a: Var, c: &[f64]) -> Var {
        let ai = self.ix(a);
        assert_eq!(self.nodes[ai].value.len(), c.len(), "add_const shape");
        let out = self.nodes[ai].value.iter().zip(c).map(|(x, y)| x + y).collect();
        self.push(out, Op::AddConst(ai))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let ai = self.ix(a);
        let out = self.nodes[ai].value.iter().map(|x| tanh(*x)).collect();
        self.push(out, Op::Tanh(ai))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ai = self.ix(a);
        let out = self.nodes[ai].value.iter().map(|x| x.max(0.0)).collect();
        self.push(out, Op::Relu(ai))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let ai = self.ix(a);
        let out = self.nodes[ai].value.iter().map(|x| exp(*x)).collect();
        self.push(out, Op::Exp(ai))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ai = self.ix(a);
        let out = self.nodes[ai].value[start..start + len].to_vec();
        self.push(out, Op::Slice { src: ai, start })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let idx: Vec<usize> = parts.iter().map(|v| self.ix(*v)).collect();
        let out = idx.iter().flat_map(|i| self.nodes[*i].value.iter().copied()).collect();
        self.push(out, Op::Concat(idx))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.ix(a), self.ix(b));
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        assert_eq!(av.len(), bv.len(), "dot shape mismatch");
        let d = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        self.push(vec![d], Op::Dot(ai, bi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ai = self.ix(a);
        let s = self.nodes[ai].value.iter().sum();
        self.push(vec![s], Op::Sum(ai))
    }

    /// `‖a‖²`.
    pub fn sum_sq(&mut self, a: Var) -> Var {
        self.dot(a, a)
    }

    /// Sum of scalar nodes; an empty list yields the constant 0.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Var {
        let idx: Vec<usize> = parts.iter().map(|v| self.ix(*v)).collect();
        let s = idx.iter().map(|i| self.nodes[*i].value[0]).sum();
        self.push(vec![s], Op::SumScalars(idx))
    }

    pub fn mean_scalars(&mut self, parts: &[Var]) -> Var {
        let s = self.sum_scalars(parts);
        if parts.is_empty() {
            return s;
        }
        self.scale(s, 1.0 / parts.len() as f64)
    }

    /// `a / ‖a‖`; fails on near-zero input.
    pub fn normalize(&mut self, a: Var) -> Result<Var> {
        let ai = self.get(a)?;
        let v = &self.nodes[ai].value;
        let norm = sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if !(norm > 1e-12) {
            return Err(Error::DegenerateDirection { norm });
        }
        let out = v.iter().map(|x| x / norm).collect();
        Ok(self.push(out, Op::Normalize { src: ai, norm }))
    }

    /// Rodrigues' formula on a 3-vector, giving a row-major 3×3 matrix.
    pub fn rodrigues(&mut self, v: Var) -> Var {
        let vi = self.ix(v);
        let x = &self.nodes[vi].value;
        assert_eq!(x.len(), 3, "rodrigues takes a 3-vector");
        let out = rodrigues([x[0], x[1], x[2]]).to_vec();
        self.push(out, Op::Rodrigues(vi))
    }

    /// Planar rotation matrix of an angle, row-major `[c, -s, s, c]`.
    pub fn rot2(&mut self, v: Var) -> Var {
        let vi = self.ix(v);
        assert_eq!(self.nodes[vi].value.len(), 1, "rot2 takes a scalar");
        let out = rot2_matrix(self.nodes[vi].value[0]).to_vec();
        self.push(out, Op::Rot2(vi))
    }

    /// `M · A` for constant row-major `n×n` `M` and an `n×k` node `A`.
    pub fn left_matmul(&mut self, m: &[f64], n: usize, a: Var) -> Var {
        let ai = self.ix(a);
        let av = &self.nodes[ai].value;
        assert_eq!(m.len(), n * n, "left_matmul matrix shape");
        assert_eq!(av.len() % n, 0, "left_matmul operand shape");
        let k = av.len() / n;
        let mut out = vec![0.0; n * k];
        for i in 0..n {
            for j in 0..k {
                out[i * k + j] = (0..n).map(|l| m[i * n + l] * av[l * k + j]).sum();
            }
        }
        self.push(out, Op::LeftMatMul { m: m.to_vec(), n, a: ai })
    }

    /// Reverse sweep from a scalar node; returns the gradient with respect to
    /// the flat parameter vector.
    pub fn backward(&self, loss: Var) -> Result<Vec<f64>> {
        Ok(self.backward_full(loss)?.0)
    }

    /// Like [`Tape::backward`] but also returns the adjoint of every node.
    pub fn backward_full(&self, loss: Var) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let li = self.get(loss)?;
        let len = self.nodes[li].value.len();
        if len != 1 {
            return Err(Error::NotScalar { len });
        }
        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        let mut pgrad = vec![0.0; self.num_params];
        adj[li][0] = 1.0;
        for i in (0..=li).rev() {
            if adj[i].iter().all(|g| *g == 0.0) {
                continue;
            }
            let g = core::mem::take(&mut adj[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Const => {}
                Op::Param { offset } => {
                    for (p, gi) in pgrad[*offset..*offset + g.len()].iter_mut().zip(&g) {
                        *p += gi;
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (wv, xv) = (&self.nodes[*w].value, &self.nodes[*x].value);
                    let mut gx = vec![0.0; *cols];
                    {
                        let gw = &mut adj[*w];
                        for r in 0..*rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            let row = &mut gw[r * cols..(r + 1) * cols];
                            for (c, slot) in row.iter_mut().enumerate() {
                                *slot += gr * xv[c];
                            }
                            for (c, acc) in gx.iter_mut().enumerate() {
                                *acc += wv[r * cols + c] * gr;
                            }
                        }
                    }
                    accumulate(&mut adj[*x], &gx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[*a], &g);
                    accumulate(&mut adj[*b], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj[*a], &g);
                    for (s, gi) in adj[*b].iter_mut().zip(&g) {
                        *s -= gi;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    accumulate(&mut adj[*a], &ga);
                    accumulate(&mut adj[*b], &gb);
                }
                Op::Scale(a, c) => {
                    for (s, gi) in adj[*a].iter_mut().zip(&g) {
                        *s += c * gi;
                    }
                }
                Op::AddConst(a) => accumulate(&mut adj[*a], &g),
                Op::Tanh(a) => {
                    for ((s, gi), y) in adj[*a].iter_mut().zip(&g).zip(&node.value) {
                        *s += gi * (1.0 - y * y);
                    }
                }
                Op::Relu(a) => {
                    let av = &self.nodes[*a].value;
                    for ((s, gi), x) in adj[*a].iter_mut().zip(&g).zip(av) {
                        if *x > 0.0 {
                            *s += gi;
                        }
                    }
                }
                Op::Exp(a) => {
                    for ((s, gi), y) in adj[*a].iter_mut().zip(&g).zip(&node.value) {
                        *s += gi * y;
                    }
                }
                Op::Slice { src, start } => {
                    for (s, gi) in adj[*src][*start..*start + g.len()].iter_mut().zip(&g) {
                        *s += gi;
                    }
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let n = self.nodes[*p].value.len();
                        accumulate(&mut adj[*p], &g[at..at + n]);
                        at += n;
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let ga: Vec<f64> = bv.iter().map(|y| g[0] * y).collect();
                    let gb: Vec<f64> = av.iter().map(|x| g[0] * x).collect();
                    accumulate(&mut adj[*a], &ga);
                    accumulate(&mut adj[*b], &gb);
                }
                Op::Sum(a) => {
                    for s in adj[*a].iter_mut() {
                        *s += g[0];
                    }
                }
                Op::SumScalars(parts) => {
                    for p in parts {
                        adj[*p][0] += g[0];
                    }
                }
                Op::Normalize { src, norm } => {
                    // (I − y yᵀ) g / ‖a‖
                    let y = &node.value;
                    let proj: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
                    for ((s, gi), yi) in adj[*src].iter_mut().zip(&g).zip(y) {
                        *s += (gi - proj * yi) / norm;
                    }
                }
                Op::Rodrigues(v) => {
                    let x = &self.nodes[*v].value;
                    let gv = rodrigues_vjp([x[0], x[1], x[2]], &g);
                    accumulate(&mut adj[*v], &gv);
                }
                Op::Rot2(v) => {
                    let y = &node.value;
                    let (c, s) = (y[0], y[2]);
                    adj[*v][0] += -g[0] * s - g[1] * c + g[2] * c - g[3] * s;
                }
                Op::LeftMatMul { m, n, a } => {
                    let k = g.len() / n;
                    let ga = &mut adj[*a];
                    for l in 0..*n {
                        for j in 0..k {
                            let mut acc = 0.0;
                            for i in 0..*n {
                                acc += m[i * n + l] * g[i * k + j];
                            }
                            ga[l * k + j] += acc;
                        }
                    }
                }
            }
            adj[i] = g;
        }
        Ok((pgrad, adj))
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `(θ cos θ − sin θ)/θ³` and `(θ sin θ − 2(1 − cos θ))/θ⁴`, the radial
/// derivatives of the Rodrigues coefficients divided by θ. The quotients lose
/// precision well above the forward threshold, so the series takes over at 1e-2.
fn rodrigues_derivative_coefficients(theta: f64) -> (f64, f64) {
    if theta < 1e-2 {
        let t2 = theta * theta;
        let c1 = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0 + t2 * t2 * t2 / 45360.0;
        let c2 = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0 + t2 * t2 * t2 / 453600.0;
        (c1, c2)
    } else {
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        let t3 = theta * theta * theta;
        ((theta * c - s) / t3, (theta * s - 2.0 * (1.0 - c)) / (t3 * theta))
    }
}

/// Vector-Jacobian product of Rodrigues' formula:
/// `∂R/∂vₖ = C₁ vₖ K + A Eₖ + C₂ vₖ K² + B (Eₖ K + K Eₖ)`.
fn rodrigues_vjp(v: [f64; 3], g: &[f64]) -> [f64; 3] {
    let theta = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    let (a, b) = rodrigues_coefficients(theta);
    let (c1, c2) = rodrigues_derivative_coefficients(theta);
    let k = hat(v);
    let k2 = matmul::<3>(&k, &k);
    let inner = |m: &[f64]| -> f64 { m.iter().zip(g).map(|(x, y)| x * y).sum() };
    let gk = inner(&k);
    let gk2 = inner(&k2[..]);
    let mut out = [0.0; 3];
    for (axis, slot) in out.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let ek = hat(e);
        let ekk = matmul::<3>(&ek, &k);
        let kek = matmul::<3>(&k, &ek);
        let mut sym = [0.0; 9];
        for i in 0..9 {
            sym[i] = ekk[i] + kek[i];
        }
        *slot = c1 * v[axis] * gk + a * inner(&ek) + c2 * v[axis] * gk2 + b * inner(&sym);
    }
    out
}
