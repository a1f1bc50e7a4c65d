//! Reverse-mode differentiation over a recorded tape of matrix ops.
//!
//! Every value is viewed as a `rows × cols` matrix (vectors are columns).

use super::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T: Real> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `[m,n] + [m,1]` broadcast along columns.
    AddColBias(Var, Var),
    /// `[m,1]` repeated to `n` columns.
    BroadcastCols(Var),
    ConcatRows(Var, Var),
    Relu(Var),
    MulConst(Var, Tensor<T>),
    Scale(Var, T),
    /// Softmax over every entry of the input.
    SoftmaxAll(Var),
    Transpose(Var),
    /// Cross-entropy of a logit column against a target index.
    CrossEntropy(Var, usize),
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
}

#[derive(Default)]
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        value.debug_check_finite();
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_col_bias(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        let (m, n) = (x.rows(), x.cols());
        assert_eq!((b.rows(), b.cols()), (m, 1), "bias must be a column of {m}");
        let v = Tensor::from_fn(&[m, n], |i| x.data()[i] + b.data()[i / n]);
        self.push(v, Op::AddColBias(a, bias))
    }

    pub fn broadcast_cols(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.cols(), 1, "broadcast_cols needs a column");
        let v = Tensor::from_fn(&[x.rows(), n], |i| x.data()[i / n]);
        self.push(v, Op::BroadcastCols(a))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.cols(), "concat_rows column mismatch");
        let mut data = x.data().to_vec();
        data.extend_from_slice(y.data());
        let v = Tensor::new(&[x.rows() + y.rows(), x.cols()], data);
        self.push(v, Op::ConcatRows(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(T::zero()));
        self.push(v, Op::Relu(a))
    }

    /// Elementwise product with a constant (no gradient to the constant).
    pub fn mul_const(&mut self, a: Var, c: Tensor<T>) -> Var {
        let v = self.value(a).zip(&c, |x, y| x * y);
        self.push(v, Op::MulConst(a, c))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn softmax_all(&mut self, a: Var) -> Var {
        let v = softmax(self.value(a));
        self.push(v, Op::SoftmaxAll(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let x = self.value(logits);
        assert!(target < x.len(), "target {target} out of range for {} classes", x.len());
        let loss = log_sum_exp(x.data()) - x.data()[target];
        self.push(Tensor::new(&[1], vec![loss]), Op::CrossEntropy(logits, target))
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Gradients<T> {
        assert_eq!(self.value(output).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::full(self.value(output).shape(), T::one()));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut acc = |v: Var, d: Tensor<T>| match &mut grads[v.0] {
                Some(e) => e.add_assign(&d),
                slot @ None => *slot = Some(d.reshape(self.nodes[v.0].value.shape())),
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(*a, g.matmul(&bv.transpose()));
                    acc(*b, av.transpose().matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::AddColBias(a, b) => {
                    let (m, n) = (g.rows(), g.cols());
                    let db = Tensor::from_fn(&[m, 1], |r| {
                        g.data()[r * n..(r + 1) * n].iter().fold(T::zero(), |s, &x| s + x)
                    });
                    acc(*a, g.clone());
                    acc(*b, db);
                }
                Op::BroadcastCols(a) => {
                    let (m, n) = (g.rows(), g.cols());
                    let da = Tensor::from_fn(&[m, 1], |r| {
                        g.data()[r * n..(r + 1) * n].iter().fold(T::zero(), |s, &x| s + x)
                    });
                    acc(*a, da);
                }
                Op::ConcatRows(a, b) => {
                    let split = self.value(*a).len();
                    let n = g.cols();
                    let (ra, rb) = (self.value(*a).rows(), self.value(*b).rows());
                    acc(*a, Tensor::new(&[ra, n], g.data()[..split].to_vec()));
                    acc(*b, Tensor::new(&[rb, n], g.data()[split..].to_vec()));
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    acc(*a, g.zip(x, |d, x| if x > T::zero() { d } else { T::zero() }));
                }
                Op::MulConst(a, c) => acc(*a, g.zip(c, |d, c| d * c)),
                Op::Scale(a, s) => acc(*a, g.map(|d| d * *s)),
                Op::SoftmaxAll(a) => {
                    let y = &node.value;
                    let dot = g.data().iter().zip(y.data()).fold(T::zero(), |s, (&d, &p)| s + d * p);
                    acc(*a, g.zip(y, |d, p| p * (d - dot)));
                }
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::CrossEntropy(a, target) => {
                    let mut p = softmax(self.value(*a));
                    p.data_mut()[*target] = p.data()[*target] - T::one();
                    let d = g.data()[0];
                    acc(*a, p.map(|x| x * d));
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a node; zeros when the output does not depend on it.
    pub fn of(&self, v: Var, graph: &Graph<T>) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape()))
    }
}

fn log_sum_exp<T: Real>(x: &[T]) -> T {
    let m = x.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    m + x.iter().fold(T::zero(), |s, &v| s + (v - m).exp()).ln()
}

pub fn softmax<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let m = x.data().iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e = x.map(|v| (v - m).exp());
    let z = e.sum();
    e.map(|v| v / z)
}
