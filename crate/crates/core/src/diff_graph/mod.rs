//! A static, feed-forward differentiation engine.
//!
//! A [`Graph`] is built once with [`GraphBuilder`]: every node names the
//! nodes it reads from, and a node can only read from nodes created before
//! it, so every graph is acyclic and already in topological order. Shapes
//! are checked while building, so a graph that builds will not fail with a
//! shape error at run time.
//!
//! [`Graph::forward`] evaluates every node and keeps the values.
//! [`Graph::backward`] then walks the nodes in reverse, calling each op's
//! vector-Jacobian product, and returns the gradient with respect to the
//! graph input. [`Graph::jvp`] pushes a tangent forward through the same
//! cached point, which gives the independent route used by the adjoint
//! (dot-product) tests.

pub(crate) mod check;
mod ops;
mod tensor;

use std::fmt;

pub use check::{
    dot_product_test, gradient_check, gradient_check_report, gradient_check_with, CoordinateCheck, GradCheckOptions,
    GradCheckReport,
};
pub use ops::{Identity, Reshape, WeightedSum};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// A differentiable operation with a fixed number of inputs.
///
/// `backward` and `jvp` receive the inputs and output recorded by the
/// forward pass they linearize around. Implementations must not depend on
/// any other state.
pub trait Op: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Validates the input shapes and returns the output shape.
    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>>;

    fn forward(&self, inputs: &[&Tensor]) -> Tensor;

    /// Vector-Jacobian product: one gradient per input, each shaped like that input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, upstream: &Tensor) -> Vec<Tensor>;

    /// Jacobian-vector product of the output for the given input tangents.
    fn jvp(&self, inputs: &[&Tensor], output: &Tensor, tangents: &[&Tensor]) -> Tensor;

    /// False when a kink or branch cut lies between the input points `a`
    /// and `b`. Ops that are smooth everywhere keep the default.
    fn smooth_between(&self, a: &[&Tensor], b: &[&Tensor]) -> bool {
        let _ = (a, b);
        true
    }
}

/// Handle to a node inside one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node {
    op: Option<Box<dyn Op>>,
    inputs: Vec<NodeId>,
    shape: Vec<usize>,
}

pub(crate) fn expect_arity(op: &str, inputs: &[&[usize]], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::Graph(format!("{op} takes {n} input(s), got {}", inputs.len())));
    }
    Ok(())
}

/// Incrementally assembles a [`Graph`].
#[derive(Debug)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
}

impl GraphBuilder {
    pub fn new(input_shape: &[usize]) -> Self {
        GraphBuilder {
            nodes: vec![Node {
                op: None,
                inputs: Vec::new(),
                shape: input_shape.to_vec(),
            }],
        }
    }

    pub fn input(&self) -> NodeId {
        NodeId(0)
    }

    pub fn shape(&self, node: NodeId) -> &[usize] {
        &self.nodes[node.0].shape
    }

    /// Appends `op` reading from `inputs`.
    pub fn push(&mut self, op: impl Op + 'static, inputs: &[NodeId]) -> Result<NodeId> {
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::Graph(format!(
                "{} reads node {} which does not exist yet",
                op.name(),
                bad.0
            )));
        }
        let shapes: Vec<&[usize]> = inputs.iter().map(|id| self.shape(*id)).collect();
        let shape = op
            .output_shape(&shapes)
            .map_err(|e| Error::Graph(format!("{}: {e}", op.name())))?;
        self.nodes.push(Node {
            op: Some(Box::new(op)),
            inputs: inputs.to_vec(),
            shape,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn build(self, output: NodeId) -> Result<Graph> {
        if self.nodes.len() < 2 {
            return Err(Error::Graph("graph has no operations".into()));
        }
        if output.0 >= self.nodes.len() {
            return Err(Error::Graph(format!("output node {} does not exist", output.0)));
        }
        let n = self.nodes.len();
        Ok(Graph {
            nodes: self.nodes,
            output,
            values: vec![None; n],
        })
    }
}

/// A built graph plus the values cached by its most recent forward pass.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    output: NodeId,
    values: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn input_shape(&self) -> &[usize] {
        &self.nodes[0].shape
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn shape(&self, node: NodeId) -> &[usize] {
        &self.nodes[node.0].shape
    }

    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes
            .iter()
            .filter_map(|n| n.op.as_ref().map(|op| op.name()))
            .collect()
    }

    /// Evaluates every node and caches the results for `backward`/`jvp`.
    pub fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        if input.shape() != self.input_shape() {
            return Err(Error::Shape(format!(
                "graph expects input {:?}, got {:?}",
                self.input_shape(),
                input.shape()
            )));
        }
        self.values.iter_mut().for_each(|v| *v = None);
        self.values[0] = Some(input.clone());
        for i in 1..self.nodes.len() {
            let node = &self.nodes[i];
            let args: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|id| self.values[id.0].as_ref().expect("topological order"))
                .collect();
            let out = node.op.as_ref().expect("non-input node").forward(&args);
            debug_assert_eq!(
                out.shape(),
                node.shape.as_slice(),
                "{}",
                node.op.as_ref().unwrap().name()
            );
            self.values[i] = Some(out);
        }
        Ok(self.values[self.output.0].as_ref().expect("just computed"))
    }

    /// Every cached value from the last forward pass.
    pub(crate) fn snapshot(&self) -> Vec<Option<Tensor>> {
        self.values.clone()
    }

    /// Whether every op is smooth between its inputs in `other` (an earlier
    /// [`snapshot`](Self::snapshot)) and in the current forward pass.
    pub(crate) fn smooth_since(&self, other: &[Option<Tensor>]) -> bool {
        self.nodes.iter().enumerate().skip(1).all(|(i, node)| {
            let pick = |vals: &'_ [Option<Tensor>]| -> Option<Vec<Tensor>> {
                node.inputs.iter().map(|id| vals[id.0].clone()).collect()
            };
            let (Some(a), Some(b)) = (pick(other), pick(&self.values)) else {
                return true;
            };
            debug_assert!(i < self.values.len());
            let a: Vec<&Tensor> = a.iter().collect();
            let b: Vec<&Tensor> = b.iter().collect();
            node.op.as_ref().expect("non-input node").smooth_between(&a, &b)
        })
    }

    /// Cached value of `node` from the last forward pass.
    pub fn value(&self, node: NodeId) -> Option<&Tensor> {
        self.values.get(node.0).and_then(|v| v.as_ref())
    }

    fn ensure_forwarded(&self) -> Result<()> {
        if self.values[0].is_none() {
            return Err(Error::State("backward or jvp called before forward".into()));
        }
        Ok(())
    }

    /// Gradient of `⟨output, upstream⟩` with respect to the graph input.
    pub fn backward(&self, upstream: &Tensor) -> Result<Tensor> {
        self.backward_from(&[(self.output, upstream)])
    }

    /// Gradient of `Σ ⟨value(node), seed⟩` over the given seeds.
    pub fn backward_from(&self, seeds: &[(NodeId, &Tensor)]) -> Result<Tensor> {
        self.ensure_forwarded()?;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (node, seed) in seeds {
            if seed.shape() != self.shape(*node) {
                return Err(Error::Shape(format!(
                    "upstream gradient {:?} does not match node shape {:?}",
                    seed.shape(),
                    self.shape(*node)
                )));
            }
            accumulate(&mut grads[node.0], (*seed).clone());
        }
        for i in (1..self.nodes.len()).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            let args: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|id| self.values[id.0].as_ref().expect("forward ran"))
                .collect();
            let out = self.values[i].as_ref().expect("forward ran");
            let input_grads = node.op.as_ref().expect("op node").backward(&args, out, &upstream);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (id, g) in node.inputs.iter().zip(input_grads) {
                accumulate(&mut grads[id.0], g);
            }
        }
        Ok(grads[0].take().unwrap_or_else(|| Tensor::zeros(self.input_shape())))
    }

    /// Directional derivative of the output at the cached point along `tangent`.
    pub fn jvp(&self, tangent: &Tensor) -> Result<Tensor> {
        self.ensure_forwarded()?;
        if tangent.shape() != self.input_shape() {
            return Err(Error::Shape(format!(
                "tangent {:?} does not match input {:?}",
                tangent.shape(),
                self.input_shape()
            )));
        }
        let mut tangents: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        tangents[0] = Some(tangent.clone());
        for i in 1..=self.output.0 {
            let node = &self.nodes[i];
            let args: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|id| self.values[id.0].as_ref().expect("forward ran"))
                .collect();
            let dargs: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|id| tangents[id.0].as_ref().expect("topological order"))
                .collect();
            let out = self.values[i].as_ref().expect("forward ran");
            tangents[i] = Some(node.op.as_ref().expect("op node").jvp(&args, out, &dargs));
        }
        Ok(tangents[self.output.0].take().expect("computed"))
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}
