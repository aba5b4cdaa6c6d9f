use crate::diff_graph::{expect_arity, Op, Tensor};
use crate::error::{Error, Result};

/// `filters × filters` inner products of activations over every non-filter position.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: Tensor,
}

impl GramMatrix {
    pub fn filters(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values.data()[a * self.filters() + b]
    }
}

/// Splits an activation tensor into `(positions, filters)`; the last axis holds filters.
fn as_matrix(shape: &[usize]) -> (usize, usize) {
    let c = *shape.last().unwrap_or(&1);
    let n = shape.iter().product::<usize>().checked_div(c).unwrap_or(0);
    (n, c)
}

/// `out (c×c) = aᵀ·b / scale` for `a`, `b` of `n × c`.
fn cross(a: &[f64], b: &[f64], n: usize, c: usize, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; c * c];
    // SAFETY: a and b hold n·c values; out holds c·c.
    unsafe {
        matrixmultiply::dgemm(
            c,
            n,
            c,
            1.0 / scale,
            a.as_ptr(),
            1,
            c as isize,
            b.as_ptr(),
            c as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            c as isize,
            1,
        );
    }
    out
}

/// `G = AᵀA / (F·T)` for activations `A` viewed as `T × F`: `F` filters on the
/// last axis, every other axis folded into `T`.
pub fn gram(activations: &Tensor) -> Result<GramMatrix> {
    let (n, c) = as_matrix(activations.shape());
    if n == 0 || c == 0 {
        return Err(Error::Shape(format!(
            "gram needs at least one position and one filter, got {:?}",
            activations.shape()
        )));
    }
    Ok(gram_unchecked(activations.data(), n, c))
}

/// Rows of `a` (`n × c`) in lexicographic order, so that any row permutation
/// of the input yields the same matrix and therefore the same rounding.
fn canonical_rows(a: &[f64], n: usize, c: usize) -> Vec<f64> {
    let row = |i: usize| &a[i * c..(i + 1) * c];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| {
        row(i)
            .iter()
            .zip(row(j))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.iter().flat_map(|&i| row(i).iter().copied()).collect()
}

fn gram_unchecked(a: &[f64], n: usize, c: usize) -> GramMatrix {
    let sorted = canonical_rows(a, n, c);
    let mut g = cross(&sorted, &sorted, n, c, (n * c) as f64);
    // exact symmetry
    for i in 0..c {
        for j in i + 1..c {
            g[j * c + i] = g[i * c + j];
        }
    }
    GramMatrix {
        values: Tensor::from_parts(vec![c, c], g),
    }
}

/// Mean squared difference `Σ(x − c)² / N`.
pub fn content_loss(x: &Tensor, target: &Tensor) -> Result<f64> {
    if x.shape() != target.shape() {
        return Err(Error::Parameter(format!(
            "content activations {:?} and target {:?} differ in shape",
            x.shape(),
            target.shape()
        )));
    }
    Ok(squared_distance(x.data(), target.data()) / x.len() as f64)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean over taps of `Σ(G_x − G_s)² / F²`. Only the filter counts must agree;
/// the number of time steps may differ.
pub fn style_loss(x_acts: &[&Tensor], targets: &[GramMatrix]) -> Result<f64> {
    if x_acts.len() != targets.len() || targets.is_empty() {
        return Err(Error::Parameter(format!(
            "{} style activations for {} target grams",
            x_acts.len(),
            targets.len()
        )));
    }
    let mut sum = 0.0;
    for (a, t) in x_acts.iter().zip(targets) {
        let g = gram(a)?;
        if g.filters() != t.filters() {
            return Err(Error::Parameter(format!(
                "style tap has {} filters, target gram has {}",
                g.filters(),
                t.filters()
            )));
        }
        sum += gram_distance(&g, t);
    }
    Ok(sum / targets.len() as f64)
}

fn gram_distance(g: &GramMatrix, t: &GramMatrix) -> f64 {
    let f = g.filters() as f64;
    squared_distance(g.values.data(), t.values.data()) / (f * f)
}

/// Graph op: content loss against a fixed target, output `[1]`.
#[derive(Debug, Clone)]
pub struct ContentLossOp {
    target: Tensor,
}

impl ContentLossOp {
    pub fn new(target: Tensor) -> Self {
        ContentLossOp { target }
    }
}

impl Op for ContentLossOp {
    fn name(&self) -> &'static str {
        "content_loss"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        if inputs[0] != self.target.shape() {
            return Err(Error::Shape(format!(
                "content tap {:?} does not match target {:?}",
                inputs[0],
                self.target.shape()
            )));
        }
        Ok(vec![1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        Tensor::scalar(squared_distance(inputs[0].data(), self.target.data()) / self.target.len() as f64)
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let s = 2.0 * upstream.data()[0] / self.target.len() as f64;
        let g = inputs[0]
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(x, c)| s * (x - c))
            .collect();
        vec![Tensor::from_parts(inputs[0].shape().to_vec(), g)]
    }

    fn jvp(&self, inputs: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        let d: f64 = inputs[0]
            .data()
            .iter()
            .zip(self.target.data())
            .zip(tangents[0].data())
            .map(|((x, c), v)| (x - c) * v)
            .sum();
        Tensor::scalar(2.0 * d / self.target.len() as f64)
    }
}

/// Graph op: `Σ(G(x) − G_target)² / F²`, output `[1]`.
#[derive(Debug, Clone)]
pub struct StyleLossOp {
    target: GramMatrix,
}

impl StyleLossOp {
    pub fn new(target: GramMatrix) -> Self {
        StyleLossOp { target }
    }

    /// `∂L/∂G = 2(G − T)/F²`
    fn gram_gradient(&self, a: &Tensor) -> (Vec<f64>, usize, usize) {
        let (n, c) = as_matrix(a.shape());
        let g = gram_unchecked(a.data(), n, c);
        let f2 = (c * c) as f64;
        let d = g
            .values
            .data()
            .iter()
            .zip(self.target.values.data())
            .map(|(g, t)| 2.0 * (g - t) / f2)
            .collect();
        (d, n, c)
    }
}

impl Op for StyleLossOp {
    fn name(&self) -> &'static str {
        "style_loss"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        let (n, c) = as_matrix(inputs[0]);
        if n == 0 || c != self.target.filters() {
            return Err(Error::Shape(format!(
                "style tap {:?} does not match a {}-filter gram",
                inputs[0],
                self.target.filters()
            )));
        }
        Ok(vec![1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let (n, c) = as_matrix(inputs[0].shape());
        Tensor::scalar(gram_distance(&gram_unchecked(inputs[0].data(), n, c), &self.target))
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let a = inputs[0];
        let (d, n, c) = self.gram_gradient(a);
        // ∂L/∂A = A·(D + Dᵀ)/(F·T), D symmetric
        let scale = 2.0 * upstream.data()[0] / (n * c) as f64;
        let mut g = vec![0.0; n * c];
        // SAFETY: a holds n·c values, d holds c·c, g holds n·c.
        unsafe {
            matrixmultiply::dgemm(
                n,
                c,
                c,
                scale,
                a.data().as_ptr(),
                c as isize,
                1,
                d.as_ptr(),
                c as isize,
                1,
                0.0,
                g.as_mut_ptr(),
                c as isize,
                1,
            );
        }
        vec![Tensor::from_parts(a.shape().to_vec(), g)]
    }

    fn jvp(&self, inputs: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        let (d, n, c) = self.gram_gradient(inputs[0]);
        // dG = (dAᵀA + AᵀdA)/(F·T)
        let scale = (n * c) as f64;
        let left = cross(tangents[0].data(), inputs[0].data(), n, c, scale);
        let right = cross(inputs[0].data(), tangents[0].data(), n, c, scale);
        let dl = d
            .iter()
            .zip(left.iter().zip(&right))
            .map(|(d, (l, r))| d * (l + r))
            .sum();
        Tensor::scalar(dl)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::diff_graph::{dot_product_test, gradient_check, GraphBuilder};

    fn random(shape: &[usize], seed: u64) -> Tensor {
        crate::diff_graph::check::random_like(shape, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn gram_of_identity() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(gram(&a).unwrap().values.data(), &[0.25, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn gram_matches_double_loop() {
        // activations as 5 time steps × 3 filters
        let a = random(&[5, 3], 1);
        let g = gram(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..5).map(|t| a.data()[t * 3 + i] * a.data()[t * 3 + j]).sum();
                assert!((g.get(i, j) - s / 15.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_folds_height_into_time() {
        let a = random(&[4, 3, 2], 2);
        let flat = a.clone().reshaped(vec![12, 2]).unwrap();
        assert_eq!(gram(&a).unwrap(), gram(&flat).unwrap());
    }

    #[test]
    fn content_loss_examples() {
        let c = random(&[3, 4], 3);
        assert_eq!(content_loss(&c, &c).unwrap(), 0.0);
        let shifted = c.map(|v| v + 1.0);
        assert!((content_loss(&shifted, &c).unwrap() - 1.0).abs() < 1e-12);
        assert!(content_loss(&c, &random(&[4, 3], 3)).is_err());
    }

    #[test]
    fn style_loss_examples() {
        let a = random(&[6, 2], 4);
        let g = gram(&a).unwrap();
        assert_eq!(style_loss(&[&a], std::slice::from_ref(&g)).unwrap(), 0.0);

        let shifted = GramMatrix {
            values: g.values.map(|v| v - 0.1),
        };
        assert!((style_loss(&[&a], &[shifted]).unwrap() - 0.01).abs() < 1e-12);

        let wide = gram(&random(&[6, 3], 5)).unwrap();
        assert!(matches!(style_loss(&[&a], &[wide]), Err(Error::Parameter(_))));
        // time dims may differ
        let longer = gram(&random(&[11, 2], 6)).unwrap();
        assert!(style_loss(&[&a], &[longer]).unwrap() > 0.0);
    }

    #[test]
    fn loss_ops_pass_adjoint_and_gradient_checks() {
        let x = random(&[7, 3, 4], 7);
        let target = random(&[7, 3, 4], 8);
        let target_gram = gram(&random(&[9, 4], 9)).unwrap();
        let content = ContentLossOp::new(target.clone());
        let style = StyleLossOp::new(target_gram.clone());
        assert!(dot_product_test(&content, &[&x], 1) < 1e-8);
        assert!(dot_product_test(&style, &[&x], 2) < 1e-8);

        for op in [0, 1] {
            let mut b = GraphBuilder::new(&[7, 3, 4]);
            let i = b.input();
            let out = if op == 0 {
                b.push(content.clone(), &[i]).unwrap()
            } else {
                b.push(style.clone(), &[i]).unwrap()
            };
            let mut g = b.build(out).unwrap();
            let err = gradient_check(&mut g, &x, 1e-5).unwrap();
            assert!(err < 1e-6, "op {op}: {err}");
        }
    }

    #[test]
    fn content_gradient_closed_form() {
        let x = random(&[10], 10);
        let c = random(&[10], 11);
        let op = ContentLossOp::new(c.clone());
        let out = op.forward(&[&x]);
        let g = op.backward(&[&x], &out, &Tensor::scalar(1.0));
        for k in 0..10 {
            let expect = 2.0 * (x.data()[k] - c.data()[k]) / 10.0;
            assert!((g[0].data()[k] - expect).abs() < 1e-15);
        }
    }
}
