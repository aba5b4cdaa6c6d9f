use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Graph, Op, Tensor};
use crate::error::{Error, Result};

/// Settings for [`gradient_check_with`].
#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Number of input coordinates probed; all of them when the input is smaller.
    pub coordinates: usize,
    pub seed: u64,
    /// Replace a coordinate by another random one when its two probes lie on
    /// opposite sides of a kink or branch cut, where a difference quotient
    /// does not approximate the derivative.
    pub skip_nonsmooth: bool,
    /// Replace a coordinate by another random one when `|f(x+h) − f(x−h)|`
    /// is smaller than this multiple of the float64 rounding of `f`. Zero
    /// keeps every coordinate.
    pub min_signal_to_rounding: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            coordinates: 64,
            seed: 0,
            skip_nonsmooth: false,
            min_signal_to_rounding: 0.0,
        }
    }
}

/// Largest relative error between backward and central differences over
/// 64 random input coordinates.
pub fn gradient_check(graph: &mut Graph, input: &Tensor, h: f64) -> Result<f64> {
    gradient_check_with(
        graph,
        input,
        &GradCheckOptions {
            h,
            ..GradCheckOptions::default()
        },
    )
}

/// Compares `graph.backward` against central differences of `⟨output, r⟩`,
/// where `r` is 1 for scalar outputs and a fixed random direction otherwise.
///
/// The error per coordinate is `|a − b| / max(|a|, |b|, 1e-8)`. The graph's
/// caches are left at `input` when this returns.
pub fn gradient_check_with(graph: &mut Graph, input: &Tensor, opts: &GradCheckOptions) -> Result<f64> {
    Ok(gradient_check_report(graph, input, opts)?.worst())
}

/// Analytic and numeric derivative at one probed coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `ε·(|f(x+h)| + |f(x−h)|) / 2h`: the size of the difference quotient
    /// that float64 rounding of `f` alone can produce.
    pub rounding: f64,
}

impl CoordinateCheck {
    /// `|a − n| / max(|a|, |n|, 1e-8)`
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(1e-8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: Vec<CoordinateCheck>,
    /// Coordinates replaced because a probe pair straddled a kink.
    pub skipped_nonsmooth: usize,
    /// Coordinates replaced because the difference was lost in rounding.
    pub skipped_unresolved: usize,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.coordinates
            .iter()
            .map(CoordinateCheck::relative_error)
            .fold(0.0, f64::max)
    }

    pub fn worst_coordinate(&self) -> Option<&CoordinateCheck> {
        self.coordinates
            .iter()
            .max_by(|a, b| a.relative_error().total_cmp(&b.relative_error()))
    }
}

/// Like [`gradient_check_with`], keeping every probed coordinate.
///
/// Coordinates are visited in a random order until `opts.coordinates` of
/// them have been accepted or the input is exhausted.
pub fn gradient_check_report(graph: &mut Graph, input: &Tensor, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    if !(opts.h > 0.0 && opts.h.is_finite()) {
        return Err(Error::Parameter(format!(
            "finite-difference step must be > 0, got {}",
            opts.h
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let out_shape = graph.forward(input)?.shape().to_vec();
    let direction = if out_shape.iter().product::<usize>() == 1 {
        Tensor::zeros(&out_shape).map(|_| 1.0)
    } else {
        random_like(&out_shape, &mut rng)
    };
    let analytic = graph.backward(&direction)?;

    let n = input.len();
    let order = index::sample(&mut rng, n, n).into_vec();
    let mut probe = input.clone();
    let mut report = GradCheckReport {
        coordinates: Vec::with_capacity(opts.coordinates.min(n)),
        skipped_nonsmooth: 0,
        skipped_unresolved: 0,
    };
    for i in order {
        if report.coordinates.len() >= opts.coordinates {
            break;
        }
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + opts.h;
        let plus = graph.forward(&probe)?.clone();
        let snapshot = opts.skip_nonsmooth.then(|| graph.snapshot());
        probe.data_mut()[i] = orig - opts.h;
        let minus = graph.forward(&probe)?;
        probe.data_mut()[i] = orig;

        // Differencing before reducing keeps unchanged outputs from adding rounding.
        let mut diff = 0.0;
        let mut scale = 0.0;
        for ((p, m), u) in plus.data().iter().zip(minus.data()).zip(direction.data()) {
            diff += (p - m) * u;
            scale += (p.abs() + m.abs()) * u.abs();
        }
        if let Some(snapshot) = snapshot {
            if !graph.smooth_since(&snapshot) {
                report.skipped_nonsmooth += 1;
                continue;
            }
        }
        let rounding = f64::EPSILON * scale / (2.0 * opts.h);
        if diff.abs() < opts.min_signal_to_rounding * f64::EPSILON * scale {
            report.skipped_unresolved += 1;
            continue;
        }
        report.coordinates.push(CoordinateCheck {
            index: i,
            analytic: analytic.data()[i],
            numeric: diff / (2.0 * opts.h),
            rounding,
        });
    }
    graph.forward(input)?;
    Ok(report)
}

pub(crate) fn random_like(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Adjoint consistency of one op at the point `inputs`:
/// `|⟨J·v, u⟩ − Σᵢ⟨vᵢ, Jᵢᵀ·u⟩|` relative to the larger side, for random `u`, `v`.
pub fn dot_product_test(op: &dyn Op, inputs: &[&Tensor], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let output = op.forward(inputs);
    let tangents: Vec<Tensor> = inputs.iter().map(|t| random_like(t.shape(), &mut rng)).collect();
    let tangent_refs: Vec<&Tensor> = tangents.iter().collect();
    let u = random_like(output.shape(), &mut rng);
    let lhs = op.jvp(inputs, &output, &tangent_refs).dot(&u);
    let rhs: f64 = op
        .backward(inputs, &output, &u)
        .iter()
        .zip(&tangents)
        .map(|(g, v)| g.dot(v))
        .sum();
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff_graph::{GraphBuilder, Identity, Reshape};

    #[test]
    fn zero_step_is_rejected() {
        let mut b = GraphBuilder::new(&[3]);
        let x = b.input();
        let y = b.push(Identity, &[x]).unwrap();
        let mut g = b.build(y).unwrap();
        let input = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert!(matches!(gradient_check(&mut g, &input, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn linear_graph_checks_to_rounding_level() {
        let mut b = GraphBuilder::new(&[2, 50]);
        let x = b.input();
        let r = b.push(Reshape::new(vec![100]), &[x]).unwrap();
        let mut g = b.build(r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random_like(&[2, 50], &mut rng);
        for h in [1e-3, 1e-5, 0.5] {
            let err = gradient_check(&mut g, &input, h).unwrap();
            assert!(err < 1e-7, "h={h}: {err}");
        }
    }
}
