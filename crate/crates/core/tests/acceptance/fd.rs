//! Central finite differences against analytic gradients.

use pngan::nn::Module;
use pngan::Tensor;

/// Step sizes tried per entry; the best agreement counts, so a stencil that
/// straddles a kink (ReLU, clipping, |x|) does not mask a correct gradient.
const STEPS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];
/// Gradients smaller than this are compared in absolute terms.
const FLOOR: f64 = 1e-6;

fn rel(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Fourth-order central difference; `f(t)` evaluates at offset `t`.
fn stencil(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Stats {
    pub checked: usize,
    pub max_rel: f64,
}

impl Stats {
    fn push(&mut self, analytic: f64, mut numeric: impl FnMut(f64) -> f64) {
        let best = STEPS
            .iter()
            .map(|&h| rel(analytic, numeric(h)))
            .fold(f64::INFINITY, f64::min);
        self.checked += 1;
        self.max_rel = self.max_rel.max(best);
    }

    pub fn merge(&mut self, other: Stats) {
        self.checked += other.checked;
        self.max_rel = self.max_rel.max(other.max_rel);
    }
}

pub fn grads<M: Module<f64>>(m: &M) -> Vec<Vec<f64>> {
    m.named_params().into_iter().map(|(_, p)| p.grad.clone()).collect()
}

fn nudge<M: Module<f64>>(m: &mut M, pi: usize, j: usize, delta: f64) {
    let mut ps = m.named_params_mut();
    ps[pi].1.value[j] += delta;
}

/// Every parameter entry of `m`; `f` re-evaluates the objective.
pub fn params<M: Module<f64>>(m: &mut M, analytic: &[Vec<f64>], mut f: impl FnMut(&mut M) -> f64) -> Stats {
    let mut s = Stats::default();
    for (pi, g) in analytic.iter().enumerate() {
        for (j, &a) in g.iter().enumerate() {
            s.push(a, |h| {
                stencil(
                    |t| {
                        nudge(m, pi, j, t);
                        let v = f(m);
                        nudge(m, pi, j, -t);
                        v
                    },
                    h,
                )
            });
        }
    }
    s
}

/// Every entry of the input `x`.
pub fn input(x: &Tensor<f64>, analytic: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Stats {
    let mut s = Stats::default();
    let mut probe = x.clone();
    for j in 0..x.data().len() {
        let v = x.data()[j];
        s.push(analytic.data()[j], |h| {
            stencil(
                |t| {
                    probe.data_mut()[j] = v + t;
                    let out = f(&probe);
                    probe.data_mut()[j] = v;
                    out
                },
                h,
            )
        });
    }
    s
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}
