//! Fully connected tanh network with hand-written backpropagation.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    /// `in × out`.
    pub w: Array2<T>,
    pub b: Array1<T>,
}

/// Hidden layers use `tanh`, the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Same shapes as the network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads<T> {
    pub layers: Vec<Dense<T>>,
}

/// Activations kept from a forward pass: `acts[0]` is the input,
/// `acts[l]` the output of hidden layer `l`.
pub struct ForwardCache<T> {
    acts: Vec<Array2<T>>,
    pub output: Array2<T>,
}

impl<T: Scalar> Mlp<T> {
    /// Uniform Glorot initialisation. With `zero_output` the last layer starts
    /// at zero, so every output is 0 before training.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R, zero_output: bool) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, io)| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = if zero_output && l == last {
                    Array2::zeros((fan_in, fan_out))
                } else {
                    Array2::from_shape_simple_fn((fan_in, fan_out), || T::lit(rng.gen_range(-bound..bound)))
                };
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().expect("non-empty").w.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Rows of `x` are samples.
    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        self.forward_cached(x).output
    }

    pub fn forward_cached(&self, x: &Array2<T>) -> ForwardCache<T> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            acts.push(h);
            if l < last {
                z.mapv_inplace(|v| v.tanh());
            }
            h = z;
        }
        ForwardCache { acts, output: h }
    }

    /// Parameter gradients given `dL/d output` for the cached batch.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Array2<T>) -> MlpGrads<T> {
        let mut delta = grad_out.clone();
        let mut grads: Vec<Dense<T>> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let a = &cache.acts[l];
            grads.push(Dense {
                w: a.t().dot(&delta),
                b: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].w.t());
                back.zip_mut_with(a, |d, &h| *d *= T::one() - h * h);
                delta = back;
            }
        }
        grads.reverse();
        MlpGrads { layers: grads }
    }

    pub fn zeros_like(&self) -> MlpGrads<T> {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    /// Parameters in layer order, weights (row-major) before biases.
    pub fn flat(&self) -> Vec<T> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, values: &[T]) {
        assert_eq!(values.len(), self.param_count(), "flat parameter length");
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut()
                .chain(l.b.iter_mut())
                .for_each(|p| *p = it.next().expect("length checked"));
        }
    }

    /// `self ← (1−τ)·self + τ·src`.
    pub fn polyak(&mut self, src: &Mlp<T>, tau: T) {
        let keep = T::one() - tau;
        for (d, s) in self.layers.iter_mut().zip(&src.layers) {
            d.w.zip_mut_with(&s.w, |a, &b| *a = keep * *a + tau * b);
            d.b.zip_mut_with(&s.b, |a, &b| *a = keep * *a + tau * b);
        }
    }

    /// Index ranges of each layer inside [`Mlp::flat`].
    pub fn layer_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.layers
            .iter()
            .map(|l| {
                let n = l.w.len() + l.b.len();
                start += n;
                start - n..start
            })
            .collect()
    }
}

fn flatten<T: Scalar>(layers: &[Dense<T>]) -> Vec<T> {
    layers
        .iter()
        .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
        .collect()
}

impl<T: Scalar> MlpGrads<T> {
    pub fn flat(&self) -> Vec<T> {
        flatten(&self.layers)
    }

    pub fn add_assign(&mut self, other: &MlpGrads<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, k: T) {
        for l in &mut self.layers {
            l.w *= k;
            l.b *= k;
        }
    }
}

/// Adam over every parameter of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: i32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize, lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            t: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        }
    }

    /// One descent step on flat parameters.
    pub fn step_flat(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grads: &MlpGrads<T>) {
        let mut p = net.flat();
        self.step_flat(&mut p, &grads.flat());
        net.set_flat(&p);
    }
}
