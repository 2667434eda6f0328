//! Layers of the ChromaNet with hand-written backward passes.
//!
//! Activations are `[channel][time][freq]` so that every inner loop runs
//! along the 84 frequency rows, which no layer ever resamples.

use rand::Rng;

use super::real::{axpy, dot, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub c: usize,
    pub t: usize,
    pub f: usize,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(c: usize, t: usize, f: usize) -> Self {
        Tensor {
            c,
            t,
            f,
            data: vec![F::zero(); c * t * f],
        }
    }

    pub fn plane_len(&self) -> usize {
        self.t * self.f
    }

    pub fn plane(&self, c: usize) -> &[F] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [F] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Fills `params` uniformly with variance `1 / fan_in`.
pub(crate) fn init_uniform<F: Real, R: Rng + ?Sized>(params: &mut [F], fan_in: usize, rng: &mut R) {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    for p in params {
        *p = F::of(rng.gen_range(-bound..bound));
    }
}

/// Convolution along time only: kernel `stride` frames, stride `stride`,
/// past-the-end frames replicate the last frame.
#[derive(Debug, Clone)]
pub(crate) struct TimeConv {
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub w: usize,
    pub b: usize,
}

impl TimeConv {
    pub fn new(cin: usize, cout: usize, stride: usize, offset: &mut usize) -> Self {
        let w = *offset;
        let b = w + cout * cin * stride;
        *offset = b + cout;
        TimeConv {
            cin,
            cout,
            stride,
            w,
            b,
        }
    }

    pub fn init<F: Real, R: Rng + ?Sized>(&self, p: &mut [F], rng: &mut R) {
        let fan_in = self.cin * self.stride;
        init_uniform(&mut p[self.w..self.b], fan_in, rng);
        p[self.b..self.b + self.cout].fill(F::zero());
    }

    fn src(&self, t_out: usize, j: usize, t_in: usize) -> usize {
        (t_out * self.stride + j).min(t_in - 1)
    }

    pub fn forward<F: Real>(&self, p: &[F], x: &Tensor<F>) -> Tensor<F> {
        let t_out = x.t.div_ceil(self.stride);
        let mut y = Tensor::zeros(self.cout, t_out, x.f);
        let f = x.f;
        for o in 0..self.cout {
            let bias = p[self.b + o];
            let yo = y.plane_mut(o);
            yo.fill(bias);
            for i in 0..self.cin {
                let xi = x.plane(i);
                for j in 0..self.stride {
                    let w = p[self.w + (o * self.cin + i) * self.stride + j];
                    for t in 0..t_out {
                        let s = self.src(t, j, x.t);
                        axpy(w, &xi[s * f..(s + 1) * f], &mut yo[t * f..(t + 1) * f]);
                    }
                }
            }
        }
        y
    }

    pub fn backward<F: Real>(
        &self,
        p: &[F],
        x: &Tensor<F>,
        gy: &Tensor<F>,
        grads: &mut [F],
        need_input_grad: bool,
    ) -> Option<Tensor<F>> {
        let f = x.f;
        let mut gx = need_input_grad.then(|| Tensor::zeros(x.c, x.t, x.f));
        for o in 0..self.cout {
            let go = gy.plane(o);
            grads[self.b + o] += go.iter().copied().sum::<F>();
            for i in 0..self.cin {
                let xi = x.plane(i);
                for j in 0..self.stride {
                    let widx = self.w + (o * self.cin + i) * self.stride + j;
                    let w = p[widx];
                    let mut acc = F::zero();
                    for t in 0..gy.t {
                        let s = self.src(t, j, x.t);
                        let g = &go[t * f..(t + 1) * f];
                        acc += dot(g, &xi[s * f..(s + 1) * f]);
                        if let Some(gx) = gx.as_mut() {
                            axpy(w, g, &mut gx.plane_mut(i)[s * f..(s + 1) * f]);
                        }
                    }
                    grads[widx] += acc;
                }
            }
        }
        gx
    }
}

/// 1x1 convolution mixing channels at every (time, freq) position.
#[derive(Debug, Clone)]
pub(crate) struct Pointwise {
    pub cin: usize,
    pub cout: usize,
    pub w: usize,
    pub b: usize,
}

impl Pointwise {
    pub fn new(cin: usize, cout: usize, offset: &mut usize) -> Self {
        let w = *offset;
        let b = w + cin * cout;
        *offset = b + cout;
        Pointwise { cin, cout, w, b }
    }

    pub fn init<F: Real, R: Rng + ?Sized>(&self, p: &mut [F], rng: &mut R, scale: f64) {
        init_uniform(&mut p[self.w..self.b], self.cin, rng);
        for v in &mut p[self.w..self.b] {
            *v *= F::of(scale);
        }
        p[self.b..self.b + self.cout].fill(F::zero());
    }

    pub fn forward<F: Real>(&self, p: &[F], x: &Tensor<F>) -> Tensor<F> {
        let mut y = Tensor::zeros(self.cout, x.t, x.f);
        for o in 0..self.cout {
            let yo = y.plane_mut(o);
            yo.fill(p[self.b + o]);
            for i in 0..self.cin {
                axpy(p[self.w + o * self.cin + i], x.plane(i), yo);
            }
        }
        y
    }

    pub fn backward<F: Real>(
        &self,
        p: &[F],
        x: &Tensor<F>,
        gy: &Tensor<F>,
        grads: &mut [F],
    ) -> Tensor<F> {
        let mut gx = Tensor::zeros(self.cin, x.t, x.f);
        for o in 0..self.cout {
            let go = gy.plane(o);
            grads[self.b + o] += go.iter().copied().sum::<F>();
            for i in 0..self.cin {
                let widx = self.w + o * self.cin + i;
                grads[widx] += dot(go, x.plane(i));
                axpy(p[widx], go, gx.plane_mut(i));
            }
        }
        gx
    }
}

/// Per-channel 2-D convolution with zero "same" padding on both axes.
#[derive(Debug, Clone)]
pub(crate) struct DepthwiseConv {
    pub c: usize,
    pub kt: usize,
    pub kf: usize,
    pub w: usize,
    pub b: usize,
}

impl DepthwiseConv {
    pub fn new(c: usize, kt: usize, kf: usize, offset: &mut usize) -> Self {
        let w = *offset;
        let b = w + c * kt * kf;
        *offset = b + c;
        DepthwiseConv { c, kt, kf, w, b }
    }

    pub fn init<F: Real, R: Rng + ?Sized>(&self, p: &mut [F], rng: &mut R) {
        init_uniform(&mut p[self.w..self.b], self.kt * self.kf, rng);
        p[self.b..self.b + self.c].fill(F::zero());
    }

    /// Valid output range along one axis for kernel tap `k` of width `kw`.
    fn range(n: usize, k: usize, kw: usize) -> (usize, usize) {
        let pad = kw / 2;
        let lo = pad.saturating_sub(k);
        let hi = (n + pad).saturating_sub(k).min(n);
        (lo, hi.max(lo))
    }

    pub fn forward<F: Real>(&self, p: &[F], x: &Tensor<F>) -> Tensor<F> {
        let (t_n, f_n) = (x.t, x.f);
        let (pt, pf) = (self.kt / 2, self.kf / 2);
        let mut y = Tensor::zeros(x.c, t_n, f_n);
        for c in 0..self.c {
            let xc = x.plane(c);
            let yc = y.plane_mut(c);
            yc.fill(p[self.b + c]);
            for a in 0..self.kt {
                let (t_lo, t_hi) = Self::range(t_n, a, self.kt);
                for bf in 0..self.kf {
                    let (f_lo, f_hi) = Self::range(f_n, bf, self.kf);
                    let w = p[self.w + (c * self.kt + a) * self.kf + bf];
                    for t in t_lo..t_hi {
                        let ts = t + a - pt;
                        let src = &xc[ts * f_n + f_lo + bf - pf..ts * f_n + f_hi + bf - pf];
                        axpy(w, src, &mut yc[t * f_n + f_lo..t * f_n + f_hi]);
                    }
                }
            }
        }
        y
    }

    pub fn backward<F: Real>(
        &self,
        p: &[F],
        x: &Tensor<F>,
        gy: &Tensor<F>,
        grads: &mut [F],
    ) -> Tensor<F> {
        let (t_n, f_n) = (x.t, x.f);
        let (pt, pf) = (self.kt / 2, self.kf / 2);
        let mut gx = Tensor::zeros(x.c, t_n, f_n);
        for c in 0..self.c {
            let xc = x.plane(c);
            let gc = gy.plane(c);
            grads[self.b + c] += gc.iter().copied().sum::<F>();
            let gxc = gx.plane_mut(c);
            for a in 0..self.kt {
                let (t_lo, t_hi) = Self::range(t_n, a, self.kt);
                for bf in 0..self.kf {
                    let (f_lo, f_hi) = Self::range(f_n, bf, self.kf);
                    let widx = self.w + (c * self.kt + a) * self.kf + bf;
                    let w = p[widx];
                    let mut acc = F::zero();
                    for t in t_lo..t_hi {
                        let ts = t + a - pt;
                        let g = &gc[t * f_n + f_lo..t * f_n + f_hi];
                        let s0 = ts * f_n + f_lo + bf - pf;
                        let s1 = ts * f_n + f_hi + bf - pf;
                        acc += dot(g, &xc[s0..s1]);
                        axpy(w, g, &mut gxc[s0..s1]);
                    }
                    grads[widx] += acc;
                }
            }
        }
        gx
    }
}

/// Saved statistics of a layer-norm forward pass.
#[derive(Debug, Clone)]
pub(crate) struct NormCache<F> {
    pub xhat: Tensor<F>,
    pub inv_std: Vec<F>,
}

/// Normalization across channels at every position, with affine terms.
#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    pub c: usize,
    pub gamma: usize,
    pub beta: usize,
}

pub(crate) const NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(c: usize, offset: &mut usize) -> Self {
        let gamma = *offset;
        let beta = gamma + c;
        *offset = beta + c;
        LayerNorm { c, gamma, beta }
    }

    pub fn init<F: Real>(&self, p: &mut [F]) {
        p[self.gamma..self.beta].fill(F::one());
        p[self.beta..self.beta + self.c].fill(F::zero());
    }

    pub fn forward<F: Real>(&self, p: &[F], x: &Tensor<F>) -> (Tensor<F>, NormCache<F>) {
        let n = x.plane_len();
        let inv_c = F::of(1.0 / self.c as f64);
        let mut mean = vec![F::zero(); n];
        for c in 0..self.c {
            axpy(inv_c, x.plane(c), &mut mean);
        }
        let mut var = vec![F::zero(); n];
        for c in 0..self.c {
            for ((v, &xi), &m) in var.iter_mut().zip(x.plane(c)).zip(&mean) {
                let d = xi - m;
                *v += d * d * inv_c;
            }
        }
        let eps = F::of(NORM_EPS);
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(x.c, x.t, x.f);
        let mut y = Tensor::zeros(x.c, x.t, x.f);
        for c in 0..self.c {
            let (g, b) = (p[self.gamma + c], p[self.beta + c]);
            let xc = x.plane(c);
            let hc = xhat.plane_mut(c);
            for (((h, &xi), &m), &s) in hc.iter_mut().zip(xc).zip(&mean).zip(&inv_std) {
                *h = (xi - m) * s;
            }
            for (yv, &h) in y.plane_mut(c).iter_mut().zip(xhat.plane(c)) {
                *yv = g * h + b;
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward<F: Real>(
        &self,
        p: &[F],
        cache: &NormCache<F>,
        gy: &Tensor<F>,
        grads: &mut [F],
    ) -> Tensor<F> {
        let n = gy.plane_len();
        let inv_c = F::of(1.0 / self.c as f64);
        let mut mean_g = vec![F::zero(); n];
        let mut mean_gx = vec![F::zero(); n];
        for c in 0..self.c {
            let gamma = p[self.gamma + c];
            let gc = gy.plane(c);
            let hc = cache.xhat.plane(c);
            grads[self.gamma + c] += dot(gc, hc);
            grads[self.beta + c] += gc.iter().copied().sum::<F>();
            for (((mg, mgx), &g), &h) in mean_g.iter_mut().zip(mean_gx.iter_mut()).zip(gc).zip(hc) {
                let dh = g * gamma;
                *mg += dh * inv_c;
                *mgx += dh * h * inv_c;
            }
        }
        let mut gx = Tensor::zeros(gy.c, gy.t, gy.f);
        for c in 0..self.c {
            let gamma = p[self.gamma + c];
            let gc = gy.plane(c);
            let hc = cache.xhat.plane(c);
            let out = gx.plane_mut(c);
            for i in 0..n {
                let dh = gc[i] * gamma;
                out[i] = cache.inv_std[i] * (dh - mean_g[i] - hc[i] * mean_gx[i]);
            }
        }
        gx
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

pub(crate) fn gelu<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let (k, c, half) = (F::of(GELU_K), F::of(GELU_C), F::of(0.5));
    Tensor {
        c: x.c,
        t: x.t,
        f: x.f,
        data: x
            .data
            .iter()
            .map(|&v| half * v * (F::one() + (k * (v + c * v * v * v)).tanh()))
            .collect(),
    }
}

pub(crate) fn gelu_backward<F: Real>(x: &Tensor<F>, gy: &Tensor<F>) -> Tensor<F> {
    let (k, c, half, three) = (F::of(GELU_K), F::of(GELU_C), F::of(0.5), F::of(3.0));
    Tensor {
        c: x.c,
        t: x.t,
        f: x.f,
        data: x
            .data
            .iter()
            .zip(&gy.data)
            .map(|(&v, &g)| {
                let th = (k * (v + c * v * v * v)).tanh();
                let d = half * (F::one() + th)
                    + half * v * (F::one() - th * th) * k * (F::one() + three * c * v * v);
                g * d
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(c: usize, t: usize, f: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor {
            c,
            t,
            f,
            data: (0..c * t * f).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    /// Checks d<gy, layer(x)>/dparams and /dx against central differences.
    fn check<L, B>(n_params: usize, x: &Tensor<f64>, forward: L, backward: B)
    where
        L: Fn(&[f64], &Tensor<f64>) -> Tensor<f64>,
        B: Fn(&[f64], &Tensor<f64>, &Tensor<f64>, &mut [f64]) -> Tensor<f64>,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<f64> = (0..n_params).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = forward(&p, x);
        let gy = random_tensor(y.c, y.t, y.f, &mut rng);
        let objective = |p: &[f64], x: &Tensor<f64>| -> f64 {
            forward(p, x)
                .data
                .iter()
                .zip(&gy.data)
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut grads = vec![0.0; n_params];
        let gx = backward(&p, x, &gy, &mut grads);
        let h = 1e-6;
        for i in 0..n_params {
            let mut pp = p.clone();
            pp[i] += h;
            let up = objective(&pp, x);
            pp[i] -= 2.0 * h;
            let down = objective(&pp, x);
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grads[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                grads[i]
            );
        }
        for i in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[i] += h;
            let up = objective(&p, &xp);
            xp.data[i] -= 2.0 * h;
            let down = objective(&p, &xp);
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - gx.data[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "input {i}: {fd} vs {}",
                gx.data[i]
            );
        }
    }

    #[test]
    fn time_conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(2, 5, 6, &mut rng);
        let mut off = 0;
        let layer = TimeConv::new(2, 3, 2, &mut off);
        check(
            off,
            &x,
            |p, x| layer.forward(p, x),
            |p, x, g, gr| layer.backward(p, x, g, gr, true).unwrap(),
        );
    }

    #[test]
    fn pointwise_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(3, 2, 5, &mut rng);
        let mut off = 0;
        let layer = Pointwise::new(3, 4, &mut off);
        check(
            off,
            &x,
            |p, x| layer.forward(p, x),
            |p, x, g, gr| layer.backward(p, x, g, gr),
        );
    }

    #[test]
    fn depthwise_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(2, 4, 9, &mut rng);
        let mut off = 0;
        let layer = DepthwiseConv::new(2, 3, 5, &mut off);
        check(
            off,
            &x,
            |p, x| layer.forward(p, x),
            |p, x, g, gr| layer.backward(p, x, g, gr),
        );
    }

    #[test]
    fn layer_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(3, 2, 4, &mut rng);
        let mut off = 0;
        let layer = LayerNorm::new(3, &mut off);
        check(
            off,
            &x,
            |p, x| layer.forward(p, x).0,
            |p, x, g, gr| {
                let (_, cache) = layer.forward(p, x);
                layer.backward(p, &cache, g, gr)
            },
        );
    }

    #[test]
    fn gelu_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_tensor(2, 2, 3, &mut rng);
        check(0, &x, |_, x| gelu(x), |_, x, g, _| gelu_backward(x, g));
    }

    #[test]
    fn depthwise_preserves_shape_and_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_tensor(1, 3, 84, &mut rng);
        let mut off = 0;
        let layer = DepthwiseConv::new(1, 7, 7, &mut off);
        let mut p = vec![0.0; off];
        p[layer.w + 3 * 7 + 3] = 1.0;
        let y = layer.forward(&p, &x);
        assert_eq!((y.c, y.t, y.f), (1, 3, 84));
        assert_eq!(y.data, x.data);
    }
}
