use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ChromaNetConfig;
use super::layers::{
    gelu, gelu_backward, init_uniform, DepthwiseConv, LayerNorm, NormCache, Pointwise, Tensor,
    TimeConv,
};
use super::real::Real;
use crate::error::{Result, StoneError};
use crate::frontend::{CroppedCqt, CROPPED_BINS};

pub const CHROMAS: usize = 12;
pub const OCTAVES: usize = CROPPED_BINS / CHROMAS;

#[derive(Debug, Clone)]
struct Block {
    dw: DepthwiseConv,
    norm: LayerNorm,
    pw1: Pointwise,
    pw2: Pointwise,
    down: TimeConv,
    down_norm: LayerNorm,
}

struct BlockTrace<F> {
    input: Tensor<F>,
    norm: NormCache<F>,
    normed: Tensor<F>,
    hidden: Tensor<F>,
    activated: Tensor<F>,
    residual: Tensor<F>,
    down_norm: NormCache<F>,
}

/// Intermediate activations of one forward pass, consumed by [`ChromaNet::backward`].
pub struct Trace<F> {
    input: Tensor<F>,
    stem_norm: NormCache<F>,
    blocks: Vec<BlockTrace<F>>,
    head_input: Tensor<F>,
}

impl<F> Trace<F> {
    /// Frequency rows of every block output, in order.
    pub fn block_rows(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|b| b.down_norm.xhat.f)
            .chain(std::iter::once(self.head_input.f))
            .collect()
    }
}

/// Trainable dense 84 -> 12 map used by the octave-equivalence ablation.
#[derive(Debug, Clone)]
struct DenseHead {
    w: usize,
    b: usize,
}

/// Fully convolutional ChromaNet with no pooling over frequency.
///
/// The parameters live outside the network in one flat vector so the
/// optimizer, checkpoints and gradient checks all share a single layout.
#[derive(Debug, Clone)]
pub struct ChromaNet {
    cfg: ChromaNetConfig,
    stem: TimeConv,
    stem_norm: LayerNorm,
    blocks: Vec<Block>,
    head: Pointwise,
    dense: Option<DenseHead>,
    n_params: usize,
}

impl ChromaNet {
    pub fn new(cfg: &ChromaNetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut off = 0;
        let stem = TimeConv::new(1, cfg.stem_channels, cfg.stem_stride, &mut off);
        let stem_norm = LayerNorm::new(cfg.stem_channels, &mut off);
        let mut cin = cfg.stem_channels;
        let mut blocks = Vec::with_capacity(cfg.n_blocks());
        for (&cout, &factor) in cfg.channels.iter().zip(&cfg.time_downsample) {
            let hidden = cin * cfg.expansion;
            blocks.push(Block {
                dw: DepthwiseConv::new(cin, cfg.kernel_time, cfg.kernel_freq, &mut off),
                norm: LayerNorm::new(cin, &mut off),
                pw1: Pointwise::new(cin, hidden, &mut off),
                pw2: Pointwise::new(hidden, cin, &mut off),
                down: TimeConv::new(cin, cout, factor, &mut off),
                down_norm: LayerNorm::new(cout, &mut off),
            });
            cin = cout;
        }
        let head = Pointwise::new(cin, cfg.out_channels, &mut off);
        let dense = cfg.ablation_fc_head.then(|| {
            let w = off;
            let b = w + CHROMAS * CROPPED_BINS;
            off = b + CHROMAS;
            DenseHead { w, b }
        });
        Ok(ChromaNet {
            cfg: cfg.clone(),
            stem,
            stem_norm,
            blocks,
            head,
            dense,
            n_params: off,
        })
    }

    pub fn config(&self) -> &ChromaNetConfig {
        &self.cfg
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn out_channels(&self) -> usize {
        self.cfg.out_channels
    }

    /// Length of the backbone output, `84 * out_channels`.
    pub fn feature_len(&self) -> usize {
        CROPPED_BINS * self.cfg.out_channels
    }

    /// Seeded initial parameters.
    pub fn init_params<F: Real>(&self, seed: u64) -> Vec<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![F::zero(); self.n_params];
        self.stem.init(&mut p, &mut rng);
        self.stem_norm.init(&mut p);
        for block in &self.blocks {
            block.dw.init(&mut p, &mut rng);
            block.norm.init(&mut p);
            block.pw1.init(&mut p, &mut rng, 1.0);
            block.pw2.init(&mut p, &mut rng, 0.5);
            block.down.init(&mut p, &mut rng);
            block.down_norm.init(&mut p);
        }
        self.head.init(&mut p, &mut rng, 1.0);
        if let Some(dense) = &self.dense {
            init_uniform(&mut p[dense.w..dense.b], CROPPED_BINS, &mut rng);
        }
        p
    }

    /// Range of the final 1x1 projection's parameters.
    pub fn head_param_range(&self) -> std::ops::Range<usize> {
        self.head.w..self.head.b + self.cfg.out_channels
    }

    /// Transposes a cropped CQT into the `[1][time][freq]` input layout.
    pub fn input_tensor<F: Real>(x: &CroppedCqt) -> Tensor<F> {
        let (rows, t) = (x.n_bins(), x.n_frames());
        let mut data = vec![F::zero(); rows * t];
        for r in 0..rows {
            for (frame, &v) in x.row(r).iter().enumerate() {
                data[frame * rows + r] = F::of(v as f64);
            }
        }
        Tensor {
            c: 1,
            t,
            f: rows,
            data,
        }
    }

    /// Backbone pass: per output channel, an 84-vector averaged over time.
    pub fn forward<F: Real>(&self, p: &[F], x: &CroppedCqt) -> Result<(Vec<F>, Trace<F>)> {
        self.forward_tensor(p, Self::input_tensor(x))
    }

    pub fn forward_tensor<F: Real>(&self, p: &[F], x: Tensor<F>) -> Result<(Vec<F>, Trace<F>)> {
        if x.f != CROPPED_BINS {
            return Err(StoneError::BadFrequencySpan {
                expected: CROPPED_BINS,
                actual: x.f,
            });
        }
        if x.c != 1 || x.t == 0 {
            return Err(StoneError::Shape(format!(
                "expected one input channel and at least one frame, got {}x{}",
                x.c, x.t
            )));
        }
        if p.len() != self.n_params {
            return Err(StoneError::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params,
                p.len()
            )));
        }
        let stem_out = self.stem.forward(p, &x);
        let (mut h, stem_norm) = self.stem_norm.forward(p, &stem_out);
        let mut traces = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let dw = block.dw.forward(p, &h);
            let (normed, norm) = block.norm.forward(p, &dw);
            let hidden = block.pw1.forward(p, &normed);
            let activated = gelu(&hidden);
            let mut residual = block.pw2.forward(p, &activated);
            residual.add_assign(&h);
            let down = block.down.forward(p, &residual);
            let (out, down_norm) = block.down_norm.forward(p, &down);
            traces.push(BlockTrace {
                input: h,
                norm,
                normed,
                hidden,
                activated,
                residual,
                down_norm,
            });
            h = out;
        }
        let y = self.head.forward(p, &h);
        let mut features = vec![F::zero(); self.feature_len()];
        let inv_t = F::of(1.0 / y.t as f64);
        for o in 0..y.c {
            let plane = y.plane(o);
            let out = &mut features[o * CROPPED_BINS..(o + 1) * CROPPED_BINS];
            for t in 0..y.t {
                for (v, &yv) in out.iter_mut().zip(&plane[t * y.f..(t + 1) * y.f]) {
                    *v += yv * inv_t;
                }
            }
        }
        Ok((
            features,
            Trace {
                input: x,
                stem_norm,
                blocks: traces,
                head_input: h,
            },
        ))
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(features).
    pub fn backward<F: Real>(&self, p: &[F], trace: &Trace<F>, d_features: &[F], grads: &mut [F]) {
        let h = &trace.head_input;
        let mut gy = Tensor::zeros(self.cfg.out_channels, h.t, h.f);
        let inv_t = F::of(1.0 / h.t as f64);
        for o in 0..gy.c {
            let d = &d_features[o * CROPPED_BINS..(o + 1) * CROPPED_BINS];
            let plane = gy.plane_mut(o);
            for t in 0..h.t {
                for (g, &dv) in plane[t * h.f..(t + 1) * h.f].iter_mut().zip(d) {
                    *g = dv * inv_t;
                }
            }
        }
        let mut g = self.head.backward(p, h, &gy, grads);
        for (block, bt) in self.blocks.iter().zip(&trace.blocks).rev() {
            let g_down = block.down_norm.backward(p, &bt.down_norm, &g, grads);
            let g_res = block
                .down
                .backward(p, &bt.residual, &g_down, grads, true)
                .expect("input gradient requested");
            let g_act = block.pw2.backward(p, &bt.activated, &g_res, grads);
            let g_hidden = gelu_backward(&bt.hidden, &g_act);
            let g_normed = block.pw1.backward(p, &bt.normed, &g_hidden, grads);
            let g_dw = block.norm.backward(p, &bt.norm, &g_normed, grads);
            let mut g_in = block.dw.backward(p, &bt.input, &g_dw, grads);
            g_in.add_assign(&g_res);
            g = g_in;
        }
        let g_stem = self.stem_norm.backward(p, &trace.stem_norm, &g, grads);
        self.stem.backward(p, &trace.input, &g_stem, grads, false);
    }

    /// Maps backbone features to 12 logits per output channel: octave sums,
    /// or the dense ablation head when configured.
    pub fn logits<F: Real>(&self, p: &[F], features: &[F]) -> Vec<f64> {
        match &self.dense {
            None => (0..self.cfg.out_channels)
                .flat_map(|o| octave_sums(&features[o * CROPPED_BINS..(o + 1) * CROPPED_BINS]))
                .collect(),
            Some(dense) => (0..CHROMAS)
                .map(|q| {
                    let row = &p[dense.w + q * CROPPED_BINS..dense.w + (q + 1) * CROPPED_BINS];
                    p[dense.b + q].to64()
                        + row
                            .iter()
                            .zip(features)
                            .map(|(&w, &v)| w.to64() * v.to64())
                            .sum::<f64>()
                })
                .collect(),
        }
    }

    /// Gradient of [`Self::logits`]; returns d(loss)/d(features).
    pub fn logits_backward<F: Real>(
        &self,
        p: &[F],
        features: &[F],
        d_logits: &[f64],
        grads: &mut [F],
    ) -> Vec<F> {
        match &self.dense {
            None => (0..self.cfg.out_channels)
                .flat_map(|o| {
                    (0..CROPPED_BINS).map(move |i| F::of(d_logits[o * CHROMAS + i % CHROMAS]))
                })
                .collect(),
            Some(dense) => {
                let mut dv = vec![F::zero(); CROPPED_BINS];
                for (q, &dz) in d_logits.iter().enumerate().take(CHROMAS) {
                    let dz = F::of(dz);
                    grads[dense.b + q] += dz;
                    let base = dense.w + q * CROPPED_BINS;
                    for i in 0..CROPPED_BINS {
                        grads[base + i] += dz * features[i];
                        dv[i] += dz * p[base + i];
                    }
                }
                dv
            }
        }
    }
}

/// Sums an 84-vector across its seven octaves: `out[q] = sum_j v[12 j + q]`.
pub fn octave_sums<F: Real>(v: &[F]) -> Vec<f64> {
    let mut out = vec![0.0; CHROMAS];
    for (i, &x) in v.iter().enumerate() {
        out[i % CHROMAS] += x.to64();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{transpose_crop, CqtMatrix, CQT_BINS};
    use rand::Rng;

    fn random_cqt(frames: usize, seed: u64) -> CqtMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..CQT_BINS * frames)
            .map(|_| rng.gen_range(0.0..3.0))
            .collect();
        CqtMatrix::from_rows(frames, data).unwrap()
    }

    #[test]
    fn feature_vector_has_84_entries_per_channel() {
        for oc in [1, 2] {
            let net = ChromaNet::new(&ChromaNetConfig::desk(oc)).unwrap();
            let p: Vec<f32> = net.init_params(1);
            let x = transpose_crop(&random_cqt(86, 2), 4).unwrap();
            let (v, trace) = net.forward(&p, &x).unwrap();
            assert_eq!(v.len(), 84 * oc);
            assert!(trace.block_rows().iter().all(|&r| r == 84));
        }
    }

    #[test]
    fn stationary_input_is_shift_invariant_in_time() {
        let net = ChromaNet::new(&ChromaNetConfig::tiny(1)).unwrap();
        let p: Vec<f64> = net.init_params(3);
        let column: Vec<f32> = (0..CQT_BINS).map(|b| (b % 7) as f32).collect();
        let make = |frames: usize| {
            let data = column
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, frames))
                .collect();
            CqtMatrix::from_rows(frames, data).unwrap()
        };
        let x = make(12);
        let a = net.forward(&p, &transpose_crop(&x, 0).unwrap()).unwrap().0;
        let shifted = x.slice_frames(0, 12);
        let b = net
            .forward(&p, &transpose_crop(&shifted, 0).unwrap())
            .unwrap()
            .0;
        assert_eq!(a, b);
    }

    #[test]
    fn zero_projection_gives_zero_features() {
        let net = ChromaNet::new(&ChromaNetConfig::desk(1)).unwrap();
        let mut p: Vec<f32> = net.init_params(1);
        for i in net.head_param_range() {
            p[i] = 0.0;
        }
        let x = transpose_crop(&random_cqt(40, 9), 0).unwrap();
        let (v, _) = net.forward(&p, &x).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn wrong_frequency_span_is_rejected() {
        let net = ChromaNet::new(&ChromaNetConfig::tiny(1)).unwrap();
        let p: Vec<f64> = net.init_params(0);
        let x = Tensor::zeros(1, 4, 99);
        assert!(matches!(
            net.forward_tensor(&p, x),
            Err(StoneError::BadFrequencySpan {
                expected: 84,
                actual: 99
            })
        ));
    }

    #[test]
    fn octave_sums_fold_seven_octaves() {
        let v: Vec<f64> = (0..84).map(|i| i as f64).collect();
        let s = octave_sums(&v);
        for (q, &x) in s.iter().enumerate() {
            let expected: f64 = (0..7).map(|j| (12 * j + q) as f64).sum();
            assert_eq!(x, expected);
        }
    }
}
