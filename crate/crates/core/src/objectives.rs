//! Objectives on the circle of fifths: DFT of key signature profiles,
//! cross-power spectral density, the CoF distance and the losses built on it.
//!
//! Intervals passed to these functions are pitch intervals in semitones from
//! the first profile to the second: a profile `y` and its transposition by
//! `k` semitones, `y.roll(k)`, are at distance zero for interval `k`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chromanet::{Ksp, ModeVector, CHROMAS};
use crate::datasets::KeyLabel;
use crate::error::{Result, StoneError};

/// Clamp applied to the second argument of the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// DFT frequency over the 12 chromas; must be coprime with 12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct CofFrequency(u8);

impl CofFrequency {
    /// Circle of fifths.
    pub const FIFTHS: CofFrequency = CofFrequency(7);
    /// Circle of semitones.
    pub const SEMITONES: CofFrequency = CofFrequency(1);

    pub fn new(omega: i64) -> Result<Self> {
        let reduced = omega.rem_euclid(12);
        if gcd(reduced, 12) != 1 {
            return Err(StoneError::DegenerateFrequency(omega));
        }
        Ok(CofFrequency(reduced as u8))
    }

    pub fn get(self) -> i64 {
        self.0 as i64
    }

    fn angle(self) -> f64 {
        2.0 * PI * self.0 as f64 / CHROMAS as f64
    }
}

impl TryFrom<i64> for CofFrequency {
    type Error = StoneError;
    fn try_from(v: i64) -> Result<Self> {
        CofFrequency::new(v)
    }
}

impl From<CofFrequency> for i64 {
    fn from(v: CofFrequency) -> i64 {
        v.get()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// `sum_q y[q] exp(-2 pi i omega q / 12)`.
pub fn ksp_dft(y: &Ksp, omega: CofFrequency) -> Complex64 {
    dft_at(y.values(), omega)
}

fn dft_at(values: &[f64], omega: CofFrequency) -> Complex64 {
    let theta = omega.angle();
    values
        .iter()
        .enumerate()
        .map(|(q, &v)| Complex64::from_polar(v, -theta * q as f64))
        .sum()
}

/// Cross-power spectral density `Y_a[omega] * conj(Y_b[omega])`.
pub fn cpsd(ya: &Ksp, yb: &Ksp, omega: CofFrequency) -> Complex64 {
    ksp_dft(ya, omega) * ksp_dft(yb, omega).conj()
}

/// Circular cross-correlation `R[k] = sum_q ya[(q + k) mod 12] yb[q]`,
/// whose DFT at `omega` is [`cpsd`].
pub fn circular_cross_correlation(ya: &Ksp, yb: &Ksp) -> [f64; CHROMAS] {
    let (a, b) = (ya.values(), yb.values());
    let mut r = [0.0; CHROMAS];
    for (k, out) in r.iter_mut().enumerate() {
        *out = (0..CHROMAS).map(|q| a[(q + k) % CHROMAS] * b[q]).sum();
    }
    r
}

/// DFT of an arbitrary 12-vector at `omega`.
pub fn dft12(values: &[f64; CHROMAS], omega: CofFrequency) -> Complex64 {
    dft_at(values, omega)
}

fn target(interval: i64, omega: CofFrequency) -> Complex64 {
    Complex64::from_polar(1.0, omega.angle() * interval as f64)
}

/// Half squared distance between the CPSD and the unit phasor of `interval`.
pub fn cof_distance(ya: &Ksp, yb: &Ksp, interval: i64, omega: CofFrequency) -> f64 {
    0.5 * (target(interval, omega) - cpsd(ya, yb, omega)).norm_sqr()
}

/// [`cof_distance`] and its gradients with respect to both profiles.
pub fn cof_distance_grad(
    ya: &Ksp,
    yb: &Ksp,
    interval: i64,
    omega: CofFrequency,
) -> (f64, [f64; CHROMAS], [f64; CHROMAS]) {
    let a = ksp_dft(ya, omega);
    let b = ksp_dft(yb, omega);
    let err = a * b.conj() - target(interval, omega);
    let theta = omega.angle();
    let mut da = [0.0; CHROMAS];
    let mut db = [0.0; CHROMAS];
    for q in 0..CHROMAS {
        let basis = Complex64::from_polar(1.0, -theta * q as f64);
        // d(0.5 |err|^2) = Re(conj(err) d err)
        da[q] = (err.conj() * basis * b.conj()).re;
        db[q] = (err.conj() * a * basis.conj()).re;
    }
    (0.5 * err.norm_sqr(), da, db)
}

/// Invariance term: two segments under the same crop should agree.
pub fn loss_invariance(ya_c: &Ksp, yb_c: &Ksp, omega: CofFrequency) -> f64 {
    cof_distance(ya_c, yb_c, 0, omega)
}

/// Equivariance term between one segment under two crops.
pub fn loss_equivariance(ya_c: &Ksp, ya_ck: &Ksp, interval: i64, omega: CofFrequency) -> f64 {
    cof_distance(ya_c, ya_ck, interval, omega)
}

/// Cross term between segment B and the re-cropped segment A.
pub fn loss_combined(yb_c: &Ksp, ya_ck: &Ksp, interval: i64, omega: CofFrequency) -> f64 {
    cof_distance(yb_c, ya_ck, interval, omega)
}

/// Per-term losses of one training example.
///
/// With the cross-entropy ablation, `l_ab`, `l_aa` and `l_ba` hold the
/// cross-entropy replacements of the three CPSD terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ab: f64,
    pub l_aa: f64,
    pub l_ba: f64,
    pub bce: [f64; 3],
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_ab: f64, l_aa: f64, l_ba: f64, bce: [f64; 3]) -> Self {
        LossBreakdown {
            l_ab,
            l_aa,
            l_ba,
            bce,
            total: l_ab + l_aa + l_ba + bce.iter().sum::<f64>(),
        }
    }

    pub fn cpsd_total(&self) -> f64 {
        self.l_ab + self.l_aa + self.l_ba
    }

    /// Element-wise mean of several breakdowns.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let sum = |f: &dyn Fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        LossBreakdown::new(
            sum(&|l| l.l_ab),
            sum(&|l| l.l_aa),
            sum(&|l| l.l_ba),
            [sum(&|l| l.bce[0]), sum(&|l| l.bce[1]), sum(&|l| l.bce[2])],
        )
    }
}

/// The three profiles of one example: `T_c x_A`, `T_c x_B`, `T_{c+k} x_A`.
#[derive(Debug, Clone, Copy)]
pub struct Responses<'a, T> {
    pub a_c: &'a T,
    pub b_c: &'a T,
    pub a_ck: &'a T,
}

/// Sum of the invariance, equivariance and combined terms.
pub fn cpsd_loss(r: Responses<'_, Ksp>, interval: i64, omega: CofFrequency) -> LossBreakdown {
    LossBreakdown::new(
        loss_invariance(r.a_c, r.b_c, omega),
        loss_equivariance(r.a_c, r.a_ck, interval, omega),
        loss_combined(r.b_c, r.a_ck, interval, omega),
        [0.0; 3],
    )
}

/// [`cpsd_loss`] with gradients for `(a_c, b_c, a_ck)`.
pub fn cpsd_loss_grad(
    r: Responses<'_, Ksp>,
    interval: i64,
    omega: CofFrequency,
) -> (LossBreakdown, [[f64; CHROMAS]; 3]) {
    let (ab, g_a1, g_b1) = cof_distance_grad(r.a_c, r.b_c, 0, omega);
    let (aa, g_a2, g_ak1) = cof_distance_grad(r.a_c, r.a_ck, interval, omega);
    let (ba, g_b2, g_ak2) = cof_distance_grad(r.b_c, r.a_ck, interval, omega);
    let add = |x: [f64; CHROMAS], y: [f64; CHROMAS]| std::array::from_fn(|i| x[i] + y[i]);
    (
        LossBreakdown::new(ab, aa, ba, [0.0; 3]),
        [add(g_a1, g_a2), add(g_b1, g_b2), add(g_ak1, g_ak2)],
    )
}

/// `-mu[0] log mu'[0] - mu[1] log mu'[1]`, with `mu'` clamped to `[eps, 1 - eps]`.
pub fn bce(mu: &ModeVector, mu_prime: &ModeVector) -> f64 {
    bce_grad(mu, mu_prime).0
}

/// [`bce`] and its gradients with respect to both arguments.
pub fn bce_grad(mu: &ModeVector, mu_prime: &ModeVector) -> (f64, [f64; 2], [f64; 2]) {
    let mut value = 0.0;
    let mut d_mu = [0.0; 2];
    let mut d_prime = [0.0; 2];
    for m in 0..2 {
        let raw = mu_prime.values()[m];
        let p = raw.clamp(BCE_EPS, 1.0 - BCE_EPS);
        value -= mu.values()[m] * p.ln();
        d_mu[m] = -p.ln();
        if raw > BCE_EPS && raw < 1.0 - BCE_EPS {
            d_prime[m] = -mu.values()[m] / p;
        }
    }
    (value, d_mu, d_prime)
}

/// The three pairwise mode terms, in order
/// `BCE(B_c, A_c)`, `BCE(A_c, A_ck)`, `BCE(B_c, A_ck)`.
pub fn bce_loss(mus: Responses<'_, ModeVector>) -> [f64; 3] {
    bce_loss_grad(mus).0
}

/// [`bce_loss`] with gradients for `(a_c, b_c, a_ck)`.
pub fn bce_loss_grad(mus: Responses<'_, ModeVector>) -> ([f64; 3], [[f64; 2]; 3]) {
    let (t0, d_b0, d_a0) = bce_grad(mus.b_c, mus.a_c);
    let (t1, d_a1, d_ak1) = bce_grad(mus.a_c, mus.a_ck);
    let (t2, d_b2, d_ak2) = bce_grad(mus.b_c, mus.a_ck);
    let add = |x: [f64; 2], y: [f64; 2]| [x[0] + y[0], x[1] + y[1]];
    (
        [t0, t1, t2],
        [add(d_a0, d_a1), add(d_b0, d_b2), add(d_ak1, d_ak2)],
    )
}

/// One-hot targets standing in for segment B's responses.
///
/// The signature oracle for crop `c` sits at `(q_ref - c) mod 12`, following
/// the row shift of [`crate::frontend::transpose_crop`].
pub fn supervised_oracles(label: &KeyLabel, c: i64) -> Result<(Ksp, ModeVector)> {
    if !(0..=crate::frontend::MAX_CROP as i64).contains(&c) {
        return Err(StoneError::CropOutOfRange(c));
    }
    let q = (label.key_signature() as i64 - c).rem_euclid(CHROMAS as i64) as usize;
    Ok((Ksp::one_hot(q), ModeVector::one_hot(label.mode().index())))
}

fn ce_toward(target: usize, pred: &Ksp) -> (f64, [f64; CHROMAS]) {
    let p = pred.values()[target].max(BCE_EPS);
    let mut g = [0.0; CHROMAS];
    if pred.values()[target] > BCE_EPS {
        g[target] = -1.0 / p;
    }
    (-p.ln(), g)
}

/// Symmetric pseudo-label cross-entropy between two profiles: each side is
/// pulled toward the other's argmax shifted by the interval.
fn ce_pair(first: &Ksp, second: &Ksp, interval: i64) -> (f64, [f64; CHROMAS], [f64; CHROMAS]) {
    let shift = |q: usize, k: i64| (q as i64 + k).rem_euclid(CHROMAS as i64) as usize;
    let (l2, g2) = ce_toward(shift(first.argmax(), interval), second);
    let (l1, g1) = ce_toward(shift(second.argmax(), -interval), first);
    (0.5 * (l1 + l2), g1.map(|v| 0.5 * v), g2.map(|v| 0.5 * v))
}

/// 12-class cross-entropy replacement of the three CPSD terms (ablation).
pub fn ablation_crossentropy_loss(r: Responses<'_, Ksp>, interval: i64) -> LossBreakdown {
    ablation_crossentropy_loss_grad(r, interval).0
}

pub fn ablation_crossentropy_loss_grad(
    r: Responses<'_, Ksp>,
    interval: i64,
) -> (LossBreakdown, [[f64; CHROMAS]; 3]) {
    let (ab, g_a1, g_b1) = ce_pair(r.a_c, r.b_c, 0);
    let (aa, g_a2, g_ak1) = ce_pair(r.a_c, r.a_ck, interval);
    let (ba, g_b2, g_ak2) = ce_pair(r.b_c, r.a_ck, interval);
    let add = |x: [f64; CHROMAS], y: [f64; CHROMAS]| std::array::from_fn(|i| x[i] + y[i]);
    (
        LossBreakdown::new(ab, aa, ba, [0.0; 3]),
        [add(g_a1, g_a2), add(g_b1, g_b2), add(g_ak1, g_ak2)],
    )
}
