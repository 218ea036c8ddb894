//! Fourier representation of real, periodic, divergence-free vector fields on
//! the torus `[0, 2π]^3`, together with the Stokes-operator functional calculus
//! and the Navier-Stokes bilinear form.
//!
//! A field with cutoff `K` stores one complex 3-vector per wave vector `k` with
//! `|k|_∞ <= K`. The `k = 0` slot is always zero. Reality is encoded by
//! `û(-k) = conj(û(k))`, which every constructor and operation maintains.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer wave vector.
pub type WaveVector = [i32; 3];

/// Complex amplitude of a single Fourier mode.
pub type Amplitude = [Complex64; 3];

const ZERO: Amplitude = [Complex64 { re: 0.0, im: 0.0 }; 3];

/// Largest exponent accepted by the exponential multipliers.
pub const MAX_LOG_MULTIPLIER: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(u32, u32),
    #[error("wave vector {0:?} lies outside cutoff {1}")]
    OutOfRange(WaveVector, u32),
    #[error("the zero mode carries no amplitude")]
    ZeroMode,
    #[error("duplicate wave vector {0:?}")]
    Duplicate(WaveVector),
    #[error("multiplier overflow: log-multiplier {0} exceeds {MAX_LOG_MULTIPLIER}")]
    Overflow(f64),
    #[error("invalid Gevrey index (alpha = {0}, sigma = {1})")]
    InvalidIndex(f64, f64),
    #[error("non-finite amplitude at {0:?}")]
    NonFinite(WaveVector),
}

/// Gevrey index `(α, σ)` selecting the norm `|A^α e^{σA^{1/2}} u|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GevreyIndex {
    pub alpha: f64,
    pub sigma: f64,
}

impl GevreyIndex {
    pub fn new(alpha: f64, sigma: f64) -> Result<Self, SpectralError> {
        let idx = GevreyIndex { alpha, sigma };
        idx.validate()?;
        Ok(idx)
    }

    /// The plain L² index `(0, 0)`.
    pub const L2: GevreyIndex = GevreyIndex { alpha: 0.0, sigma: 0.0 };

    pub fn validate(&self) -> Result<(), SpectralError> {
        if self.alpha.is_finite() && self.sigma.is_finite() && self.alpha >= 0.0 && self.sigma >= 0.0
        {
            Ok(())
        } else {
            Err(SpectralError::InvalidIndex(self.alpha, self.sigma))
        }
    }
}

/// True when the first nonzero component of `k` is positive.
pub fn is_positive(k: WaveVector) -> bool {
    for c in k {
        if c != 0 {
            return c > 0;
        }
    }
    false
}

fn norm_sq(k: WaveVector) -> i64 {
    k.iter().map(|&c| (c as i64) * (c as i64)).sum()
}

/// A truncated Fourier field. See the module docs for the storage convention.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    cutoff: u32,
    data: Vec<Amplitude>,
}

impl SpectralField {
    /// The zero field with the given cutoff.
    pub fn zeros(cutoff: u32) -> Self {
        let side = 2 * cutoff as usize + 1;
        SpectralField { cutoff, data: vec![ZERO; side * side * side] }
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    fn side(&self) -> usize {
        2 * self.cutoff as usize + 1
    }

    /// Storage slot of `k`, or `None` when `k` lies outside the cutoff.
    pub fn index(&self, k: WaveVector) -> Option<usize> {
        let kk = self.cutoff as i32;
        if k.iter().any(|&c| c < -kk || c > kk) {
            return None;
        }
        let n = self.side();
        let s = |c: i32| (c + kk) as usize;
        Some((s(k[0]) * n + s(k[1])) * n + s(k[2]))
    }

    /// Wave vector stored at slot `idx`.
    pub fn wave_vector(&self, idx: usize) -> WaveVector {
        let n = self.side();
        let kk = self.cutoff as i32;
        [
            (idx / (n * n)) as i32 - kk,
            ((idx / n) % n) as i32 - kk,
            (idx % n) as i32 - kk,
        ]
    }

    /// Amplitude at `k`; zero outside the cutoff.
    pub fn get(&self, k: WaveVector) -> Amplitude {
        self.index(k).map(|i| self.data[i]).unwrap_or(ZERO)
    }

    /// Sets `û(k) = a` and `û(-k) = conj(a)`.
    pub fn set(&mut self, k: WaveVector, a: Amplitude) -> Result<(), SpectralError> {
        if k == [0, 0, 0] {
            return Err(SpectralError::ZeroMode);
        }
        if a.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(SpectralError::NonFinite(k));
        }
        let i = self.index(k).ok_or(SpectralError::OutOfRange(k, self.cutoff))?;
        let j = self.index([-k[0], -k[1], -k[2]]).expect("cube is symmetric");
        self.data[i] = a;
        self.data[j] = [a[0].conj(), a[1].conj(), a[2].conj()];
        Ok(())
    }

    /// Raw storage, indexed by [`SpectralField::index`].
    pub fn as_slice(&self) -> &[Amplitude] {
        &self.data
    }

    /// Mutable raw storage. Callers must keep the conjugate symmetry.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [Amplitude] {
        &mut self.data
    }

    /// Iterates over `(k, û(k))` for every stored nonzero wave vector, zero
    /// amplitudes included.
    pub fn modes(&self) -> impl Iterator<Item = (WaveVector, &Amplitude)> + '_ {
        self.data
            .iter()
            .enumerate()
            .map(move |(i, a)| (self.wave_vector(i), a))
            .filter(|(k, _)| *k != [0, 0, 0])
    }

    /// Iterates over the lexicographically positive half of the modes.
    pub fn positive_modes(&self) -> impl Iterator<Item = (WaveVector, &Amplitude)> + '_ {
        self.modes().filter(|(k, _)| is_positive(*k))
    }

    fn check_same(&self, other: &SpectralField) -> Result<(), SpectralError> {
        if self.cutoff == other.cutoff {
            Ok(())
        } else {
            Err(SpectralError::CutoffMismatch(self.cutoff, other.cutoff))
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) -> Result<(), SpectralError> {
        self.check_same(other)?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            for c in 0..3 {
                x[c] += y[c] * a;
            }
        }
        Ok(())
    }

    /// `a * self`.
    pub fn scaled(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        for x in out.data.iter_mut() {
            for c in x.iter_mut() {
                *c *= a;
            }
        }
        out
    }

    /// `self + other`.
    pub fn add(&self, other: &SpectralField) -> Result<SpectralField, SpectralError> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    /// `self - other`.
    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField, SpectralError> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// Re-expresses the field at another cutoff, dropping modes that do not fit.
    pub fn with_cutoff(&self, cutoff: u32) -> SpectralField {
        let mut out = SpectralField::zeros(cutoff);
        for (k, a) in self.modes() {
            if let Some(i) = out.index(k) {
                out.data[i] = *a;
            }
        }
        out
    }

    /// True when every amplitude is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|a| a.iter().all(|c| c.re == 0.0 && c.im == 0.0))
    }

    /// Averages each mode with the conjugate of its mirror, restoring reality
    /// after rounding.
    pub fn symmetrize(&mut self) {
        for i in 0..self.data.len() {
            let k = self.wave_vector(i);
            if !is_positive(k) {
                continue;
            }
            let j = self.index([-k[0], -k[1], -k[2]]).unwrap();
            let a = self.data[i];
            let b = self.data[j];
            let m = [
                (a[0] + b[0].conj()) * 0.5,
                (a[1] + b[1].conj()) * 0.5,
                (a[2] + b[2].conj()) * 0.5,
            ];
            self.data[i] = m;
            self.data[j] = [m[0].conj(), m[1].conj(), m[2].conj()];
        }
    }

    /// Largest `|k·û(k)| / (|k| |û(k)|)` over the nonzero modes.
    pub fn divergence_ratio(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, a) in self.modes() {
            let amp = amp_norm_sq(a).sqrt();
            if amp == 0.0 {
                continue;
            }
            let d = dot_real(a, k).norm();
            worst = worst.max(d / ((norm_sq(k) as f64).sqrt() * amp));
        }
        worst
    }

    /// Largest `|û(-k) - conj(û(k))|` over the modes.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, a) in self.positive_modes() {
            let b = self.get([-k[0], -k[1], -k[2]]);
            for c in 0..3 {
                worst = worst.max((b[c] - a[c].conj()).norm());
            }
        }
        worst
    }
}

fn amp_norm_sq(a: &Amplitude) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}

fn dot_real(a: &Amplitude, k: WaveVector) -> Complex64 {
    a[0] * k[0] as f64 + a[1] * k[1] as f64 + a[2] * k[2] as f64
}

/// Leray projection `û - (k·û) k / |k|^2`, followed by symmetrization.
pub fn leray_project(u: &SpectralField) -> SpectralField {
    let mut out = u.clone();
    for i in 0..out.data.len() {
        let k = out.wave_vector(i);
        if k == [0, 0, 0] {
            continue;
        }
        out.data[i] = project_amplitude(&out.data[i], k);
    }
    out.symmetrize();
    out
}

fn project_amplitude(a: &Amplitude, k: WaveVector) -> Amplitude {
    let k2 = norm_sq(k) as f64;
    let d = dot_real(a, k) / k2;
    [a[0] - d * k[0] as f64, a[1] - d * k[1] as f64, a[2] - d * k[2] as f64]
}

/// Applies the radial multiplier `m(|k|^2)` mode by mode.
pub fn apply_multiplier(u: &SpectralField, m: impl Fn(f64) -> f64) -> SpectralField {
    let mut out = u.clone();
    for i in 0..out.data.len() {
        let k = out.wave_vector(i);
        if k == [0, 0, 0] {
            continue;
        }
        let f = m(norm_sq(k) as f64);
        for c in out.data[i].iter_mut() {
            *c *= f;
        }
    }
    out
}

/// `A^α u`; negative `α` gives the inverse powers.
pub fn stokes_power(u: &SpectralField, alpha: f64) -> SpectralField {
    apply_multiplier(u, |k2| k2.powf(alpha))
}

/// `A^{-1} u`.
pub fn inverse_stokes(u: &SpectralField) -> SpectralField {
    apply_multiplier(u, |k2| 1.0 / k2)
}

/// `e^{-tA} u`.
pub fn heat_semigroup(u: &SpectralField, t: f64) -> SpectralField {
    apply_multiplier(u, |k2| (-t * k2).exp())
}

/// Log of the Gevrey multiplier `|k|^{2α} e^{σ|k|}` at `|k|^2 = k2`.
fn log_gevrey_multiplier(idx: GevreyIndex, k2: f64) -> f64 {
    idx.alpha * k2.ln() + idx.sigma * k2.sqrt()
}

fn check_gevrey_range(cutoff: u32, idx: GevreyIndex) -> Result<(), SpectralError> {
    idx.validate()?;
    let k2 = 3.0 * (cutoff as f64).powi(2);
    let worst = log_gevrey_multiplier(idx, k2.max(1.0));
    if worst > MAX_LOG_MULTIPLIER {
        return Err(SpectralError::Overflow(worst));
    }
    Ok(())
}

/// `A^α e^{σA^{1/2}} u`, computed in log space.
pub fn gevrey_multiplier(u: &SpectralField, idx: GevreyIndex) -> Result<SpectralField, SpectralError> {
    check_gevrey_range(u.cutoff, idx)?;
    Ok(apply_multiplier(u, |k2| log_gevrey_multiplier(idx, k2).exp()))
}

/// `e^{σA^{1/2}} u`.
pub fn gevrey_exp(u: &SpectralField, sigma: f64) -> Result<SpectralField, SpectralError> {
    gevrey_multiplier(u, GevreyIndex { alpha: 0.0, sigma })
}

const VOLUME_SQRT: f64 = 15.749_609_945_722_419; // (2π)^{3/2}

/// Gevrey norm `|A^α e^{σA^{1/2}} u|` in L²(Ω).
pub fn gevrey_norm(u: &SpectralField, idx: GevreyIndex) -> Result<f64, SpectralError> {
    check_gevrey_range(u.cutoff, idx)?;
    let mut s = 0.0;
    for (k, a) in u.modes() {
        let w = (2.0 * log_gevrey_multiplier(idx, norm_sq(k) as f64)).exp();
        s += w * amp_norm_sq(a);
    }
    Ok(VOLUME_SQRT * s.sqrt())
}

/// L² norm `|u|`.
pub fn l2_norm(u: &SpectralField) -> f64 {
    VOLUME_SQRT * u.data.iter().map(amp_norm_sq).sum::<f64>().sqrt()
}

/// L² inner product `(u, v)`.
pub fn inner(u: &SpectralField, v: &SpectralField) -> Result<f64, SpectralError> {
    u.check_same(v)?;
    let mut s = 0.0;
    for (a, b) in u.data.iter().zip(&v.data) {
        for c in 0..3 {
            s += (a[c] * b[c].conj()).re;
        }
    }
    Ok(VOLUME_SQRT * VOLUME_SQRT * s)
}

/// `P_n u`: keeps the modes with `|k|^2 <= n`.
pub fn low_mode_project(u: &SpectralField, n: u64) -> SpectralField {
    apply_multiplier(u, |k2| if k2 <= n as f64 { 1.0 } else { 0.0 })
}

/// `d_0(α, σ) = (α / (eσ))^α = max_{x>=0} x^α e^{-σx}` for `σ > 0`, with
/// `d_0(0, σ) = 1`. Since `A^α` has symbol `|k|^{2α}`, the smoothing bound reads
/// `|A^α v| <= d_0(2α, σ) |e^{σA^{1/2}} v|`.
pub fn smoothing_constant(alpha: f64, sigma: f64) -> Result<f64, SpectralError> {
    if !(alpha >= 0.0 && sigma > 0.0 && alpha.is_finite() && sigma.is_finite()) {
        return Err(SpectralError::InvalidIndex(alpha, sigma));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    Ok((alpha / (std::f64::consts::E * sigma)).powf(alpha))
}

/// `B(u, v) = P((u·∇)v)`: exact truncated convolution followed by Leray
/// projection. Only the positive half of the output is summed; the other half
/// is filled by conjugation, so the result is exactly real.
pub fn bilinear(u: &SpectralField, v: &SpectralField) -> Result<SpectralField, SpectralError> {
    u.check_same(v)?;
    let kk = u.cutoff as i32;
    let mut out = SpectralField::zeros(u.cutoff);
    let n = u.side();
    let ud = &u.data;
    let vd = &v.data;
    for i in 0..out.data.len() {
        let k = out.wave_vector(i);
        if !is_positive(k) {
            continue;
        }
        let mut acc = ZERO;
        for p0 in (k[0] - kk).max(-kk)..=(k[0] + kk).min(kk) {
            let q0 = k[0] - p0;
            for p1 in (k[1] - kk).max(-kk)..=(k[1] + kk).min(kk) {
                let q1 = k[1] - p1;
                let lo = (k[2] - kk).max(-kk);
                let hi = (k[2] + kk).min(kk);
                let row_p = (((p0 + kk) as usize) * n + (p1 + kk) as usize) * n;
                let row_q = (((q0 + kk) as usize) * n + (q1 + kk) as usize) * n;
                for p2 in lo..=hi {
                    let q2 = k[2] - p2;
                    let up = &ud[row_p + (p2 + kk) as usize];
                    let vq = &vd[row_q + (q2 + kk) as usize];
                    let d = up[0] * q0 as f64 + up[1] * q1 as f64 + up[2] * q2 as f64;
                    acc[0] += d * vq[0];
                    acc[1] += d * vq[1];
                    acc[2] += d * vq[2];
                }
            }
        }
        let c = [acc[0] * Complex64::i(), acc[1] * Complex64::i(), acc[2] * Complex64::i()];
        let c = project_amplitude(&c, k);
        out.data[i] = c;
        let j = out.index([-k[0], -k[1], -k[2]]).unwrap();
        out.data[j] = [c[0].conj(), c[1].conj(), c[2].conj()];
    }
    Ok(out)
}

/// Trilinear form `b(u, v, w) = (B(u, v), w)`.
pub fn trilinear(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64, SpectralError> {
    inner(&bilinear(u, v)?, w)
}

/// Ratio `|B(u,v)|_{α,σ} / (|u|_{α+1/2,σ} |v|_{α+1/2,σ})`, whose supremum is the
/// constant in the Gevrey bilinear estimate. Returns 0 when a factor vanishes.
pub fn bilinear_estimate_ratio(
    u: &SpectralField,
    v: &SpectralField,
    idx: GevreyIndex,
) -> Result<f64, SpectralError> {
    let b = bilinear(u, v)?;
    bilinear_ratio_from(&b, u, v, idx)
}

/// Same as [`bilinear_estimate_ratio`] with `B(u, v)` already computed.
pub fn bilinear_ratio_from(
    b: &SpectralField,
    u: &SpectralField,
    v: &SpectralField,
    idx: GevreyIndex,
) -> Result<f64, SpectralError> {
    let up = GevreyIndex { alpha: idx.alpha + 0.5, sigma: idx.sigma };
    let den = gevrey_norm(u, up)? * gevrey_norm(v, up)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(gevrey_norm(b, idx)? / den)
}

/// A random real divergence-free field. Each positive mode gets an independent
/// complex Gaussian amplitude scaled by `envelope(|k|^2)` before projection.
pub fn random_field<R: Rng + ?Sized>(
    cutoff: u32,
    rng: &mut R,
    envelope: impl Fn(f64) -> f64,
) -> SpectralField {
    let mut out = SpectralField::zeros(cutoff);
    for i in 0..out.data.len() {
        let k = out.wave_vector(i);
        if !is_positive(k) {
            continue;
        }
        let e = envelope(norm_sq(k) as f64);
        let mut a = ZERO;
        for c in a.iter_mut() {
            *c = Complex64::new(gauss(rng), gauss(rng)) * e;
        }
        let a = project_amplitude(&a, k);
        let j = out.index([-k[0], -k[1], -k[2]]).unwrap();
        out.data[i] = a;
        out.data[j] = [a[0].conj(), a[1].conj(), a[2].conj()];
    }
    out
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller, cosine branch.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Wire format: `{"cutoff": K, "modes": [{"k": [..], "re": [..], "im": [..]}]}`,
/// listing only lexicographically positive wave vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldJson {
    pub cutoff: u32,
    pub modes: Vec<ModeJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeJson {
    pub k: WaveVector,
    pub re: [f64; 3],
    pub im: [f64; 3],
}

impl From<&SpectralField> for FieldJson {
    fn from(u: &SpectralField) -> Self {
        let modes = u
            .positive_modes()
            .filter(|(_, a)| amp_norm_sq(a) > 0.0)
            .map(|(k, a)| ModeJson {
                k,
                re: [a[0].re, a[1].re, a[2].re],
                im: [a[0].im, a[1].im, a[2].im],
            })
            .collect();
        FieldJson { cutoff: u.cutoff, modes }
    }
}

impl TryFrom<FieldJson> for SpectralField {
    type Error = SpectralError;

    fn try_from(j: FieldJson) -> Result<Self, Self::Error> {
        let mut out = SpectralField::zeros(j.cutoff);
        let mut seen = std::collections::HashSet::new();
        for m in j.modes {
            let (k, sign) = if is_positive(m.k) {
                (m.k, 1.0)
            } else {
                ([-m.k[0], -m.k[1], -m.k[2]], -1.0)
            };
            if !seen.insert(k) {
                return Err(SpectralError::Duplicate(m.k));
            }
            let a = [
                Complex64::new(m.re[0], sign * m.im[0]),
                Complex64::new(m.re[1], sign * m.im[1]),
                Complex64::new(m.re[2], sign * m.im[2]),
            ];
            out.set(k, a)?;
        }
        Ok(out)
    }
}

impl Serialize for SpectralField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FieldJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectralField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = FieldJson::deserialize(d)?;
        SpectralField::try_from(j).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn projection_of_single_mode() {
        let mut u = SpectralField::zeros(2);
        u.set([1, 1, 0], [c(1.0), c(0.0), c(0.0)]).unwrap();
        let p = leray_project(&u).get([1, 1, 0]);
        assert!((p[0].re - 0.5).abs() < 1e-15);
        assert!((p[1].re + 0.5).abs() < 1e-15);
        assert!(p[2].norm() < 1e-15);
    }

    #[test]
    fn gevrey_multiplier_value() {
        let mut u = SpectralField::zeros(2);
        u.set([1, 1, 1], [c(1.0), c(-1.0), c(0.0)]).unwrap();
        let idx = GevreyIndex::new(0.5, 2f64.ln()).unwrap();
        let m = gevrey_multiplier(&u, idx).unwrap().get([1, 1, 1]);
        let want = 3f64.sqrt() * 2f64.powf(3f64.sqrt());
        assert!((m[0].re - want).abs() < 1e-12 * want);
        assert!((want - 5.7537).abs() < 1e-3);
    }

    #[test]
    fn multiplier_overflow_is_reported() {
        let u = SpectralField::zeros(4);
        let err = gevrey_norm(&u, GevreyIndex { alpha: 0.0, sigma: 200.0 }).unwrap_err();
        assert!(matches!(err, SpectralError::Overflow(_)));
    }

    #[test]
    fn smoothing_constant_values() {
        assert!((smoothing_constant(1.0, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(smoothing_constant(0.0, 3.0).unwrap(), 1.0);
        assert!(smoothing_constant(1.0, 0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(2, &mut rng, |k2| (-k2).exp());
        let s = serde_json::to_string(&u).unwrap();
        let back: SpectralField = serde_json::from_str(&s).unwrap();
        assert_eq!(u, back);
    }

    #[test]
    fn json_rejects_out_of_range_modes() {
        let s = r#"{"cutoff":1,"modes":[{"k":[2,0,0],"re":[0,1,0],"im":[0,0,0]}]}"#;
        assert!(serde_json::from_str::<SpectralField>(s).is_err());
    }

    #[test]
    fn bilinear_output_is_real_and_solenoidal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_field(3, &mut rng, |_| 1.0);
        let v = random_field(3, &mut rng, |_| 1.0);
        let b = bilinear(&u, &v).unwrap();
        assert_eq!(b.reality_defect(), 0.0);
        assert!(b.divergence_ratio() < 1e-13);
    }
}
