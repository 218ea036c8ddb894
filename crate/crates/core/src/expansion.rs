//! Coefficient recursion for the asymptotic expansion `u ~ Σ ξ_n ψ_{λ_n}` of a
//! solution driven by a force `f ~ Σ φ_n ψ_{λ_n}`.
//!
//! Each coefficient solves a Stokes problem
//! `A ξ_n = φ_n - χ_n - Σ_{λ_k∧λ_m=λ_n} d B(ξ_k, ξ_m)`, where `χ_n` collects the
//! vee terms `c ξ_p` that the time derivative of earlier terms sends to `λ_n`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decay::{DecayError, Exponent, Rational};
use crate::lattice::{ExponentLattice, LatticeError};
use crate::spectral::{bilinear, inverse_stokes, leray_project, SpectralError, SpectralField};

/// Limit on the number of (wedge + vee) contributions assembled for one index.
pub const MAX_CONTRIBUTIONS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpansionError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Decay(#[from] DecayError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("expected {expected} force coefficients, got {got}")]
    Length { expected: usize, got: usize },
    #[error("index {n} collects {count} contributions (limit {MAX_CONTRIBUTIONS})")]
    TooManyContributions { n: usize, count: usize },
    #[error("requested {0} terms but the lattice has only {1}")]
    Truncation(usize, usize),
    #[error("discrete recursion needs a product system with paired exponents")]
    NotDiscrete,
    #[error("exponent {0} falls outside the lattice cutoff")]
    Overflow(String),
}

/// Coefficients `ξ_n` aligned with the entries of a lattice.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub lattice: ExponentLattice,
    pub coeffs: Vec<SpectralField>,
}

impl Expansion {
    /// `Σ_{n < count} ξ_n ψ_{λ_n}(t)`.
    pub fn evaluate(&self, t: f64, count: usize) -> Result<SpectralField, ExpansionError> {
        let sys = self.lattice.system();
        let cutoff = self.coeffs.first().map(|f| f.cutoff()).unwrap_or(0);
        let mut out = SpectralField::zeros(cutoff);
        for n in 0..count.min(self.coeffs.len()) {
            if self.coeffs[n].is_zero() {
                continue;
            }
            let psi = sys.eval(self.lattice.exponent(n), t)?;
            out.axpy(psi, &self.coeffs[n])?;
        }
        Ok(out)
    }

    /// Wire form `[{n, lambda, field}]`, one-based.
    pub fn to_dump(&self) -> Vec<CoeffDumpEntry> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, f)| CoeffDumpEntry {
                n: i + 1,
                lambda: self.lattice.exponent(i).value,
                field: f.clone(),
            })
            .collect()
    }
}

/// One row of the coefficient dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffDumpEntry {
    pub n: usize,
    pub lambda: f64,
    pub field: SpectralField,
}

/// An extra force term given in closed form rather than on the lattice.
#[derive(Debug, Clone)]
pub enum ExtraTerm {
    /// `field · dψ_λ/dt`.
    Derivative { exponent: Exponent, field: SpectralField },
}

/// A force `f(t) = Σ φ_n ψ_{λ_n}(t) + extras(t)`.
#[derive(Debug, Clone)]
pub struct ForceSpec {
    pub lattice: ExponentLattice,
    pub phi: Vec<SpectralField>,
    pub extras: Vec<ExtraTerm>,
}

impl ForceSpec {
    /// The zero force on a lattice.
    pub fn zero(lattice: ExponentLattice, cutoff: u32) -> Self {
        let phi = vec![SpectralField::zeros(cutoff); lattice.len()];
        ForceSpec { lattice, phi, extras: Vec::new() }
    }

    pub fn cutoff(&self) -> u32 {
        self.phi.first().map(|f| f.cutoff()).unwrap_or(0)
    }

    /// `f(t)`.
    pub fn eval(&self, t: f64) -> Result<SpectralField, ExpansionError> {
        let sys = self.lattice.system();
        let mut out = SpectralField::zeros(self.cutoff());
        for (n, phi) in self.phi.iter().enumerate() {
            if phi.is_zero() {
                continue;
            }
            out.axpy(sys.eval(self.lattice.exponent(n), t)?, phi)?;
        }
        for e in &self.extras {
            match e {
                ExtraTerm::Derivative { exponent, field } => {
                    out.axpy(sys.derivative(exponent, t)?, field)?;
                }
            }
        }
        Ok(out)
    }

    /// `f'(t)`. Extra terms are differentiated by a central difference of
    /// their closed-form derivative.
    pub fn eval_derivative(&self, t: f64) -> Result<SpectralField, ExpansionError> {
        let sys = self.lattice.system();
        let mut out = SpectralField::zeros(self.cutoff());
        for (n, phi) in self.phi.iter().enumerate() {
            if phi.is_zero() {
                continue;
            }
            out.axpy(sys.derivative(self.lattice.exponent(n), t)?, phi)?;
        }
        let dt = 1e-4 * (t - sys.t_min()).min(t.abs());
        for e in &self.extras {
            match e {
                ExtraTerm::Derivative { exponent, field } => {
                    let d2 = (sys.derivative(exponent, t + dt)? - sys.derivative(exponent, t - dt)?) / (2.0 * dt);
                    out.axpy(d2, field)?;
                }
            }
        }
        Ok(out)
    }
}

fn check_inputs(lattice: &ExponentLattice, phi: &[SpectralField], count: usize) -> Result<(), ExpansionError> {
    if phi.len() != lattice.len() {
        return Err(ExpansionError::Length { expected: lattice.len(), got: phi.len() });
    }
    if count > lattice.len() {
        return Err(ExpansionError::Truncation(count, lattice.len()));
    }
    Ok(())
}

/// Memoized `B(ξ_k, ξ_m)`.
struct BilinearCache<'a> {
    xi: &'a [SpectralField],
    memo: HashMap<(usize, usize), SpectralField>,
}

impl BilinearCache<'_> {
    fn get(&mut self, k: usize, m: usize) -> Result<Option<&SpectralField>, ExpansionError> {
        if self.xi[k].is_zero() || self.xi[m].is_zero() {
            return Ok(None);
        }
        if !self.memo.contains_key(&(k, m)) {
            let b = bilinear(&self.xi[k], &self.xi[m])?;
            self.memo.insert((k, m), b);
        }
        Ok(self.memo.get(&(k, m)))
    }
}

fn solve_index(
    n: usize,
    phi: &SpectralField,
    vee: &[(usize, f64)],
    wedge: &[(usize, usize, f64)],
    xi: &[SpectralField],
) -> Result<SpectralField, ExpansionError> {
    let count = vee.len() + wedge.len();
    if count > MAX_CONTRIBUTIONS {
        return Err(ExpansionError::TooManyContributions { n: n + 1, count });
    }
    let mut rhs = leray_project(phi);
    for &(p, c) in vee {
        rhs.axpy(-c, &xi[p])?;
    }
    let mut cache = BilinearCache { xi, memo: HashMap::new() };
    for &(k, m, d) in wedge {
        if let Some(b) = cache.get(k, m)? {
            rhs.axpy(-d, b)?;
        }
    }
    Ok(inverse_stokes(&rhs))
}

/// `ξ_1, .., ξ_count` for a continuum decay system. Coefficients past `count`
/// are left at zero.
pub fn compute_coefficients(
    lattice: &ExponentLattice,
    phi: &[SpectralField],
    count: usize,
) -> Result<Expansion, ExpansionError> {
    check_inputs(lattice, phi, count)?;
    let cutoff = phi.first().map(|f| f.cutoff()).unwrap_or(0);
    let mut xi: Vec<SpectralField> = Vec::with_capacity(lattice.len());
    for n in 0..count {
        let x = solve_index(n, &phi[n], &lattice.vee_terms(n), &lattice.wedge_pairs(n), &xi)?;
        xi.push(x);
    }
    xi.resize(lattice.len(), SpectralField::zeros(cutoff));
    Ok(Expansion { lattice: lattice.clone(), coeffs: xi })
}

/// The coefficient `c_{p,n}` of the discrete recursion for a product system:
/// the weight of `ψ_{λ_n}` in the derivative of `ψ_{λ_p}`, read off the pairs.
pub fn discrete_vee_coefficient(gamma: f64, p: (Rational, Rational), n: (Rational, Rational)) -> f64 {
    let one = Rational::from_integer(1);
    let is_shift = |d: Rational| d >= one && d.is_integer();
    let mut c = 0.0;
    if n.0 == p.0 + one && is_shift(n.1 - p.1) {
        c -= gamma * (*p.0.numer() as f64 / *p.0.denom() as f64);
    }
    if n.1 == p.1 + one && is_shift(n.0 - p.0) {
        c -= (1.0 - gamma) * (*p.1.numer() as f64 / *p.1.denom() as f64);
    }
    c
}

/// Discrete recursion for product systems. Wedge pairs are found by exact pair
/// subtraction and `c_{p,n}` by [`discrete_vee_coefficient`], independently of
/// the lattice provenance.
pub fn compute_coefficients_discrete(
    lattice: &ExponentLattice,
    phi: &[SpectralField],
    count: usize,
) -> Result<Expansion, ExpansionError> {
    check_inputs(lattice, phi, count)?;
    let gamma = lattice.system().gamma().ok_or(ExpansionError::NotDiscrete)?;
    let mut pairs = Vec::with_capacity(lattice.len());
    for e in lattice.entries() {
        pairs.push(e.exponent.pair.ok_or(ExpansionError::NotDiscrete)?);
    }
    let index: HashMap<(Rational, Rational), usize> =
        pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let cutoff = phi.first().map(|f| f.cutoff()).unwrap_or(0);
    let mut xi: Vec<SpectralField> = Vec::with_capacity(lattice.len());
    for n in 0..count {
        let (an, bn) = pairs[n];
        let mut wedge = Vec::new();
        for (k, &(ak, bk)) in pairs.iter().enumerate().take(n) {
            if let Some(&m) = index.get(&(an - ak, bn - bk)) {
                wedge.push((k, m, 1.0));
            }
        }
        let mut vee = Vec::new();
        for (p, &pp) in pairs.iter().enumerate().take(n) {
            let c = discrete_vee_coefficient(gamma, pp, pairs[n]);
            if c != 0.0 {
                vee.push((p, c));
            }
        }
        let x = solve_index(n, &phi[n], &vee, &wedge, &xi)?;
        xi.push(x);
    }
    xi.resize(lattice.len(), SpectralField::zeros(cutoff));
    Ok(Expansion { lattice: lattice.clone(), coeffs: xi })
}

/// Dispatches to the discrete recursion for product systems.
pub fn compute_for_system(
    lattice: &ExponentLattice,
    phi: &[SpectralField],
    count: usize,
) -> Result<Expansion, ExpansionError> {
    if lattice.system().is_discrete() {
        compute_coefficients_discrete(lattice, phi, count)
    } else {
        compute_coefficients(lattice, phi, count)
    }
}

/// Lattice index of `e`, or an overflow error naming it.
pub fn locate(lattice: &ExponentLattice, e: &Exponent) -> Result<usize, ExpansionError> {
    lattice.index_of(e).ok_or_else(|| ExpansionError::Overflow(e.to_string()))
}
