//! Decay-rate families `ψ_λ(t)` with their exponent algebra.
//!
//! Each family supplies the product rule `ψ_λ ψ_μ = d ψ_{λ∧μ}` and the
//! derivative rule `ψ_λ' = Σ c ψ_{λ^∨(k)}`. The log, sine and tangent families
//! have derivatives smaller than every `ψ_μ`, so their derivative rule is empty.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used to identify real exponents.
pub const EXPONENT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecayError {
    #[error("t = {t} lies below the earliest valid time {t_min}")]
    BelowTmin { t: f64, t_min: f64 },
    #[error("inadmissible system: {0}")]
    Inadmissible(String),
    #[error("exponent {0} needs a (a, b) pair for a product system")]
    MissingPair(f64),
    #[error("no pair decomposition of {0}")]
    NoDecomposition(f64),
    #[error("ambiguous pair decomposition of {value}: {first} and {second}")]
    Ambiguous { value: f64, first: String, second: String },
}

/// Exact rational component of a product-system exponent.
pub type Rational = Ratio<i64>;

/// A decay exponent: its real value, plus the `(a, b)` pair for product systems.
#[derive(Debug, Clone, Copy)]
pub struct Exponent {
    pub value: f64,
    pub pair: Option<(Rational, Rational)>,
}

impl Exponent {
    pub fn real(value: f64) -> Self {
        Exponent { value, pair: None }
    }

    pub fn pair(a: Rational, b: Rational, gamma: f64) -> Self {
        Exponent { value: pair_value(a, b, gamma), pair: Some((a, b)) }
    }

    /// Equality used by the lattice: exact on pairs, `1e-9` on values.
    pub fn same(&self, other: &Exponent) -> bool {
        match (self.pair, other.pair) {
            (Some(p), Some(q)) => p == q,
            _ => (self.value - other.value).abs() <= EXPONENT_TOL,
        }
    }

    /// Ordering by value, ties broken by pair.
    pub fn cmp_key(&self, other: &Exponent) -> Ordering {
        if self.same(other) {
            return Ordering::Equal;
        }
        match self.value.partial_cmp(&other.value).unwrap_or(Ordering::Equal) {
            Ordering::Equal => self.pair.cmp(&other.pair),
            o => o,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pair {
            Some((a, b)) => write!(f, "{} ({}, {})", self.value, a, b),
            None => write!(f, "{}", self.value),
        }
    }
}

fn ratio_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `γa + (1-γ)b`.
pub fn pair_value(a: Rational, b: Rational, gamma: f64) -> f64 {
    gamma * ratio_f64(a) + (1.0 - gamma) * ratio_f64(b)
}

/// Formats a rational as `"p"` or `"p/q"`.
pub fn format_rational(r: Rational) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `"p"` or `"p/q"`.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let q: i64 = q.trim().parse().ok()?;
            if q == 0 {
                return None;
            }
            Some(Ratio::new(p.trim().parse().ok()?, q))
        }
        None => Some(Ratio::from_integer(s.parse().ok()?)),
    }
}

/// One monomial `c z^e` of the outer polynomial `Q0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

/// Wire form of a decay system: `{"kind": .., "params": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemKind {
    Power {},
    IteratedLog {
        /// Monomials of `Q0(z_1, .., z_m)`.
        q0: Vec<Monomial>,
        /// Coefficients of `Q1(s)` in ascending powers.
        q1: Vec<f64>,
        beta: f64,
        m: u32,
    },
    SqrtShift {},
    Product { gamma: f64 },
    SinLog { m: u32 },
    TanLog { m: u32 },
}

#[derive(Debug, Clone, PartialEq)]
struct LogData {
    q0: Vec<Monomial>,
    q1: Vec<f64>,
    beta: f64,
    m: usize,
    /// Leading multi-index `α_*` and its coefficient.
    lead: Vec<u32>,
    lead_coeff: f64,
    degree_q1: usize,
}

/// A validated decay system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemKind", into = "SystemKind")]
pub struct DecaySystem {
    kind: SystemKind,
    ln_t_min: f64,
    log: Option<LogData>,
}

impl From<DecaySystem> for SystemKind {
    fn from(s: DecaySystem) -> Self {
        s.kind
    }
}

impl TryFrom<SystemKind> for DecaySystem {
    type Error = DecayError;
    fn try_from(k: SystemKind) -> Result<Self, DecayError> {
        DecaySystem::new(k)
    }
}

/// Iterated logarithm `L_m(t)` from `ln t`; `None` when undefined.
fn iterated_log_from_ln(ln_t: f64, m: usize) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(m);
    let mut x = ln_t;
    out.push(x);
    for _ in 1..m {
        if x <= 0.0 {
            return None;
        }
        x = x.ln();
        out.push(x);
    }
    Some(out)
}

impl DecaySystem {
    /// Validates the parameters and locates the earliest valid time.
    pub fn new(kind: SystemKind) -> Result<Self, DecayError> {
        let bad = |s: &str| Err(DecayError::Inadmissible(s.to_string()));
        let mut sys = DecaySystem { kind: kind.clone(), ln_t_min: 0.0, log: None };
        match &kind {
            SystemKind::Power {} | SystemKind::SqrtShift {} => {}
            SystemKind::Product { gamma } => {
                if !(*gamma > 0.0 && *gamma < 1.0) {
                    return bad("product gamma must lie in (0, 1)");
                }
            }
            SystemKind::SinLog { m } | SystemKind::TanLog { m } => {
                if *m == 0 {
                    return bad("m must be at least 1");
                }
                // L_m(t) >= 1 keeps 1/L_m in (0, 1], where sin and tan are increasing.
                let mut x = 1.0f64;
                for _ in 1..*m {
                    x = x.exp();
                }
                sys.ln_t_min = x;
            }
            SystemKind::IteratedLog { q0, q1, beta, m } => {
                let m = *m as usize;
                if m == 0 {
                    return bad("m must be at least 1");
                }
                if !(*beta > 0.0 && beta.is_finite()) {
                    return bad("beta must be positive");
                }
                let degree_q1 = match q1.iter().rposition(|&c| c != 0.0) {
                    Some(d) if d >= 1 && q1[d] > 0.0 => d,
                    _ => return bad("Q1 needs degree >= 1 and a positive leading coefficient"),
                };
                let mut lead: Option<&Monomial> = None;
                for mono in q0 {
                    if mono.exponents.len() != m {
                        return bad("Q0 multi-index length must equal m");
                    }
                    if mono.coeff == 0.0 {
                        continue;
                    }
                    if lead.map_or(true, |l| mono.exponents > l.exponents) {
                        lead = Some(mono);
                    }
                }
                let lead = match lead {
                    Some(l) => l,
                    None => return bad("Q0 is the zero polynomial"),
                };
                if lead.coeff <= 0.0 {
                    return bad("leading coefficient of Q0 must be positive");
                }
                if lead.exponents.iter().sum::<u32>() == 0 {
                    return bad("leading monomial of Q0 must have degree >= 1");
                }
                sys.log = Some(LogData {
                    q0: q0.clone(),
                    q1: q1.clone(),
                    beta: *beta,
                    m,
                    lead: lead.exponents.clone(),
                    lead_coeff: lead.coeff,
                    degree_q1,
                });
                sys.ln_t_min = sys.locate_log_start()?;
            }
        }
        Ok(sys)
    }

    pub fn power() -> Self {
        DecaySystem::new(SystemKind::Power {}).unwrap()
    }

    pub fn sqrt_shift() -> Self {
        DecaySystem::new(SystemKind::SqrtShift {}).unwrap()
    }

    pub fn product(gamma: f64) -> Result<Self, DecayError> {
        DecaySystem::new(SystemKind::Product { gamma })
    }

    /// `ψ_λ = (ln t)^{-λ}` when `m = 1`, `(ln ln t)^{-λ}` when `m = 2`, and so on.
    pub fn pure_log(m: u32) -> Self {
        let mut e = vec![0; m as usize];
        e[m as usize - 1] = 1;
        DecaySystem::new(SystemKind::IteratedLog {
            q0: vec![Monomial { exponents: e, coeff: 1.0 }],
            q1: vec![0.0, 1.0],
            beta: 1.0,
            m,
        })
        .unwrap()
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SystemKind::Power {} => "power",
            SystemKind::IteratedLog { .. } => "iterated_log",
            SystemKind::SqrtShift {} => "sqrt_shift",
            SystemKind::Product { .. } => "product",
            SystemKind::SinLog { .. } => "sin_log",
            SystemKind::TanLog { .. } => "tan_log",
        }
    }

    /// Product systems index their exponents by exact pairs.
    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, SystemKind::Product { .. })
    }

    /// `γ` of a product system.
    pub fn gamma(&self) -> Option<f64> {
        match self.kind {
            SystemKind::Product { gamma } => Some(gamma),
            _ => None,
        }
    }

    /// Logarithmic families: derivative rule empty, decay slower than any power.
    pub fn is_logarithmic(&self) -> bool {
        matches!(
            self.kind,
            SystemKind::IteratedLog { .. } | SystemKind::SinLog { .. } | SystemKind::TanLog { .. }
        )
    }

    /// Earliest valid evaluation time `T_*`; may be infinite in f64 for deep
    /// iterated logs, see [`DecaySystem::ln_t_min`].
    pub fn t_min(&self) -> f64 {
        self.ln_t_min.exp()
    }

    pub fn ln_t_min(&self) -> f64 {
        self.ln_t_min
    }

    fn check_ln(&self, ln_t: f64) -> Result<(), DecayError> {
        if ln_t.is_nan() || ln_t < self.ln_t_min - 1e-12 {
            return Err(DecayError::BelowTmin { t: ln_t.exp(), t_min: self.t_min() });
        }
        Ok(())
    }

    fn log_m(&self) -> usize {
        match self.kind {
            SystemKind::SinLog { m } | SystemKind::TanLog { m } => m as usize,
            _ => 0,
        }
    }

    /// `ψ_λ(t)`.
    pub fn eval(&self, lam: &Exponent, t: f64) -> Result<f64, DecayError> {
        if !(t > 0.0) {
            return Err(DecayError::BelowTmin { t, t_min: self.t_min() });
        }
        match self.kind {
            SystemKind::Power {} => {
                self.check_ln(t.ln())?;
                Ok((-lam.value * t.ln()).exp())
            }
            SystemKind::SqrtShift {} => {
                self.check_ln(t.ln())?;
                Ok((-lam.value * (t.sqrt() + 1.0).ln()).exp())
            }
            SystemKind::Product { gamma } => {
                self.check_ln(t.ln())?;
                let (a, b) = lam.pair.ok_or(DecayError::MissingPair(lam.value))?;
                let x = (t.powf(gamma) + 1.0).ln();
                let y = (t.powf(1.0 - gamma) + 1.0).ln();
                Ok((-ratio_f64(a) * x - ratio_f64(b) * y).exp())
            }
            _ => self.eval_ln(lam, t.ln()),
        }
    }

    /// `ψ_λ` at time `e^{ln_t}`; supports times beyond the f64 range for the
    /// logarithmic families.
    pub fn eval_ln(&self, lam: &Exponent, ln_t: f64) -> Result<f64, DecayError> {
        self.check_ln(ln_t)?;
        match &self.kind {
            SystemKind::IteratedLog { .. } => {
                let w = self.omega_ln(ln_t)?;
                Ok((-lam.value * w.ln()).exp())
            }
            SystemKind::SinLog { .. } | SystemKind::TanLog { .. } => {
                let l = iterated_log_from_ln(ln_t, self.log_m())
                    .ok_or(DecayError::BelowTmin { t: ln_t.exp(), t_min: self.t_min() })?;
                let x = 1.0 / l[l.len() - 1];
                let base = if matches!(self.kind, SystemKind::SinLog { .. }) { x.sin() } else { x.tan() };
                Ok((lam.value * base.ln()).exp())
            }
            _ => self.eval(lam, ln_t.exp()),
        }
    }

    /// `ω(t) = Q0(L_1(Q1(t^β)), .., L_m(Q1(t^β)))` for iterated-log systems.
    pub fn omega_ln(&self, ln_t: f64) -> Result<f64, DecayError> {
        let d = self.log.as_ref().ok_or(DecayError::Inadmissible("not an iterated-log system".into()))?;
        let (w, _) = log_omega(d, ln_t).ok_or(DecayError::BelowTmin { t: ln_t.exp(), t_min: self.t_min() })?;
        Ok(w)
    }

    /// `dψ_λ/dt` in closed form.
    pub fn derivative(&self, lam: &Exponent, t: f64) -> Result<f64, DecayError> {
        let psi = self.eval(lam, t)?;
        let lv = lam.value;
        Ok(match &self.kind {
            SystemKind::Power {} => -lv * psi / t,
            SystemKind::SqrtShift {} => {
                let s = t.sqrt();
                -lv * psi / (s + 1.0) / (2.0 * s)
            }
            SystemKind::Product { gamma } => {
                let g = *gamma;
                let (a, b) = lam.pair.ok_or(DecayError::MissingPair(lv))?;
                let x = t.powf(g) + 1.0;
                let y = t.powf(1.0 - g) + 1.0;
                psi * (-ratio_f64(a) * g * t.powf(g - 1.0) / x
                    - ratio_f64(b) * (1.0 - g) * t.powf(-g) / y)
            }
            SystemKind::IteratedLog { .. } => {
                let d = self.log.as_ref().unwrap();
                let (w, dw) = log_omega(d, t.ln()).unwrap();
                -lv * psi / w * dw / t
            }
            SystemKind::SinLog { .. } | SystemKind::TanLog { .. } => {
                let l = iterated_log_from_ln(t.ln(), self.log_m()).unwrap();
                let lm = l[l.len() - 1];
                // dL_m/dt = 1 / (t L_1 .. L_{m-1})
                let dl = 1.0 / (t * l[..l.len() - 1].iter().product::<f64>());
                let x = 1.0 / lm;
                let dx = -dl / (lm * lm);
                if matches!(self.kind, SystemKind::SinLog { .. }) {
                    lv * psi * x.cos() / x.sin() * dx
                } else {
                    lv * psi / (x.sin() * x.cos()) * dx
                }
            }
        })
    }

    /// Background rate `φ_λ` with `ψ_λ ≍ φ_λ`.
    pub fn background_rate(&self, lam: &Exponent, t: f64) -> Result<f64, DecayError> {
        if !(t > 0.0) {
            return Err(DecayError::BelowTmin { t, t_min: self.t_min() });
        }
        self.check_ln(t.ln())?;
        let lv = lam.value;
        Ok(match &self.kind {
            SystemKind::Power {} | SystemKind::Product { .. } => (-lv * t.ln()).exp(),
            SystemKind::SqrtShift {} => (-0.5 * lv * t.ln()).exp(),
            SystemKind::IteratedLog { .. } => {
                let d = self.log.as_ref().unwrap();
                let l = iterated_log_from_ln(t.ln(), d.m).unwrap();
                let c = d.lead_coeff * (d.beta * d.degree_q1 as f64).powi(d.lead[0] as i32);
                let mut s = -lv * c.ln();
                for (lk, &ak) in l.iter().zip(&d.lead) {
                    if ak > 0 {
                        s -= lv * ak as f64 * lk.ln();
                    }
                }
                s.exp()
            }
            SystemKind::SinLog { .. } | SystemKind::TanLog { .. } => {
                let l = iterated_log_from_ln(t.ln(), self.log_m()).unwrap();
                (-lv * l[l.len() - 1].ln()).exp()
            }
        })
    }

    /// Regression coordinate for decay fits: `ln ω(t)` for iterated logs,
    /// `-ln φ_1(t)` otherwise. A remainder `≍ ψ_λ` has slope `λ` against it.
    pub fn fit_coordinate(&self, t: f64) -> Result<f64, DecayError> {
        match &self.kind {
            SystemKind::IteratedLog { .. } => {
                self.check_ln(t.ln())?;
                Ok(self.omega_ln(t.ln())?.ln())
            }
            _ => Ok(-self.background_rate(&Exponent::real(1.0), t)?.ln()),
        }
    }

    /// `λ∧μ` and the constant `d` in `ψ_λ ψ_μ = d ψ_{λ∧μ}`.
    pub fn wedge(&self, lam: &Exponent, mu: &Exponent) -> Result<(Exponent, f64), DecayError> {
        match self.kind {
            SystemKind::Product { gamma } => {
                let (a1, b1) = lam.pair.ok_or(DecayError::MissingPair(lam.value))?;
                let (a2, b2) = mu.pair.ok_or(DecayError::MissingPair(mu.value))?;
                Ok((Exponent::pair(a1 + a2, b1 + b2, gamma), 1.0))
            }
            _ => Ok((Exponent::real(lam.value + mu.value), 1.0)),
        }
    }

    /// Derivative rule `ψ_λ' = Σ c ψ_μ`, truncated to exponents `<= cutoff`.
    /// Terms with zero coefficient are dropped.
    pub fn vee(&self, lam: &Exponent, cutoff: f64) -> Result<Vec<(Exponent, f64)>, DecayError> {
        let lim = cutoff + EXPONENT_TOL;
        let mut out = Vec::new();
        match self.kind {
            SystemKind::Power {} => {
                if lam.value + 1.0 <= lim && lam.value != 0.0 {
                    out.push((Exponent::real(lam.value + 1.0), -lam.value));
                }
            }
            SystemKind::SqrtShift {} => {
                if lam.value != 0.0 {
                    let mut k = 1.0;
                    while lam.value + 1.0 + k <= lim {
                        out.push((Exponent::real(lam.value + 1.0 + k), -lam.value / 2.0));
                        k += 1.0;
                    }
                }
            }
            SystemKind::Product { gamma } => {
                let (a, b) = lam.pair.ok_or(DecayError::MissingPair(lam.value))?;
                let one = Rational::from_integer(1);
                let ca = -gamma * ratio_f64(a);
                let cb = -(1.0 - gamma) * ratio_f64(b);
                // k = 1 is shared by both families.
                let merged = Exponent::pair(a + one, b + one, gamma);
                if merged.value <= lim && ca + cb != 0.0 {
                    out.push((merged, ca + cb));
                }
                let mut k = Rational::from_integer(2);
                loop {
                    let e1 = Exponent::pair(a + one, b + k, gamma);
                    let e2 = Exponent::pair(a + k, b + one, gamma);
                    let mut any = false;
                    if e1.value <= lim {
                        any = true;
                        if ca != 0.0 {
                            out.push((e1, ca));
                        }
                    }
                    if e2.value <= lim {
                        any = true;
                        if cb != 0.0 {
                            out.push((e2, cb));
                        }
                    }
                    if !any {
                        break;
                    }
                    k += one;
                }
            }
            _ => {}
        }
        Ok(out)
    }

    /// Unique `(a, b)` in `E1 × E2` with `γa + (1-γ)b = μ`, where `E1` and `E2`
    /// are the sets `{Σ ā_n + k}` and `{Σ b̄_n + k}` (`k >= 0`) spanned by the
    /// generator pairs.
    pub fn decompose_product_exponent(
        &self,
        mu: f64,
        generators: &[(Rational, Rational)],
    ) -> Result<Exponent, DecayError> {
        let gamma = self.gamma().ok_or(DecayError::Inadmissible("not a product system".into()))?;
        let e1 = shifted_sums(generators.iter().map(|g| g.0), mu / gamma + 1.0);
        let e2 = shifted_sums(generators.iter().map(|g| g.1), mu / (1.0 - gamma) + 1.0);
        let mut found: Option<(Rational, Rational)> = None;
        for &a in &e1 {
            for &b in &e2 {
                if (pair_value(a, b, gamma) - mu).abs() <= EXPONENT_TOL {
                    if let Some(f) = found {
                        if f != (a, b) {
                            return Err(DecayError::Ambiguous {
                                value: mu,
                                first: format!("({}, {})", f.0, f.1),
                                second: format!("({}, {})", a, b),
                            });
                        }
                    }
                    found = Some((a, b));
                }
            }
        }
        found
            .map(|(a, b)| Exponent::pair(a, b, gamma))
            .ok_or(DecayError::NoDecomposition(mu))
    }

    /// First point from which iterated-log evaluation is valid, `ω > 0` and `ω`
    /// increasing, together with `L_m(Q1(t^β)) >= 0.1`.
    fn locate_log_start(&self) -> Result<f64, DecayError> {
        let d = self.log.as_ref().unwrap();
        let ok = |x: f64| match log_omega_full(d, x) {
            Some((w, dw, lm)) => lm >= 0.1 && w > 0.0 && dw > 0.0,
            None => false,
        };
        // Coarse geometric scan in ln t, then bisection after the last failure.
        let mut grid = vec![0.0];
        let mut x = 1e-3;
        while x < 1e12 {
            grid.push(x);
            x *= 1.01;
        }
        let last_fail = grid.iter().rposition(|&x| !ok(x));
        let (mut lo, mut hi) = match last_fail {
            None => return Ok(0.0),
            Some(i) if i + 1 == grid.len() => {
                return Err(DecayError::Inadmissible("no valid start time below ln t = 1e12".into()))
            }
            Some(i) => (grid[i], grid[i + 1]),
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Integer-shifted sums `{Σ g_i + k}` of the generators (at least one
/// generator, `k >= 0`), up to `bound`.
fn shifted_sums(gens: impl Iterator<Item = Rational>, bound: f64) -> Vec<Rational> {
    let gens: Vec<Rational> = gens.collect();
    let zero = Rational::from_integer(0);
    let mut sums: BTreeSet<Rational> = gens.iter().copied().filter(|&g| ratio_f64(g) <= bound).collect();
    let mut frontier: Vec<Rational> = sums.iter().copied().collect();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &x in &frontier {
            for &g in gens.iter().filter(|&&g| g > zero) {
                let y = x + g;
                if ratio_f64(y) <= bound && sums.insert(y) {
                    next.push(y);
                }
            }
        }
        frontier = next;
    }
    let one = Rational::from_integer(1);
    let mut out = BTreeSet::new();
    for &s in &sums {
        let mut y = s;
        while ratio_f64(y) <= bound {
            out.insert(y);
            y += one;
        }
    }
    out.into_iter().collect()
}

fn ln_q1(q1: &[f64], degree: usize, ln_s: f64) -> Option<(f64, f64)> {
    // Returns (ln Q1(s), s Q1'(s) / Q1(s)).
    if ln_s > 0.0 {
        let inv = (-ln_s).exp();
        let mut p = 0.0;
        let mut dp = 0.0;
        for (i, &c) in q1.iter().enumerate().take(degree + 1) {
            let w = c * inv.powi((degree - i) as i32);
            p += w;
            dp += i as f64 * w;
        }
        if p <= 0.0 {
            return None;
        }
        Some((degree as f64 * ln_s + p.ln(), dp / p))
    } else {
        let s = ln_s.exp();
        let mut p = 0.0;
        let mut dp = 0.0;
        for (i, &c) in q1.iter().enumerate() {
            let w = c * s.powi(i as i32);
            p += w;
            dp += i as f64 * w;
        }
        if p <= 0.0 {
            return None;
        }
        Some((p.ln(), dp / p))
    }
}

/// `(ω, dω/d ln t, L_m(Q1(t^β)))`.
fn log_omega_full(d: &LogData, ln_t: f64) -> Option<(f64, f64, f64)> {
    let (l1, r) = ln_q1(&d.q1, d.degree_q1, d.beta * ln_t)?;
    let mut l = vec![l1];
    let mut dl = vec![r * d.beta];
    for j in 1..d.m {
        let prev = l[j - 1];
        if prev <= 0.0 {
            return None;
        }
        l.push(prev.ln());
        dl.push(dl[j - 1] / prev);
    }
    let mut w = 0.0;
    let mut dw = 0.0;
    for mono in &d.q0 {
        let mut term = mono.coeff;
        for (lj, &e) in l.iter().zip(&mono.exponents) {
            term *= lj.powi(e as i32);
        }
        w += term;
        for j in 0..d.m {
            let e = mono.exponents[j];
            if e == 0 {
                continue;
            }
            let mut g = mono.coeff * e as f64 * l[j].powi(e as i32 - 1) * dl[j];
            for (i, (li, &ei)) in l.iter().zip(&mono.exponents).enumerate() {
                if i != j {
                    g *= li.powi(ei as i32);
                }
            }
            dw += g;
        }
    }
    Some((w, dw, l[d.m - 1]))
}

fn log_omega(d: &LogData, ln_t: f64) -> Option<(f64, f64)> {
    log_omega_full(d, ln_t).map(|(w, dw, _)| (w, dw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn power_values() {
        let s = DecaySystem::power();
        assert!((s.eval(&Exponent::real(1.5), 10.0).unwrap() - 10f64.powf(-1.5)).abs() < 1e-16);
        let (w, d) = s.wedge(&Exponent::real(0.5), &Exponent::real(1.5)).unwrap();
        assert_eq!((w.value, d), (2.0, 1.0));
        let v = s.vee(&Exponent::real(2.0), 10.0).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].0.value, v[0].1), (3.0, -2.0));
    }

    #[test]
    fn sqrt_shift_background_bracket() {
        let s = DecaySystem::sqrt_shift();
        for t in [1.0, 2.0, 10.0, 1e4] {
            let q = s.eval(&Exponent::real(2.0), t).unwrap()
                / s.background_rate(&Exponent::real(2.0), t).unwrap();
            assert!((0.25..=1.0).contains(&q));
        }
    }

    #[test]
    fn pure_log_lemma_limit() {
        let s = DecaySystem::pure_log(1);
        let lam = Exponent::real(2.0);
        let q = s.eval(&lam, 1e6).unwrap() / s.background_rate(&lam, 1e6).unwrap();
        assert!((q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inadmissible_q0_is_rejected() {
        let k = SystemKind::IteratedLog {
            q0: vec![Monomial { exponents: vec![1], coeff: -1.0 }],
            q1: vec![0.0, 1.0],
            beta: 1.0,
            m: 1,
        };
        assert!(DecaySystem::new(k).is_err());
    }

    #[test]
    fn product_decomposition() {
        let g = std::f64::consts::SQRT_2 / 2.0;
        let s = DecaySystem::product(g).unwrap();
        let mu = g * 3.0 + (1.0 - g) * 3.0;
        let e = s.decompose_product_exponent(mu, &[(r(2), r(3))]).unwrap();
        assert_eq!(e.pair, Some((r(3), r(3))));
    }

    #[test]
    fn product_vee_merges_first_shift() {
        let g = 0.3;
        let s = DecaySystem::product(g).unwrap();
        let v = s.vee(&Exponent::pair(r(1), r(2), g), 4.0).unwrap();
        let first = v.iter().find(|(e, _)| e.pair == Some((r(2), r(3)))).unwrap();
        assert!((first.1 - (-g - 2.0 * (1.0 - g))).abs() < 1e-15);
    }

    #[test]
    fn rational_text_round_trip() {
        for s in ["3", "-2", "3/2"] {
            assert_eq!(format_rational(parse_rational(s).unwrap()), s);
        }
        assert!(parse_rational("1/0").is_none());
    }
}
