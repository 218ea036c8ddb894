//! Galerkin integrator for `u' + Au + B(u, u) = f(t)`.
//!
//! The Stokes term is integrated exactly through exponential multipliers; the
//! remainder is advanced with the five-stage exponential Runge-Kutta scheme of
//! Hochbruck and Ostermann, which keeps order four on stiff modes. Local error
//! is estimated by step doubling. Since the order does not degrade when
//! `h|k|² >> 1`, the step grows with `t` while the solution follows its slowly
//! varying quasi-steady state.
//!
//! Three scalar integrals are accumulated alongside so the energy budget can
//! be checked: `∫‖u‖²`, `∫(f, u)` and `∫ e^{-(t-τ)}|f|² dτ`.

use serde::Serialize;
use thiserror::Error;

use crate::expansion::{ExpansionError, ForceSpec};
use crate::spectral::{
    bilinear, gevrey_norm, inner, l2_norm, stokes_power, GevreyIndex, SpectralError, SpectralField,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Force(#[from] ExpansionError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("blow-up at t = {t}: |u| = {norm} exceeds {limit}")]
    BlowUp { t: f64, norm: f64, limit: f64 },
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
}

/// Integration settings.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub t0: f64,
    pub t1: f64,
    /// Per-step relative error target.
    pub tol: f64,
    /// Snapshot times form the geometric grid `t0 r^j`, plus `t1`.
    pub snapshot_ratio: f64,
    /// Upper bound on `h / t`.
    pub max_step_fraction: f64,
    pub initial_step: f64,
    /// Abort once `|u|` exceeds this multiple of the initial scale.
    pub blowup_factor: f64,
    pub max_steps: usize,
}

impl SolverConfig {
    pub fn new(t0: f64, t1: f64, tol: f64) -> Self {
        SolverConfig {
            t0,
            t1,
            tol,
            snapshot_ratio: 1.1,
            max_step_fraction: 0.5,
            initial_step: 1e-2,
            blowup_factor: 1e3,
            max_steps: 1_000_000,
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        let bad = |s: &str| Err(SolverError::Config(s.to_string()));
        if !(self.t0 > 0.0 && self.t1 > self.t0 && self.t1.is_finite()) {
            return bad("need 0 < t0 < t1 < inf");
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return bad("tol must lie in (0, 1)");
        }
        if !(self.snapshot_ratio > 1.0) {
            return bad("snapshot ratio must exceed 1");
        }
        if !(self.max_step_fraction > 0.0 && self.initial_step > 0.0 && self.blowup_factor > 1.0) {
            return bad("step controls must be positive");
        }
        Ok(())
    }

    /// The snapshot grid.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut ts = vec![self.t0];
        let mut j = 1;
        loop {
            let t = self.t0 * self.snapshot_ratio.powi(j);
            if t >= self.t1 * (1.0 - 1e-12) {
                break;
            }
            ts.push(t);
            j += 1;
        }
        ts.push(self.t1);
        ts
    }
}

/// Which equation to integrate.
#[derive(Debug, Clone)]
pub enum Dynamics {
    /// `u' + Au + B(u, u) = f`.
    NavierStokes,
    /// `w' + Aw = ξ + f`, the linear problem used to validate the integrator.
    Linear { source: SpectralField },
}

/// Solution state at a snapshot time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: SpectralField,
    /// Last accepted step before the snapshot.
    pub step: f64,
    /// Energy budget integrals from `t0`.
    pub dissipation: f64,
    pub work: f64,
    pub forcing_envelope: f64,
}

/// Per accepted step diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub h: f64,
    pub error: f64,
    /// `|b(u, u, u)| / |u|_{1/2,0}^3` at the start of the step.
    pub orthogonality: f64,
}

/// Output of [`simulate`].
#[derive(Debug, Clone)]
pub struct Trace {
    pub snapshots: Vec<Snapshot>,
    pub steps: Vec<StepRecord>,
    pub rejected: usize,
}

impl Trace {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a trace holds at least the initial snapshot")
    }

    /// Largest trilinear orthogonality defect seen at any accepted step.
    pub fn max_orthogonality(&self) -> f64 {
        self.steps.iter().map(|s| s.orthogonality).fold(0.0, f64::max)
    }

    /// Snapshot closest to `t`.
    pub fn at(&self, t: f64) -> &Snapshot {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).unwrap())
            .unwrap()
    }

    /// CSV with columns `t, l2, <requested norms>, step`.
    pub fn write_csv<W: std::io::Write>(&self, w: W, norms: &[GevreyIndex]) -> Result<(), SolverError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "l2".to_string()];
        for n in norms {
            header.push(format!("gevrey_{}_{}", n.alpha, n.sigma));
        }
        header.push("step".to_string());
        out.write_record(&header).map_err(|e| SolverError::Config(e.to_string()))?;
        for s in &self.snapshots {
            let mut row = vec![s.t.to_string(), l2_norm(&s.field).to_string()];
            for n in norms {
                row.push(gevrey_norm(&s.field, *n)?.to_string());
            }
            row.push(s.step.to_string());
            out.write_record(&row).map_err(|e| SolverError::Config(e.to_string()))?;
        }
        out.flush().map_err(|e| SolverError::Config(e.to_string()))?;
        Ok(())
    }
}

/// `φ_1, φ_2, φ_3` at `z <= 0`.
fn phi_functions(z: f64) -> (f64, f64, f64) {
    if z.abs() < 1.0 {
        // φ_k(z) = Σ_j z^j / (j + k)!
        let mut p = [0.0; 3];
        for (k, out) in p.iter_mut().enumerate() {
            let mut term = 1.0;
            for i in 1..=(k + 1) {
                term /= i as f64;
            }
            let mut s = 0.0;
            for j in 0..30 {
                s += term;
                term *= z / (j + k + 2) as f64;
            }
            *out = s;
        }
        (p[0], p[1], p[2])
    } else {
        let e = z.exp();
        let p1 = (e - 1.0) / z;
        let p2 = (p1 - 1.0) / z;
        let p3 = (p2 - 0.5) / z;
        (p1, p2, p3)
    }
}

/// Scheme weights for one linear rate `L` and step `h`: `e^{hL}`,
/// `e^{hL/2}` and `h` times the stage and output coefficients.
#[derive(Debug, Clone, Copy)]
struct Weights {
    e: f64,
    e_half: f64,
    a21: f64,
    a31: f64,
    a32: f64,
    a41: f64,
    a42: f64,
    a51: f64,
    a52: f64,
    a54: f64,
    b1: f64,
    b4: f64,
    b5: f64,
}

impl Weights {
    fn new(rate: f64, h: f64) -> Self {
        let z = rate * h;
        let (h1, h2, h3) = phi_functions(z / 2.0);
        let (p1, p2, p3) = phi_functions(z);
        let a52 = 0.5 * h2 - p3 + 0.25 * p2 - 0.5 * h3;
        let a54 = 0.25 * h2 - a52;
        Weights {
            e: z.exp(),
            e_half: (z / 2.0).exp(),
            a21: h * 0.5 * h1,
            a31: h * (0.5 * h1 - h2),
            a32: h * h2,
            a41: h * (p1 - 2.0 * p2),
            a42: h * p2,
            a51: h * (0.5 * h1 - 2.0 * a52 - a54),
            a52: h * a52,
            a54: h * a54,
            b1: h * (p1 - 3.0 * p2 + 4.0 * p3),
            b4: h * (-p2 + 4.0 * p3),
            b5: h * (4.0 * p2 - 8.0 * p3),
        }
    }
}

struct Rhs<'a> {
    force: &'a ForceSpec,
    dynamics: &'a Dynamics,
}

impl Rhs<'_> {
    /// Nonlinear part `N(u, t)`. Also returns `B(u, u)` so the caller can
    /// audit orthogonality.
    fn eval(&self, u: &SpectralField, t: f64) -> Result<(SpectralField, Option<SpectralField>), SolverError> {
        let f = self.force.eval(t)?;
        Ok(match self.dynamics {
            Dynamics::NavierStokes => {
                let b = bilinear(u, u)?;
                (f.sub(&b)?, Some(b))
            }
            Dynamics::Linear { source } => (f.add(source)?, None),
        })
    }

    /// Ledger integrands `‖u‖², (f, u), |f|²` and the time derivatives of
    /// the first two, given `n = N(u, t)`.
    fn ledger(&self, u: &SpectralField, n: &SpectralField, t: f64) -> Result<([f64; 3], [f64; 2]), SolverError> {
        let f = self.force.eval(t)?;
        let df = self.force.eval_derivative(t)?;
        let au = stokes_power(u, 1.0);
        let du = n.sub(&au)?;
        let g = [dissipation_density(u), inner(&f, u)?, l2_norm(&f).powi(2)];
        let dg = [2.0 * inner(&au, &du)?, inner(&df, u)? + inner(&f, &du)?];
        Ok((g, dg))
    }
}

/// `‖u‖² = |A^{1/2} u|²`.
pub fn dissipation_density(u: &SpectralField) -> f64 {
    gevrey_norm(u, GevreyIndex { alpha: 0.5, sigma: 0.0 }).unwrap().powi(2)
}

/// Weights for every |k|² up to the cutoff.
struct StepWeights {
    field: Vec<Weights>,
}

impl StepWeights {
    fn new(cutoff: u32, h: f64) -> Self {
        let kmax = 3 * (cutoff as usize).pow(2);
        let field = (0..=kmax).map(|k2| Weights::new(-(k2 as f64), h)).collect();
        StepWeights { field }
    }
}

/// Selects the multiplier of `x` and the weights of the stage terms.
type Select = fn(&Weights) -> (f64, [f64; 4]);

/// `E x + Σ c_i w_i v_i`, mode by mode, with `(E, w)` picked by `sel`.
fn combine(x: &SpectralField, terms: &[(&SpectralField, f64)], sel: Select, sw: &StepWeights) -> SpectralField {
    let mut out = x.clone();
    let data = out.as_mut_slice();
    let mut k2s = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let k = x.wave_vector(i);
        k2s.push((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as usize);
    }
    for (i, a) in data.iter_mut().enumerate() {
        if k2s[i] == 0 {
            continue;
        }
        let (e, ws) = sel(&sw.field[k2s[i]]);
        for c in a.iter_mut() {
            *c *= e;
        }
        for ((v, coef), w) in terms.iter().zip(ws) {
            let b = &v.as_slice()[i];
            let s = coef * w;
            for c in 0..3 {
                a[c] += b[c] * s;
            }
        }
    }
    out
}

/// One exponential Runge-Kutta step. `n0` is the nonlinear term at the start.
fn exp_rk4_step(rhs: &Rhs<'_>, u: &SpectralField, n0: &SpectralField, t: f64, h: f64) -> Result<SpectralField, SolverError> {
    let sw = StepWeights::new(u.cutoff(), h);
    let s2: Select = |w| (w.e_half, [w.a21, 0.0, 0.0, 0.0]);
    let u2 = combine(u, &[(n0, 1.0)], s2, &sw);
    let (n2, _) = rhs.eval(&u2, t + h / 2.0)?;
    let s3: Select = |w| (w.e_half, [w.a31, w.a32, 0.0, 0.0]);
    let u3 = combine(u, &[(n0, 1.0), (&n2, 1.0)], s3, &sw);
    let (n3, _) = rhs.eval(&u3, t + h / 2.0)?;
    let s4: Select = |w| (w.e, [w.a41, w.a42, w.a42, 0.0]);
    let u4 = combine(u, &[(n0, 1.0), (&n2, 1.0), (&n3, 1.0)], s4, &sw);
    let (n4, _) = rhs.eval(&u4, t + h)?;
    let s5: Select = |w| (w.e_half, [w.a51, w.a52, w.a52, w.a54]);
    let u5 = combine(u, &[(n0, 1.0), (&n2, 1.0), (&n3, 1.0), (&n4, 1.0)], s5, &sw);
    let (n5, _) = rhs.eval(&u5, t + h / 2.0)?;
    let out: Select = |w| (w.e, [w.b1, w.b4, w.b5, 0.0]);
    Ok(combine(u, &[(n0, 1.0), (&n4, 1.0), (&n5, 1.0)], out, &sw))
}

/// Integrates from `cfg.t0` to `cfg.t1` starting at `u0`.
pub fn simulate(
    u0: &SpectralField,
    force: &ForceSpec,
    dynamics: &Dynamics,
    cfg: &SolverConfig,
) -> Result<Trace, SolverError> {
    cfg.validate()?;
    if force.cutoff() != u0.cutoff() {
        return Err(SpectralError::CutoffMismatch(force.cutoff(), u0.cutoff()).into());
    }
    let rhs = Rhs { force, dynamics };
    let grid = cfg.snapshot_times();
    let mut u = u0.clone();
    // Dissipation, work and forcing-envelope integrals over [t0, t].
    let mut y = [0.0; 3];
    let scale = l2_norm(u0).max(l2_norm(&force.eval(cfg.t0)?)).max(match dynamics {
        Dynamics::Linear { source } => l2_norm(source),
        Dynamics::NavierStokes => 0.0,
    });
    let limit = cfg.blowup_factor * scale;
    let snap = |t: f64, u: &SpectralField, y: &[f64; 3], h: f64| Snapshot {
        t,
        field: u.clone(),
        step: h,
        dissipation: y[0],
        work: y[1],
        forcing_envelope: y[2],
    };
    let mut trace = Trace { snapshots: vec![snap(cfg.t0, &u, &y, 0.0)], steps: Vec::new(), rejected: 0 };
    let mut t = cfg.t0;
    let mut h = cfg.initial_step.min(cfg.max_step_fraction * t);
    let mut next = 1;
    let (mut n0, mut b0) = rhs.eval(&u, t)?;
    let (mut g0, mut dg0) = rhs.ledger(&u, &n0, t)?;
    while next < grid.len() {
        if trace.steps.len() + trace.rejected >= cfg.max_steps {
            return Err(SolverError::TooManySteps(cfg.max_steps));
        }
        let target = grid[next];
        let h_try = h.min(target - t).min(cfg.max_step_fraction * t);
        let full = exp_rk4_step(&rhs, &u, &n0, t, h_try)?;
        let mid = exp_rk4_step(&rhs, &u, &n0, t, h_try / 2.0)?;
        let (nm, _) = rhs.eval(&mid, t + h_try / 2.0)?;
        let fine = exp_rk4_step(&rhs, &mid, &nm, t + h_try / 2.0, h_try / 2.0)?;
        let (n1, b1) = rhs.eval(&fine, t + h_try)?;
        let (gm, _) = rhs.ledger(&mid, &nm, t + h_try / 2.0)?;
        let (g1, dg1) = rhs.ledger(&fine, &n1, t + h_try)?;
        // Ledger increments: Hermite rule on t, t + h/2, t + h (exact to
        // degree 5), with Simpson's rule as the error reference.
        // The reference scale is the one the energy identity is judged on.
        let mut inc = [0.0; 2];
        let mut gap: f64 = 0.0;
        for j in 0..2 {
            let simpson = h_try / 6.0 * (g0[j] + 4.0 * gm[j] + g1[j]);
            inc[j] = h_try / 30.0 * (7.0 * g0[j] + 16.0 * gm[j] + 7.0 * g1[j])
                + h_try * h_try / 60.0 * (dg0[j] - dg1[j]);
            gap = gap.max((inc[j] - simpson).abs());
        }
        let energy = 0.5 * l2_norm(&u).powi(2).max(l2_norm(&fine).powi(2));
        let ledger_size = energy.max((y[0] + inc[0]).abs()).max((y[1] + inc[1]).abs());
        let ledger_err = if gap > 0.0 { gap / ledger_size } else { 0.0 };
        let diff = l2_norm(&fine.sub(&full)?) / 15.0;
        let size = l2_norm(&fine).max(l2_norm(&u)).max(1e-300);
        let err = (diff / (cfg.tol * size)).max(ledger_err / cfg.tol);
        let factor = if err == 0.0 { 4.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 4.0) };
        if err > 1.0 {
            trace.rejected += 1;
            h = h_try * factor;
            if h < 1e-14 * t {
                return Err(SolverError::StepUnderflow { t, h });
            }
            continue;
        }
        let orthogonality = match &b0 {
            Some(b) => {
                let hn = gevrey_norm(&u, GevreyIndex { alpha: 0.5, sigma: 0.0 })?;
                if hn > 0.0 {
                    inner(b, &u)?.abs() / hn.powi(3)
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
        trace.steps.push(StepRecord { t, h: h_try, error: err, orthogonality });
        y[0] += inc[0];
        y[1] += inc[1];
        let (e1, e2) = ((-h_try).exp(), (-h_try / 2.0).exp());
        y[2] = e1 * y[2] + h_try / 6.0 * (e1 * g0[2] + 4.0 * e2 * gm[2] + g1[2]);
        (n0, b0, g0, dg0) = (n1, b1, g1, dg1);
        u = fine;
        t += h_try;
        let norm = l2_norm(&u);
        if scale > 0.0 && norm > limit {
            return Err(SolverError::BlowUp { t, norm, limit });
        }
        if (t - target).abs() <= 1e-12 * target {
            t = target;
            trace.snapshots.push(snap(t, &u, &y, h_try));
            next += 1;
        }
        // Keep the controller's proposal when the step was shortened to land
        // on a snapshot.
        h = (h_try * factor).max(if h_try < h { h } else { 0.0 });
    }
    Ok(trace)
}

/// Closed form of the linear problem with constant source and zero force:
/// `e^{-tA} w0 + A^{-1}(1 - e^{-tA}) ξ` at elapsed time `t`.
pub fn linear_closed_form(w0: &SpectralField, source: &SpectralField, t: f64) -> SpectralField {
    let a = crate::spectral::heat_semigroup(w0, t);
    let b = crate::spectral::apply_multiplier(source, |k2| -(-t * k2).exp_m1() / k2);
    a.add(&b).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_branches_agree() {
        for z in [-0.999, -1.0, -1.001] {
            let (a1, a2, a3) = phi_functions(z);
            let e = z.exp();
            let p1 = (e - 1.0) / z;
            let p2 = (e - 1.0 - z) / (z * z);
            let p3 = (e - 1.0 - z - z * z / 2.0) / (z * z * z);
            assert!((a1 - p1).abs() < 1e-12);
            assert!((a2 - p2).abs() < 1e-12);
            assert!((a3 - p3).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_at_zero_rate() {
        let w = Weights::new(0.0, 1.0);
        let want = [
            (w.a21, 0.5),
            (w.a31, 0.0),
            (w.a32, 0.5),
            (w.a41, 0.0),
            (w.a42, 0.5),
            (w.a51, 0.25),
            (w.a52, 0.125),
            (w.a54, 0.0),
            (w.b1, 1.0 / 6.0),
            (w.b4, 1.0 / 6.0),
            (w.b5, 2.0 / 3.0),
        ];
        for (got, exp) in want {
            assert!((got - exp).abs() < 1e-15, "{got} vs {exp}");
        }
    }

    #[test]
    fn stage_rows_sum_to_phi1() {
        for rate in [-0.3, -5.0, -400.0] {
            let h = 0.7;
            let w = Weights::new(rate, h);
            let (h1, _, _) = phi_functions(rate * h / 2.0);
            let (p1, _, _) = phi_functions(rate * h);
            let tol = 1e-14 * h;
            assert!((w.a21 - 0.5 * h * h1).abs() < tol);
            assert!((w.a31 + w.a32 - 0.5 * h * h1).abs() < tol);
            assert!((w.a41 + 2.0 * w.a42 - h * p1).abs() < tol);
            assert!((w.a51 + 2.0 * w.a52 + w.a54 - 0.5 * h * h1).abs() < tol);
            assert!((w.b1 + w.b4 + w.b5 - h * p1).abs() < tol);
        }
    }

    #[test]
    fn snapshot_grid_is_geometric() {
        let c = SolverConfig::new(5.0, 500.0, 1e-8);
        let ts = c.snapshot_times();
        assert_eq!(ts[0], 5.0);
        assert_eq!(*ts.last().unwrap(), 500.0);
        for w in ts.windows(2).take(ts.len() - 2) {
            assert!((w[1] / w[0] - 1.1).abs() < 1e-12);
        }
    }
}
