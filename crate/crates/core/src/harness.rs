//! Versioned experiment configs, the lattice → coefficients → simulation →
//! verification pipeline, and report assembly.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decay::{parse_rational, DecaySystem, Exponent, Rational};
use crate::expansion::{compute_for_system, locate, Expansion, ExpansionError, ForceSpec};
use crate::lattice::{ExponentLattice, LatticeError};
use crate::solver::{simulate, Dynamics, SolverConfig, SolverError, Trace};
use crate::spectral::{
    bilinear, l2_norm, leray_project, random_field, stokes_power, GevreyIndex, ModeJson, SpectralError, SpectralField,
};
use crate::verify::{
    a_priori_energy_excess, bilinear_estimate_sup, check_series_expansion, closed_form_lattice,
    decay_convolution_ratio, energy_identity_residual, fit_decay_order, manufacture_force,
    max_relative_difference, remainder_series, verify_system_conditions, CheckResult, SeriesSpec,
    VerifyError,
};

/// The config schema version this build reads.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// A config that does not parse, with the path of the offending field.
    #[error("field `{path}`: {cause}")]
    Parse { path: String, cause: serde_json::Error },
}

/// A rational written as a JSON integer or as `"p/q"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalText {
    Int(i64),
    Text(String),
}

impl RationalText {
    fn value(&self) -> Result<Rational, HarnessError> {
        match self {
            RationalText::Int(i) => Ok(Rational::from_integer(*i)),
            RationalText::Text(s) => {
                parse_rational(s).ok_or_else(|| HarnessError::Config(format!("bad rational {s:?}")))
            }
        }
    }
}

/// An exponent: a number, or an `(a, b)` pair for product systems.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentSpec {
    Value(f64),
    Pair([RationalText; 2]),
}

impl ExponentSpec {
    pub fn resolve(&self, sys: &DecaySystem) -> Result<Exponent, HarnessError> {
        match (self, sys.gamma()) {
            (ExponentSpec::Value(v), None) => Ok(Exponent::real(*v)),
            (ExponentSpec::Pair([a, b]), Some(g)) => Ok(Exponent::pair(a.value()?, b.value()?, g)),
            (ExponentSpec::Value(_), Some(_)) => {
                Err(HarnessError::Config("product systems take [a, b] exponent pairs".into()))
            }
            (ExponentSpec::Pair(_), None) => {
                Err(HarnessError::Config("exponent pairs need a product system".into()))
            }
        }
    }
}

/// A field given mode by mode, or drawn at random.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Modes {
        modes: Vec<ModeJson>,
    },
    Random {
        random: RandomField,
    },
}

/// Random divergence-free field with envelope `e^{-decay |k|}`, scaled to the
/// given L² norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomField {
    pub l2: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    1.0
}

impl RandomField {
    pub fn draw(&self, cutoff: u32, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(seed));
        let decay = self.decay;
        let f = random_field(cutoff, &mut rng, |k2| (-decay * k2.sqrt()).exp());
        let n = l2_norm(&f);
        if n > 0.0 {
            f.scaled(self.l2 / n)
        } else {
            f
        }
    }
}

impl FieldSpec {
    /// Builds the field at `cutoff`; explicit modes are Leray-projected.
    pub fn build(&self, cutoff: u32, seed: u64) -> Result<SpectralField, HarnessError> {
        match self {
            FieldSpec::Modes { modes } => {
                let j = crate::spectral::FieldJson { cutoff, modes: modes.clone() };
                let f = SpectralField::try_from(j).map_err(|e| HarnessError::Config(e.to_string()))?;
                Ok(leray_project(&f))
            }
            FieldSpec::Random { random } => Ok(random.draw(cutoff, seed)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub exponent: ExponentSpec,
    pub field: FieldSpec,
}

/// How the force is specified.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceConfig {
    /// No force.
    None,
    /// `f = Σ φ_n ψ_{λ_n}` with the listed terms.
    Expansion { terms: Vec<TermSpec> },
    /// The force making `Σ ξ_n ψ_{λ_n}` (listed terms) an exact solution.
    Manufactured { target: Vec<TermSpec> },
}

/// Initial data for the simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// The computed expansion evaluated at `t0`.
    Expansion,
    Random(RandomField),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub t0: f64,
    pub t1: f64,
    pub tol: f64,
    #[serde(default = "default_ratio")]
    pub snapshot_ratio: f64,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    #[serde(default = "default_step_fraction")]
    pub max_step_fraction: f64,
    #[serde(default = "default_initial_step")]
    pub initial_step: f64,
}

fn default_ratio() -> f64 {
    1.1
}
fn default_initial() -> InitialData {
    InitialData::Zero
}
fn default_step_fraction() -> f64 {
    0.5
}
fn default_initial_step() -> f64 {
    1e-2
}

impl SimulationConfig {
    pub fn solver(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.t0, self.t1, self.tol);
        c.snapshot_ratio = self.snapshot_ratio;
        c.max_step_fraction = self.max_step_fraction;
        c.initial_step = self.initial_step;
        c
    }
}

/// Scales coefficient `n` (one-based) by `factor` before forming remainders.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub n: usize,
    pub factor: f64,
}

/// Decay-order check on `r_N` over a time window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderCheck {
    /// Number of leading lattice terms subtracted.
    pub n: usize,
    pub window: [f64; 2],
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub perturb: Option<Perturbation>,
}

/// Re-run with different initial data and compare fitted orders.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataComparison {
    pub initial: RandomField,
    pub n: usize,
    pub window: [f64; 2],
    pub max_difference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default = "default_index")]
    pub index: GevreyIndex,
    #[serde(default)]
    pub orders: Vec<OrderCheck>,
    /// Manufactured forces: recovered coefficients vs the target.
    #[serde(default = "default_roundtrip")]
    pub roundtrip_tol: f64,
    /// Manufactured forces: `|u(t1) - exact| / |exact|`.
    #[serde(default = "default_endpoint")]
    pub endpoint_tol: f64,
    /// Energy identity residual limit, in units of the solver tolerance.
    #[serde(default = "default_energy_factor")]
    pub energy_factor: f64,
    #[serde(default = "default_orthogonality")]
    pub orthogonality_tol: f64,
    #[serde(default)]
    pub runtime_limit_s: Option<f64>,
    /// Require the last accepted step to exceed the first by this factor.
    #[serde(default)]
    pub step_growth: Option<f64>,
    #[serde(default)]
    pub initial_data: Option<InitialDataComparison>,
    /// Product systems: residual of the defining equations.
    #[serde(default)]
    pub discrete_residual_tol: Option<f64>,
}

fn default_index() -> GevreyIndex {
    GevreyIndex { alpha: 0.5, sigma: 0.0 }
}
fn default_roundtrip() -> f64 {
    1e-10
}
fn default_endpoint() -> f64 {
    1e-6
}
fn default_energy_factor() -> f64 {
    100.0
}
fn default_orthogonality() -> f64 {
    1e-12
}

impl Default for ChecksConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

/// Stand-alone numerical checks that do not need a simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Diagnostic {
    /// Sup of the bilinear-estimate ratio must not grow by more than
    /// `max_growth` from the first cutoff to the others.
    BilinearEstimate {
        cutoffs: Vec<u32>,
        indices: Vec<GevreyIndex>,
        samples: usize,
        max_growth: f64,
    },
    /// Lattices from random generator sets against the closed-form sets.
    LatticeOracle {
        sets: usize,
        max_cutoff: f64,
    },
    /// Tail bound with explicit constants for `Σ ρ^n ξ t^{-n}`: scalar when
    /// `cutoff` is absent, field-valued otherwise.
    GeometricTail {
        ratio: f64,
        terms: usize,
        truncations: Vec<usize>,
        points: usize,
        #[serde(default)]
        cutoff: Option<u32>,
    },
    /// Decay-system axioms on a time grid.
    SystemConditions {
        t_range: [f64; 2],
        points: usize,
    },
}

/// A full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub system: DecaySystem,
    pub generators: Vec<ExponentSpec>,
    pub lattice_cutoff: f64,
    /// Spectral cutoff `K`.
    pub cutoff: u32,
    /// Number of coefficients to compute; defaults to the lattice size.
    #[serde(default)]
    pub terms: Option<usize>,
    pub force: ForceConfig,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Parse {
            path: e.path().to_string(),
            cause: e.into_inner(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |s: String| Err(HarnessError::Config(s));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.cutoff == 0 {
            return bad("spectral cutoff must be at least 1".into());
        }
        if self.generators.is_empty() {
            return bad("at least one generator is required".into());
        }
        if let Some(sim) = &self.simulation {
            if sim.t0 < self.system.t_min() {
                return bad(format!("t0 = {} precedes the earliest valid time {}", sim.t0, self.system.t_min()));
            }
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<ExponentLattice, HarnessError> {
        let gens = self
            .generators
            .iter()
            .map(|g| g.resolve(&self.system))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExponentLattice::generate(&self.system, &gens, self.lattice_cutoff)?)
    }

    fn terms_on(&self, lattice: &ExponentLattice, terms: &[TermSpec]) -> Result<Vec<SpectralField>, HarnessError> {
        let mut out = vec![SpectralField::zeros(self.cutoff); lattice.len()];
        for (i, t) in terms.iter().enumerate() {
            let e = t.exponent.resolve(&self.system)?;
            let n = locate(lattice, &e)?;
            let seed = self.seed.wrapping_add(1000 + i as u64);
            out[n].axpy(1.0, &t.field.build(self.cutoff, seed)?)?;
        }
        Ok(out)
    }

    /// The force and, for manufactured forces, the target expansion.
    pub fn force(&self, lattice: &ExponentLattice) -> Result<(ForceSpec, Option<Expansion>), HarnessError> {
        match &self.force {
            ForceConfig::None => Ok((ForceSpec::zero(lattice.clone(), self.cutoff), None)),
            ForceConfig::Expansion { terms } => {
                let phi = self.terms_on(lattice, terms)?;
                Ok((ForceSpec { lattice: lattice.clone(), phi, extras: Vec::new() }, None))
            }
            ForceConfig::Manufactured { target } => {
                let coeffs = self.terms_on(lattice, target)?;
                let exp = Expansion { lattice: lattice.clone(), coeffs };
                let f = manufacture_force(&exp, lattice.len())?;
                Ok((f, Some(exp)))
            }
        }
    }

    pub fn term_count(&self, lattice: &ExponentLattice) -> Result<usize, HarnessError> {
        let n = self.terms.unwrap_or(lattice.len());
        if n > lattice.len() {
            return Err(HarnessError::Config(format!("terms = {n} exceeds the lattice size {}", lattice.len())));
        }
        Ok(n)
    }

    pub fn coefficients(&self, lattice: &ExponentLattice, force: &ForceSpec) -> Result<Expansion, HarnessError> {
        Ok(compute_for_system(lattice, &force.phi, self.term_count(lattice)?)?)
    }

    fn initial_field(&self, init: &InitialData, exp: &Expansion, t0: f64) -> Result<SpectralField, HarnessError> {
        Ok(match init {
            InitialData::Zero => SpectralField::zeros(self.cutoff),
            InitialData::Expansion => exp.evaluate(t0, exp.coeffs.len())?,
            InitialData::Random(r) => r.draw(self.cutoff, self.seed),
        })
    }

    /// Integrates with the configured initial data.
    pub fn simulate(&self, force: &ForceSpec, exp: &Expansion) -> Result<Trace, HarnessError> {
        let sim = self
            .simulation
            .as_ref()
            .ok_or_else(|| HarnessError::Config("no simulation section".into()))?;
        let u0 = self.initial_field(&sim.initial, exp, sim.t0)?;
        Ok(simulate(&u0, force, &Dynamics::NavierStokes, &sim.solver())?)
    }
}

/// Everything one pipeline run produces.
pub struct RunOutcome {
    pub lattice: ExponentLattice,
    pub expansion: Expansion,
    pub trace: Option<Trace>,
    /// `(N, [(t, r_N)])` for every unperturbed order check.
    pub remainders: Vec<(usize, Vec<(f64, f64)>)>,
    pub report: Vec<CheckResult>,
    pub seconds: f64,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.report.iter().all(|c| c.pass)
    }
}

fn perturbed(exp: &Expansion, p: &Option<Perturbation>) -> Expansion {
    let mut e = exp.clone();
    if let Some(p) = p {
        if p.n >= 1 && p.n <= e.coeffs.len() {
            e.coeffs[p.n - 1] = e.coeffs[p.n - 1].scaled(p.factor);
        }
    }
    e
}

/// Defining-equation residual `|Aξ_n + χ_n + Σ B(ξ_k, ξ_m) - φ_n| / |φ_n|`
/// for product systems, assembled by scanning all index pairs.
pub fn discrete_residual(exp: &Expansion, phi: &[SpectralField], count: usize) -> Result<f64, HarnessError> {
    let lattice = &exp.lattice;
    let gamma = lattice.system().gamma().ok_or(ExpansionError::NotDiscrete)?;
    let mut worst: f64 = 0.0;
    for n in 0..count {
        let pn = lattice.exponent(n).pair.ok_or(ExpansionError::NotDiscrete)?;
        let mut lhs = stokes_power(&exp.coeffs[n], 1.0);
        for p in 0..n {
            let pp = lattice.exponent(p).pair.unwrap();
            let c = crate::expansion::discrete_vee_coefficient(gamma, pp, pn);
            if c != 0.0 {
                lhs.axpy(c, &exp.coeffs[p])?;
            }
            for m in 0..n {
                let pm = lattice.exponent(m).pair.unwrap();
                if (pp.0 + pm.0, pp.1 + pm.1) == pn {
                    lhs.axpy(1.0, &bilinear(&exp.coeffs[p], &exp.coeffs[m])?)?;
                }
            }
        }
        let target = leray_project(&phi[n]);
        let scale = l2_norm(&target).max(l2_norm(&lhs)).max(f64::MIN_POSITIVE);
        worst = worst.max(l2_norm(&lhs.sub(&target)?) / scale);
    }
    Ok(worst)
}

/// Runs lattice, coefficients, simulation (if configured), checks and
/// diagnostics.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let start = Instant::now();
    let case = cfg.name.as_str();
    let lattice = cfg.lattice()?;
    let (force, target) = cfg.force(&lattice)?;
    let expansion = cfg.coefficients(&lattice, &force)?;
    let mut report = Vec::new();
    let sys = lattice.system();
    if let Some(target) = &target {
        if sys.kind_name() == "power" || sys.is_logarithmic() {
            let count = cfg.term_count(&lattice)?;
            let d = max_relative_difference(&target.coeffs, &expansion.coeffs, count)?;
            report.push(CheckResult::at_most(case, "coefficient round trip", d, cfg.checks.roundtrip_tol));
        }
    }
    if let Some(tol) = cfg.checks.discrete_residual_tol {
        let r = discrete_residual(&expansion, &force.phi, cfg.term_count(&lattice)?)?;
        report.push(CheckResult::at_most(case, "defining-equation residual", r, tol));
    }
    let mut trace = None;
    let mut remainders: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    if let Some(sim) = &cfg.simulation {
        let tr = cfg.simulate(&force, &expansion)?;
        let last = tr.last();
        if let Some(target) = &target {
            let exact = target.evaluate(last.t, target.coeffs.len())?;
            let err = l2_norm(&last.field.sub(&exact)?) / l2_norm(&exact).max(f64::MIN_POSITIVE);
            report.push(CheckResult::at_most(case, "endpoint error vs exact solution", err, cfg.checks.endpoint_tol));
        }
        let limit = cfg.checks.energy_factor * sim.tol;
        report.push(CheckResult::at_most(case, "energy identity residual", energy_identity_residual(&tr), limit));
        report.push(CheckResult::at_most(
            case,
            "trilinear orthogonality",
            tr.max_orthogonality(),
            cfg.checks.orthogonality_tol,
        ));
        report.push(CheckResult::at_most(case, "a-priori energy bound excess", a_priori_energy_excess(&tr), limit));
        report.push(CheckResult::at_most(
            case,
            "convolution decay bound ratio",
            decay_convolution_ratio(&tr, &force, 1.0, 0.5)?,
            1.0,
        ));
        if let Some(g) = cfg.checks.step_growth {
            let h0 = tr.steps.first().map(|s| s.h).unwrap_or(0.0);
            let h1 = tr.steps.last().map(|s| s.h).unwrap_or(0.0);
            report.push(CheckResult::at_least(case, "step growth", h1 / h0, g));
        }
        for oc in &cfg.checks.orders {
            let exp = perturbed(&expansion, &oc.perturb);
            let series = remainder_series(&tr, &exp, oc.n, cfg.checks.index)?;
            let fit = fit_decay_order(&series, sys, (oc.window[0], oc.window[1]))?;
            if oc.perturb.is_none() && !remainders.iter().any(|(n, _)| *n == oc.n) {
                remainders.push((oc.n, series.clone()));
            }
            let label = match &oc.perturb {
                Some(p) => format!("order of r_{} (xi_{} x {})", oc.n, p.n, p.factor),
                None => format!("order of r_{}", oc.n),
            };
            if let Some(lo) = oc.min {
                report.push(CheckResult::at_least(case, &label, fit.order, lo));
            }
            if let Some(hi) = oc.max {
                report.push(CheckResult::at_most(case, &label, fit.order, hi));
            }
        }
        if let Some(cmp) = &cfg.checks.initial_data {
            let base = fit_decay_order(
                &remainder_series(&tr, &expansion, cmp.n, cfg.checks.index)?,
                sys,
                (cmp.window[0], cmp.window[1]),
            )?;
            let u0 = cmp.initial.draw(cfg.cutoff, cfg.seed.wrapping_add(7));
            let other = simulate(&u0, &force, &Dynamics::NavierStokes, &sim.solver())?;
            let alt = fit_decay_order(
                &remainder_series(&other, &expansion, cmp.n, cfg.checks.index)?,
                sys,
                (cmp.window[0], cmp.window[1]),
            )?;
            report.push(CheckResult::at_most(
                case,
                &format!("initial-data independence of r_{} order", cmp.n),
                (base.order - alt.order).abs(),
                cmp.max_difference,
            ));
        }
        trace = Some(tr);
    }
    for d in &cfg.diagnostics {
        report.extend(run_diagnostic(cfg, &lattice, d)?);
    }
    let seconds = start.elapsed().as_secs_f64();
    if let Some(limit) = cfg.checks.runtime_limit_s {
        report.push(CheckResult::at_most(case, "runtime seconds", seconds, limit));
    }
    Ok(RunOutcome { lattice, expansion, trace, remainders, report, seconds })
}

fn run_diagnostic(cfg: &ExperimentConfig, lattice: &ExponentLattice, d: &Diagnostic) -> Result<Vec<CheckResult>, HarnessError> {
    let case = cfg.name.as_str();
    let mut out = Vec::new();
    match d {
        Diagnostic::BilinearEstimate { cutoffs, indices, samples, max_growth } => {
            let sups = bilinear_estimate_sup(cutoffs, indices, *samples, cfg.seed)?;
            for idx in indices {
                let of = |k: u32| {
                    sups.iter().find(|s| s.cutoff == k && s.index == *idx).map(|s| s.sup_ratio).unwrap()
                };
                let base = of(cutoffs[0]);
                for &k in &cutoffs[1..] {
                    out.push(CheckResult::at_most(
                        case,
                        &format!("bilinear sup ratio K={k} / K={} at ({}, {})", cutoffs[0], idx.alpha, idx.sigma),
                        of(k) / base,
                        *max_growth,
                    ));
                }
            }
        }
        Diagnostic::LatticeOracle { sets, max_cutoff } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut worst = 0usize;
            for kind in [DecaySystem::power(), DecaySystem::sqrt_shift()] {
                for _ in 0..*sets {
                    let (gens, cut) = random_generators(&mut rng, *max_cutoff);
                    let l = ExponentLattice::generate(&kind, &gens, cut)?;
                    let want = closed_form_lattice(&kind, &gens, cut)?;
                    if !same_values(&l.values(), &want) {
                        worst += 1;
                    }
                }
            }
            out.push(CheckResult::at_most(case, "lattice mismatches vs closed form", worst as f64, 0.0));
        }
        Diagnostic::GeometricTail { ratio, terms, truncations, points, cutoff } => {
            let r = geometric_tail_check(*ratio, *terms, truncations, *points, *cutoff, cfg.seed)?;
            out.push(CheckResult::holds(case, "series tail bound on grid", r.0, r.1));
        }
        Diagnostic::SystemConditions { t_range, points } => {
            out.extend(verify_system_conditions(lattice, (t_range[0], t_range[1]), *points)?);
        }
    }
    Ok(out)
}

/// Random generator set and cutoff for lattice comparisons.
pub fn random_generators(rng: &mut ChaCha8Rng, max_cutoff: f64) -> (Vec<Exponent>, f64) {
    use rand::Rng;
    let count = rng.gen_range(1..=3);
    let gens = (0..count).map(|_| Exponent::real(rng.gen_range(0.3..2.5))).collect();
    let cut = rng.gen_range(2.0..max_cutoff.max(2.0 + 1e-9));
    (gens, cut)
}

fn same_values(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
}

/// Explicit-constant tail check for `Σ_{n>=1} ρ^n ξ t^{-n}`; returns whether
/// the bound held everywhere and the largest tail/bound ratio.
pub fn geometric_tail_check(
    ratio: f64,
    terms: usize,
    truncations: &[usize],
    points: usize,
    cutoff: Option<u32>,
    seed: u64,
) -> Result<(bool, f64), HarnessError> {
    let base = match cutoff {
        Some(k) => {
            let f = RandomField { l2: 1.0, seed: Some(seed), decay: 1.0 }.draw(k, seed);
            Some(f)
        }
        None => None,
    };
    let unit = base.as_ref().map(l2_norm).unwrap_or(1.0);
    let lambdas: Vec<f64> = (1..=terms).map(|n| n as f64).collect();
    let xi_norms: Vec<f64> = (1..=terms).map(|n| ratio.abs().powi(n as i32) * unit).collect();
    let phi = |t: f64| 1.0 / t;
    let tail = |n: usize, t: f64| -> f64 {
        // Summed in closed form for the scalar series, term by term for fields.
        match &base {
            None => {
                let q = ratio / t;
                (q.powi(n as i32 + 1) / (1.0 - q)).abs()
            }
            Some(f) => {
                let mut s = 0.0;
                let q = ratio / t;
                let mut w = q.powi(n as i32 + 1);
                for _ in n..terms {
                    s += w;
                    w *= q;
                }
                l2_norm(&f.scaled(s))
            }
        }
    };
    let spec = SeriesSpec {
        lambdas,
        xi_norms,
        c0: unit,
        kappa: ratio.abs(),
        m: 2.0,
        phi: &phi,
        t_star: 1.0,
        d: None,
        psi: None,
        tail: &tail,
        span: 1e3,
    };
    let rep = check_series_expansion(&spec, truncations, points)?;
    let worst = rep.points.iter().map(|p| p.tail / p.bound).fold(0.0, f64::max);
    Ok((rep.holds, worst))
}

/// Writes `(t, r_N)` rows.
pub fn write_remainder_csv(path: &Path, series: &[(f64, f64)]) -> Result<(), HarnessError> {
    let mut text = String::from("t,r\n");
    for (t, r) in series {
        text.push_str(&format!("{t},{r}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
