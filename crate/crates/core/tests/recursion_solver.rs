use nse_asymptotics::decay::{DecaySystem, Exponent};
use nse_asymptotics::expansion::{compute_coefficients, Expansion, ForceSpec};
use nse_asymptotics::lattice::ExponentLattice;
use nse_asymptotics::solver::{linear_closed_form, simulate, Dynamics, SolverConfig};
use nse_asymptotics::spectral::{bilinear, l2_norm, leray_project, random_field, stokes_power, SpectralField};
use nse_asymptotics::verify::{energy_identity_residual, manufacture_force, max_relative_difference};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn field(cutoff: u32, seed: u64, scale: f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_field(cutoff, &mut rng, |k2| (-k2.sqrt()).exp());
    f.scaled(scale / l2_norm(&f))
}

/// `Aξ_n + Σ c ξ_p + Σ d B(ξ_k, ξ_m) - Pφ_n`, with `c` and `d` taken straight
/// from the system's derivative and product rules over all index pairs.
fn defining_residual(exp: &Expansion, phi: &[SpectralField], count: usize) -> f64 {
    let l = &exp.lattice;
    let sys = l.system();
    let mut worst: f64 = 0.0;
    for n in 0..count {
        let target = l.exponent(n);
        let mut lhs = stokes_power(&exp.coeffs[n], 1.0);
        // Sum of the term sizes, so that cancellation to zero is judged fairly.
        let mut scale = l2_norm(&lhs);
        for p in 0..n {
            for (e, c) in sys.vee(l.exponent(p), l.cutoff()).unwrap() {
                if e.same(target) {
                    lhs.axpy(c, &exp.coeffs[p]).unwrap();
                    scale += c.abs() * l2_norm(&exp.coeffs[p]);
                }
            }
            for m in 0..n {
                let (w, d) = sys.wedge(l.exponent(p), l.exponent(m)).unwrap();
                if w.same(target) {
                    let b = bilinear(&exp.coeffs[p], &exp.coeffs[m]).unwrap();
                    lhs.axpy(d, &b).unwrap();
                    scale += d.abs() * l2_norm(&b);
                }
            }
        }
        let rhs = leray_project(&phi[n]);
        let scale = (scale + l2_norm(&rhs)).max(f64::MIN_POSITIVE);
        worst = worst.max(l2_norm(&lhs.sub(&rhs).unwrap()) / scale);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn continuum_recursion_solves_defining_equations(seed in any::<u64>(), amp in 0.05f64..2.0, sqrt_kind in any::<bool>()) {
        let sys = if sqrt_kind { DecaySystem::sqrt_shift() } else { DecaySystem::power() };
        let gens = [Exponent::real(1.0), Exponent::real(1.5)];
        let l = ExponentLattice::generate(&sys, &gens, 4.0).unwrap();
        let mut phi = vec![SpectralField::zeros(2); l.len()];
        phi[0] = field(2, seed, amp);
        phi[1] = field(2, seed ^ 1, amp);
        let exp = compute_coefficients(&l, &phi, l.len()).unwrap();
        let r = defining_residual(&exp, &phi, l.len());
        prop_assert!(r <= 1e-12, "residual {r:e}");
    }

    #[test]
    fn manufactured_force_round_trips(seed in any::<u64>(), amp in 0.05f64..2.0) {
        let l = ExponentLattice::generate(&DecaySystem::power(), &[Exponent::real(1.0)], 5.0).unwrap();
        let mut coeffs = vec![SpectralField::zeros(2); l.len()];
        coeffs[0] = field(2, seed, amp);
        coeffs[1] = field(2, seed ^ 7, amp);
        let target = Expansion { lattice: l.clone(), coeffs };
        let force = manufacture_force(&target, l.len()).unwrap();
        prop_assert!(force.extras.is_empty());
        let back = compute_coefficients(&l, &force.phi, l.len()).unwrap();
        let d = max_relative_difference(&target.coeffs, &back.coeffs, l.len()).unwrap();
        prop_assert!(d <= 1e-10, "round trip {d:e}");
    }
}

#[test]
fn first_coefficient_is_stokes_inverse_of_force() {
    // ξ_1 = A^{-1} P φ_1: a single mode at |k|^2 = 2 is divided by 2.
    let l = ExponentLattice::generate(&DecaySystem::power(), &[Exponent::real(1.0)], 2.0).unwrap();
    let mut phi = vec![SpectralField::zeros(2); l.len()];
    let z = Complex64::new(0.0, 0.0);
    phi[0].set([1, 1, 0], [z, z, Complex64::new(0.5, 0.0)]).unwrap();
    let exp = compute_coefficients(&l, &phi, l.len()).unwrap();
    assert_eq!(exp.coeffs[0].get([1, 1, 0])[2], Complex64::new(0.25, 0.0));
    // ξ_2 = A^{-1}(-c ξ_1 - B(ξ_1, ξ_1)) with c = -1; B vanishes for a single
    // shear mode, so ξ_2 = ξ_1 / 2.
    assert_eq!(exp.coeffs[1].get([1, 1, 0])[2], Complex64::new(0.125, 0.0));
}

#[test]
fn linear_problem_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let w0 = random_field(3, &mut rng, |k2| 1.0 / (1.0 + k2));
    let source = random_field(3, &mut rng, |k2| 1.0 / (1.0 + k2));
    let l = ExponentLattice::generate(&DecaySystem::power(), &[Exponent::real(1.0)], 1.0).unwrap();
    let force = ForceSpec::zero(l, 3);
    let cfg = SolverConfig::new(1.0, 6.0, 1e-10);
    let tr = simulate(&w0, &force, &Dynamics::Linear { source: source.clone() }, &cfg).unwrap();
    for s in &tr.snapshots {
        let exact = linear_closed_form(&w0, &source, s.t - 1.0);
        let err = l2_norm(&s.field.sub(&exact).unwrap()) / l2_norm(&exact);
        assert!(err < 1e-8, "t = {}: {err:e}", s.t);
    }
}

/// Scalar test problem: one shear mode (so `B` vanishes) forced by the
/// manufactured force of `u = ξ (t^{-1} + t^{-2})`.
fn shear_run(tol: f64) -> (usize, f64) {
    let l = ExponentLattice::generate(&DecaySystem::power(), &[Exponent::real(1.0)], 4.0).unwrap();
    let mut coeffs = vec![SpectralField::zeros(2); l.len()];
    let z = Complex64::new(0.0, 0.0);
    coeffs[0].set([0, 1, 0], [Complex64::new(1.0, 0.0), z, z]).unwrap();
    coeffs[1] = coeffs[0].clone();
    let target = Expansion { lattice: l.clone(), coeffs };
    let force = manufacture_force(&target, l.len()).unwrap();
    let cfg = SolverConfig::new(1.0, 8.0, tol);
    let u0 = target.evaluate(1.0, 2).unwrap();
    let tr = simulate(&u0, &force, &Dynamics::NavierStokes, &cfg).unwrap();
    let exact = target.evaluate(8.0, 2).unwrap();
    let err = l2_norm(&tr.last().field.sub(&exact).unwrap()) / l2_norm(&exact);
    (tr.steps.len() + tr.rejected, err)
}

#[test]
fn step_count_scales_like_fourth_order() {
    // A method of order p needs ~ tol^{-1/(p+1)} steps; four decades of tol
    // cost a factor 10^{4/5} ≈ 6.3 at p = 4 and 10 at p = 3.
    let (n_lo, e_lo) = shear_run(1e-7);
    let (n_hi, e_hi) = shear_run(1e-11);
    let ratio = n_hi as f64 / n_lo as f64;
    assert!(ratio < 8.5, "step ratio {ratio} ({n_lo} -> {n_hi})");
    assert!(e_lo < 1e-5 && e_hi < 1e-9, "errors {e_lo:e}, {e_hi:e}");
    assert!(e_hi < e_lo);
}

#[test]
fn navier_stokes_run_keeps_energy_budget() {
    let u0 = field(3, 5, 0.5);
    let l = ExponentLattice::generate(&DecaySystem::power(), &[Exponent::real(1.0)], 1.0).unwrap();
    let mut force = ForceSpec::zero(l, 3);
    force.phi[0] = field(3, 6, 1.0);
    let tol = 1e-9;
    let tr = simulate(&u0, &force, &Dynamics::NavierStokes, &SolverConfig::new(1.0, 40.0, tol)).unwrap();
    assert!(energy_identity_residual(&tr) <= 100.0 * tol);
    assert!(tr.max_orthogonality() <= 1e-12);
    let times = tr.times();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(*times.last().unwrap(), 40.0);
}

#[test]
fn bad_solver_settings_are_rejected() {
    let l = ExponentLattice::generate(&DecaySystem::power(), &[Exponent::real(1.0)], 1.0).unwrap();
    let force = ForceSpec::zero(l, 2);
    let u0 = SpectralField::zeros(2);
    for cfg in [SolverConfig::new(2.0, 1.0, 1e-8), SolverConfig::new(1.0, 2.0, 0.0), SolverConfig::new(0.0, 2.0, 1e-8)] {
        assert!(simulate(&u0, &force, &Dynamics::NavierStokes, &cfg).is_err());
    }
    let wrong = SpectralField::zeros(3);
    assert!(simulate(&wrong, &force, &Dynamics::NavierStokes, &SolverConfig::new(1.0, 2.0, 1e-8)).is_err());
}
