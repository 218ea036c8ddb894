use std::f64::consts::PI;

use nse_asymptotics::spectral::{
    bilinear, gevrey_norm, heat_semigroup, inner, l2_norm, leray_project, random_field, smoothing_constant,
    stokes_power, trilinear, GevreyIndex, SpectralField,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Real field with arbitrary (not divergence-free) amplitudes.
fn raw_field(cutoff: u32, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::zeros(cutoff);
    let ks: Vec<[i32; 3]> = f.positive_modes().map(|(k, _)| k).collect();
    for k in ks {
        let decay = (-(k.iter().map(|c| c * c).sum::<i32>() as f64).sqrt()).exp();
        let mut a = [Complex64::new(0.0, 0.0); 3];
        for c in a.iter_mut() {
            *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay;
        }
        f.set(k, a).unwrap();
    }
    f
}

fn div_free(cutoff: u32, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_field(cutoff, &mut rng, |k2| (-k2.sqrt()).exp())
}

fn project_by_hand(a: [Complex64; 3], k: [i32; 3]) -> [Complex64; 3] {
    let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
    let d = a[0] * k[0] as f64 + a[1] * k[1] as f64 + a[2] * k[2] as f64;
    [0, 1, 2].map(|c| a[c] - d * (k[c] as f64 / k2))
}

/// `P((u·∇)v)` computed pointwise on a 16^3 grid and transformed back by a
/// direct discrete Fourier sum. With `K = 2` the product has modes up to 4,
/// well inside the grid's Nyquist limit, so the quadrature is exact.
fn grid_bilinear(u: &SpectralField, v: &SpectralField) -> SpectralField {
    const N: usize = 16;
    let kk = u.cutoff() as i32;
    let modes: Vec<([i32; 3], [Complex64; 3], [Complex64; 3])> =
        u.modes().map(|(k, a)| (k, *a, v.get(k))).collect();
    // e^{i m x_j} for m in [-2K, 2K] on the 1D grid.
    let table = |m: i32, j: usize| Complex64::from_polar(1.0, m as f64 * 2.0 * PI * j as f64 / N as f64);
    let mut w = vec![[0.0f64; 3]; N * N * N];
    for x0 in 0..N {
        for x1 in 0..N {
            for x2 in 0..N {
                let mut uu = [0.0; 3];
                let mut grad = [[0.0; 3]; 3]; // grad[j][c] = ∂_j v_c
                for (k, a, b) in &modes {
                    let e = table(k[0], x0) * table(k[1], x1) * table(k[2], x2);
                    for c in 0..3 {
                        uu[c] += (a[c] * e).re;
                        for j in 0..3 {
                            grad[j][c] += (b[c] * e * Complex64::new(0.0, k[j] as f64)).re;
                        }
                    }
                }
                let slot = &mut w[(x0 * N + x1) * N + x2];
                for c in 0..3 {
                    slot[c] = (0..3).map(|j| uu[j] * grad[j][c]).sum();
                }
            }
        }
    }
    let mut out = SpectralField::zeros(u.cutoff());
    let targets: Vec<[i32; 3]> = out.positive_modes().map(|(k, _)| k).collect();
    for k in targets {
        if k.iter().any(|c| c.abs() > kk) {
            continue;
        }
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        for x0 in 0..N {
            for x1 in 0..N {
                for x2 in 0..N {
                    let e = (table(k[0], x0) * table(k[1], x1) * table(k[2], x2)).conj();
                    let p = w[(x0 * N + x1) * N + x2];
                    for c in 0..3 {
                        acc[c] += e * p[c];
                    }
                }
            }
        }
        let scale = 1.0 / (N * N * N) as f64;
        out.set(k, project_by_hand(acc.map(|z| z * scale), k)).unwrap();
    }
    out
}

#[test]
fn bilinear_matches_grid_quadrature() {
    for seed in [3, 4] {
        let u = div_free(2, seed);
        let v = div_free(2, seed + 100);
        let want = grid_bilinear(&u, &v);
        let got = bilinear(&u, &v).unwrap();
        let err = l2_norm(&got.sub(&want).unwrap()) / l2_norm(&want);
        assert!(err < 1e-12, "relative error {err:e}");
    }
}

#[test]
fn bilinear_single_triad_by_hand() {
    // u = 2 cos(y) e_x, v = 2 cos(x) e_y: (u·∇)v = -4 cos(y) sin(x) e_y
    // = -2 (sin(x+y) + sin(x-y)) e_y, so both e^{i(x±y)} carry i e_y before
    // projection.
    let mut u = SpectralField::zeros(2);
    let mut v = SpectralField::zeros(2);
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    u.set([0, 1, 0], [one, zero, zero]).unwrap();
    v.set([1, 0, 0], [zero, one, zero]).unwrap();
    let b = bilinear(&u, &v).unwrap();
    let got = b.get([1, 1, 0]);
    let raw = [zero, Complex64::new(0.0, 1.0), zero];
    let want = project_by_hand(raw, [1, 1, 0]);
    for c in 0..3 {
        assert!((got[c] - want[c]).norm() < 1e-15, "{got:?} vs {want:?}");
    }
    let got = b.get([1, -1, 0]);
    let want = project_by_hand(raw, [1, -1, 0]);
    for c in 0..3 {
        assert!((got[c] - want[c]).norm() < 1e-15, "{got:?} vs {want:?}");
    }
}

#[test]
fn inner_product_is_l2() {
    // |cos x e_y|^2 over the box is (2π)^3 / 2; the field 2 cos x has twice that squared.
    let mut u = SpectralField::zeros(1);
    let zero = Complex64::new(0.0, 0.0);
    u.set([1, 0, 0], [zero, Complex64::new(0.5, 0.0), zero]).unwrap();
    let want = (2.0 * PI).powi(3) / 2.0;
    assert!((inner(&u, &u).unwrap() - want).abs() < 1e-12 * want);
    assert!((l2_norm(&u).powi(2) - want).abs() < 1e-12 * want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_idempotent_and_divergence_free(seed in any::<u64>(), cutoff in 1u32..4) {
        let u = raw_field(cutoff, seed);
        let p = leray_project(&u);
        let pp = leray_project(&p);
        prop_assert!(l2_norm(&pp.sub(&p).unwrap()) <= 1e-15 * l2_norm(&p).max(1.0));
        prop_assert!(p.divergence_ratio() <= 1e-14);
        prop_assert!(p.reality_defect() == 0.0);
        // P is an orthogonal projection: (u - Pu, Pu) = 0.
        let r = inner(&u.sub(&p).unwrap(), &p).unwrap();
        prop_assert!(r.abs() <= 1e-12 * l2_norm(&u).powi(2));
    }

    #[test]
    fn trilinear_vanishes_on_repeated_argument(seed in any::<u64>(), cutoff in 1u32..4) {
        let u = div_free(cutoff, seed);
        let v = div_free(cutoff, seed ^ 0x5555);
        let b = trilinear(&u, &v, &v).unwrap();
        let half = GevreyIndex::new(0.5, 0.0).unwrap();
        let scale = gevrey_norm(&u, half).unwrap() * gevrey_norm(&v, half).unwrap().powi(2);
        prop_assert!(b.abs() <= 1e-12 * scale, "b = {b:e}, scale {scale:e}");
        // Antisymmetry in the last two slots.
        let w = div_free(cutoff, seed ^ 0xaaaa);
        let s = trilinear(&u, &v, &w).unwrap() + trilinear(&u, &w, &v).unwrap();
        prop_assert!(s.abs() <= 1e-12 * scale.max(1e-300) * 10.0);
    }

    #[test]
    fn bilinear_output_is_real_and_solenoidal(seed in any::<u64>(), cutoff in 1u32..4) {
        let u = div_free(cutoff, seed);
        let v = div_free(cutoff, seed.wrapping_add(1));
        let b = bilinear(&u, &v).unwrap();
        prop_assert!(b.reality_defect() == 0.0);
        prop_assert!(b.divergence_ratio() <= 1e-14);
    }

    #[test]
    fn gevrey_norm_is_monotone(seed in any::<u64>(), a in 0.0f64..2.0, da in 0.0f64..1.0, s in 0.0f64..1.0, ds in 0.0f64..1.0) {
        let u = div_free(3, seed);
        let lo = gevrey_norm(&u, GevreyIndex::new(a, s).unwrap()).unwrap();
        let hi = gevrey_norm(&u, GevreyIndex::new(a + da, s + ds).unwrap()).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-14));
        prop_assert!(l2_norm(&u) <= lo * (1.0 + 1e-14));
    }

    #[test]
    fn smoothing_bound_holds(seed in any::<u64>(), a in 0.0f64..3.0, s in 0.05f64..2.0) {
        let u = div_free(3, seed);
        let lhs = gevrey_norm(&u, GevreyIndex::new(a, 0.0).unwrap()).unwrap();
        let rhs = smoothing_constant(2.0 * a, s).unwrap() * gevrey_norm(&u, GevreyIndex::new(0.0, s).unwrap()).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn heat_semigroup_contracts_at_first_eigenvalue(seed in any::<u64>(), t in 0.0f64..5.0) {
        let u = div_free(3, seed);
        let e = heat_semigroup(&u, t);
        prop_assert!(l2_norm(&e) <= (-t).exp() * l2_norm(&u) * (1.0 + 1e-14));
        // A and e^{-tA} commute.
        let x = stokes_power(&e, 1.0);
        let y = heat_semigroup(&stokes_power(&u, 1.0), t);
        prop_assert!(l2_norm(&x.sub(&y).unwrap()) <= 1e-13 * l2_norm(&x).max(1e-300));
    }
}
