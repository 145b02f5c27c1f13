//! Conservation, dissipation and binning properties of the particle
//! collision operator, checked against brute-force pair sums.

mod common;

use proptest::prelude::*;

use vml_core::collision::{collision_force, entropy_production, CellIndex};
use vml_core::ensemble::ParticleEnsemble;
use vml_core::fields::Grid;

use common::{brute_force_force, hat_images, landau_matrix, normals, random_ensemble, rng};

fn force(p: &ParticleEnsemble, s: &[f64], cells: usize) -> Vec<f64> {
    let grid = Grid::new(p.length, cells).unwrap();
    let index = CellIndex::build(p, &grid);
    collision_force(p, s, &index, &grid).unwrap()
}

/// `(||sum w U||_inf, bound)` for momentum.
fn momentum_residual(p: &ParticleEnsemble, u: &[f64]) -> (f64, f64) {
    let dv = p.dv;
    let mut total = vec![0.0; dv];
    let mut max_term: f64 = 0.0;
    for (k, w) in p.w.iter().enumerate() {
        for i in 0..dv {
            total[i] += w * u[k * dv + i];
            max_term = max_term.max((w * u[k * dv + i]).abs());
        }
    }
    let res = total.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    (res, 1e-10 * max_term * p.len() as f64)
}

fn energy_residual(p: &ParticleEnsemble, u: &[f64]) -> (f64, f64) {
    let dv = p.dv;
    let (mut sum, mut scale) = (0.0, 0.0);
    for (k, w) in p.w.iter().enumerate() {
        let v = p.velocity(k);
        let f = &u[k * dv..(k + 1) * dv];
        sum += w * v.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
        let nv = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let nf = f.iter().map(|c| c * c).sum::<f64>().sqrt();
        scale += w.abs() * nv * nf;
    }
    (sum.abs(), 1e-10 * scale)
}

fn entropy_scale(p: &ParticleEnsemble, s: &[f64], u: &[f64]) -> f64 {
    let dv = p.dv;
    p.w.iter()
        .enumerate()
        .map(|(k, w)| {
            let ns = s[k * dv..(k + 1) * dv].iter().map(|c| c * c).sum::<f64>().sqrt();
            let nf = u[k * dv..(k + 1) * dv].iter().map(|c| c * c).sum::<f64>().sqrt();
            w.abs() * ns * nf
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conserves_momentum_and_energy_and_dissipates(
        seed in any::<u64>(),
        n in 2usize..120,
        dv in 2usize..=3,
        cells in 1usize..12,
        noise in 0.1f64..10.0,
    ) {
        let mut r = rng(seed);
        let p = random_ensemble(&mut r, n, dv, 3.0);
        let s: Vec<f64> = normals(&mut r, n * dv).into_iter().map(|c| noise * c).collect();
        let u = force(&p, &s, cells);

        let (res, bound) = momentum_residual(&p, &u);
        prop_assert!(res <= bound, "momentum {res} > {bound}");
        let (res, bound) = energy_residual(&p, &u);
        prop_assert!(res <= bound, "energy {res} > {bound}");
        let h = entropy_production(&p.w, &s, &u);
        prop_assert!(h >= -1e-10 * entropy_scale(&p, &s, &u), "entropy production {h}");
    }

    #[test]
    fn binned_sum_equals_brute_force(
        seed in any::<u64>(),
        n in 1usize..=50,
        dv in 2usize..=3,
        cells in 1usize..10,
    ) {
        let mut r = rng(seed);
        let p = random_ensemble(&mut r, n, dv, 2.5);
        let s = normals(&mut r, n * dv);
        let u = force(&p, &s, cells);
        let oracle = brute_force_force(&p, &s, cells);
        let scale = oracle.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        for (a, b) in u.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-13 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn weak_form_matches_symmetrized_pair_sum(
        seed in any::<u64>(),
        n in 2usize..=50,
        dv in 2usize..=3,
        cells in 1usize..6,
    ) {
        let mut r = rng(seed);
        let length = 2.0;
        let p = random_ensemble(&mut r, n, dv, length);
        let s = normals(&mut r, n * dv);
        let phi = normals(&mut r, n * dv);
        let u = force(&p, &s, cells);
        let lhs: f64 = (0..n)
            .map(|k| p.w[k] * (0..dv).map(|i| phi[k * dv + i] * u[k * dv + i]).sum::<f64>())
            .sum();

        // 1/2 sum_pq w_p w_q psi (phi_p - phi_q) . A(v_p - v_q)(s_p - s_q)
        let eta = length / cells as f64;
        let mut rhs = 0.0;
        let mut scale = 0.0;
        for a in 0..n {
            for b in 0..n {
                let psi = hat_images(p.x[a] - p.x[b], eta, length);
                let z: Vec<f64> = (0..dv).map(|i| p.v[a * dv + i] - p.v[b * dv + i]).collect();
                let m = landau_matrix(&z);
                for i in 0..dv {
                    for j in 0..dv {
                        let t = 0.5 * p.w[a] * p.w[b] * psi
                            * (phi[a * dv + i] - phi[b * dv + i])
                            * m[i][j]
                            * (s[a * dv + j] - s[b * dv + j]);
                        rhs += t;
                        scale += t.abs();
                    }
                }
            }
        }
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn affine_scores_in_velocity_give_no_force(
        seed in any::<u64>(),
        n in 2usize..80,
        dv in 2usize..=3,
        a in -3.0f64..3.0,
    ) {
        // s = a v + b makes s_p - s_q parallel to v_p - v_q, which A annihilates
        let mut r = rng(seed);
        let p = random_ensemble(&mut r, n, dv, 1.0);
        let b: Vec<f64> = normals(&mut r, dv);
        let s: Vec<f64> = (0..n * dv).map(|k| a * p.v[k] + b[k % dv]).collect();
        let u = force(&p, &s, 3);
        let scale = p.v.iter().fold(1.0f64, |m, c| m.max(c.abs())) * a.abs().max(1.0) * n as f64;
        prop_assert!(u.iter().all(|c| c.abs() <= 1e-12 * scale));
    }
}

#[test]
fn far_apart_particles_do_not_interact() {
    // cell width 1, particles three cells apart
    let p = ParticleEnsemble::with_equal_weights(8.0, 2, vec![0.5, 3.5], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let u = force(&p, &[0.0, 1.0, 0.0, -1.0], 8);
    assert_eq!(u, vec![0.0; 4]);
}

#[test]
fn interaction_across_the_periodic_boundary() {
    let mut r = rng(7);
    let length = 4.0;
    let x = vec![0.05, 3.9];
    let v = normals(&mut r, 6);
    let s = normals(&mut r, 6);
    let p = ParticleEnsemble::new(length, 3, x, v, vec![1.0, 2.0]).unwrap();
    let u = force(&p, &s, 8);
    let oracle = brute_force_force(&p, &s, 8);
    assert!(u.iter().any(|c| c.abs() > 1e-3));
    for (a, b) in u.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn parallel_force_is_deterministic() {
    let mut r = rng(11);
    let p = random_ensemble(&mut r, 5000, 3, 1.0);
    let s = normals(&mut r, 15000);
    let a = force(&p, &s, 4);
    let b = force(&p, &s, 4);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}
