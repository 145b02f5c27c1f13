//! The MLP score network: forward pass, divergences, the implicit
//! score-matching gradient, pretraining and on-the-fly training.

mod common;

use rand::Rng;

use vml_core::ensemble::ParticleEnsemble;
use vml_core::rng::{seeded_rng, stream_rng, Stream};
use vml_core::score::{Divergence, MlpScoreNet, SbtmEstimator, TrainingOptions};

use common::{normals, reference_forward, rng, sign_vectors};

fn random_net(dv: usize, hidden: usize, scale: f64, seed: u64) -> MlpScoreNet {
    let mut r = rng(seed);
    let n = MlpScoreNet::param_count(dv, hidden);
    let params = normals(&mut r, n).into_iter().map(|c| scale * c).collect();
    MlpScoreNet::from_params(dv, hidden, params).unwrap()
}

/// `hidden = dv` network with `s(v) ~ C v` while `eps |v|` is tiny.
fn linear_emulation(c: &[f64], dv: usize, eps: f64) -> MlpScoreNet {
    let cols = 1 + dv;
    let mut p = vec![0.0; MlpScoreNet::param_count(dv, dv)];
    for h in 0..dv {
        p[h * cols + 1 + h] = eps;
    }
    let w2 = dv * cols + dv;
    for i in 0..dv {
        for h in 0..dv {
            p[w2 + i * dv + h] = c[i * dv + h] / eps;
        }
    }
    MlpScoreNet::from_params(dv, dv, p).unwrap()
}

fn fd_divergence(net: &MlpScoreNet, x: f64, v: &[f64], step: f64) -> f64 {
    (0..v.len())
        .map(|i| {
            let (mut vp, mut vm) = (v.to_vec(), v.to_vec());
            vp[i] += step;
            vm[i] -= step;
            (net.forward(x, &vp)[i] - net.forward(x, &vm)[i]) / (2.0 * step)
        })
        .sum()
}

#[test]
fn forward_matches_reference_implementation() {
    let mut r = rng(1);
    for (k, dv) in [2usize, 3, 2, 3].into_iter().enumerate() {
        let net = random_net(dv, 17, 0.7, k as u64);
        for _ in 0..20 {
            let x = r.random::<f64>();
            let v = normals(&mut r, dv);
            let got = net.forward(x, &v);
            let want = reference_forward(net.params(), dv, 17, x, &v);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
        let xs: Vec<f64> = (0..9).map(|_| r.random::<f64>()).collect();
        let vs = normals(&mut r, 9 * dv);
        let batch = net.forward_batch(&xs, &vs);
        for p in 0..9 {
            assert_eq!(&batch[p * dv..(p + 1) * dv], &net.forward(xs[p], &vs[p * dv..(p + 1) * dv])[..]);
        }
    }
}

#[test]
fn exact_divergence_matches_finite_differences() {
    let mut r = rng(2);
    for seed in 0..10 {
        let dv = 2 + seed as usize % 2;
        let net = random_net(dv, 24, 0.5, seed);
        let x = r.random::<f64>();
        let v = normals(&mut r, dv);
        let exact = net.exact_divergence(x, &v);
        let fd = fd_divergence(&net, x, &v, 1e-5);
        assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1e-3), "{exact} vs {fd}");
    }
}

#[test]
fn linear_emulation_divergence_is_trace() {
    let c = [0.3, -1.2, 0.5, 2.0, -0.7, 0.1, 0.4, 0.9, -1.5];
    let net = linear_emulation(&c, 3, 1e-7);
    let v = [0.4, -1.1, 0.8];
    let trace = c[0] + c[4] + c[8];
    assert!((net.exact_divergence(0.3, &v) - trace).abs() < 1e-5);
    let s = net.forward(0.3, &v);
    for i in 0..3 {
        let cv: f64 = (0..3).map(|j| c[i * 3 + j] * v[j]).sum();
        assert!((s[i] - cv).abs() < 1e-5);
    }
}

#[test]
fn zero_network_has_zero_score_and_divergence() {
    let net = MlpScoreNet::zeros(3, 8);
    for z in sign_vectors(3) {
        assert_eq!(net.hutchinson_divergence(0.2, &[1.0, 2.0, 3.0], &z), 0.0);
    }
    assert_eq!(net.exact_divergence(0.2, &[1.0, 2.0, 3.0]), 0.0);
    let (loss, grad) = net.ism_loss_and_grad(&[0.1, 0.6], &[1.0, 2.0, 3.0, -1.0, 0.0, 0.5], &[1.0, 1.0], Divergence::Exact);
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|g| *g == 0.0));
}

#[test]
fn hutchinson_is_exact_for_diagonal_jacobian() {
    let c = [0.3, 0.0, 0.0, -2.0];
    let net = linear_emulation(&c, 2, 1e-3);
    let exact = net.exact_divergence(0.0, &[0.5, -0.25]);
    for z in sign_vectors(2) {
        assert!((net.hutchinson_divergence(0.0, &[0.5, -0.25], &z) - exact).abs() < 1e-14);
    }
}

#[test]
fn hutchinson_average_over_all_signs_is_exact() {
    let mut r = rng(3);
    for trial in 0..50u64 {
        let dv = 2 + trial as usize % 2;
        let net = random_net(dv, 16, 0.8, 100 + trial);
        let x = r.random::<f64>();
        let v = normals(&mut r, dv);
        let signs = sign_vectors(dv);
        let mean = signs.iter().map(|z| net.hutchinson_divergence(x, &v, z)).sum::<f64>() / signs.len() as f64;
        let exact = net.exact_divergence(x, &v);
        assert!((mean - exact).abs() <= 1e-12 * exact.abs().max(1.0), "{mean} vs {exact}");
    }
}

struct Batch {
    xs: Vec<f64>,
    vs: Vec<f64>,
    ws: Vec<f64>,
}

fn batch(n: usize, dv: usize, seed: u64) -> Batch {
    let mut r = rng(seed);
    Batch {
        xs: (0..n).map(|_| r.random::<f64>()).collect(),
        vs: normals(&mut r, n * dv),
        ws: (0..n).map(|_| r.random_range(0.5..1.5)).collect(),
    }
}

fn check_ism_gradient(dv: usize, div: &dyn Fn(usize) -> Vec<f64>, mode: &str) {
    let (n, hidden) = (64, 16);
    let b = batch(n, dv, 4);
    let probe = div(n);
    fn make<'a>(mode: &str, probe: &'a [f64]) -> Divergence<'a> {
        match mode {
            "exact" => Divergence::Exact,
            "shared" => Divergence::Shared(probe),
            _ => Divergence::PerParticle(probe),
        }
    }
    let net = random_net(dv, hidden, 0.4, 5);
    let loss_at = |params: &[f64]| {
        let net = MlpScoreNet::from_params(dv, hidden, params.to_vec()).unwrap();
        net.ism_loss_and_grad(&b.xs, &b.vs, &b.ws, make(mode, &probe)).0
    };
    let (loss, grad) = net.ism_loss_and_grad(&b.xs, &b.vs, &b.ws, make(mode, &probe));
    assert_eq!(loss, loss_at(net.params()));

    let mut r = rng(6);
    let count = net.params().len();
    // every parameter block is visited, plus random coordinates
    let mut coords: Vec<usize> = vec![0, 1 + dv, 16 * (1 + dv), 16 * (2 + dv), count - 1];
    coords.extend((0..25).map(|_| r.random_range(0..count)));
    for &c in &coords {
        let h = 1e-6;
        let mut p = net.params().to_vec();
        p[c] += h;
        let up = loss_at(&p);
        p[c] -= 2.0 * h;
        let down = loss_at(&p);
        let fd = (up - down) / (2.0 * h);
        let err = (grad[c] - fd).abs();
        assert!(
            err <= 1e-5 * grad[c].abs().max(fd.abs()) + 1e-7,
            "{mode} dv={dv} coordinate {c}: analytic {} vs fd {fd}",
            grad[c]
        );
    }
}

#[test]
fn ism_gradient_exact_divergence() {
    for dv in [2, 3] {
        check_ism_gradient(dv, &|_| Vec::new(), "exact");
    }
}

#[test]
fn ism_gradient_shared_probe() {
    for dv in [2, 3] {
        check_ism_gradient(dv, &|_| vec![1.0, -1.0, -1.0][..dv].to_vec(), "shared");
    }
}

#[test]
fn ism_gradient_per_particle_probe() {
    for dv in [2, 3] {
        check_ism_gradient(dv, &|n| vml_core::score::rademacher(&mut seeded_rng(9), n * dv), "per");
    }
}

#[test]
fn ism_loss_is_defined_by_score_and_divergence() {
    let dv = 3;
    let b = batch(40, dv, 8);
    let net = random_net(dv, 12, 0.6, 10);
    let want: f64 = (0..40)
        .map(|p| {
            let v = &b.vs[p * dv..(p + 1) * dv];
            let s = net.forward(b.xs[p], v);
            b.ws[p] * (s.iter().map(|c| c * c).sum::<f64>() + 2.0 * net.exact_divergence(b.xs[p], v))
        })
        .sum();
    let (got, _) = net.ism_loss_and_grad(&b.xs, &b.vs, &b.ws, Divergence::Exact);
    assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));
}

#[test]
fn fitted_gaussian_score_loss() {
    // s ~ -v on standard-normal samples: loss ~ sum w (|v|^2 - 2 dv), mean -dv
    let dv = 3;
    let n = 20_000;
    let minus_identity: Vec<f64> = (0..9).map(|k| if k % 4 == 0 { -1.0 } else { 0.0 }).collect();
    let net = linear_emulation(&minus_identity, dv, 1e-7);
    let mut r = rng(12);
    let xs = vec![0.5; n];
    let vs = normals(&mut r, n * dv);
    let ws = vec![1.0 / n as f64; n];
    let (loss, _) = net.ism_loss_and_grad(&xs, &vs, &ws, Divergence::Exact);
    let plug_in: f64 = vs.chunks(dv).map(|v| (v.iter().map(|c| c * c).sum::<f64>() - 2.0 * dv as f64) / n as f64).sum();
    assert!((loss - plug_in).abs() < 1e-5, "{loss} vs {plug_in}");
    // |v|^2 has variance 2 dv; 5 sigma Monte Carlo bound
    let sigma = (2.0 * dv as f64 / n as f64).sqrt();
    assert!((loss + dv as f64).abs() < 5.0 * sigma, "{loss}");
}

fn gaussian_particles(n: usize, dv: usize, seed: u64) -> ParticleEnsemble {
    let mut r = rng(seed);
    let x = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    ParticleEnsemble::with_equal_weights(1.0, dv, x, normals(&mut r, n * dv)).unwrap()
}

#[test]
fn pretraining_learns_gaussian_score() {
    let (n, dv) = (10_000, 2);
    let p = gaussian_particles(n, dv, 13);
    let target: Vec<f64> = p.v.iter().map(|c| -c).collect();
    let net = MlpScoreNet::init(dv, 256, &mut stream_rng(0, Stream::NetworkInit));
    let mut est = SbtmEstimator::new(net, TrainingOptions::default(), 1.0, seeded_rng(1));
    let report = est
        .pretrain(&p, &target, 10_000, 1e-3, 4096, &mut stream_rng(0, Stream::Pretraining))
        .unwrap();
    let mean_sq = target.iter().map(|c| c * c).sum::<f64>() / n as f64;
    let relative = report.final_mse / mean_sq;
    println!("pretraining: {} steps, relative mse {relative:.2e}", report.steps);
    assert!(relative < 1e-2, "{relative}");
}

#[test]
fn training_on_stationary_particles_lowers_loss() {
    let p = gaussian_particles(2000, 2, 14);
    let net = MlpScoreNet::init(2, 32, &mut seeded_rng(15));
    let options = TrainingOptions {
        lr: 2e-3,
        ..TrainingOptions::default()
    };
    let mut est = SbtmEstimator::new(net, options, 1.0, seeded_rng(16));
    let losses = est.train(&p, 400).unwrap();
    assert_eq!(losses.len(), 400);
    let medians: Vec<f64> = losses.chunks(20).map(|w| common::median(w.to_vec())).collect();
    println!("window medians: {medians:.3?}");
    // least-squares slope of the window medians
    let k = medians.len() as f64;
    let mean_i = (k - 1.0) / 2.0;
    let mean_m = medians.iter().sum::<f64>() / k;
    let slope = medians
        .iter()
        .enumerate()
        .map(|(i, m)| (i as f64 - mean_i) * (m - mean_m))
        .sum::<f64>()
        / medians.iter().enumerate().map(|(i, _)| (i as f64 - mean_i).powi(2)).sum::<f64>();
    assert!(slope < 0.0, "{slope}");
    assert!(medians.last().unwrap() < &medians[0]);
}

#[test]
fn training_is_reproducible() {
    let p = gaussian_particles(500, 3, 17);
    let run = || {
        let net = MlpScoreNet::init(3, 16, &mut seeded_rng(18));
        let mut est = SbtmEstimator::new(net, TrainingOptions::default(), 1.0, seeded_rng(19));
        est.train(&p, 10).unwrap();
        est.net().params().to_vec()
    };
    let (a, b) = (run(), run());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}
