mod common;

use common::{aligned_min_cosine, naive_reconstruct};
use phasecp::synth::{random_factors, random_symmetric_tensor};
use phasecp::*;
use proptest::prelude::*;

#[test]
fn reconstruction_matches_direct_evaluation() {
    let f = random_factors(7, 3, 3, 17);
    let t = f.reconstruct().unwrap();
    let direct = naive_reconstruct(&f.weights, &f.phase, &f.video);
    for (a, b) in t.values().iter().zip(&direct) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn recovers_planted_models() {
    let cfg = FitConfig::default();
    for (seed, rank) in [(101u64, 2usize), (102, 3), (103, 4)] {
        let truth = random_factors(31, 3, rank, seed);
        let t = truth.reconstruct().unwrap();
        let model = fit(&t, rank, &cfg, None).unwrap();
        let rel = model.final_sse.sqrt() / t.frobenius_norm();
        assert!(rel < 1e-3, "seed {seed}: relative error {rel}");
        let cos = aligned_min_cosine(
            &truth.phase,
            &truth.video,
            model.phase_loadings(),
            model.video_loadings(),
        );
        assert!(cos > 0.99, "seed {seed}: aligned cosine {cos}");
    }
}

#[test]
fn reported_sse_is_best_restart() {
    let t = random_symmetric_tensor(10, 3, 8);
    let cfg = FitConfig {
        max_iters: 300,
        restarts: 4,
        seed: 3,
        ..Default::default()
    };
    let model = fit(&t, 3, &cfg, None).unwrap();
    assert_eq!(model.per_restart_sse.len(), 4);
    let min = model
        .per_restart_sse
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    assert_eq!(model.final_sse, min);
    assert_eq!(model.per_restart_sse[model.winning_restart], min);
    // Reported SSE agrees with the reported (normalized) model.
    let sse = masked_sse(&t, &model.reconstruct().unwrap(), None).unwrap();
    assert!((sse - model.final_sse).abs() <= 1e-9 * model.final_sse.max(1.0));
}

#[test]
fn fitting_is_deterministic() {
    let t = random_symmetric_tensor(9, 3, 21);
    let cfg = FitConfig {
        max_iters: 200,
        restarts: 3,
        seed: 77,
        ..Default::default()
    };
    let a = fit(&t, 2, &cfg, None).unwrap();
    let b = fit(&t, 2, &cfg, None).unwrap();
    assert_eq!(a, b);
    let c = fit(&t, 2, &cfg.with_seed(78), None).unwrap();
    assert_ne!(a.per_restart_sse, c.per_restart_sse);
}

#[test]
fn masked_entries_are_never_read() {
    use rand::{Rng, SeedableRng};
    let truth = random_factors(12, 3, 2, 5);
    let t = truth.reconstruct().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mask = holdout_mask(t.dims(), 0.2, &mut rng).unwrap();
    let cfg = FitConfig {
        max_iters: 300,
        restarts: 3,
        seed: 1,
        ..Default::default()
    };
    let base = fit(&t, 2, &cfg, Some(&mask)).unwrap();

    // Garbage in the hidden cells, deliberately asymmetric and negative.
    let mut poisoned = t.clone();
    let (n, _, p) = t.dims();
    for k in 0..p {
        for j in 0..n {
            for i in 0..n {
                if !mask.is_observed(i, j, k) {
                    poisoned.set(i, j, k, rng.random_range(-1e6..1e6));
                }
            }
        }
    }
    let again = fit(&poisoned, 2, &cfg, Some(&mask)).unwrap();
    assert_eq!(base, again);
}

#[test]
fn warm_start_never_loses_to_lower_rank() {
    let t = random_symmetric_tensor(12, 3, 40);
    let cfg = FitConfig {
        max_iters: 400,
        restarts: 2,
        seed: 11,
        ..Default::default()
    };
    let mut prev = fit(&t, 1, &cfg, None).unwrap();
    for rank in 2..=5 {
        let cur = fit_with_warm_start(&t, rank, &cfg, None, Some(&prev)).unwrap();
        assert_eq!(cur.per_restart_sse.len(), 3);
        assert!(
            cur.final_sse <= prev.final_sse + 1e-9,
            "rank {rank}: {} > {}",
            cur.final_sse,
            prev.final_sse
        );
        prev = cur;
    }
}

#[test]
fn warm_start_rank_must_not_exceed_target() {
    let t = random_symmetric_tensor(6, 2, 1);
    let cfg = FitConfig {
        max_iters: 20,
        restarts: 1,
        ..Default::default()
    };
    let hi = fit(&t, 3, &cfg, None).unwrap();
    assert!(fit_with_warm_start(&t, 2, &cfg, None, Some(&hi)).is_err());
}

fn arb_signed_symmetric() -> impl Strategy<Value = (DenseTensor3, usize, u64)> {
    (3usize..7, 1usize..4, 1usize..4, any::<u64>()).prop_map(|(n, p, r, seed)| {
        let base = random_symmetric_tensor(n, p, seed);
        // shift into [-0.3, 0.7) so some entries are negative
        let t = DenseTensor3::new(base.dims(), base.values().iter().map(|v| v - 0.3).collect())
            .unwrap();
        (t, r.min(n), seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn model_invariants_hold((t, rank, seed) in arb_signed_symmetric()) {
        let cfg = FitConfig { max_iters: 60, restarts: 2, seed, ..Default::default() };
        let m = fit(&t, rank, &cfg, None).unwrap();
        prop_assert!(m.weights().iter().all(|w| *w >= 0.0));
        prop_assert!(m.phase_loadings().iter().all(|v| *v >= 0.0));
        prop_assert!(m.video_loadings().iter().all(|v| *v >= 0.0));
        for w in m.weights().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for r in 0..rank {
            let na = m.phase_loadings().column(r).norm();
            let nu = m.video_loadings().column(r).norm();
            if m.weights()[r] == 0.0 {
                prop_assert!(na == 0.0 && nu == 0.0);
            } else {
                prop_assert!((na - 1.0).abs() < 1e-9 && (nu - 1.0).abs() < 1e-9);
            }
        }
        let recon = m.reconstruct().unwrap();
        let (n, _, p) = recon.dims();
        for k in 0..p { for j in 0..n { for i in 0..n {
            prop_assert_eq!(recon.get(i, j, k).to_bits(), recon.get(j, i, k).to_bits());
        }}}
    }

    #[test]
    fn normalization_preserves_reconstruction(seed in any::<u64>(), rank in 1usize..5) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw = CpFactors {
            weights: (0..rank).map(|_| rng.random_range(0.1..3.0)).collect(),
            phase: Matrix::from_fn(3, rank, |_, _| rng.random_range(0.0..2.0)),
            video: Matrix::from_fn(6, rank, |_, _| rng.random_range(0.0..2.0)),
        };
        let before = raw.reconstruct().unwrap();
        let after = normalize_and_sort(raw).reconstruct().unwrap();
        let diff: f64 = before.values().iter().zip(after.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(diff / before.frobenius_norm() < 1e-10);
    }
}
