use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::random::{gaussian_matrix, random_orthonormal_columns, seeded_rng};

fn muon_cfg(lr: f64, wd: f64, scaling: ScalingMode) -> MuonConfig {
    MuonConfig {
        lr,
        weight_decay: wd,
        scaling,
        ..MuonConfig::default()
    }
}

#[test]
fn zero_gradient_without_decay_is_a_fixed_point() {
    let w = gaussian_matrix(&mut seeded_rng(1), 4, 6);
    let state = ParamState::for_muon("w", w.clone());
    let cfg = muon_cfg(0.01, 0.0, ScalingMode::adjusted_lr());
    let (next, stats) = muon_step(&state, &Matrix::zeros(4, 6), &cfg, 0.01).unwrap();
    assert_eq!(next.weight, w);
    assert_eq!(stats.update_rms, 0.0);
}

#[test]
fn zero_gradient_with_decay_shrinks_geometrically() {
    let w = gaussian_matrix(&mut seeded_rng(2), 3, 3);
    let state = ParamState::for_muon("w", w.clone());
    let cfg = muon_cfg(0.01, 0.1, ScalingMode::adjusted_lr());
    let (next, _) = muon_step(&state, &Matrix::zeros(3, 3), &cfg, 0.01).unwrap();
    assert!(next.weight.max_abs_diff(&w.scale(0.999)).unwrap() < 1e-15);
}

#[test]
fn adjusted_lr_rms_law_square() {
    let n = 16;
    let mut rng = seeded_rng(3);
    let grad = gaussian_matrix(&mut rng, n, n);
    let state = ParamState::for_muon("w", Matrix::zeros(n, n));
    let cfg = muon_cfg(0.01, 0.0, ScalingMode::adjusted_lr());

    // Newton-Schulz: scaled RMS is 0.2·√n·rms(O).
    let (_, stats) = muon_step(&state, &grad, &cfg, 0.01).unwrap();
    let o = newton_schulz_input(&grad, &cfg);
    let expect = 0.2 * (n as f64).sqrt() * o.rms();
    assert!((stats.update_rms - expect).abs() < 1e-12);

    // Exact polar factor: rms(O) = √(1/n), so the update RMS is 0.2.
    let (_, exact) = muon_step_with(&state, &grad, &cfg, 0.01, &SvdPolarBackend).unwrap();
    assert!((exact.update_rms - 0.2).abs() < 1e-10);
}

fn newton_schulz_input(grad: &Matrix, cfg: &MuonConfig) -> Matrix {
    // First step from zero momentum: M = G, Nesterov input = (1 + μ)·G.
    let input = grad.scale(1.0 + cfg.momentum);
    crate::newton_schulz::newton_schulz(&input, &cfg.ns).unwrap()
}

#[test]
fn scaling_modes() {
    let mut rng = seeded_rng(4);
    let o = gaussian_matrix(&mut rng, 8, 8);
    let un = scale_update(&o, &ScalingMode::update_norm());
    assert!((un.rms() - 0.2).abs() < 1e-12);
    assert!(scale_update(&Matrix::zeros(2, 3), &ScalingMode::update_norm()).is_zero());

    let adj = scale_update(&o, &ScalingMode::adjusted_lr());
    let base = scale_update(&o, &ScalingMode::baseline(8));
    assert_eq!(adj, base);

    let wide = gaussian_matrix(&mut rng, 8, 32);
    let adj = scale_update(&wide, &ScalingMode::adjusted_lr()).frobenius_norm();
    let base = scale_update(&wide, &ScalingMode::baseline(8)).frobenius_norm();
    assert!((adj / base - 2.0).abs() < 1e-14);
}

#[test]
fn muon_rejects_bad_gradients() {
    let state = ParamState::for_muon("w", Matrix::zeros(2, 2));
    let cfg = MuonConfig::default();
    assert!(matches!(
        muon_step(&state, &Matrix::zeros(2, 3), &cfg, 0.1),
        Err(OptimError::ShapeMismatch { .. })
    ));
    let vec_state = ParamState::new("g", Matrix::zeros(1, 2), ParamKind::VectorParam);
    assert!(matches!(
        muon_step(&vec_state, &Matrix::zeros(1, 2), &cfg, 0.1),
        Err(OptimError::NotAMatrixParam { .. })
    ));
    let adam_state = ParamState::for_adamw("w", Matrix::zeros(2, 2), ParamKind::MatrixParam);
    assert!(matches!(
        muon_step(&adam_state, &Matrix::zeros(2, 2), &cfg, 0.1),
        Err(OptimError::BufferMismatch { .. })
    ));
}

#[test]
fn config_validation() {
    assert!(MuonConfig::default().validate().is_ok());
    assert!(MuonConfig { momentum: 1.0, ..MuonConfig::default() }.validate().is_err());
    assert!(MuonConfig { lr: -1e-3, ..MuonConfig::default() }.validate().is_err());
    assert!(MuonConfig { lr: 0.0, ..MuonConfig::default() }.validate().is_ok());
    let mut bad = MuonConfig::default();
    bad.scaling.rms_target = 0.0;
    assert!(bad.validate().is_err());
    assert!(AdamWConfig::default().validate().is_ok());
    assert!(AdamWConfig { epsilon: 0.0, ..AdamWConfig::default() }.validate().is_err());
    let d = MuonConfig::default();
    assert_eq!((d.momentum, d.ns.steps, d.nesterov), (0.95, 5, true));
    let a = AdamWConfig::default();
    assert_eq!((a.beta1, a.beta2, a.epsilon), (0.9, 0.95, 1e-8));
}

#[test]
fn nesterov_toggle_changes_input() {
    let mut rng = seeded_rng(5);
    let w = gaussian_matrix(&mut rng, 3, 5);
    let g1 = gaussian_matrix(&mut rng, 3, 5);
    let g2 = gaussian_matrix(&mut rng, 3, 5);
    let nest = MuonConfig::default();
    let plain = MuonConfig { nesterov: false, ..nest };
    let s = ParamState::for_muon("w", w);
    let run = |cfg: &MuonConfig| {
        let (s1, _) = muon_step(&s, &g1, cfg, 0.01).unwrap();
        muon_step(&s1, &g2, cfg, 0.01).unwrap().0
    };
    let a = run(&nest);
    let b = run(&plain);
    // Same momentum buffer either way, different weights.
    assert_eq!(a.buffers, b.buffers);
    assert_ne!(a.weight, b.weight);
}

#[test]
fn adamw_zero_gradient_fresh_buffers() {
    let w = gaussian_matrix(&mut seeded_rng(6), 2, 4);
    let state = ParamState::for_adamw("w", w.clone(), ParamKind::MatrixParam);
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let (next, stats) = adamw_step(&state, &Matrix::zeros(2, 4), &cfg, 0.1).unwrap();
    assert_eq!(next.weight, w);
    assert_eq!(stats.update_rms, 0.0);
}

#[test]
fn adamw_two_scalar_steps_match_hand_recurrence() {
    // β₁=0.9, β₂=0.95, ε=1e-8, η=0.1, λ=0.01, w₀=1, g=(0.5, −1).
    let cfg = AdamWConfig {
        lr: 0.1,
        weight_decay: 0.01,
        ..AdamWConfig::default()
    };
    let s0 = ParamState::for_adamw("b", Matrix::filled(1, 1, 1.0), ParamKind::VectorParam);
    let (s1, st1) = adamw_step(&s0, &Matrix::filled(1, 1, 0.5), &cfg, 0.1).unwrap();
    assert!((st1.update_rms - 0.999_999_980_000_000_3).abs() < 1e-15);
    assert!((s1.weight.get(0, 0) - 0.899_000_002).abs() < 1e-15);
    let (s2, st2) = adamw_step(&s1, &Matrix::filled(1, 1, -1.0), &cfg, 0.1).unwrap();
    assert!((st2.update_rms - 0.363_373_945_915_929_4).abs() < 1e-14);
    assert!((s2.weight.get(0, 0) - 0.934_438_396_589_592_9).abs() < 1e-14);
    let Buffers::AdamW { first_moment, second_moment, step } = &s2.buffers else {
        panic!("adamw buffers expected");
    };
    assert_eq!(*step, 2);
    assert!((first_moment.get(0, 0) + 0.055).abs() < 1e-15);
    assert!((second_moment.get(0, 0) - 0.061_875).abs() < 1e-15);
}

#[test]
fn adamw_constant_gradient_update_is_bounded() {
    // Scalar recurrence simulated independently of adamw_elementwise.
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let g = Matrix::from_rows(&[[3.0, -0.2, 1e-3]]).unwrap();
    let mut s = ParamState::for_adamw("v", Matrix::zeros(1, 3), ParamKind::VectorParam);
    let (mut m, mut v) = ([0.0f64; 3], [0.0f64; 3]);
    for t in 1..=200 {
        let (next, stats) = adamw_step(&s, &g, &cfg, 1e-3).unwrap();
        let mut sq = 0.0;
        for i in 0..3 {
            let gi = g.get(0, i);
            m[i] = 0.9 * m[i] + 0.1 * gi;
            v[i] = 0.95 * v[i] + 0.05 * gi * gi;
            let u = (m[i] / (1.0 - 0.9f64.powi(t))) / ((v[i] / (1.0 - 0.95f64.powi(t))).sqrt() + 1e-8);
            assert!(u.abs() <= 1.0 + 1e-12);
            sq += u * u;
        }
        assert!((stats.update_rms - (sq / 3.0).sqrt()).abs() < 1e-12);
        s = next;
    }
}

#[test]
fn hybrid_routes_by_kind() {
    let mut rng = seeded_rng(7);
    let params: Vec<ParamState> = vec![
        ParamState::new("w1", gaussian_matrix(&mut rng, 4, 8), ParamKind::MatrixParam),
        ParamState::new("g1", gaussian_matrix(&mut rng, 1, 4), ParamKind::VectorParam),
        ParamState::new("w2", gaussian_matrix(&mut rng, 8, 4), ParamKind::MatrixParam),
    ];
    let grads: BTreeMap<_, _> = params
        .iter()
        .map(|p| {
            let (r, c) = p.weight.shape();
            (p.name.clone(), gaussian_matrix(&mut rng, r, c))
        })
        .collect();
    let cfg = HybridConfig::shared(0.02, 0.1);
    let (next, stats) = hybrid_step(&params, &grads, &cfg, 0.01).unwrap();
    for ((p, n), s) in params.iter().zip(&next).zip(&stats) {
        let (oracle, os) = match p.kind {
            ParamKind::MatrixParam => muon_step(p, &grads[&p.name], &cfg.muon, 0.01).unwrap(),
            ParamKind::VectorParam => adamw_step(p, &grads[&p.name], &cfg.adamw, 0.01).unwrap(),
        };
        assert_eq!(&oracle, n);
        assert_eq!(&os, s);
    }
}

#[test]
fn hybrid_degenerate_routings() {
    let mut rng = seeded_rng(8);
    let vecs: Vec<ParamState> = (0..3)
        .map(|i| ParamState::new(i.to_string(), gaussian_matrix(&mut rng, 1, 5), ParamKind::VectorParam))
        .collect();
    let grads: BTreeMap<_, _> = vecs
        .iter()
        .map(|p| (p.name.clone(), gaussian_matrix(&mut rng, 1, 5)))
        .collect();
    let cfg = HybridConfig::shared(0.01, 0.1);
    let (next, _) = hybrid_step(&vecs, &grads, &cfg, 0.01).unwrap();
    for (p, n) in vecs.iter().zip(&next) {
        assert_eq!(adamw_step(p, &grads[&p.name], &cfg.adamw, 0.01).unwrap().0, *n);
    }

    let mats: Vec<ParamState> = (0..2)
        .map(|i| ParamState::new(i.to_string(), gaussian_matrix(&mut rng, 3, 3), ParamKind::MatrixParam))
        .collect();
    let mat_grads: BTreeMap<_, _> = mats
        .iter()
        .map(|p| (p.name.clone(), gaussian_matrix(&mut rng, 3, 3)))
        .collect();
    let (next, _) = hybrid_step(&mats, &mat_grads, &cfg, 0.01).unwrap();
    for (p, n) in mats.iter().zip(&next) {
        assert_eq!(muon_step(p, &mat_grads[&p.name], &cfg.muon, 0.01).unwrap().0, *n);
    }
}

#[test]
fn hybrid_missing_gradient_and_decay_exclusion() {
    let w = Matrix::filled(1, 2, 1.0);
    let params = vec![ParamState::new("gain", w.clone(), ParamKind::VectorParam)];
    let err = hybrid_step(&params, &BTreeMap::new(), &HybridConfig::default(), 0.1).unwrap_err();
    assert_eq!(err, OptimError::MissingGradient { name: "gain".into() });

    let mut cfg = HybridConfig::shared(0.1, 0.5);
    cfg.decay_exclude.push("gain".into());
    let grads = BTreeMap::from([("gain".to_string(), Matrix::zeros(1, 2))]);
    let (next, _) = hybrid_step(&params, &grads, &cfg, 0.1).unwrap();
    assert_eq!(next[0].weight, w);
}

#[test]
fn determinism_is_bitwise() {
    let mut rng = seeded_rng(9);
    let s = ParamState::for_muon("w", gaussian_matrix(&mut rng, 5, 7));
    let grads: Vec<Matrix> = (0..5).map(|_| gaussian_matrix(&mut rng, 5, 7)).collect();
    let run = || {
        let mut st = s.clone();
        for g in &grads {
            st = muon_step(&st, g, &MuonConfig::default(), 0.02).unwrap().0;
        }
        st
    };
    let (a, b) = (run(), run());
    assert!(a.weight.data().iter().zip(b.weight.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lemma_rms_of_orthonormal_product(n in 2usize..40, m_frac in 0.0f64..1.0, r_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let m = 2 + ((n - 2) as f64 * m_frac) as usize;
        let r = 1 + ((m - 1) as f64 * r_frac) as usize;
        let mut rng = seeded_rng(seed);
        let u = random_orthonormal_columns(&mut rng, m, r);
        let v = random_orthonormal_columns(&mut rng, n, r);
        let x = u.matmul_transpose(&v).unwrap();
        let expect = (r as f64 / (m * n) as f64).sqrt();
        prop_assert!((x.rms() - expect).abs() < 1e-10);
    }

    #[test]
    fn adjusted_lr_exact_backend_gives_target_rms(rows in 1usize..24, cols in 1usize..24, seed in any::<u64>()) {
        let grad = gaussian_matrix(&mut seeded_rng(seed), rows, cols);
        let state = ParamState::for_muon("w", Matrix::zeros(rows, cols));
        let cfg = muon_cfg(0.01, 0.1, ScalingMode::adjusted_lr());
        let (_, stats) = muon_step_with(&state, &grad, &cfg, 0.01, &SvdPolarBackend).unwrap();
        prop_assert!((stats.update_rms - 0.2).abs() < 1e-10, "{}", stats.update_rms);
    }

    #[test]
    fn update_norm_rms_is_target(rows in 1usize..24, cols in 1usize..24, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let mut state = ParamState::for_muon("w", gaussian_matrix(&mut rng, rows, cols));
        let cfg = muon_cfg(0.01, 0.1, ScalingMode::update_norm());
        for _ in 0..3 {
            let g = gaussian_matrix(&mut rng, rows, cols);
            let (next, stats) = muon_step(&state, &g, &cfg, 0.01).unwrap();
            prop_assert!((stats.update_rms - 0.2).abs() < 1e-12);
            state = next;
        }
    }

    #[test]
    fn zero_gradients_are_fixed_points(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>(), steps in 1usize..6) {
        let w = gaussian_matrix(&mut seeded_rng(seed), rows, cols);
        let mut muon = ParamState::for_muon("w", w.clone());
        let mut adam = ParamState::for_adamw("w", w.clone(), ParamKind::MatrixParam);
        let mcfg = muon_cfg(0.05, 0.0, ScalingMode::adjusted_lr());
        let acfg = AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() };
        let z = Matrix::zeros(rows, cols);
        for _ in 0..steps {
            muon = muon_step(&muon, &z, &mcfg, 0.05).unwrap().0;
            adam = adamw_step(&adam, &z, &acfg, 0.05).unwrap().0;
        }
        prop_assert_eq!(&muon.weight, &w);
        prop_assert_eq!(&adam.weight, &w);
    }
}
