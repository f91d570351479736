use cfcc_core::{Distribution, EvalOptions};
use cfcc_smpc::{compile_chance_constraints, expected_cost, ConstraintKind, Levels, ReservoirParams};
use nalgebra::DVector;
use statrs::distribution::{ContinuousCDF, Normal};

fn normal(mean: f64, sd: f64) -> Distribution {
    Distribution::normal(mean, sd).unwrap()
}

#[test]
fn one_step_constraint_count() {
    let p = ReservoirParams { horizon: 1, ..Default::default() };
    let prob = p.problem().unwrap();
    let pred = prob.predict(&DVector::from_vec(p.state(p.y_ref))).unwrap();
    let c = compile_chance_constraints(&pred, &prob).unwrap();
    assert_eq!(c.chance.len(), 6);
    assert_eq!(c.bounds.len(), 3);
    assert!(c.kinds.iter().all(|k| matches!(k, ConstraintKind::OutputUpper { .. } | ConstraintKind::OutputLower { .. })));
}

#[test]
fn three_lake_constraint_count() {
    let p = ReservoirParams::default();
    let prob = p.problem().unwrap();
    let pred = prob.predict(&DVector::from_vec(p.state(p.y_ref))).unwrap();
    let c = compile_chance_constraints(&pred, &prob).unwrap();
    let count = |f: fn(&ConstraintKind) -> bool| c.kinds.iter().filter(|k| f(k)).count();
    assert_eq!(count(|k| matches!(k, ConstraintKind::OutputUpper { .. })), 30);
    assert_eq!(count(|k| matches!(k, ConstraintKind::OutputLower { .. })), 30);
    assert_eq!(count(|k| matches!(k, ConstraintKind::InputUpper { .. } | ConstraintKind::InputLower { .. })), 54);
    assert_eq!(c.chance.len(), 114);
    // three two-sided hard bounds on the first input
    assert_eq!(c.bounds.len(), 3);
    assert!(c.bounds.iter().all(|b| b.index < 3));

    let p = ReservoirParams { affine_feedback: false, ..Default::default() };
    let prob = p.problem().unwrap();
    let pred = prob.predict(&DVector::from_vec(p.state(p.y_ref))).unwrap();
    let c = compile_chance_constraints(&pred, &prob).unwrap();
    assert_eq!((c.chance.len(), c.bounds.len()), (60, 30));
}

#[test]
fn zero_level_is_always_satisfied() {
    let p = ReservoirParams { levels: Levels { upper: 0.0, lower: 0.95, input: 0.95 }, horizon: 3, ..Default::default() };
    let prob = p.problem().unwrap();
    let pred = prob.predict(&DVector::from_vec(p.state(p.y_ref))).unwrap();
    let c = compile_chance_constraints(&pred, &prob).unwrap();
    let z: Vec<f64> = (0..prob.policy.dim()).map(|i| if i < 9 { 50.0 * (i % 4) as f64 } else { 0.3 }).collect();
    for (k, con) in c.kinds.iter().zip(&c.chance) {
        if matches!(k, ConstraintKind::OutputUpper { .. }) {
            let (r, _) = con.residual(&z, &EvalOptions::default()).unwrap();
            assert!(r <= 0.0);
        }
    }
}

#[test]
fn cost_vanishes_at_the_reference() {
    let p = ReservoirParams {
        rainfall: [normal(0.0, 1.0), normal(0.0, 2.0), normal(0.0, 0.5)],
        ..Default::default()
    };
    let prob = p.problem().unwrap();
    let pred = prob.predict(&DVector::from_vec(p.state(p.y_ref))).unwrap();
    let u = p.steady_releases();
    let mut z = vec![0.0; prob.policy.dim()];
    for l in 0..p.horizon {
        z[3 * l..3 * l + 3].copy_from_slice(&u);
    }
    let (j, grad) = expected_cost(&pred, &prob, &z).unwrap();
    assert!(j < 1e-24, "{j}");
    assert!(grad.iter().all(|g| g.abs() < 1e-12));

    // zero-mean rain: the gains do not enter the expected cost
    for (i, v) in z.iter_mut().enumerate().skip(prob.policy.open_loop_len()) {
        *v = ((i * 7919) % 13) as f64 - 6.0;
    }
    let (j2, grad2) = expected_cost(&pred, &prob, &z).unwrap();
    assert_eq!(j, j2);
    assert!(grad2[prob.policy.open_loop_len()..].iter().all(|g| *g == 0.0));
}

#[test]
fn cost_matches_mean_rollout() {
    let p = ReservoirParams::default();
    let prob = p.problem().unwrap();
    let sys = p.system().unwrap();
    let x0 = DVector::from_vec(p.state([4.7, 4.6, 4.4]));
    let pred = prob.predict(&x0).unwrap();
    let z = vec![0.0; prob.policy.dim()];
    let (j, _) = expected_cost(&pred, &prob, &z).unwrap();
    let mean_w = DVector::from_vec(p.rainfall.iter().map(|d| d.mean().unwrap()).collect());
    let mut x = x0;
    let mut want = 0.0;
    for l in 0..p.horizon {
        x = sys.step(&x, &DVector::zeros(3), &mean_w, l);
        for j in 0..3 {
            want += (x[j] - p.y_ref[j]).powi(2);
        }
    }
    assert!((j - want).abs() <= 1e-10 * want, "{j} vs {want}");
}

#[test]
fn undefined_mean_is_rejected() {
    let p = ReservoirParams {
        rainfall: [Distribution::cauchy(0.0, 1.0).unwrap(), normal(0.0, 1.0), normal(0.0, 1.0)],
        ..Default::default()
    };
    let prob = p.problem().unwrap();
    let pred = prob.predict(&DVector::from_vec(p.state(p.y_ref))).unwrap();
    assert!(expected_cost(&pred, &prob, &vec![0.0; prob.policy.dim()]).is_err());
}

#[test]
fn invalid_bounds_are_rejected() {
    let p = ReservoirParams { y_min: [5.4, 4.2, 3.5], ..Default::default() };
    assert!(p.problem().is_err());
    let p = ReservoirParams { y_ref: [5.4, 4.8, 4.2], ..Default::default() };
    assert!(p.problem().is_err());
    let p = ReservoirParams { levels: Levels::uniform(1.2), ..Default::default() };
    assert!(p.problem().is_err());
}

/// β = Φ((-q - gᵀμ) / ‖diag(σ) g‖) for normal disturbances.
#[test]
fn gaussian_reformulation_agrees() {
    let p = ReservoirParams {
        rainfall: [normal(1.0, 25.0), normal(-2.0, 40.0), normal(0.5, 30.0)],
        horizon: 5,
        ..Default::default()
    };
    let prob = p.problem().unwrap();
    let pred = prob.predict(&DVector::from_vec(p.state([4.6, 4.7, 4.3]))).unwrap();
    let c = compile_chance_constraints(&pred, &prob).unwrap();
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let opts = EvalOptions::default();
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut uniform = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let u = p.steady_releases();
    let mut checked = 0;
    let mut worst = 0.0_f64;
    while checked < 50 {
        let mut z = vec![0.0; prob.policy.dim()];
        for (i, v) in z.iter_mut().enumerate() {
            *v = if prob.policy.is_gain(i) { 4.0 * (uniform() - 0.5) } else { u[i % 3] + 60.0 * (uniform() - 0.5) };
        }
        let con = &c.chance[(uniform() * c.chance.len() as f64) as usize];
        let f = con.functions();
        let mut g = vec![0.0; f.g0.len()];
        cfcc_core::AffineFunctions::g(f, &z, &mut g);
        let laws = con.disturbances();
        let mean: f64 = g.iter().zip(laws).map(|(g, d)| g * d.mean().unwrap()).sum();
        let sd = g.iter().zip(laws).map(|(g, d)| g * g * d.variance().unwrap()).sum::<f64>().sqrt();
        if sd == 0.0 {
            continue;
        }
        let q = cfcc_core::AffineFunctions::q(f, &z);
        let want = std_normal.cdf((-q - mean) / sd);
        let got = con.probability(&z, &opts).unwrap();
        worst = worst.max((got - want).abs());
        checked += 1;
    }
    assert!(worst < 1e-7, "{worst}");
}
