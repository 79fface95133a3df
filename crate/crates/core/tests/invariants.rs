use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use qqa_core::boolfn::{make_exact, make_mod, BooleanFunction};
use qqa_core::lossgrad::{loss, loss_and_grad, ParameterVector};
use qqa_core::qcircuit::{apply_oracle, forward, gram, initial_batch, CircuitConfig, ProjectorPartition};
use qqa_core::uparam::{param_count, unitarity_defect, unitary_from_slice, CMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_function(pick: usize) -> BooleanFunction {
    match pick % 5 {
        0 => make_mod(2, 2).unwrap(),
        1 => make_mod(3, 3).unwrap(),
        2 => make_exact(3, 0, 2).unwrap(),
        3 => make_exact(3, 1, 3).unwrap(),
        _ => BooleanFunction::from_table(3, &[("001".into(), 5), ("110".into(), -1), ("111".into(), 5)]).unwrap(),
    }
}

fn config_for(f: &BooleanFunction, t: usize, d_w: usize) -> CircuitConfig {
    let d_a = (f.n() + 1) * d_w;
    let parts = f.num_outputs();
    let partition = (0..parts).map(|i| d_a / parts + usize::from(i < d_a % parts)).collect();
    CircuitConfig::new(f.n(), t, d_w, partition).unwrap()
}

fn random_params(cfg: &CircuitConfig, seed: u64) -> ParameterVector {
    ParameterVector::random(cfg, 1.0, seed)
}

/// One input at a time, with the oracle written out by hand.
fn serial_forward(cfg: &CircuitConfig, f: &BooleanFunction, us: &[CMatrix]) -> Vec<DVector<Complex64>> {
    f.domain()
        .iter()
        .map(|x| {
            let mut v = DVector::from_element(cfg.d_a(), Complex64::new(0.0, 0.0));
            v[0] = Complex64::new(1.0, 0.0);
            for (j, u) in us.iter().enumerate() {
                if j > 0 {
                    for a in 0..cfg.d_a() {
                        let i = a / cfg.d_w;
                        if i > 0 && x.bit(i) {
                            v[a] = -v[a];
                        }
                    }
                }
                v = u * v;
            }
            v
        })
        .collect()
}

fn serial_errors(cfg: &CircuitConfig, f: &BooleanFunction, states: &[DVector<Complex64>]) -> Vec<f64> {
    let mut start = vec![0];
    for p in &cfg.partition {
        start.push(start.last().unwrap() + p);
    }
    states
        .iter()
        .zip(f.classes())
        .map(|(v, &c)| {
            let inside: f64 = (start[c]..start[c + 1]).map(|a| v[a].norm_sqr()).sum();
            1.0 - inside
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_unitaries_are_unitary(d in 2usize..9, seed in any::<u64>(), scale in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..param_count(d)).map(|_| rng.random_range(-scale..scale)).collect();
        let (u, _) = unitary_from_slice(d, &vals).unwrap();
        prop_assert!(unitarity_defect(&u) < 1e-10);
    }

    #[test]
    fn batch_matches_serial(pick in 0usize..5, t in 0usize..4, d_w in 1usize..3, seed in any::<u64>()) {
        let f = small_function(pick);
        let cfg = config_for(&f, t, d_w);
        let p = random_params(&cfg, seed);
        let us = p.unitaries().unwrap();
        let batch = forward(&cfg, &f, &us).unwrap();
        let serial = serial_forward(&cfg, &f, &us);
        for (c, v) in serial.iter().enumerate() {
            let diff = (batch.amplitudes().column(c) - v).norm();
            prop_assert!(diff < 1e-12, "column {c} differs by {diff}");
        }
        let report = loss(&cfg, &f, &p).unwrap();
        let errs = serial_errors(&cfg, &f, &serial);
        for (a, b) in report.per_input.iter().zip(&errs) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn states_stay_normalized(pick in 0usize..5, t in 0usize..4, d_w in 1usize..3, seed in any::<u64>()) {
        let f = small_function(pick);
        let cfg = config_for(&f, t, d_w);
        let us = random_params(&cfg, seed).unitaries().unwrap();
        let state = forward(&cfg, &f, &us).unwrap();
        for norm in state.column_norms() {
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
        let report = loss(&cfg, &f, &random_params(&cfg, seed)).unwrap();
        prop_assert!(report.per_input.iter().all(|e| (-1e-12..=1.0 + 1e-12).contains(e)));
        let mean = report.per_input.iter().sum::<f64>() / report.per_input.len() as f64;
        prop_assert!((mean - report.mean_error).abs() < 1e-15);
        prop_assert!(report.max_error >= report.mean_error);
    }

    #[test]
    fn oracle_is_an_involution(pick in 0usize..5, d_w in 1usize..4, seed in any::<u64>()) {
        let f = small_function(pick);
        let cfg = config_for(&f, 1, d_w);
        let us = random_params(&cfg, seed).unitaries().unwrap();
        let mut state = initial_batch(&cfg, f.domain_size());
        state = qqa_core::qcircuit::apply_unitary(&state, &us[0]).unwrap();
        let twice = apply_oracle(&apply_oracle(&state, &f).unwrap(), &f).unwrap();
        prop_assert!((twice.amplitudes() - state.amplitudes()).norm() < 1e-14);
    }

    #[test]
    fn gram_is_psd_with_unit_diagonal(pick in 0usize..5, t in 0usize..3, seed in any::<u64>()) {
        let f = small_function(pick);
        let cfg = config_for(&f, t, 2);
        let us = random_params(&cfg, seed).unitaries().unwrap();
        let m = gram(&forward(&cfg, &f, &us).unwrap());
        prop_assert!((&m - m.adjoint()).norm() < 1e-12);
        for k in 0..m.nrows() {
            prop_assert!((m[(k, k)].re - 1.0).abs() < 1e-12);
        }
        let eig = m.symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10));
    }

    #[test]
    fn loss_ignores_block_rotations_after_the_last_layer(pick in 0usize..5, t in 1usize..3, seed in any::<u64>()) {
        let f = small_function(pick);
        let cfg = config_for(&f, t, 2);
        let p = random_params(&cfg, seed);
        let mut us = p.unitaries().unwrap();
        let base = loss(&cfg, &f, &p).unwrap();
        let proj = ProjectorPartition::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut block = CMatrix::zeros(cfg.d_a(), cfg.d_a());
        for r in proj.blocks() {
            let d = r.len();
            let v = if d == 1 {
                let th: f64 = rng.random_range(-3.0..3.0);
                CMatrix::from_element(1, 1, Complex64::from_polar(1.0, th))
            } else {
                let vals: Vec<f64> = (0..param_count(d)).map(|_| rng.random_range(-2.0..2.0)).collect();
                unitary_from_slice(d, &vals).unwrap().0
            };
            block.view_mut((r.start, r.start), (d, d)).copy_from(&v);
        }
        let last = us.len() - 1;
        us[last] = &block * &us[last];
        let rotated = qqa_core::lossgrad::CircuitProblem::new(&cfg, &f).unwrap().errors_for_unitaries(&us);
        for (a, b) in base.per_input.iter().zip(&rotated) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_output_relabelling_keeps_the_loss(t in 1usize..3, seed in any::<u64>()) {
        let f = make_exact(3, 1, 3).unwrap();
        let shifted: Vec<(String, i64)> = f
            .domain()
            .iter()
            .map(|x| (x.to_string(), 10 * f.evaluate(x).unwrap() + 7))
            .collect();
        let g = BooleanFunction::from_table(3, &shifted).unwrap();
        prop_assert_eq!(f.classes(), g.classes());
        let cfg = config_for(&f, t, 1);
        let p = random_params(&cfg, seed);
        prop_assert_eq!(loss(&cfg, &f, &p).unwrap().per_input, loss(&cfg, &g, &p).unwrap().per_input);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..12 {
        let f = small_function(trial);
        let cfg = config_for(&f, 1 + trial % 3, 1 + trial % 2);
        let p = random_params(&cfg, 100 + trial as u64);
        let analytic = loss_and_grad(&cfg, &f, &p).unwrap().gradient.unwrap();
        let h = 1e-6;
        for _ in 0..8 {
            let k = rng.random_range(0..p.len());
            let mut plus = p.clone();
            plus.values[k] += h;
            let mut minus = p.clone();
            minus.values[k] -= h;
            let fd = (loss(&cfg, &f, &plus).unwrap().mean_error - loss(&cfg, &f, &minus).unwrap().mean_error) / (2.0 * h);
            let tol = 1e-5 * analytic[k].abs().max(1.0);
            assert!((fd - analytic[k]).abs() < tol, "trial {trial} param {k}: fd {fd} vs {}", analytic[k]);
        }
    }
}

#[test]
fn zero_query_circuit_cannot_separate_inputs() {
    // Every input sees the same state, so the two classes of MOD_2^2 split the mass.
    let f = make_mod(2, 2).unwrap();
    let cfg = config_for(&f, 0, 1);
    let p = random_params(&cfg, 3);
    let report = loss(&cfg, &f, &p).unwrap();
    let e = &report.per_input;
    assert!((e[0] - e[3]).abs() < 1e-14 && (e[1] - e[2]).abs() < 1e-14);
    assert!((e[0] + e[1] - 1.0).abs() < 1e-12);
    assert!(report.max_error >= 0.5 - 1e-12);
}
