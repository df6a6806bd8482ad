//! Acceptance criteria, one check each. Runs without the libtest harness so
//! every criterion prints its PASS/FAIL line; exits nonzero if any fail.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use pivot_core::controller::{
    control_step, forward_predict, ControllerConfig, ControllerState, GripCommand, OracleEstimator, Phase,
};
use pivot_core::dataset::{self, collect, generate_plan, CollectConfig, CollectionPlan, Dataset, TrajectorySequence};
use pivot_core::eval::{
    closed_loop_suite, episode_table, evaluate_segments, finetune_experiment, mae_by_segment, segment, FinetuneConfig,
    Segment, SegmentBounds, SuiteConfig, SuiteGrid, SEGMENT_HOLD, SEGMENT_THRESHOLD,
};
use pivot_core::filters::{kalman_filter, triangular_smooth, KalmanParams, KalmanState};
use pivot_core::nn::{
    load_checkpoint, save_checkpoint, train, Architecture, Hyper, InputNorm, ModelParams, Sample, StreamingEstimator,
    TrainConfig,
};
use pivot_core::sim::{
    catalog, catalog_names, DynamicsParams, GripperModel, Plant, Protocol, Scenario, SimState, MAX_COMMAND, TICK,
};
use pivot_core::tactile::NUM_CHANNELS;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---------------------------------------------------------------- 1. Kalman

/// Textbook predict/update written out in scalars; shares nothing with the
/// module beyond the parameter struct.
fn kalman_oracle(z: &[f64], p: &KalmanParams) -> Vec<([f64; 2], [[f64; 2]; 2])> {
    let (a, c, q, r) = (p.a, p.c, p.q, p.r);
    let mut x = [z[0], 0.0];
    let mut pm = p.sigma0;
    let mut out = vec![(x, pm)];
    for &zk in &z[1..] {
        let xp = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
        let mut pp = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = q[i][j];
                for k in 0..2 {
                    for l in 0..2 {
                        acc += a[i][k] * pm[k][l] * a[j][l];
                    }
                }
                pp[i][j] = acc;
            }
        }
        let pc = [pp[0][0] * c[0] + pp[0][1] * c[1], pp[1][0] * c[0] + pp[1][1] * c[1]];
        let s = c[0] * pc[0] + c[1] * pc[1] + r;
        let k = [pc[0] / s, pc[1] / s];
        let innov = zk - (c[0] * xp[0] + c[1] * xp[1]);
        x = [xp[0] + k[0] * innov, xp[1] + k[1] * innov];
        for i in 0..2 {
            for j in 0..2 {
                pm[i][j] = pp[i][j] - k[i] * s * k[j];
            }
        }
        out.push((x, pm));
    }
    out
}

fn random_kalman_params(rng: &mut ChaCha8Rng) -> KalmanParams {
    let dt = rng.random_range(0.005..0.05);
    let sigma2 = 10f64.powf(rng.random_range(-3.0..1.0));
    KalmanParams {
        a: [[1.0, dt], [0.0, 1.0]],
        c: [1.0, 0.0],
        q: [
            [sigma2 * dt.powi(3) / 3.0, sigma2 * dt * dt / 2.0],
            [sigma2 * dt * dt / 2.0, sigma2 * dt],
        ],
        r: 10f64.powf(rng.random_range(-6.0..-2.0)),
        sigma0: [[rng.random_range(1e-6..1e-3), 0.0], [0.0, rng.random_range(1e-6..1e-3)]],
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_x: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for n in 0..1000 {
        let p = if n % 2 == 0 {
            KalmanParams::default()
        } else {
            random_kalman_params(&mut rng)
        };
        let mut angle = rng.random_range(0.0..10.0);
        let mut rate = rng.random_range(-60.0..60.0);
        let z: Vec<f64> = (0..200)
            .map(|_| {
                rate += rng.random_range(-5.0..5.0);
                angle += rate / 60.0;
                angle + rng.random_range(-0.2..0.2)
            })
            .collect();
        let got: Vec<KalmanState> = kalman_filter(&z, &p).unwrap();
        for (s, (x, pm)) in got.iter().zip(kalman_oracle(&z, &p)) {
            for i in 0..2 {
                worst_x = worst_x.max((s.x[i] - x[i]).abs() / x[i].abs().max(1e-3));
            }
            let scale = pm.iter().flatten().fold(0f64, |m, v| m.max(v.abs()));
            for i in 0..2 {
                for j in 0..2 {
                    worst_p = worst_p.max((s.sigma[i][j] - pm[i][j]).abs() / scale);
                }
            }
        }
    }
    let took = start.elapsed();
    outcome(
        worst_x < 1e-9 && worst_p < 1e-9 && took < Duration::from_secs(5),
        format!(
            "max rel err state {worst_x:.2e}, covariance {worst_p:.2e}; {}",
            secs(took)
        ),
    )
}

// ------------------------------------------------------------ 2. gradients

fn random_sequence(rng: &mut ChaCha8Rng, t: usize, width: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let frames = (0..t)
        .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let alpha = (0..t).map(|_| rng.random_range(0.0..90.0)).collect();
    let omega = (0..t).map(|_| rng.random_range(-150.0..150.0)).collect();
    (frames, alpha, omega)
}

fn toy8(arch: Architecture) -> Hyper {
    Hyper {
        hidden_size: 8,
        num_layers: 2,
        head_hidden: 8,
        window_size: if arch == Architecture::Mlp { 4 } else { 1 },
        ..Hyper::toy(arch)
    }
}

fn max_gradient_error(params: &ModelParams, f: &[Vec<f64>], a: &[f64], w: &[f64], seed: u64) -> f64 {
    let (_, grads) = params.loss_and_grad(f, a, w, Some(seed)).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for k in 0..params.tensors.len() {
        for j in 0..params.tensors[k].len() {
            let orig = p.tensors[k].data[j];
            p.tensors[k].data[j] = orig + h;
            let up = p.loss_and_grad(f, a, w, Some(seed)).unwrap().0;
            p.tensors[k].data[j] = orig - h;
            let down = p.loss_and_grad(f, a, w, Some(seed)).unwrap().0;
            p.tensors[k].data[j] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads[k][j];
            worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-6));
        }
    }
    worst
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    for arch in Architecture::ALL {
        let mut e: f64 = 0.0;
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let mut params = ModelParams::init(arch, toy8(arch), seed).unwrap();
            // Slight random normalization keeps the input path non-trivial.
            params.input_norm = InputNorm {
                mean: (0..NUM_CHANNELS).map(|_| rng.random_range(-0.1..0.1)).collect(),
                scale: (0..NUM_CHANNELS).map(|_| rng.random_range(0.5..2.0)).collect(),
            };
            let (f, a, w) = random_sequence(&mut rng, 12, NUM_CHANNELS);
            e = e.max(max_gradient_error(&params, &f, &a, &w, 300 + seed));
        }
        worst.push((arch, e));
    }
    let took = start.elapsed();
    let pass = worst.iter().all(|(_, e)| *e < 1e-4) && took < Duration::from_secs(60);
    let detail: Vec<String> = worst.iter().map(|(a, e)| format!("{} {e:.1e}", a.as_str())).collect();
    outcome(pass, format!("max rel err {}; {}", detail.join(", "), secs(took)))
}

// ------------------------------------------------------------ 3. streaming

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut mismatches = 0;
    let mut checked = 0;
    for n in 0..50 {
        let t = rng.random_range(1..120);
        let (f, _, _) = random_sequence(&mut rng, t, NUM_CHANNELS);
        for arch in [Architecture::Lstm, Architecture::Gru, Architecture::Rnn] {
            let params = ModelParams::init(arch, Hyper::toy(arch), n).unwrap();
            let whole = params.predict(&f).unwrap();
            let mut state = params.new_stream();
            let mut streamed = Vec::new();
            for x in &f {
                let y = params
                    .stream_step(&mut state, x)
                    .unwrap()
                    .expect("recurrent models emit every frame");
                streamed.push(params.target_norm.denormalize(y[0], y[1]));
            }
            let (a, w): (Vec<f64>, Vec<f64>) = streamed.into_iter().unzip();
            let same = a.iter().zip(&whole.alpha).all(|(p, q)| p.to_bits() == q.to_bits())
                && w.iter().zip(&whole.omega).all(|(p, q)| p.to_bits() == q.to_bits())
                && a.len() == whole.alpha.len();
            mismatches += usize::from(!same);
            checked += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{checked} sequence/architecture pairs, {mismatches} not bit-identical"),
    )
}

// -------------------------------------------------------------- 4. physics

/// Holds, then loosens below the holding command so the object slips.
fn command_at(tick: usize, hold: u8) -> u8 {
    if tick < 30 {
        hold
    } else {
        hold.saturating_sub(4)
    }
}

fn run_plant(plant: &Plant, ticks: usize, fine: usize) -> SimState {
    let hold = plant.holding_command(90.0).unwrap_or(MAX_COMMAND);
    let mut s = plant.initial_state(90.0, hold);
    let dt = TICK / fine as f64;
    for k in 0..ticks {
        for _ in 0..fine {
            s = plant.step(&s, command_at(k, hold), dt).unwrap();
        }
    }
    s
}

fn criterion_4() -> Outcome {
    let mut worst_a: f64 = 0.0;
    let mut worst_w: f64 = 0.0;
    let mut moved = 0;
    let mut worst_drift: f64 = 0.0;
    let mut rises = 0;
    for object in catalog() {
        for approach in [0.0, 30.0] {
            let plant = Plant::new(object.clone(), GripperModel::default()).with_approach(approach);
            let coarse = run_plant(&plant, 180, 1);
            let reference = run_plant(&plant, 180, 100);
            worst_a = worst_a.max((coarse.alpha - reference.alpha).abs());
            worst_w = worst_w.max((coarse.omega - reference.omega).abs());
            moved += usize::from(reference.alpha > 1.0);
        }

        let free = Plant::new(object.frictionless(), GripperModel::default()).with_dynamics(DynamicsParams {
            clamp: false,
            viscous_slip: 0.0,
            ..DynamicsParams::default()
        });
        let mut s = free.initial_state(90.0, MAX_COMMAND);
        let e0 = s.mechanical_energy(&free);
        for _ in 0..1000 {
            s = free.step(&s, MAX_COMMAND, TICK).unwrap();
        }
        worst_drift = worst_drift.max((s.mechanical_energy(&free) - e0).abs() / free.gravity_gain());

        let plant = Plant::new(object.clone(), GripperModel::default());
        let hold = plant.holding_command(90.0).unwrap_or(MAX_COMMAND);
        let mut s = plant.initial_state(90.0, hold);
        let mut e = s.mechanical_energy(&plant);
        for k in 0..600 {
            s = plant.step(&s, command_at(k, hold), TICK).unwrap();
            let e1 = s.mechanical_energy(&plant);
            // Rounding allowance of 1e-12 mgr.
            rises += usize::from(e1 > e + 1e-12 * plant.gravity_gain());
            e = e1;
        }
    }
    let n = catalog().len();
    outcome(
        worst_a < 1.0 && worst_w < 5.0 && worst_drift < 1e-6 && rises == 0 && moved == 2 * n,
        format!(
            "vs dt/100: max |Δα| {worst_a:.3}°, |Δω| {worst_w:.3}°/s ({moved}/{} runs rotated); \
             frictionless drift {worst_drift:.1e}; energy rises {rises}",
            2 * n
        ),
    )
}

// ---------------------------------------------------------- 5. controller

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let scenarios = SuiteGrid::default().scenarios(0).unwrap();
    let r = closed_loop_suite(&scenarios, &|| Box::new(OracleEstimator), &SuiteConfig::default()).unwrap();
    let took = start.elapsed();
    let te = r.report.target_error.map_or(f64::INFINITY, |m| m.mean);
    let std = r.report.target_error.map_or(f64::NAN, |m| m.std);
    outcome(
        r.report.episodes >= 30 && te <= 5.0 && r.report.failure_rate == 0.0 && took < Duration::from_secs(120),
        format!(
            "{} episodes, TE {te:.2}±{std:.2}°, FR {}%; {}",
            r.report.episodes,
            r.report.failure_rate,
            secs(took)
        ),
    )
}

// ------------------------------------------------------------ 6. learning

fn nominal_plans() -> Vec<CollectionPlan> {
    vec![
        CollectionPlan::paper(Protocol::RotateToStop),
        CollectionPlan::paper(Protocol::AngleGoal),
    ]
}

/// `n` scenarios drawn from the collection plans by a seeded shuffle.
fn sampled_scenarios(seed: u64, n: usize) -> Vec<Scenario> {
    let objects: Vec<String> = catalog_names().iter().map(|s| s.to_string()).collect();
    let mut all = Vec::new();
    for plan in nominal_plans() {
        all.extend(generate_plan(&plan, &objects, seed).unwrap());
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all.truncate(n);
    all
}

fn dr_angle(params: &ModelParams, test: &[&TrajectorySequence]) -> f64 {
    evaluate_segments(params, test).unwrap().0.angle(Segment::Dr).unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let ds = collect(&sampled_scenarios(6, 260), &CollectConfig::default());
    if ds.len() < 230 {
        return outcome(false, format!("only {} sequences survived collection", ds.len()));
    }
    let train_set: Vec<Sample> = ds.sequences[..200].iter().map(|s| s.sample()).collect();
    let test: Vec<&TrajectorySequence> = ds.sequences[200..].iter().collect();
    let cfg = TrainConfig {
        epochs: 30,
        seed: 6,
        ..TrainConfig::default()
    };

    let lstm = Hyper::toy(Architecture::Lstm);
    let mut untrained = ModelParams::init(Architecture::Lstm, lstm.clone(), 6).unwrap();
    untrained.input_norm = InputNorm::fit(
        lstm.input_size,
        train_set.iter().flat_map(|s| s.frames.iter().map(Vec::as_slice)),
    )
    .unwrap();
    let before = dr_angle(&untrained, &test);
    let (trained, _) = train(Architecture::Lstm, lstm, &train_set, &[], &cfg).unwrap();
    let after = dr_angle(&trained, &test);
    let (mlp, _) = train(Architecture::Mlp, Hyper::toy(Architecture::Mlp), &train_set, &[], &cfg).unwrap();
    let baseline = dr_angle(&mlp, &test);
    let took = start.elapsed();
    outcome(
        after < 0.5 * before && after < baseline && took < Duration::from_secs(600),
        format!(
            "DR angle MAE on {} held-out sequences: untrained {before:.2}°, LSTM-32 {after:.2}°, \
             MLP window-15 {baseline:.2}°; {}",
            test.len(),
            secs(took)
        ),
    )
}

// ------------------------------------------------------ 7. controller logic

fn criterion_7() -> Outcome {
    let mut failures = Vec::new();

    let predictions = [
        ((0.0, 0.0, 0.83), 0.0),
        ((10.0, 20.0, 0.5), 20.0),
        ((30.0, -10.0, 1.0), 20.0),
        ((45.0, 0.0, 0.83), 45.0),
        ((12.5, 40.0, 0.25), 22.5),
        ((-4.0, 8.0, 0.5), 0.0),
        ((90.0, 100.0, 0.0), 90.0),
    ];
    for ((a, w, d), want) in predictions {
        if forward_predict(a, w, d) != want {
            failures.push(format!("forward_predict({a}, {w}, {d})"));
        }
    }

    let cfg = ControllerConfig {
        eps_alpha: 1.0,
        omega_min: 20.0,
        t_wait: 0.75,
        d: 0.5,
        open_step: 2,
    };
    let running = |cmd: u8, t_prev: f64| ControllerState {
        goal: 45.0,
        t_prev,
        current_cmd: cmd,
        phase: Phase::Running,
    };
    // (state, (alpha, omega), t_now, expected command, expected cmd after, expected t_prev after, expected phase)
    #[rustfmt::skip]
    let cases: Vec<(&str, ControllerState, (f64, f64), f64, GripCommand, u8, f64, Phase)> = vec![
        ("on target at rest closes", running(120, 0.0), (45.0, 0.0), 2.0, GripCommand::Close, MAX_COMMAND, 0.0, Phase::Closing),
        ("prediction lands on goal while moving", running(120, 0.0), (35.0, 20.0), 0.1, GripCommand::Close, MAX_COMMAND, 0.0, Phase::Closing),
        ("error exactly eps closes", running(120, 0.0), (44.0, 0.0), 0.1, GripCommand::Close, MAX_COMMAND, 0.0, Phase::Closing),
        ("error just above eps does not close", running(120, 0.0), (43.5, 0.0), 0.5, GripCommand::Hold, 120, 0.0, Phase::Running),
        ("close has priority over opening", running(120, 0.0), (45.5, 0.0), 5.0, GripCommand::Close, MAX_COMMAND, 0.0, Phase::Closing),
        ("stalled after wait opens", running(120, 0.0), (10.0, 0.0), 1.0, GripCommand::Open(118), 118, 1.0, Phase::Running),
        ("stalled, wait exactly t_wait holds", running(120, 0.25), (10.0, 0.0), 1.0, GripCommand::Hold, 120, 0.25, Phase::Running),
        ("stalled within wait holds", running(120, 0.5), (10.0, 5.0), 1.0, GripCommand::Hold, 120, 0.5, Phase::Running),
        ("omega exactly omega_min holds", running(120, 0.0), (10.0, 20.0), 2.0, GripCommand::Hold, 120, 0.0, Phase::Running),
        ("moving fast holds", running(120, 0.0), (10.0, 50.0), 2.0, GripCommand::Hold, 120, 0.0, Phase::Running),
        ("slow creep below omega_min opens", running(120, 0.0), (10.0, 19.0), 2.0, GripCommand::Open(118), 118, 2.0, Phase::Running),
        ("negative omega counts as stalled", running(120, 0.0), (10.0, -30.0), 2.0, GripCommand::Open(118), 118, 2.0, Phase::Running),
        ("overshoot while stalled still opens", running(120, 0.0), (60.0, 0.0), 2.0, GripCommand::Open(118), 118, 2.0, Phase::Running),
        ("open saturates at zero", running(1, 0.0), (10.0, 0.0), 2.0, GripCommand::Open(0), 0, 2.0, Phase::Running),
        ("closing phase holds", ControllerState { phase: Phase::Closing, ..running(MAX_COMMAND, 0.0) }, (45.0, 0.0), 9.0, GripCommand::Hold, MAX_COMMAND, 0.0, Phase::Closing),
        ("done phase holds", ControllerState { phase: Phase::Done, ..running(MAX_COMMAND, 0.0) }, (10.0, 0.0), 9.0, GripCommand::Hold, MAX_COMMAND, 0.0, Phase::Done),
        ("failed phase holds", ControllerState { phase: Phase::Failed, ..running(90, 0.0) }, (10.0, 0.0), 9.0, GripCommand::Hold, 90, 0.0, Phase::Failed),
    ];
    for (name, state, est, t, cmd, next_cmd, t_prev, phase) in &cases {
        let (next, got) = control_step(state, *est, *t, &cfg);
        let ok = got == *cmd
            && next.current_cmd == *next_cmd
            && next.t_prev == *t_prev
            && next.phase == *phase
            && next.goal == state.goal;
        if !ok {
            failures.push(format!("{name}: got {got:?} {next:?}"));
        }
    }
    if ControllerState::new(0.0, 100, 0.0).is_ok() || ControllerState::new(180.5, 100, 0.0).is_ok() {
        failures.push("goal outside (0, 180] accepted".into());
    }
    if ControllerState::new(180.0, 100, 0.0).is_err() {
        failures.push("goal 180 rejected".into());
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} prediction and {} branch cases{}",
            predictions.len(),
            cases.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failures.join("; "))
            }
        ),
    )
}

// --------------------------------------------------------- 8. segmentation

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let hold = SEGMENT_HOLD;
    let mut worst_is = 0usize;
    let mut worst_dr = 0usize;
    let mut worst_mae: f64 = 0.0;
    for _ in 0..100 {
        let (a, b, c) = (
            rng.random_range(0..60),
            rng.random_range(hold..150),
            rng.random_range(hold..80),
        );
        let len = a + b + c;
        let mut omega: Vec<f64> = (0..len)
            .map(|k| {
                if (a..a + b).contains(&k) {
                    rng.random_range(SEGMENT_THRESHOLD + 0.5..200.0) * if rng.random_bool(0.1) { -1.0 } else { 1.0 }
                } else {
                    rng.random_range(-SEGMENT_THRESHOLD..SEGMENT_THRESHOLD)
                }
            })
            .collect();
        // Blips shorter than the hold window inside the still phases.
        for range in [0..a, a + b..len] {
            if range.len() > hold + 2 {
                let k = rng.random_range(range.start + 1..range.end - hold);
                for w in omega.iter_mut().skip(k).take(hold - 1) {
                    *w = 50.0;
                }
            }
        }
        let bounds = segment(&omega, SEGMENT_THRESHOLD, hold);
        worst_is = worst_is.max(bounds.is_end.abs_diff(a));
        worst_dr = worst_dr.max(bounds.dr_end.abs_diff(a + b));

        let gt_a: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..90.0)).collect();
        let pred_a: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..90.0)).collect();
        let pred_w: Vec<f64> = (0..len).map(|_| rng.random_range(-100.0..100.0)).collect();
        let mae = mae_by_segment(&pred_a, &pred_w, &gt_a, &omega, &bounds).unwrap();
        worst_mae = worst_mae.max(brute_force_gap(&mae, &pred_a, &pred_w, &gt_a, &omega, &bounds));
    }
    outcome(
        worst_is <= hold && worst_dr <= hold && worst_mae <= 1e-12,
        format!(
            "100 trajectories: max boundary offset IS {worst_is}, DR {worst_dr} ticks (hold {hold}); \
             max MAE gap {worst_mae:.1e}"
        ),
    )
}

fn brute_force_gap(
    mae: &pivot_core::eval::SegmentMae,
    pa: &[f64],
    pw: &[f64],
    ga: &[f64],
    gw: &[f64],
    bounds: &SegmentBounds,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (idx, s) in Segment::ALL.into_iter().enumerate() {
        let ticks: Vec<usize> = (0..ga.len())
            .filter(|&k| match idx {
                0 => k < bounds.is_end,
                1 => k >= bounds.is_end && k < bounds.dr_end,
                _ => k >= bounds.dr_end,
            })
            .collect();
        if ticks.is_empty() {
            if mae.angle(s).is_some() || mae.velocity(s).is_some() {
                return f64::INFINITY;
            }
            continue;
        }
        let n = ticks.len() as f64;
        let a = ticks.iter().map(|&k| (pa[k] - ga[k]).abs()).sum::<f64>() / n;
        let w = ticks.iter().map(|&k| (pw[k] - gw[k]).abs()).sum::<f64>() / n;
        worst = worst
            .max((mae.angle(s).unwrap_or(f64::NAN) - a).abs())
            .max((mae.velocity(s).unwrap_or(f64::NAN) - w).abs());
    }
    if worst.is_nan() {
        f64::INFINITY
    } else {
        worst
    }
}

// -------------------------------------------------------------- 9. filters

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut notes = Vec::new();
    let mut pass = true;
    for window in [3usize, 5, 9, 15] {
        // Exact lattice: sample values are multiples of every truncated
        // window's weight sum, so no step of the computation rounds.
        let n = 64;
        let weights: Vec<u64> = (1..=window as u64 / 2 + 1)
            .chain((1..=window as u64 / 2).rev())
            .collect();
        let half = window / 2;
        let mut lcm = 1u64;
        for i in 0..n {
            let lo = half.saturating_sub(i);
            let hi = window.min(half + n - i);
            let s: u64 = weights[lo..hi].iter().sum();
            lcm = lcm / gcd(lcm, s) * s;
        }
        // Largest intermediate must stay inside the 53-bit mantissa.
        assert!(
            lcm * 100 * 5 * weights.iter().sum::<u64>() < 1 << 53,
            "lattice too coarse for w{window}"
        );
        let x: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(-50i64..50) * lcm as i64) as f64)
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(-50i64..50) * lcm as i64) as f64)
            .collect();
        let (a, b) = (3.0, -2.0);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let sx = triangular_smooth(&x, window).unwrap();
        let sy = triangular_smooth(&y, window).unwrap();
        let sc = triangular_smooth(&combo, window).unwrap();
        let exact = sc.iter().zip(sx.iter().zip(&sy)).all(|(c, (p, q))| *c == a * p + b * q);

        // Real-valued inputs: power-of-two scaling is exact, sums agree to rounding.
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let su = triangular_smooth(&u, window).unwrap();
        let sv = triangular_smooth(&v, window).unwrap();
        let scaled = triangular_smooth(&u.iter().map(|p| 0.25 * p).collect::<Vec<_>>(), window).unwrap();
        let homogeneous = scaled.iter().zip(&su).all(|(p, q)| *p == 0.25 * q);
        let sum = triangular_smooth(&u.iter().zip(&v).map(|(p, q)| p + q).collect::<Vec<_>>(), window).unwrap();
        let additive_gap = sum
            .iter()
            .zip(su.iter().zip(&sv))
            .fold(0f64, |m, (s, (p, q))| m.max((s - p - q).abs()));

        let constant_ok = [0.1, -7.3, 1e6 / 3.0, 0.0]
            .iter()
            .all(|&c| triangular_smooth(&vec![c; 40], window).unwrap().iter().all(|v| *v == c));

        // Sinusoid: cross-correlation with the input peaks at lag 0.
        let period = rng.random_range(30.0..120.0);
        let phase = rng.random_range(0.0..6.0);
        let s: Vec<f64> = (0..720)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / period + phase).sin())
            .collect();
        let ss = triangular_smooth(&s, window).unwrap();
        let xcorr = |lag: isize| -> f64 { (60..660).map(|k| s[k] * ss[(k as isize + lag) as usize]).sum::<f64>() };
        let peak = (-20..=20).max_by(|p, q| xcorr(*p).total_cmp(&xcorr(*q))).unwrap();

        let ok = exact && homogeneous && additive_gap < 1e-14 && constant_ok && peak == 0;
        pass &= ok;
        notes.push(format!(
            "w{window}: lattice-exact {exact}, scale-exact {homogeneous}, add gap {additive_gap:.0e}, \
             const {constant_ok}, lag {peak}"
        ));
    }
    outcome(pass, notes.join("; "))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

// ---------------------------------------------------------- 10. round-trips

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
        .install(f)
}

/// Collection, training and a closed-loop suite, all written to `dir`.
fn pipeline(dir: &Path) {
    let scenarios = sampled_scenarios(10, 24);
    let ds = collect(&scenarios, &CollectConfig::default());
    dataset::save(&ds, &dir.join("dataset")).unwrap();
    let samples: Vec<Sample> = ds.sequences.iter().map(|s| s.sample()).collect();
    let cfg = TrainConfig {
        epochs: 2,
        seed: 10,
        ..TrainConfig::default()
    };
    let (params, history) = train(
        Architecture::Gru,
        Hyper::toy(Architecture::Gru),
        &samples,
        &samples,
        &cfg,
    )
    .unwrap();
    save_checkpoint(&params, &dir.join("checkpoint")).unwrap();
    fs::write(dir.join("history.csv"), history.to_csv()).unwrap();
    let grid = SuiteGrid {
        objects: vec!["Earbud".into(), "Shampoo".into()],
        ..SuiteGrid::default()
    };
    let r = closed_loop_suite(
        &grid.scenarios(10).unwrap(),
        &|| Box::new(StreamingEstimator::new(params.clone())),
        &SuiteConfig::default(),
    )
    .unwrap();
    episode_table(&r.episodes)
        .unwrap()
        .write(&dir.join("episodes.csv"))
        .unwrap();
    r.report.table("gru").unwrap().write(&dir.join("summary.csv")).unwrap();
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();

    let ds: Dataset = collect(&sampled_scenarios(11, 12), &CollectConfig::default());
    dataset::save(&ds, &tmp.path().join("ds")).unwrap();
    let loaded = dataset::load(&tmp.path().join("ds")).unwrap();
    let dataset_ok = loaded == ds && !ds.is_empty();
    notes.push(format!("dataset ({} seqs) deep-equal {dataset_ok}", ds.len()));

    let mut checkpoint_ok = true;
    for arch in Architecture::ALL {
        let mut params = ModelParams::init(arch, Hyper::toy(arch), 12).unwrap();
        let samples: Vec<Sample> = ds.sequences.iter().map(|s| s.sample()).collect();
        params.input_norm = InputNorm::fit(
            params.hyper.input_size,
            samples.iter().flat_map(|s| s.frames.iter().map(Vec::as_slice)),
        )
        .unwrap();
        let dir = tmp.path().join(format!("ckpt-{}", arch.as_str()));
        save_checkpoint(&params, &dir).unwrap();
        let back = load_checkpoint(&dir).unwrap();
        let bits = |p: &ModelParams| -> Vec<u64> {
            p.tensors
                .iter()
                .flat_map(|t| t.data.iter())
                .chain(&p.input_norm.mean)
                .chain(&p.input_norm.scale)
                .map(|v| v.to_bits())
                .collect()
        };
        checkpoint_ok &= bits(&back) == bits(&params) && back.hyper == params.hyper && back.arch == params.arch;
    }
    notes.push(format!("checkpoints bit-exact {checkpoint_ok}"));

    let one = tmp.path().join("jobs1");
    let four = tmp.path().join("jobs4");
    let again = tmp.path().join("jobs1-again");
    with_threads(1, || pipeline(&one));
    with_threads(4, || pipeline(&four));
    with_threads(1, || pipeline(&again));
    let (a, b, c) = (dir_bytes(&one), dir_bytes(&four), dir_bytes(&again));
    let runs_ok = !a.is_empty() && a == b && a == c;
    notes.push(format!(
        "{} pipeline files identical across 1/4 threads and reruns {runs_ok}",
        a.len()
    ));

    outcome(dataset_ok && checkpoint_ok && runs_ok, notes.join("; "))
}

// ----------------------------------------------------------- 11. fine-tune

fn criterion_11() -> Outcome {
    let start = Instant::now();
    let objects: Vec<String> = catalog_names().iter().map(|s| s.to_string()).collect();
    let mut before = Vec::new();
    let mut after = Vec::new();
    let mut notes = Vec::new();
    for seed in 1..=3u64 {
        let rts = CollectionPlan {
            approach_angles: vec![-30.0, 0.0, 30.0],
            perturb_angles: vec![0.0, 30.0],
            ..CollectionPlan::paper(Protocol::RotateToStop)
        };
        let ag = CollectionPlan {
            approach_angles: vec![-15.0, 0.0],
            perturb_angles: vec![0.0, 45.0],
            repeats: 1,
            ..CollectionPlan::paper(Protocol::AngleGoal)
        };
        let mut scenarios = generate_plan(&rts, &objects, seed).unwrap();
        scenarios.extend(generate_plan(&ag, &objects, seed).unwrap());
        let ds = collect(&scenarios, &CollectConfig::default());
        let samples: Vec<Sample> = ds.sequences.iter().map(|s| s.sample()).collect();
        let cfg = TrainConfig {
            epochs: 30,
            seed,
            ..TrainConfig::default()
        };
        let (base, _) = train(Architecture::Lstm, Hyper::toy(Architecture::Lstm), &samples, &[], &cfg).unwrap();

        let grid = SuiteGrid::default();
        let evaluation = grid.scenarios(seed).unwrap();
        let collection = grid.scenarios(pivot_core::rng::derive(seed, "collection", 0)).unwrap();
        let ft = FinetuneConfig {
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            ..FinetuneConfig::default()
        };
        let r = finetune_experiment(&base, &[], &collection, &evaluation, &ft).unwrap();
        let te = |m: &pivot_core::eval::MetricsReport| m.target_error.map_or(f64::INFINITY, |x| x.mean);
        before.push(te(&r.before));
        after.push(te(&r.after));
        notes.push(format!(
            "seed {seed}: TE {:.2}→{:.2}° FR {:.0}→{:.0}%",
            te(&r.before),
            te(&r.after),
            r.before.failure_rate,
            r.after.failure_rate
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (b, a) = (mean(&before), mean(&after));
    outcome(
        a <= b,
        format!(
            "mean TE before {b:.2}°, after {a:.2}° ({}); {}",
            notes.join(", "),
            secs(start.elapsed())
        ),
    )
}

fn main() {
    // `cargo test -- <filter>` style selection by criterion number.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("Kalman oracle equivalence", criterion_1),
        ("gradient checks", criterion_2),
        ("streaming equivalence", criterion_3),
        ("physics validity", criterion_4),
        ("oracle controller suite", criterion_5),
        ("learning smoke test", criterion_6),
        ("forward prediction and controller logic", criterion_7),
        ("segmentation and metrics", criterion_8),
        ("filters", criterion_9),
        ("round-trips and determinism", criterion_10),
        ("fine-tuning direction", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {id:>2} {}: {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
        failed += usize::from(!result.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
