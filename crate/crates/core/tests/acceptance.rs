//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! values and runtime. Exits non-zero on any FAIL only when
//! `ACCEPTANCE_STRICT=1` is set.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dvfsil::harness::{cmd_characterize, cmd_report, cmd_simulate, cmd_train_offline, Checkpoints, ExperimentSpec, Layout, SimulationOutput, TrainReport};
use dvfsil::metrics::{knob_accuracy, AccuracyReport};
use dvfsil::models::{LinearModel, Models, Normalizer};
use dvfsil::nn::{cross_entropy, squared_error_at, Grads, Mlp};
use dvfsil::oracle::{estimated_cost, online_oracle, DEFAULT_BUDGET};
use dvfsil::rl::{q_update, reward, Discretizer, QLearner, QStore, RewardContext, RlConfig, State};
use dvfsil::workload::{Plant, Workload};
use dvfsil::ConfigSpace;

const SPEC: &str = include_str!("../../../experiments/default.toml");

struct Line {
    id: usize,
    pass: bool,
    what: &'static str,
    detail: String,
    secs: f64,
    limit: f64,
}

fn check(id: usize, what: &'static str, limit: f64, f: impl FnOnce() -> (bool, String)) -> Line {
    let t0 = Instant::now();
    let (ok, detail) = f();
    let secs = t0.elapsed().as_secs_f64();
    Line { id, pass: ok && secs < limit, what, detail, secs, limit }
}

fn r2(v: [f64; 4]) -> String {
    format!("[{:.2}, {:.2}, {:.2}, {:.2}]", v[0], v[1], v[2], v[3])
}

fn c1() -> (bool, String) {
    let hand = [(5, 2, 2, 100.0), (8, 0, 7, 0.0), (5, 2, 3, 75.0)];
    let mut ok = hand.iter().all(|&(l, a, b, want)| (knob_accuracy(l, a, b).unwrap() - want).abs() <= 1e-9);
    for l in 2..=12 {
        for a in 0..l {
            for b in 0..l {
                let x = knob_accuracy(l, a, b).unwrap();
                ok &= x == knob_accuracy(l, b, a).unwrap();
                ok &= (0.0..=100.0).contains(&x);
                ok &= (x == 100.0) == (a == b);
            }
        }
    }
    ok &= knob_accuracy(1, 0, 0).is_err();
    (ok, "hand values 100/0/75, symmetry and range over L=2..12".into())
}

fn c2() -> (bool, String) {
    let ctx = RewardContext { p_min: 1.7, t_min: 0.3 };
    let r1 = reward(3.4, 0.45, &ctx, 1.0).unwrap();
    let r0 = reward(3.4, 0.45, &ctx, 0.0).unwrap();
    let mut ok = (r1 + 3.0).abs() <= 1e-12 && (r0 + 2.0).abs() <= 1e-12;
    for beta in [0.0, 0.37, 1.0, 2.0] {
        ok &= reward(ctx.p_min, ctx.t_min, &ctx, beta).unwrap() == -1.0;
    }
    // One state with Q = 1 for the chosen action, a next state whose best
    // value is 1, reward -2.
    let updated = |alpha: f64, gamma: f64| {
        let mut q = QLearner::table(RlConfig::default(), 2, Discretizer::default()).unwrap();
        if let QStore::Table { q: t, .. } = &mut q.store {
            t[0] = 1.0;
            t[2] = 1.0;
            t[3] = 0.2;
        }
        q_update(&mut q, &State::Bin(0), 0, -2.0, &State::Bin(1), alpha, gamma);
        q.q_values(&State::Bin(0))[0]
    };
    let (a, b, c) = (updated(0.5, 0.9), updated(0.0, 0.9), updated(1.0, 0.0));
    ok &= (a + 0.05).abs() <= 1e-12 && b == 1.0 && (c + 2.0).abs() <= 1e-12;
    (ok, format!("R = {r1} (beta 1), {r0} (beta 0); Q updates {a:.12}, {b}, {c}"))
}

fn c3(models: &Models, eval: &[Workload]) -> (bool, String) {
    // Noiseless linear data with an effectively infinite prior.
    let d = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let truth: Vec<f64> = (0..=d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let f = |x: &[f64]| truth[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + truth[d];
    let mut m = LinearModel::with_state(vec![0.0; d + 1], Normalizer::frozen_identity(d), 1e12, 1.0);
    for _ in 0..=d {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m.rls_update(&x, f(&x)).unwrap();
    }
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max((m.predict(&x).unwrap() - f(&x)).abs());
    }

    // Regime shift: the workload's hidden dynamic-power scale jumps by 20%
    // after 20 epochs; the power error at the running configuration must be
    // below 1% from 10 epochs after the shift on.
    let space = ConfigSpace::default();
    let base = &eval[0];
    let mut shifted = base.clone();
    shifted.activity *= 1.2;
    let c = space.from_index(300);
    let run = |mut m: Models| -> f64 {
        let mut after: f64 = 0.0;
        for k in 0..base.n_epochs() {
            let o = if k < 20 { base.execute(k, &c) } else { shifted.execute(k, &c) }.unwrap();
            let p = m.predict_power_at(&o.counters, &c, &c, o.exec_time).unwrap();
            if k >= 30 {
                after = after.max((p / o.power - 1.0).abs());
            }
            m.update(&o).unwrap();
        }
        100.0 * after
    };
    let warm = run(models.clone());
    let mut default_prior = models.clone();
    default_prior.power.reset_covariance(LinearModel::DEFAULT_P0);
    default_prior.time.reset_covariance(LinearModel::DEFAULT_P0);
    let cold = run(default_prior);
    let ok = worst < 1e-6 && warm < 1.0 && cold < 1.0;
    (ok, format!("linear max err {worst:.2e}; post-shift power err {warm:.3}% (fitted prior), {cold:.3}% (P0=1e3)"))
}

fn c4(report: &TrainReport) -> (bool, String) {
    let f = report.fit.as_ref().expect("offline fit");
    let ok = f.power_error_pct <= 2.6 + 2.0 && f.cross_config_power_error_pct <= 10.0 + 2.0;
    (ok, format!("power error {:.3}%, cross-config power error {:.3}%", f.power_error_pct, f.cross_config_power_error_pct))
}

fn c5(ck: &Checkpoints, workloads: &[Workload]) -> (bool, String) {
    let space = ConfigSpace::default();
    let configs = space.enumerate();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut exact, mut ties, mut other, mut worse) = (0, 0, 0, 0);
    for _ in 0..100 {
        let w = &workloads[rng.gen_range(0..workloads.len())];
        let k = rng.gen_range(0..w.n_epochs());
        let at = configs[rng.gen_range(0..configs.len())];
        let o = w.execute(k, &at).unwrap();
        let choice = ck.policy.predict(&o.counters, &at).unwrap();
        let cost = |c| estimated_cost(&ck.models, &o.counters, &at, c, 1.0).unwrap();
        let (mut best, mut best_cost) = (configs[0], cost(&configs[0]));
        for c in &configs[1..] {
            let j = cost(c);
            if j < best_cost {
                best = *c;
                best_cost = j;
            }
        }
        let s = online_oracle(&space, &choice, &o.counters, &at, &ck.models, usize::MAX, 1.0).unwrap();
        if s.best.config == best {
            exact += 1;
        } else if (s.best.cost - best_cost).abs() <= 1e-12 * best_cost.abs() {
            ties += 1;
        } else {
            other += 1;
        }
        let b = online_oracle(&space, &choice, &o.counters, &at, &ck.models, DEFAULT_BUDGET, 1.0).unwrap();
        worse += usize::from(b.best.cost > cost(&choice));
    }
    let ok = exact >= 99 && other == 0 && worse == 0;
    (ok, format!("unlimited: {exact} exact, {ties} ties, {other} other local minima; budget {DEFAULT_BUDGET}: {worse} worse than policy"))
}

fn acc<'a>(sim: &'a SimulationOutput, name: &str) -> &'a AccuracyReport {
    &sim.accuracy.iter().find(|(n, _)| n == name).expect("controller ran").1
}

fn energy_from(sim: &SimulationOutput, name: &str, from: usize) -> f64 {
    let log = &sim.logs.iter().find(|(n, _)| n == name).expect("controller ran").1;
    log.iter().filter(|r| r.epoch_id >= from).map(|r| r.energy()).sum()
}

fn c6(report: &TrainReport, sim: &SimulationOutput) -> (bool, String) {
    let a = report.min_knob_accuracy;
    let b = acc(sim, "static-offline").per_knob_mean;
    let ok = a.iter().all(|v| *v >= 95.0) && b.iter().any(|v| *v < 90.0);
    (ok, format!("suite A min per knob {}, suite B {}", r2(a), r2(b)))
}

fn c7(sim: &SimulationOutput) -> (bool, String) {
    let n = sim.sequence.total_epochs;
    let Some(conv) = acc(sim, "online-il").convergence_epoch else {
        return (false, format!("no convergence in {n} epochs"));
    };
    let ratio = energy_from(sim, "online-il", conv) / energy_from(sim, "oracle", conv);
    let ok = n >= 400 && conv as f64 <= 0.25 * n as f64 && ratio <= 1.02;
    (ok, format!("converged at epoch {conv}/{n} ({:.1}%), post-convergence energy {ratio:.4}x oracle", 100.0 * conv as f64 / n as f64))
}

fn c8(sim: &SimulationOutput) -> (bool, String) {
    let il = acc(sim, "online-il");
    let rl = acc(sim, "rl");
    let Some(conv) = il.convergence_epoch else {
        return (false, "online-IL did not converge".into());
    };
    // First full window starting at the convergence epoch.
    let at = conv + il.window - 1;
    let (a, b) = (rl.rolling_at(at), il.rolling_at(at));
    let ratio = energy_from(sim, "rl", 0) / energy_from(sim, "oracle", 0);
    let ok = (0..4).all(|k| a[k] < b[k]) && ratio >= 1.10;
    (ok, format!("at epoch {conv}: DQN {} vs IL {}; DQN energy {ratio:.3}x oracle", r2(a), r2(b)))
}

fn c9(sim: &SimulationOutput) -> (bool, String) {
    let r = sim.retention.as_ref().expect("online-IL ran");
    let ok = r.min_after.iter().all(|v| *v >= 95.0);
    (ok, format!("suite A min per knob before {}, after {}", r2(r.min_before), r2(r.min_after)))
}

fn c10(sim: &SimulationOutput) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    let rows = &sim.workload_totals;
    for il in rows.iter().filter(|r| r.controller == "online-il") {
        let ps = rows.iter().find(|r| r.controller == "powersave" && r.workload == il.workload).expect("powersave ran");
        ok &= il.energy_j < ps.energy_j && il.time_s < ps.time_s;
        parts.push(format!("{}: E {:.3} T {:.3}", il.workload, il.energy_j / ps.energy_j, il.time_s / ps.time_s));
    }
    (ok, format!("vs powersave from epoch {}: {}", sim.workload_totals[0].from_epoch, parts.join("; ")))
}

fn c11(sim: &SimulationOutput) -> (bool, String) {
    let m = acc(sim, "models-only").final_rolling();
    let i = acc(sim, "online-il").final_rolling();
    let mean = |v: [f64; 4]| v.iter().sum::<f64>() / 4.0;
    (mean(m) < mean(i), format!("final rolling models-only {} vs online-IL {}", r2(m), r2(i)))
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c12(spec: &ExperimentSpec, first: &Path) -> (bool, String) {
    let second = tempfile::tempdir().unwrap();
    cmd_characterize(spec, second.path(), false).unwrap();
    cmd_train_offline(spec, second.path(), false).unwrap();
    cmd_simulate(spec, second.path(), false).unwrap();
    cmd_report(second.path()).unwrap();
    let mut a = files(&first.join("run"));
    let mut b = files(&second.path().join("run"));
    a.remove("timing.json");
    b.remove("timing.json");
    let same_set = a.keys().eq(b.keys());
    let differing: Vec<&String> = a.iter().filter(|(k, v)| b.get(*k) != Some(v)).map(|(k, _)| k).collect();
    let summary = std::fs::read(first.join("summary.json")).unwrap() == std::fs::read(second.path().join("summary.json")).unwrap();
    let ok = same_set && differing.is_empty() && summary;
    (ok, format!("{} run artifacts compared, {} differ, summary identical: {summary}", a.len(), differing.len()))
}

/// Gradients smaller than this are compared on absolute error: central
/// differences of losses around 10 carry roundoff near 1e-9.
const FD_FLOOR: f64 = 1e-4;

fn fd_worst(net: &Mlp, loss: impl Fn(&Mlp) -> f64, analytic: &[f64], indices: &[usize]) -> f64 {
    let base = net.flat_params();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for &i in indices {
        let mut p = base.clone();
        p[i] += h;
        let mut up = net.clone();
        up.set_flat_params(&p);
        p[i] -= 2.0 * h;
        let mut dn = net.clone();
        dn.set_flat_params(&p);
        let num = (loss(&up) - loss(&dn)) / (2.0 * h);
        worst = worst.max((num - analytic[i]).abs() / num.abs().max(analytic[i].abs()).max(FD_FLOOR));
    }
    worst
}

fn c13(ck: &Checkpoints) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut policy_worst: f64 = 0.0;
    let mut dqn_worst: f64 = 0.0;
    let dqn = match &ck.dqn.store {
        QStore::Network { net, .. } => net,
        QStore::Table { .. } => panic!("DQN checkpoint is a network"),
    };
    for _ in 0..10 {
        for head in &ck.policy.heads {
            let x: Vec<f64> = (0..head.input_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let label = rng.gen_range(0..head.output_dim());
            let mut g = Grads::zeros_like(head);
            head.accumulate(&x, &mut g, |z| cross_entropy(z, label));
            let all: Vec<usize> = (0..head.n_params()).collect();
            policy_worst = policy_worst.max(fd_worst(head, |n| cross_entropy(&n.forward(&x), label).0, &g.flat(), &all));
        }
        let x: Vec<f64> = (0..dqn.input_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let action = rng.gen_range(0..dqn.output_dim());
        let target = rng.gen_range(-3.0..0.0);
        let mut g = Grads::zeros_like(dqn);
        dqn.accumulate(&x, &mut g, |o| squared_error_at(o, action, target));
        // Every parameter feeding the chosen output, plus a sample of the rest.
        let flat = g.flat();
        let mut idx: Vec<usize> = (0..flat.len()).filter(|i| flat[*i] != 0.0).collect();
        idx.extend((0..200).map(|_| rng.gen_range(0..flat.len())));
        dqn_worst = dqn_worst.max(fd_worst(dqn, |n| squared_error_at(&n.forward(&x), action, target).0, &flat, &idx));
    }
    let ok = policy_worst <= 1e-4 && dqn_worst <= 1e-4;
    (ok, format!("worst relative error: policy heads {policy_worst:.2e}, DQN {dqn_worst:.2e}"))
}

fn main() {
    let spec = ExperimentSpec::from_toml(SPEC).expect("default spec");
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path();

    let t0 = Instant::now();
    cmd_characterize(&spec, out, false).expect("characterize");
    let report = cmd_train_offline(&spec, out, false).expect("train-offline");
    let offline_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let sim = cmd_simulate(&spec, out, false).expect("simulate");
    cmd_report(out).expect("report");
    let sim_secs = t1.elapsed().as_secs_f64();
    let ck = Checkpoints::load(&Layout::new(out)).expect("checkpoints");
    let mut workloads: Vec<Workload> = spec.training.iter().map(|w| w.generate().unwrap()).collect();
    let eval: Vec<Workload> = spec.evaluation.iter().map(|w| w.generate().unwrap()).collect();
    workloads.extend(eval.iter().cloned());

    // Pipeline time is charged to every criterion that reads its outputs.
    let with = |secs: f64, mut l: Line| {
        l.secs += secs;
        l.pass &= l.secs < l.limit;
        l
    };
    let lines = vec![
        check(1, "accuracy metric", 1.0, c1),
        check(2, "reward and Q update", 1.0, c2),
        check(3, "RLS tracking", 5.0, || c3(&ck.models, &eval)),
        with(offline_secs, check(4, "offline model calibration", 60.0, || c4(&report))),
        check(5, "online oracle equivalence", 30.0, || c5(&ck, &workloads)),
        with(offline_secs + sim_secs, check(6, "offline IL accuracy", 300.0, || c6(&report, &sim))),
        with(offline_secs + sim_secs, check(7, "online adaptation", 600.0, || c7(&sim))),
        with(offline_secs + sim_secs, check(8, "IL versus DQN", 600.0, || c8(&sim))),
        with(offline_secs + sim_secs, check(9, "training-suite retention", 120.0, || c9(&sim))),
        with(offline_secs + sim_secs, check(10, "dominance over powersave", 300.0, || c10(&sim))),
        with(offline_secs + sim_secs, check(11, "models-only gap", 300.0, || c11(&sim))),
        with(offline_secs + sim_secs, check(12, "determinism", 120.0, || c12(&spec, out))),
        check(13, "gradient checks", 30.0, || c13(&ck)),
    ];

    let mut failed = 0;
    for l in &lines {
        println!(
            "criterion {:>2}: {}  {} ({}) [{:.2}s, limit {}s]",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.what,
            l.detail,
            l.secs,
            l.limit
        );
        failed += usize::from(!l.pass);
    }
    println!("{} of {} criteria pass", lines.len() - failed, lines.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
