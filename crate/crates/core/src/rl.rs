//! Epsilon-greedy Q-learning baseline, with a tabular variant over a coarse
//! counter discretization and a network variant over the policy features.
//! The network variant updates online from each transition; it keeps no
//! replay memory and no target network.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config_space::{ConfigSpace, Configuration};
use crate::error::{Error, Result};
use crate::metrics::DecisionRecord;
use crate::models::{FeatureBuilder, Normalizer};
use crate::nn::{self, Adam, Grads, Mlp};
use crate::policy::{raw_features, FEATURE_NAMES};
use crate::rng::rng_from;
use crate::workload::{CounterVector, Plant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardContext {
    /// Power at the minimum configuration for this epoch.
    pub p_min: f64,
    /// Time at the maximum configuration for this epoch.
    pub t_min: f64,
}

/// `-(P * t^beta) / (P_min * t_min^beta)`.
pub fn reward(p: f64, t: f64, ctx: &RewardContext, beta: f64) -> Result<f64> {
    if !(p > 0.0 && t > 0.0 && ctx.p_min > 0.0 && ctx.t_min > 0.0) {
        return Err(Error::domain("reward inputs must be positive"));
    }
    Ok(-(p / ctx.p_min) * (t / ctx.t_min).powf(beta))
}

#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Bin(usize),
    Features(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub bins: usize,
    pub ipc_range: (f64, f64),
    pub mem_range: (f64, f64),
}

impl Default for Discretizer {
    fn default() -> Self {
        Discretizer { bins: 8, ipc_range: (1.7, 2.55), mem_range: (0.2, 0.5) }
    }
}

impl Discretizer {
    fn bin(&self, v: f64, (lo, hi): (f64, f64)) -> usize {
        let x = ((v - lo) / (hi - lo) * self.bins as f64).floor();
        x.clamp(0.0, (self.bins - 1) as f64) as usize
    }

    /// State index from instructions per cycle and memory accesses per instruction.
    pub fn state(&self, h: &CounterVector) -> usize {
        let inst = h.instructions_retired.max(1.0);
        let ipc = h.instructions_retired / h.cpu_cycles.max(1.0);
        let mem = h.data_memory_accesses / inst;
        self.bin(ipc, self.ipc_range) * self.bins + self.bin(mem, self.mem_range)
    }

    pub fn n_states(&self) -> usize {
        self.bins * self.bins
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
pub enum QStore {
    Table { disc: Discretizer, q: Vec<f64> },
    Network { net: Mlp, opt: Adam, norm: Normalizer, features: FeatureBuilder },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            alpha: 0.1,
            gamma: 0.9,
            epsilon: 0.1,
            epsilon_decay: 0.995,
            epsilon_floor: 0.01,
            beta: 1.0,
            learning_rate: 1e-3,
            hidden: vec![20, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLearner {
    pub cfg: RlConfig,
    pub epsilon: f64,
    pub n_actions: usize,
    pub store: QStore,
}

impl QLearner {
    pub fn table(cfg: RlConfig, n_actions: usize, disc: Discretizer) -> Result<Self> {
        validate(&cfg)?;
        let q = vec![0.0; disc.n_states() * n_actions];
        Ok(QLearner { epsilon: cfg.epsilon, cfg, n_actions, store: QStore::Table { disc, q } })
    }

    /// Network variant; `norm` holds the feature statistics the inputs are
    /// z-scored with.
    pub fn network(cfg: RlConfig, n_actions: usize, norm: Normalizer, features: FeatureBuilder, seed: u64) -> Result<Self> {
        validate(&cfg)?;
        let mut sizes = vec![FEATURE_NAMES.len()];
        sizes.extend(&cfg.hidden);
        sizes.push(n_actions);
        let mut rng = rng_from(seed, 0xd9);
        let net = Mlp::new(&sizes, &mut rng);
        let opt = Adam::new(cfg.learning_rate, net.n_params());
        Ok(QLearner { epsilon: cfg.epsilon, cfg, n_actions, store: QStore::Network { net, opt, norm, features } })
    }

    pub fn state(&self, h: &CounterVector, observed_at: &Configuration) -> State {
        match &self.store {
            QStore::Table { disc, .. } => State::Bin(disc.state(h)),
            QStore::Network { norm, features, .. } => {
                let mut z = norm.apply(&raw_features(h, observed_at, features));
                z.pop();
                State::Features(z)
            }
        }
    }

    pub fn q_values(&self, s: &State) -> Vec<f64> {
        match (&self.store, s) {
            (QStore::Table { q, .. }, State::Bin(i)) => q[i * self.n_actions..(i + 1) * self.n_actions].to_vec(),
            (QStore::Network { net, .. }, State::Features(z)) => net.forward(z),
            _ => panic!("state kind does not match the Q store"),
        }
    }

    pub fn greedy(&self, s: &State) -> usize {
        nn::argmax(&self.q_values(s))
    }

    pub fn decay_epsilon(&mut self) {
        self.epsilon = (self.epsilon * self.cfg.epsilon_decay).max(self.cfg.epsilon_floor);
    }
}

fn validate(cfg: &RlConfig) -> Result<()> {
    let ok = cfg.alpha >= 0.0
        && cfg.alpha <= 1.0
        && (0.0..1.0).contains(&cfg.gamma)
        && (0.0..=1.0).contains(&cfg.epsilon)
        && (0.0..=1.0).contains(&cfg.epsilon_floor);
    if ok {
        Ok(())
    } else {
        Err(Error::domain("alpha must be in [0,1], gamma in [0,1), epsilon in [0,1]"))
    }
}

/// `Q(s,a) <- (1-alpha) Q(s,a) + alpha (R + gamma max Q(s',.))` for the
/// table; one Adam step on the squared error to `R + gamma max Q(s',.)` for
/// the network.
pub fn q_update(q: &mut QLearner, s: &State, action: usize, r: f64, next: &State, alpha: f64, gamma: f64) {
    let best_next = q.q_values(next).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = q.n_actions;
    match (&mut q.store, s) {
        (QStore::Table { q: table, .. }, State::Bin(i)) => {
            let cell = &mut table[i * n + action];
            *cell = (1.0 - alpha) * *cell + alpha * (r + gamma * best_next);
        }
        (QStore::Network { net, opt, .. }, State::Features(z)) => {
            let target = r + gamma * best_next;
            let mut g = Grads::zeros_like(net);
            net.accumulate(z, &mut g, |out| nn::squared_error_at(out, action, target));
            opt.apply(net, &g);
        }
        _ => panic!("state kind does not match the Q store"),
    }
}

/// Uniform random action with probability `epsilon`, greedy otherwise.
pub fn select_action(q: &QLearner, s: &State, epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.n_actions)
    } else {
        q.greedy(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlLogRow {
    pub epoch_id: usize,
    pub state_repr: String,
    pub action_index: usize,
    pub reward: f64,
    pub epsilon: f64,
}

pub const RL_LOG_HEADER: &str = "epoch_id,state_repr,action_index,reward,epsilon";

pub fn rl_log_csv(rows: &[RlLogRow]) -> String {
    let mut s = String::from(RL_LOG_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.epoch_id, r.state_repr, r.action_index, r.reward, r.epsilon);
    }
    s
}

#[derive(Debug, Clone, Default)]
pub struct RlRun {
    pub log: Vec<RlLogRow>,
    pub decisions: Vec<DecisionRecord>,
}

/// One pass of the control loop over a workload. Epoch k runs at the action
/// chosen after epoch k-1 (the minimum configuration for the first epoch);
/// its reward updates the value of that action in the previous state. The
/// recorded decision for epoch k is the greedy action in epoch k's state.
/// Reward context queries at the minimum and maximum configurations are the
/// only plant reads besides the applied configuration.
pub fn run_rl_control(
    plant: &dyn Plant,
    learner: &mut QLearner,
    space: &ConfigSpace,
    rng: &mut ChaCha8Rng,
    epoch_offset: usize,
) -> Result<RlRun> {
    let mut run = RlRun::default();
    let mut applied = space.min_config();
    let mut prev: Option<(State, usize)> = None;
    for k in 0..plant.n_epochs() {
        let obs = plant.execute(k, &applied)?;
        let ctx = RewardContext {
            p_min: plant.execute(k, &space.min_config())?.power,
            t_min: plant.execute(k, &space.max_config())?.exec_time,
        };
        let r = reward(obs.power, obs.exec_time, &ctx, learner.cfg.beta)?;
        let s = learner.state(&obs.counters, &applied);
        let applied_index = space.index_of(&applied)?;
        if let Some((ps, pa)) = prev.take() {
            let (alpha, gamma) = (learner.cfg.alpha, learner.cfg.gamma);
            q_update(learner, &ps, pa, r, &s, alpha, gamma);
        }
        let greedy = learner.greedy(&s);
        let eps = learner.epsilon;
        let next = select_action(learner, &s, eps, rng);
        run.log.push(RlLogRow {
            epoch_id: epoch_offset + k,
            state_repr: state_repr(&s, &obs.counters),
            action_index: applied_index,
            reward: r,
            epsilon: eps,
        });
        let (wname, wepoch) = plant.locate(k);
        run.decisions.push(DecisionRecord {
            epoch_id: epoch_offset + k,
            workload: wname.to_string(),
            workload_epoch: wepoch,
            applied,
            decision: space.from_index(greedy),
            power: obs.power,
            time: obs.exec_time,
            oracle_evaluations: 0,
            model_updates: 0,
            retrained: false,
        });
        learner.decay_epsilon();
        prev = Some((s, next));
        applied = space.from_index(next);
    }
    Ok(run)
}

fn state_repr(s: &State, h: &CounterVector) -> String {
    match s {
        State::Bin(i) => format!("bin{i}"),
        State::Features(_) => {
            let inst = h.instructions_retired.max(1.0);
            format!("ipc={:.4};mpi={:.4}", h.instructions_retired / h.cpu_cycles.max(1.0), h.data_memory_accesses / inst)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{generate_workload, EpochObservation, TraceWorkload};
    use rand::SeedableRng;

    #[test]
    fn reward_hand_values() {
        let ctx = RewardContext { p_min: 2.0, t_min: 0.5 };
        assert_eq!(reward(2.0, 0.5, &ctx, 1.0).unwrap(), -1.0);
        assert_eq!(reward(2.0, 0.5, &ctx, 0.37).unwrap(), -1.0);
        assert!((reward(4.0, 0.75, &ctx, 1.0).unwrap() + 3.0).abs() < 1e-12);
        assert!((reward(3.0, 7.0, &ctx, 0.0).unwrap() + 1.5).abs() < 1e-12);
        assert!(reward(0.0, 1.0, &ctx, 1.0).is_err());
    }

    #[test]
    fn table_update_hand_values() {
        let mut q = QLearner::table(RlConfig::default(), 2, Discretizer { bins: 1, ..Default::default() }).unwrap();
        let s = State::Bin(0);
        if let QStore::Table { q: t, .. } = &mut q.store {
            t[0] = 1.0;
            t[1] = 1.0;
        }
        let before = q.clone();
        q_update(&mut q, &s, 0, -2.0, &s, 0.0, 0.9);
        assert_eq!(q, before);
        q_update(&mut q, &s, 0, -2.0, &s, 0.5, 0.9);
        assert!((q.q_values(&s)[0] + 0.05).abs() < 1e-12);
        q_update(&mut q, &s, 1, 0.7, &s, 1.0, 0.0);
        assert_eq!(q.q_values(&s)[1], 0.7);
    }

    #[test]
    fn epsilon_extremes() {
        let q = QLearner::table(RlConfig::default(), 640, Discretizer::default()).unwrap();
        let s = State::Bin(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| select_action(&q, &s, 0.0, &mut rng) == 0));
        let mut counts = vec![0usize; 640];
        for _ in 0..10_000 {
            counts[select_action(&q, &s, 1.0, &mut rng)] += 1;
        }
        let expected = 10_000.0 / 640.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 639 degrees of freedom; the 0.999 quantile is about 760.
        assert!(chi2 < 760.0, "{chi2}");
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<_> = (0..50).map(|_| select_action(&q, &s, 0.5, &mut a)).collect();
        let ys: Vec<_> = (0..50).map(|_| select_action(&q, &s, 0.5, &mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn constant_shift_keeps_greedy_choice() {
        let mut q = QLearner::table(RlConfig::default(), 5, Discretizer { bins: 1, ..Default::default() }).unwrap();
        if let QStore::Table { q: t, .. } = &mut q.store {
            t.copy_from_slice(&[0.1, 0.9, -0.3, 0.9, 0.2]);
        }
        let s = State::Bin(0);
        let g = q.greedy(&s);
        if let QStore::Table { q: t, .. } = &mut q.store {
            t.iter_mut().for_each(|v| *v += 17.5);
        }
        assert_eq!(q.greedy(&s), g);
        assert_eq!(g, 1);
    }

    #[test]
    fn epsilon_schedule() {
        let mut q = QLearner::table(RlConfig::default(), 2, Discretizer::default()).unwrap();
        q.decay_epsilon();
        assert!((q.epsilon - 0.0995).abs() < 1e-15);
        for _ in 0..2000 {
            q.decay_epsilon();
        }
        assert_eq!(q.epsilon, 0.01);
    }

    fn bandit() -> (TraceWorkload, ConfigSpace) {
        let space = ConfigSpace::new(vec![1, 2], vec![1], vec![600], vec![600]).unwrap();
        let w = generate_workload("mixed", 1, 2).unwrap();
        let base = w.execute(0, &space.min_config()).unwrap();
        let mut t = TraceWorkload::new("bandit");
        for e in 0..500 {
            t.insert(EpochObservation { epoch_id: e, config: space.from_index(0), power: 2.0, exec_time: 1.0, ..base }).unwrap();
            t.insert(EpochObservation { epoch_id: e, config: space.from_index(1), power: 2.5, exec_time: 0.6, ..base }).unwrap();
        }
        (t, space)
    }

    #[test]
    fn table_learner_finds_best_arm() {
        let (t, space) = bandit();
        let mut q = QLearner::table(RlConfig::default(), space.len(), Discretizer::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let run = run_rl_control(&t, &mut q, &space, &mut rng, 0).unwrap();
        assert_eq!(run.log.len(), 500);
        assert_eq!(run.decisions.len(), 500);
        assert_eq!(run.decisions.last().unwrap().decision, space.from_index(1));
    }

    #[test]
    fn exploration_happens_at_the_floor() {
        let (t, space) = bandit();
        let cfg = RlConfig { epsilon: 0.01, ..RlConfig::default() };
        let mut q = QLearner::table(cfg, space.len(), Discretizer::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut explored = 0;
        for pass in 0..2 {
            let run = run_rl_control(&t, &mut q, &space, &mut rng, pass * 500).unwrap();
            let greedy_then: Vec<_> = run.decisions.iter().map(|d| space.index_of(&d.decision).unwrap()).collect();
            explored += run.log.iter().skip(1).zip(&greedy_then).filter(|(l, g)| l.action_index != **g).count();
        }
        assert!(explored >= 1);
    }

    #[test]
    fn log_csv_layout() {
        let rows = [RlLogRow { epoch_id: 4, state_repr: "bin7".into(), action_index: 12, reward: -1.5, epsilon: 0.1 }];
        assert_eq!(rl_log_csv(&rows), format!("{RL_LOG_HEADER}\n4,bin7,12,-1.5,0.1\n"));
    }
}
