//! Q-learning trainer and policy evaluation.

use serde::{Deserialize, Serialize};

use crate::agent::{
    epsilon_greedy_action, AgentError, FeatureScales, MdpState, QNet, ReplayBuffer,
    TransitionRecord, STATE_DIM,
};
use crate::agent::net::{Adam, Gradients};
use crate::criticality::CriticalityConfig;
use crate::episode::{EpisodeError, SessionParams, SimSession};
use crate::region::SafetyParams;
use crate::rng::{StreamRng, STREAM_AGENT};
use crate::sim::{
    background_action, BackgroundParams, KinematicAction, RoleCaps, RuleBasedEgo, ScenarioConfig,
    VehicleId, WorldState, ACTION_COUNT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: u64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which epsilon decays linearly; defaults to half the run.
    pub epsilon_decay_episodes: Option<u64>,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub learn_rate: f64,
    pub target_sync_steps: u64,
    pub hidden_layers: Vec<usize>,
    /// Attacker re-selection cadence, s.
    pub switch_interval: f64,
    /// Attacker eligibility radius ahead of the ego, m.
    pub attacker_range: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: None,
            buffer_capacity: 100_000,
            batch_size: 64,
            learn_rate: 1e-3,
            target_sync_steps: 1000,
            hidden_layers: vec![128, 128],
            switch_interval: 5.0,
            attacker_range: 75.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err("gamma must lie in (0, 1)".into());
        }
        if self.epsilon_end > self.epsilon_start {
            return Err("epsilon_end must not exceed epsilon_start".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err("buffer_capacity must hold at least one batch".into());
        }
        if self.switch_interval <= 0.0 || self.attacker_range <= 0.0 {
            return Err("switch_interval and attacker_range must be positive".into());
        }
        Ok(())
    }

    pub fn session_params(&self) -> SessionParams {
        SessionParams {
            switch_interval: self.switch_interval,
            attacker_range: self.attacker_range,
        }
    }

    /// Linearly decayed exploration rate for an episode index.
    pub fn epsilon_at(&self, episode: u64) -> f64 {
        let decay = self
            .epsilon_decay_episodes
            .unwrap_or(self.episodes / 2)
            .max(1);
        let frac = (episode as f64 / decay as f64).min(1.0);
        self.epsilon_start - (self.epsilon_start - self.epsilon_end) * frac
    }

    pub fn net_dims(&self) -> Vec<usize> {
        let mut dims = vec![STATE_DIM];
        dims.extend_from_slice(&self.hidden_layers);
        dims.push(ACTION_COUNT);
        dims
    }
}

/// DQN-style learner: value net, hard-synced target net, Adam, FIFO replay.
pub struct Trainer {
    pub qnet: QNet,
    target: QNet,
    adam: Adam,
    pub buffer: ReplayBuffer,
    pub config: TrainConfig,
    pub scales: FeatureScales,
    rng: StreamRng,
    pub train_steps: u64,
    grads: Gradients,
}

impl Trainer {
    pub fn new(config: TrainConfig, seed: u64) -> Self {
        let mut rng = StreamRng::new(seed, STREAM_AGENT);
        let qnet = QNet::new(&config.net_dims(), &mut rng);
        let target = qnet.clone();
        let adam = Adam::new(&qnet, config.learn_rate);
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        let grads = Gradients::zeros_like(&qnet);
        Self {
            qnet,
            target,
            adam,
            buffer,
            config,
            scales: FeatureScales::default(),
            rng,
            train_steps: 0,
            grads,
        }
    }

    /// Epsilon-greedy action for a raw state.
    pub fn act(&mut self, state: &MdpState, epsilon: f64) -> usize {
        let features = state.features(&self.scales);
        epsilon_greedy_action(&self.qnet, &features, epsilon, &mut self.rng)
    }

    /// One uniform minibatch regression step on the squared TD error.
    /// The target net is hard-synced every `target_sync_steps` updates.
    pub fn train_step(&mut self) -> Result<f64, AgentError> {
        let need = self.config.batch_size;
        if self.buffer.len() < need {
            return Err(AgentError::BufferUnderflow {
                len: self.buffer.len(),
                need,
            });
        }
        let batch: Vec<TransitionRecord> = self
            .buffer
            .sample(need, &mut self.rng)
            .into_iter()
            .copied()
            .collect();

        self.grads.reset();
        let inv_b = 1.0 / need as f64;
        let mut loss = 0.0;
        for tr in &batch {
            let features = tr.state.features(&self.scales);
            let trace = self.qnet.forward_trace(&features);
            let q = trace.output()[tr.action];
            let y = if tr.terminal {
                tr.reward
            } else {
                let next = tr.next_state.features(&self.scales);
                let q_next = self.target.forward(&next);
                tr.reward + self.config.gamma * q_next.iter().copied().fold(f64::MIN, f64::max)
            };
            let err = q - y;
            loss += err * err * inv_b;
            let mut dl_dout = [0.0; ACTION_COUNT];
            dl_dout[tr.action] = 2.0 * err * inv_b;
            self.qnet.backward_into(&trace, &dl_dout, &mut self.grads);
        }
        self.adam.step(&mut self.qnet, &self.grads);
        self.train_steps += 1;
        if self.train_steps % self.config.target_sync_steps == 0 {
            self.target = self.qnet.clone();
        }
        Ok(loss)
    }
}

/// Per-episode training statistics, one CSV row each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: u64,
    pub epsilon: f64,
    pub steps: u64,
    pub sum_reward: f64,
    pub j_region: f64,
    pub collided: bool,
    /// Four-type collision label, "non_ego", or empty when no collision.
    pub collision_type: String,
    pub mean_td_loss: f64,
}

impl EpisodeStat {
    pub const CSV_HEADER: &'static str =
        "episode,epsilon,steps,sum_reward,J,collided,collision_type,mean_td_loss";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode,
            self.epsilon,
            self.steps,
            self.sum_reward,
            self.j_region,
            if self.collided { 1 } else { 0 },
            self.collision_type,
            self.mean_td_loss
        )
    }
}

pub struct TrainingOutput {
    pub model: QNet,
    pub curve: Vec<EpisodeStat>,
    /// Every minibatch loss, in order.
    pub losses: Vec<f64>,
    pub config: TrainConfig,
}

/// Train an attacker. Episode `i` simulates on stream `scenario.seed + i`;
/// the learner draws from its own agent stream of `scenario.seed`.
pub fn run_training(
    scenario: &ScenarioConfig,
    train: &TrainConfig,
    criticality: &CriticalityConfig,
    safety: &SafetyParams,
) -> Result<TrainingOutput, EpisodeError> {
    let ego = RuleBasedEgo {
        params: scenario.ego_params,
    };
    let mut trainer = Trainer::new(train.clone(), scenario.seed);
    let mut curve = Vec::with_capacity(train.episodes as usize);
    let mut all_losses = Vec::new();

    for episode in 0..train.episodes {
        let epsilon = train.epsilon_at(episode);
        let episode_scenario = scenario.with_seed(scenario.seed.wrapping_add(episode));
        let mut session = SimSession::new(
            episode,
            episode_scenario,
            safety,
            criticality,
            train.session_params(),
            &ego,
        )?;

        let mut state = session.observe();
        let mut episode_losses: Vec<f64> = Vec::new();
        loop {
            let action_idx = trainer.act(&state, epsilon);
            let action = KinematicAction::from_index(action_idx).expect("index in range");
            let result = session.advance(action);
            let next_state = session.observe();
            trainer.buffer.push(TransitionRecord {
                state,
                action: action_idx,
                reward: result.reward,
                next_state,
                // Attacker switches end the transition stream as well.
                terminal: result.terminal.is_some() || result.switch_boundary,
            });
            if trainer.buffer.len() >= trainer.config.batch_size {
                let loss = trainer.train_step().expect("buffer holds a batch");
                episode_losses.push(loss);
            }
            if result.terminal.is_some() {
                break;
            }
            if result.switch_boundary {
                session.rotate_attacker()?;
                state = session.observe();
            } else {
                state = next_state;
            }
        }

        let log = session.finish();
        let (collided, collision_type) = match log.collision_step() {
            None => (false, String::new()),
            Some(record) => {
                let label = record
                    .events
                    .first()
                    .map(|event| crate::lab::collision_label(&log, event))
                    .unwrap_or_default();
                (true, label)
            }
        };
        let mean_td_loss = if episode_losses.is_empty() {
            0.0
        } else {
            episode_losses.iter().sum::<f64>() / episode_losses.len() as f64
        };
        curve.push(EpisodeStat {
            episode,
            epsilon,
            steps: log.terminal.step,
            sum_reward: log.terminal.sum_reward,
            j_region: log.terminal.j_region,
            collided,
            collision_type,
            mean_td_loss,
        });
        all_losses.extend(episode_losses);
    }

    Ok(TrainingOutput {
        model: trainer.qnet,
        curve,
        losses: all_losses,
        config: train.clone(),
    })
}

/// Attacker controllers available outside training.
#[derive(Clone, Copy)]
pub enum PolicySpec<'a> {
    /// Greedy argmax over a trained net.
    Greedy(&'a QNet),
    /// Uniform random over the action space.
    Uniform,
    /// The background surrogate drives the attacker (no adversarial intent).
    Scripted,
}

impl<'a> PolicySpec<'a> {
    pub fn instantiate(&self, seed: u64, scenario: &ScenarioConfig) -> PolicyInstance<'a> {
        match self {
            PolicySpec::Greedy(net) => PolicyInstance::Greedy(net, FeatureScales::default()),
            PolicySpec::Uniform => {
                PolicyInstance::Uniform(StreamRng::new(seed, STREAM_AGENT))
            }
            PolicySpec::Scripted => PolicyInstance::Scripted {
                params: scenario.background_params,
                caps: scenario.npc_caps,
                rng: StreamRng::new(seed, STREAM_AGENT),
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Greedy(_) => "greedy",
            PolicySpec::Uniform => "uniform",
            PolicySpec::Scripted => "scripted-baseline",
        }
    }
}

pub enum PolicyInstance<'a> {
    Greedy(&'a QNet, FeatureScales),
    Uniform(StreamRng),
    Scripted {
        params: BackgroundParams,
        caps: RoleCaps,
        rng: StreamRng,
    },
}

impl<'a> PolicyInstance<'a> {
    pub fn act(
        &mut self,
        state: &MdpState,
        world: &WorldState,
        attacker: VehicleId,
    ) -> KinematicAction {
        match self {
            PolicyInstance::Greedy(net, scales) => {
                let idx = net.argmax_action(&state.features(scales));
                KinematicAction::from_index(idx).expect("net outputs five actions")
            }
            PolicyInstance::Uniform(rng) => {
                KinematicAction::from_index(rng.below(ACTION_COUNT)).expect("index in range")
            }
            PolicyInstance::Scripted { params, caps, rng } => {
                match world.vehicle(attacker) {
                    Some(v) => background_action(&v.clone(), world, params, caps, rng),
                    None => KinematicAction::KeepSpeed,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: u64,
    pub mean_reward: f64,
    pub mean_j: f64,
    pub collisions: u64,
}

/// Run a policy over a fixed evaluation set (seeds `base_seed..base_seed+n`)
/// without learning, and average the episode rewards.
pub fn evaluate_policy(
    spec: PolicySpec<'_>,
    scenario: &ScenarioConfig,
    criticality: &CriticalityConfig,
    safety: &SafetyParams,
    session: SessionParams,
    n_episodes: u64,
    base_seed: u64,
) -> Result<EvalSummary, EpisodeError> {
    let ego = RuleBasedEgo {
        params: scenario.ego_params,
    };
    let mut total_reward = 0.0;
    let mut total_j = 0.0;
    let mut collisions = 0;
    for i in 0..n_episodes {
        let seed = base_seed.wrapping_add(i);
        let episode_scenario = scenario.with_seed(seed);
        let mut policy = spec.instantiate(seed, scenario);
        let mut sim = SimSession::new(i, episode_scenario, safety, criticality, session, &ego)?;
        loop {
            let state = sim.observe();
            let action = policy.act(&state, &sim.world, sim.attacker());
            let result = sim.advance(action);
            if let Some(kind) = result.terminal {
                if kind == crate::episode::TerminalKind::Collision {
                    collisions += 1;
                }
                break;
            }
            if result.switch_boundary {
                sim.rotate_attacker()?;
            }
        }
        let log = sim.finish();
        total_reward += log.terminal.sum_reward;
        total_j += log.terminal.j_region;
    }
    Ok(EvalSummary {
        episodes: n_episodes,
        mean_reward: total_reward / n_episodes.max(1) as f64,
        mean_j: total_j / n_episodes.max(1) as f64,
        collisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::MdpState;

    fn dummy_state(v_rel: f64) -> MdpState {
        MdpState {
            d_x_danger: 5.0,
            d_x_boundary: 8.0,
            d_x_safety: 60.0,
            x_npc: 30.0,
            y_npc: 6.0,
            same_lane: 1.0,
            d_x_ego_npc: 30.0,
            d_y_ego_npc: 0.0,
            d_rel: 30.0,
            v_rel,
        }
    }

    fn push_n(trainer: &mut Trainer, n: usize, terminal: bool, reward: f64) {
        for i in 0..n {
            trainer.buffer.push(TransitionRecord {
                state: dummy_state(i as f64 * 0.01),
                action: i % ACTION_COUNT,
                reward,
                next_state: dummy_state(-(i as f64) * 0.01),
                terminal,
            });
        }
    }

    #[test]
    fn underflow_is_reported() {
        let mut trainer = Trainer::new(TrainConfig::default(), 1);
        push_n(&mut trainer, 3, false, 1.0);
        assert_eq!(
            trainer.train_step(),
            Err(AgentError::BufferUnderflow { len: 3, need: 64 })
        );
    }

    #[test]
    fn gamma_zero_targets_are_rewards() {
        // With gamma ~ 0 and fixed reward, repeated regression drives the
        // chosen action's value to the reward.
        let config = TrainConfig {
            gamma: 1e-12,
            batch_size: 8,
            target_sync_steps: 1_000_000,
            hidden_layers: vec![16],
            learn_rate: 1e-2,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(config, 3);
        push_n(&mut trainer, 8, false, 6.0);
        for _ in 0..1000 {
            trainer.train_step().unwrap();
        }
        let f = dummy_state(0.0).features(&trainer.scales);
        let q = trainer.qnet.forward(&f);
        assert!((q[0] - 6.0).abs() < 0.3, "q = {q:?}");
    }

    #[test]
    fn terminal_targets_ignore_next_state() {
        // Terminal transitions regress on the bare reward even with a large
        // gamma; the values of the pushed actions approach 6.0.
        let config = TrainConfig {
            gamma: 0.99,
            batch_size: 4,
            target_sync_steps: 1_000_000,
            hidden_layers: vec![16],
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(config, 4);
        push_n(&mut trainer, 4, true, 6.0);
        for _ in 0..800 {
            trainer.train_step().unwrap();
        }
        let f = dummy_state(0.0).features(&trainer.scales);
        let q = trainer.qnet.forward(&f);
        assert!((q[0] - 6.0).abs() < 0.5, "q = {q:?}");
    }

    #[test]
    fn single_transition_regression_loss_decreases() {
        let config = TrainConfig {
            gamma: 0.5,
            batch_size: 1,
            target_sync_steps: 1_000_000,
            hidden_layers: vec![16],
            learn_rate: 1e-4,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(config, 5);
        push_n(&mut trainer, 1, true, 3.0);
        let mut losses = Vec::new();
        for _ in 0..100 {
            losses.push(trainer.train_step().unwrap());
        }
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "loss increased: {} -> {}", w[0], w[1]);
        }
        assert!(losses.last().unwrap() < &losses[0]);
    }

    #[test]
    fn epsilon_schedule_is_monotone_nonincreasing() {
        let config = TrainConfig {
            episodes: 100,
            ..TrainConfig::default()
        };
        let mut prev = f64::INFINITY;
        for e in 0..100 {
            let eps = config.epsilon_at(e);
            assert!(eps <= prev);
            assert!(eps >= config.epsilon_end - 1e-12);
            prev = eps;
        }
        assert!((config.epsilon_at(0) - 1.0).abs() < 1e-12);
        assert!((config.epsilon_at(99) - 0.05).abs() < 1e-2);
    }

    #[test]
    fn epsilon_one_explores_uniformly() {
        let mut trainer = Trainer::new(TrainConfig::default(), 9);
        let state = dummy_state(0.0);
        let n = 100_000;
        let mut counts = [0usize; ACTION_COUNT];
        for _ in 0..n {
            counts[trainer.act(&state, 1.0)] += 1;
        }
        // 3 sigma around n/5 for a binomial with p = 1/5
        let expected = n as f64 / ACTION_COUNT as f64;
        let sigma = (n as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma,
                "count {c} vs expected {expected}"
            );
        }
    }

    #[test]
    fn epsilon_zero_is_greedy_argmax() {
        let mut trainer = Trainer::new(TrainConfig::default(), 9);
        // Zero the net and plant output biases (1, 2, 5, 0, 0) -> argmax 2.
        for w in trainer.qnet.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        for b in trainer.qnet.biases.iter_mut() {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
        let last = trainer.qnet.biases.len() - 1;
        trainer.qnet.biases[last].copy_from_slice(&[1.0, 2.0, 5.0, 0.0, 0.0]);
        assert_eq!(trainer.act(&dummy_state(0.3), 0.0), 2);
        // Ties resolve to the lowest index.
        trainer.qnet.biases[last].copy_from_slice(&[0.0; 5]);
        assert_eq!(trainer.act(&dummy_state(0.3), 0.0), 0);
    }
}
