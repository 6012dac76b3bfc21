//! Multi-user experiment driver.
//!
//! Each step, every user is assigned a prompt and observes a fresh channel
//! realization. The active method picks a modality selection, the selection
//! is transmitted (with retransmissions), and learned methods train online.
//!
//! All environment randomness (mean SNRs, prompts, priorities, fading, LLM
//! outages) is keyed by (master seed, user, step[, attempt]) so every method
//! sees the same world. Exploration, replay sampling and network init use
//! method-private streams.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{AttemptChannel, ChannelDraw, ChannelParams, PinnedLink, RayleighLink};
use crate::domain::{
    build_state_vector, decode_action_index, encode_action_index, generate_prompt_corpus, CommContext,
    GatingDecision, PromptRecord, TaskCategory, TaskContext,
};
use crate::dqn::{DqnAgent, DqnConfig, Experience, MlpParams, State};
use crate::error::{Error, Result};
use crate::fidelity::{reward, transmit_with_retransmission, FidelityModel};
use crate::policies::{greedy_select, mock_llm_select, random_select, ExternalLlmGate, GatePolicy, LlmGateConfig};
use crate::rng::{substream, Stream};

/// Steps averaged for the converged-reward summary.
pub const TAIL_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    LlmGate,
    DrlFallback,
    PureDqn,
    ContextBlind,
    Greedy,
    Random,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::LlmGate,
        Method::DrlFallback,
        Method::PureDqn,
        Method::ContextBlind,
        Method::Greedy,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LlmGate => "llm_gate",
            Method::DrlFallback => "drl_fallback",
            Method::PureDqn => "pure_dqn",
            Method::ContextBlind => "context_blind",
            Method::Greedy => "greedy",
            Method::Random => "random",
        }
    }

    fn learns(self) -> bool {
        matches!(self, Method::DrlFallback | Method::PureDqn | Method::ContextBlind)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Environment overrides used by tests and diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    /// Every draw (decision time and each attempt) sees this SNR.
    pub pinned_snr_db: Option<f64>,
    /// Restrict prompt draws to one category.
    pub category: Option<TaskCategory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_steps: usize,
    pub outage_prob: f64,
    pub methods: Vec<Method>,
    /// Fidelity threshold of a single run.
    pub theta: f64,
    /// Thresholds visited by a sweep.
    pub thresholds: Vec<f64>,
    pub master_seed: u64,
    /// When false, learners still act and log experience but never update.
    pub train: bool,
    pub latency_tolerance_ms: f64,
    pub channel: ChannelParams,
    pub fidelity: FidelityModel,
    pub dqn: DqnConfig,
    /// External LLM endpoint; `None` uses the deterministic mock gate.
    pub llm: Option<LlmGateConfig>,
    pub scenario: Scenario,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_users: 10,
            n_steps: 250,
            outage_prob: 0.2,
            methods: Method::ALL.to_vec(),
            theta: 0.6,
            thresholds: vec![0.3, 0.6, 0.9],
            master_seed: 2024,
            train: true,
            latency_tolerance_ms: 250.0,
            channel: ChannelParams::default(),
            fidelity: FidelityModel::default(),
            dqn: DqnConfig::default(),
            llm: None,
            scenario: Scenario::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("sim.n_users must be at least 1".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("sim.n_steps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.outage_prob) {
            return Err(Error::Config(format!("sim.outage_prob {} outside [0, 1]", self.outage_prob)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("sim.methods must not be empty".into()));
        }
        for theta in std::iter::once(&self.theta).chain(&self.thresholds) {
            if !(*theta > 0.0 && *theta <= 1.0) {
                return Err(Error::Config(format!("threshold {theta} outside (0, 1]")));
            }
        }
        self.channel.validate()?;
        self.fidelity.validate()?;
        self.dqn.validate()?;
        let probe = TaskContext::new(TaskCategory::Scenery, 1, self.latency_tolerance_ms, 0.0, self.theta)
            .map_err(|e| Error::Config(e.to_string()))?;
        self.fidelity.max_attempts(&probe, &self.channel)?;
        Ok(())
    }
}

/// One row of the per-step log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub method: Method,
    pub step: usize,
    pub user: usize,
    pub category: TaskCategory,
    pub theta: f64,
    pub snr_db: f64,
    pub action_mask: u8,
    pub fidelity: f64,
    pub attempts: u32,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRunResult {
    pub method: Method,
    /// Mean reward over users, one entry per step.
    pub reward_series: Vec<f64>,
    pub total_retransmissions: u64,
    pub failures: u64,
    pub final_mean_reward: f64,
    pub decisions: u64,
    pub llm_queries: u64,
    pub llm_errors: u64,
}

impl MethodRunResult {
    pub fn mean_retransmissions_per_decision(&self) -> f64 {
        self.total_retransmissions as f64 / self.decisions as f64
    }

    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.decisions as f64
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// In `SimConfig::methods` order.
    pub results: Vec<MethodRunResult>,
    /// Method-major, then step, then user.
    pub records: Vec<StepRecord>,
    /// Final online Q-network of every learning method.
    pub networks: Vec<(Method, MlpParams)>,
}

impl ExperimentResult {
    pub fn result(&self, method: Method) -> Option<&MethodRunResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub method: Method,
    pub theta: f64,
    pub mean_retx_per_step: f64,
    pub failure_rate: f64,
}

/// What a user observes at decision time.
#[derive(Debug, Clone, Copy)]
pub struct Observation {
    pub prompt_id: usize,
    pub task: TaskContext,
    pub comm: CommContext,
}

/// Method-invariant world: corpus, per-user mean SNR, keyed draws.
pub struct Environment<'a> {
    config: &'a SimConfig,
    corpus: Vec<PromptRecord>,
    eligible: Vec<usize>,
    mean_snr_db: Vec<f64>,
}

impl<'a> Environment<'a> {
    pub fn new(config: &'a SimConfig) -> Self {
        let corpus = generate_prompt_corpus(config.master_seed);
        let eligible = corpus
            .iter()
            .enumerate()
            .filter(|(_, r)| config.scenario.category.is_none_or(|c| c == r.category))
            .map(|(i, _)| i)
            .collect();
        let mean_snr_db = (0..config.n_users)
            .map(|u| config.channel.sample_mean_snr(&mut substream(config.master_seed, "mean_snr", &[u as u64])))
            .collect();
        Self { config, corpus, eligible, mean_snr_db }
    }

    pub fn corpus(&self) -> &[PromptRecord] {
        &self.corpus
    }

    pub fn mean_snr_db(&self, user: usize) -> f64 {
        self.mean_snr_db[user]
    }

    fn pinned_draw(&self, user: usize) -> Option<ChannelDraw> {
        let mean = self.mean_snr_db[user];
        self.config
            .scenario
            .pinned_snr_db
            .map(|snr| self.config.channel.draw_at_snr(10f64.powf((snr - mean) / 10.0), snr))
    }

    fn draw(&self, user: usize, rng: &mut Stream) -> ChannelDraw {
        self.pinned_draw(user)
            .unwrap_or_else(|| self.config.channel.draw(self.mean_snr_db[user], rng))
    }

    pub fn observe(&self, user: usize, step: usize) -> Observation {
        let seed = self.config.master_seed;
        let key = [user as u64, step as u64];
        let mut rng = substream(seed, "prompt", &key);
        let prompt_id = self.eligible[rng.random_range(0..self.eligible.len())];
        let priority = rng.random_range(1..=3u8);
        let category = self.corpus[prompt_id].category;
        let task = TaskContext {
            category,
            priority,
            latency_tolerance_ms: self.config.latency_tolerance_ms,
            bandwidth_requirement_bps: 0.0,
            fidelity_threshold: self.config.theta,
        };
        let draw = self.draw(user, &mut substream(seed, "fading.decision", &key));
        let comm = self.config.channel.comm_context(self.mean_snr_db[user], &draw);
        Observation { prompt_id, task, comm }
    }

    /// Whether the LLM gate is unavailable for this (user, step).
    pub fn llm_outage(&self, user: usize, step: usize) -> bool {
        let u: f64 = substream(self.config.master_seed, "outage", &[user as u64, step as u64]).random();
        u < self.config.outage_prob
    }

    fn link(&self, user: usize, step: usize) -> Box<dyn AttemptChannel + '_> {
        match self.pinned_draw(user) {
            Some(draw) => Box::new(PinnedLink(draw)),
            None => Box::new(RayleighLink {
                params: &self.config.channel,
                mean_snr_db: self.mean_snr_db[user],
                master_seed: self.config.master_seed,
                user: user as u64,
                step: step as u64,
            }),
        }
    }
}

enum LlmBackend {
    Mock,
    External(ExternalLlmGate),
}

/// Per-method mutable state for one run.
pub struct MethodRunner<'e, 'c> {
    method: Method,
    env: &'e Environment<'c>,
    agent: Option<DqnAgent>,
    llm: LlmBackend,
    pub llm_queries: u64,
    pub llm_errors: u64,
}

impl<'e, 'c> MethodRunner<'e, 'c> {
    pub fn new(method: Method, env: &'e Environment<'c>) -> Result<Self> {
        let cfg = env.config;
        let agent = method.learns().then(|| {
            let mut rng = substream(cfg.master_seed, &format!("init.{method}"), &[]);
            DqnAgent::new(cfg.dqn.clone(), &mut rng)
        });
        let llm = match (&cfg.llm, method) {
            (Some(llm), Method::LlmGate | Method::DrlFallback) => LlmBackend::External(ExternalLlmGate::new(
                llm.clone(),
                cfg.fidelity.clone(),
                cfg.channel.slot_ms,
            )?),
            _ => LlmBackend::Mock,
        };
        Ok(Self { method, env, agent, llm, llm_queries: 0, llm_errors: 0 })
    }

    fn query_llm(&mut self, obs: &Observation, rng: &mut Stream) -> Result<GatingDecision> {
        self.llm_queries += 1;
        let cfg = self.env.config;
        let result = match &self.llm {
            LlmBackend::Mock => Ok(mock_llm_select(
                &obs.task,
                &obs.comm,
                &cfg.fidelity.matrix,
                &cfg.fidelity.payloads,
                cfg.channel.slot_ms,
            )),
            LlmBackend::External(gate) => gate.decide(&obs.task, &obs.comm, rng),
        };
        if result.is_err() {
            self.llm_errors += 1;
        }
        result
    }

    fn dqn_decide(&self, state: &State, step: usize, rng: &mut Stream) -> Result<GatingDecision> {
        let agent = self.agent.as_ref().expect("learning method owns an agent");
        let eps = agent.config.epsilon.value(step as u64);
        decode_action_index(agent.act(state, eps, rng)?)
    }

    fn state(&self, obs: &Observation) -> State {
        build_state_vector(&obs.task, &obs.comm, self.method == Method::ContextBlind)
    }

    fn decide(&mut self, user: usize, step: usize, obs: &Observation, rng: &mut Stream) -> Result<GatingDecision> {
        let cfg = self.env.config;
        match self.method {
            Method::LlmGate => match self.query_llm(obs, rng) {
                Ok(d) => Ok(d),
                // No learned fallback here: degrade to the rule-based gate.
                Err(_) => Ok(mock_llm_select(
                    &obs.task,
                    &obs.comm,
                    &cfg.fidelity.matrix,
                    &cfg.fidelity.payloads,
                    cfg.channel.slot_ms,
                )),
            },
            Method::DrlFallback => {
                let state = self.state(obs);
                if self.env.llm_outage(user, step) {
                    self.dqn_decide(&state, step, rng)
                } else {
                    match self.query_llm(obs, rng) {
                        Ok(d) => Ok(d),
                        Err(_) => self.dqn_decide(&state, step, rng),
                    }
                }
            }
            Method::PureDqn | Method::ContextBlind => {
                let state = self.state(obs);
                self.dqn_decide(&state, step, rng)
            }
            Method::Greedy => Ok(greedy_select(&obs.task, &cfg.fidelity.matrix)),
            Method::Random => Ok(random_select(rng)),
        }
    }

    /// Runs one step for every user.
    pub fn run_step(&mut self, step: usize) -> Result<Vec<StepRecord>> {
        let cfg = self.env.config;
        let seed = cfg.master_seed;
        let mut records = Vec::with_capacity(cfg.n_users);
        for user in 0..cfg.n_users {
            let obs = self.env.observe(user, step);
            let mut policy_rng = substream(seed, &format!("policy.{}", self.method), &[user as u64, step as u64]);
            let decision = self.decide(user, step, &obs, &mut policy_rng)?;
            debug_assert!(!decision.selection_mask.is_empty());

            let mut link = self.env.link(user, step);
            let outcome =
                transmit_with_retransmission(&obs.task, &decision, &cfg.channel, &mut link, &cfg.fidelity)?;
            let r = reward(&outcome, cfg.fidelity.lambda);

            if self.agent.is_some() {
                let next = self.env.observe(user, step + 1);
                let exp = Experience {
                    state: self.state(&obs),
                    action: encode_action_index(&decision),
                    reward: r,
                    next_state: self.state(&next),
                    done: true,
                };
                let agent = self.agent.as_mut().expect("checked");
                agent.remember(exp);
                if cfg.train {
                    let mut train_rng =
                        substream(seed, &format!("train.{}", self.method), &[step as u64, user as u64]);
                    agent.train(&mut train_rng);
                }
            }

            records.push(StepRecord {
                method: self.method,
                step,
                user,
                category: obs.task.category,
                theta: obs.task.fidelity_threshold,
                snr_db: obs.comm.instantaneous_snr_db,
                action_mask: decision.selection_mask.bits(),
                fidelity: outcome.fidelity,
                attempts: outcome.attempts,
                reward: r,
            });
        }
        Ok(records)
    }

    pub fn agent(&self) -> Option<&DqnAgent> {
        self.agent.as_ref()
    }
}

struct MethodRun {
    records: Vec<StepRecord>,
    llm_queries: u64,
    llm_errors: u64,
    network: Option<MlpParams>,
}

fn run_method(method: Method, env: &Environment<'_>) -> Result<MethodRun> {
    let mut runner = MethodRunner::new(method, env)?;
    let mut records = Vec::with_capacity(env.config.n_steps * env.config.n_users);
    for step in 0..env.config.n_steps {
        records.extend(runner.run_step(step)?);
    }
    Ok(MethodRun {
        records,
        llm_queries: runner.llm_queries,
        llm_errors: runner.llm_errors,
        network: runner.agent.map(|a| a.online),
    })
}

/// Runs every configured method over the same environment.
pub fn run_experiment(config: &SimConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let env = Environment::new(config);
    let runs: Vec<MethodRun> =
        config.methods.par_iter().map(|m| run_method(*m, &env)).collect::<Result<_>>()?;

    let mut results = Vec::with_capacity(runs.len());
    let mut records = Vec::new();
    let mut networks = Vec::new();
    for (method, run) in config.methods.iter().zip(runs) {
        let mut summary = collect_metrics(&run.records)?;
        let mut r = summary.remove(0);
        r.llm_queries = run.llm_queries;
        r.llm_errors = run.llm_errors;
        results.push(r);
        records.extend(run.records);
        if let Some(p) = run.network {
            networks.push((*method, p));
        }
    }
    Ok(ExperimentResult { results, records, networks })
}

/// Aggregates records into one result per method, in order of first appearance.
pub fn collect_metrics(records: &[StepRecord]) -> Result<Vec<MethodRunResult>> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no step records to aggregate".into()));
    }
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let results = methods
        .into_iter()
        .map(|method| {
            let rows: Vec<&StepRecord> = records.iter().filter(|r| r.method == method).collect();
            let n_steps = rows.iter().map(|r| r.step).max().expect("nonempty") + 1;
            let mut sums = vec![0.0; n_steps];
            let mut counts = vec![0usize; n_steps];
            for r in &rows {
                sums[r.step] += r.reward;
                counts[r.step] += 1;
            }
            let reward_series: Vec<f64> = sums
                .iter()
                .zip(&counts)
                .map(|(s, c)| if *c == 0 { 0.0 } else { s / *c as f64 })
                .collect();
            let tail = &reward_series[n_steps.saturating_sub(TAIL_STEPS)..];
            let final_mean_reward = tail.iter().sum::<f64>() / tail.len() as f64;
            let total_retransmissions = rows.iter().map(|r| u64::from(r.attempts - 1)).sum();
            let failures = rows.iter().filter(|r| r.fidelity < r.theta).count() as u64;
            MethodRunResult {
                method,
                reward_series,
                total_retransmissions,
                failures,
                final_mean_reward,
                decisions: rows.len() as u64,
                llm_queries: 0,
                llm_errors: 0,
            }
        })
        .collect();
    Ok(results)
}

/// Runs the experiment once per threshold and reports retransmission overhead.
pub fn threshold_sweep(config: &SimConfig, thresholds: &[f64]) -> Result<Vec<OverheadRow>> {
    if thresholds.is_empty() {
        return Err(Error::Config("threshold list must not be empty".into()));
    }
    let per_theta: Vec<(f64, ExperimentResult)> = thresholds
        .par_iter()
        .map(|&theta| {
            let cfg = SimConfig { theta, ..config.clone() };
            run_experiment(&cfg).map(|r| (theta, r))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for method in &config.methods {
        for (theta, result) in &per_theta {
            let r = result.result(*method).expect("every configured method runs");
            rows.push(OverheadRow {
                method: *method,
                theta: *theta,
                mean_retx_per_step: r.mean_retransmissions_per_decision(),
                failure_rate: r.failure_rate(),
            });
        }
    }
    Ok(rows)
}
