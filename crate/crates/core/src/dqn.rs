//! Deep Q-learning from scratch.
//!
//! A 9 → 64 → 64 → 32 ReLU network scores every joint modality mask. The
//! agent keeps a FIFO replay buffer, explores ε-greedily over the 31
//! nonempty masks, trains on the squared TD error with Adam, and hard-syncs
//! a target network every `target_sync_interval` training steps.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng;

use crate::domain::{NUM_ACTIONS, STATE_DIM};
use crate::error::{Error, Result};
use crate::rng::Stream;

pub const HIDDEN: usize = 64;
pub const INPUT: usize = STATE_DIM;
pub const OUTPUT: usize = NUM_ACTIONS;

pub type State = [f64; STATE_DIM];
pub type QValues = [f64; OUTPUT];

const CHECKPOINT_MAGIC: &[u8; 4] = b"CSCQ";
const CHECKPOINT_VERSION: u32 = 1;

/// Network weights. Matrices are stored `fan_in × fan_out`, row-major, so
/// `w1[i * HIDDEN + j]` connects input `i` to hidden unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl MlpParams {
    pub fn zeros() -> Self {
        Self {
            w1: vec![0.0; INPUT * HIDDEN],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN * HIDDEN],
            b2: vec![0.0; HIDDEN],
            w3: vec![0.0; HIDDEN * OUTPUT],
            b3: vec![0.0; OUTPUT],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(rng: &mut Stream) -> Self {
        let mut p = Self::zeros();
        let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in w.iter_mut() {
                *x = rng.random_range(-limit..limit);
            }
        };
        fill(&mut p.w1, INPUT, HIDDEN);
        fill(&mut p.w2, HIDDEN, HIDDEN);
        fill(&mut p.w3, HIDDEN, OUTPUT);
        p
    }

    /// Parameter tensors in checkpoint order.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3, &mut self.b3]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Serializes to the checkpoint format: 16-byte header (magic, version,
    /// input dim, output dim; u32 little-endian) then every parameter as a
    /// little-endian f64.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(INPUT as u32).to_le_bytes())?;
        out.write_all(&(OUTPUT as u32).to_le_bytes())?;
        for t in self.tensors() {
            for x in t {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 16];
        input.read_exact(&mut header)?;
        if &header[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
        if word(4) != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", word(4))));
        }
        if (word(8) as usize, word(12) as usize) != (INPUT, OUTPUT) {
            return Err(Error::Checkpoint(format!("shape {}x{} does not match", word(8), word(12))));
        }
        let mut p = Self::zeros();
        let mut buf = [0u8; 8];
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                input.read_exact(&mut buf)?;
                *x = f64::from_le_bytes(buf);
            }
        }
        if !p.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(p)
    }
}

struct Activations {
    z1: [f64; HIDDEN],
    h1: [f64; HIDDEN],
    z2: [f64; HIDDEN],
    h2: [f64; HIDDEN],
    q: QValues,
}

fn dense<const N: usize>(input: &[f64], w: &[f64], b: &[f64]) -> [f64; N] {
    let mut out = [0.0; N];
    out.copy_from_slice(b);
    for (i, x) in input.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        let row = &w[i * N..(i + 1) * N];
        out.iter_mut().zip(row).for_each(|(o, wij)| *o += x * wij);
    }
    out
}

fn relu<const N: usize>(z: &[f64; N]) -> [f64; N] {
    z.map(|v| v.max(0.0))
}

fn forward_cached(params: &MlpParams, state: &State) -> Activations {
    let z1 = dense::<HIDDEN>(state, &params.w1, &params.b1);
    let h1 = relu(&z1);
    let z2 = dense::<HIDDEN>(&h1, &params.w2, &params.b2);
    let h2 = relu(&z2);
    let q = dense::<OUTPUT>(&h2, &params.w3, &params.b3);
    Activations { z1, h1, z2, h2, q }
}

pub fn forward(params: &MlpParams, state: &State) -> Result<QValues> {
    if !state.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("non-finite state".into()));
    }
    Ok(forward_cached(params, state).q)
}

/// Gradient of `(Q(s)[action] − td_target)²` with respect to every parameter.
pub fn backward(params: &MlpParams, state: &State, action: usize, td_target: f64) -> MlpParams {
    let mut g = MlpParams::zeros();
    let act = forward_cached(params, state);
    accumulate_gradient(params, state, &act, action, td_target, 1.0, &mut g);
    g
}

fn accumulate_gradient(
    params: &MlpParams,
    state: &State,
    act: &Activations,
    action: usize,
    td_target: f64,
    scale: f64,
    g: &mut MlpParams,
) {
    let dq = scale * 2.0 * (act.q[action] - td_target);
    if dq == 0.0 {
        return;
    }
    g.b3[action] += dq;
    let mut dz2 = [0.0; HIDDEN];
    for i in 0..HIDDEN {
        g.w3[i * OUTPUT + action] += act.h2[i] * dq;
        if act.z2[i] > 0.0 {
            dz2[i] = params.w3[i * OUTPUT + action] * dq;
        }
    }
    let mut dz1 = [0.0; HIDDEN];
    for i in 0..HIDDEN {
        let row = &params.w2[i * HIDDEN..(i + 1) * HIDDEN];
        let grow = &mut g.w2[i * HIDDEN..(i + 1) * HIDDEN];
        let mut dh1 = 0.0;
        for j in 0..HIDDEN {
            grow[j] += act.h1[i] * dz2[j];
            dh1 += row[j] * dz2[j];
        }
        if act.z1[i] > 0.0 {
            dz1[i] = dh1;
        }
    }
    g.b2.iter_mut().zip(&dz2).for_each(|(b, d)| *b += d);
    g.b1.iter_mut().zip(&dz1).for_each(|(b, d)| *b += d);
    for (i, s) in state.iter().enumerate() {
        if *s == 0.0 {
            continue;
        }
        let grow = &mut g.w1[i * HIDDEN..(i + 1) * HIDDEN];
        grow.iter_mut().zip(&dz1).for_each(|(w, d)| *w += s * d);
    }
}

/// Adam state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            m: MlpParams::zeros(),
            v: MlpParams::zeros(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn optimizer_step(params: &mut MlpParams, opt: &mut OptimizerState, grad: &MlpParams) {
    opt.step += 1;
    let t = opt.step as i32;
    let (b1, b2) = (opt.beta1, opt.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = opt.learning_rate;
    let eps = opt.eps;
    let tensors = params.tensors_mut().into_iter().zip(opt.m.tensors_mut()).zip(opt.v.tensors_mut());
    for (((p, m), v), g) in tensors.zip(grad.tensors()) {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Greedy action over the nonempty masks (1..32); ties go to the lowest index.
pub fn greedy_action(q: &QValues) -> usize {
    let mut best = 1;
    for a in 2..OUTPUT {
        if q[a] > q[best] {
            best = a;
        }
    }
    best
}

pub fn select_action(params: &MlpParams, state: &State, epsilon: f64, rng: &mut Stream) -> Result<usize> {
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(1..OUTPUT));
    }
    Ok(greedy_action(&forward(params, state)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: State,
    pub action: usize,
    pub reward: f64,
    pub next_state: State,
    pub done: bool,
}

/// Sampling was requested before the buffer holds a full batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotReady {
    pub size: usize,
    pub needed: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, storage: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, exp: Experience) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(exp);
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.storage.iter()
    }

    /// Uniform sampling with replacement.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut Stream) -> Result<Vec<&Experience>, NotReady> {
        if self.storage.len() < batch_size {
            return Err(NotReady { size: self.storage.len(), needed: batch_size });
        }
        Ok((0..batch_size).map(|_| &self.storage[rng.random_range(0..self.storage.len())]).collect())
    }
}

/// Geometric ε decay from `start` to `end` over `total_steps` steps, then flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub total_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.01, total_steps: 250 }
    }
}

impl EpsilonSchedule {
    pub fn decay_factor(&self) -> f64 {
        if self.total_steps <= 1 {
            return 0.0;
        }
        (self.end / self.start).powf(1.0 / (self.total_steps - 1) as f64)
    }

    pub fn value(&self, step: u64) -> f64 {
        if self.total_steps <= 1 {
            return if step == 0 { self.start } else { self.end };
        }
        (self.start * self.decay_factor().powf(step as f64)).max(self.end)
    }
}

/// One TD update on a batch; returns the mean squared TD error before the update.
pub fn td_train_step(
    online: &mut MlpParams,
    target: &MlpParams,
    batch: &[&Experience],
    gamma: f64,
    opt: &mut OptimizerState,
) -> f64 {
    let n = batch.len() as f64;
    let mut grad = MlpParams::zeros();
    let mut loss = 0.0;
    for exp in batch {
        let y = if exp.done {
            exp.reward
        } else {
            let q_next = forward_cached(target, &exp.next_state).q;
            exp.reward + gamma * q_next[greedy_action(&q_next)]
        };
        let act = forward_cached(online, &exp.state);
        let err = act.q[exp.action] - y;
        loss += err * err;
        accumulate_gradient(online, &exp.state, &act, exp.action, y, 1.0 / n, &mut grad);
    }
    optimizer_step(online, opt, &grad);
    loss / n
}

/// Copies `online` into `target` when `train_steps` is a positive multiple of `interval`.
pub fn target_sync(online: &MlpParams, target: &mut MlpParams, interval: u64, train_steps: u64) -> bool {
    if interval > 0 && train_steps > 0 && train_steps.is_multiple_of(interval) {
        target.clone_from(online);
        true
    } else {
        false
    }
}

/// Largest relative error between [`backward`] and central finite
/// differences of the squared TD loss, over `configs` random networks,
/// states, actions and targets. Relative error is `|a − b| / max(|a| + |b|, 1e-6)`.
pub fn gradient_check(rng: &mut Stream, configs: usize, h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let mut p = MlpParams::init(rng);
        for t in [&mut p.b1, &mut p.b2, &mut p.b3] {
            t.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        let mut s = [0.0; STATE_DIM];
        s.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        let action = rng.random_range(0..OUTPUT);
        let y = rng.random_range(-1.0..1.0);
        let g = backward(&p, &s, action, y);
        let loss = |p: &MlpParams| (forward_cached(p, &s).q[action] - y).powi(2);
        let mut probe = p.clone();
        for (ti, gt) in g.tensors().iter().enumerate() {
            for k in 0..gt.len() {
                let orig = probe.tensors_mut()[ti][k];
                probe.tensors_mut()[ti][k] = orig + h;
                let lp = loss(&probe);
                probe.tensors_mut()[ti][k] = orig - h;
                let lm = loss(&probe);
                probe.tensors_mut()[ti][k] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - gt[k]).abs() / (fd.abs() + gt[k].abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub epsilon: EpsilonSchedule,
    pub target_sync_interval: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            gamma: 0.995,
            buffer_capacity: 2000,
            batch_size: 32,
            epsilon: EpsilonSchedule::default(),
            target_sync_interval: 50,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("dqn.learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("dqn.gamma outside [0, 1]".into()));
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return Err(Error::Config("dqn buffer capacity and batch size must be positive".into()));
        }
        let e = &self.epsilon;
        if !(0.0 < e.end && e.end <= e.start && e.start <= 1.0) {
            return Err(Error::Config("dqn epsilon schedule must satisfy 0 < end <= start <= 1".into()));
        }
        Ok(())
    }
}

/// Online/target networks, optimizer and replay buffer owned by one learner.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: MlpParams,
    pub target: MlpParams,
    pub opt: OptimizerState,
    pub buffer: ReplayBuffer,
    pub config: DqnConfig,
    pub train_steps: u64,
}

impl DqnAgent {
    pub fn new(config: DqnConfig, rng: &mut Stream) -> Self {
        let online = MlpParams::init(rng);
        Self {
            target: online.clone(),
            online,
            opt: OptimizerState::new(config.learning_rate),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            train_steps: 0,
        }
    }

    pub fn act(&self, state: &State, epsilon: f64, rng: &mut Stream) -> Result<usize> {
        select_action(&self.online, state, epsilon, rng)
    }

    pub fn remember(&mut self, exp: Experience) {
        self.buffer.push(exp);
    }

    /// One TD step if the buffer holds a full batch; returns the loss.
    pub fn train(&mut self, rng: &mut Stream) -> Option<f64> {
        let batch = self.buffer.sample_batch(self.config.batch_size, rng).ok()?;
        let loss = td_train_step(&mut self.online, &self.target, &batch, self.config.gamma, &mut self.opt);
        self.train_steps += 1;
        target_sync(&self.online, &mut self.target, self.config.target_sync_interval, self.train_steps);
        Some(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn random_state(rng: &mut Stream) -> State {
        let mut s = [0.0; STATE_DIM];
        s.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        s
    }

    /// Straight-line reference forward pass.
    fn naive_forward(p: &MlpParams, s: &State) -> Vec<f64> {
        let layer = |x: &[f64], w: &[f64], b: &[f64], n_out: usize, act: bool| -> Vec<f64> {
            (0..n_out)
                .map(|j| {
                    let mut z = b[j];
                    for i in 0..x.len() {
                        z += w[i * n_out + j] * x[i];
                    }
                    if act { z.max(0.0) } else { z }
                })
                .collect()
        };
        let h1 = layer(s, &p.w1, &p.b1, HIDDEN, true);
        let h2 = layer(&h1, &p.w2, &p.b2, HIDDEN, true);
        layer(&h2, &p.w3, &p.b3, OUTPUT, false)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let q = forward(&MlpParams::zeros(), &[0.3; STATE_DIM]).unwrap();
        assert!(q.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bias_passthrough() {
        let mut p = MlpParams::zeros();
        p.b3[5] = 1.0;
        let q = forward(&p, &[0.7; STATE_DIM]).unwrap();
        for (i, v) in q.iter().enumerate() {
            assert_eq!(*v, if i == 5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = substream(9, "fwd", &[]);
        for _ in 0..5 {
            let p = MlpParams::init(&mut rng);
            let s = random_state(&mut rng);
            let q = forward(&p, &s).unwrap();
            for (a, b) in q.iter().zip(naive_forward(&p, &s)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_non_finite() {
        let mut s = [0.0; STATE_DIM];
        s[3] = f64::NAN;
        assert!(forward(&MlpParams::zeros(), &s).is_err());
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let mut rng = substream(1, "g", &[]);
        let p = MlpParams::init(&mut rng);
        let s = random_state(&mut rng);
        let q = forward(&p, &s).unwrap();
        let g = backward(&p, &s, 7, q[7]);
        assert!(g.tensors().iter().all(|t| t.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn output_bias_gradient_is_selective() {
        let mut rng = substream(2, "g", &[]);
        let p = MlpParams::init(&mut rng);
        let s = random_state(&mut rng);
        let g = backward(&p, &s, 12, 5.0);
        for (i, v) in g.b3.iter().enumerate() {
            assert_eq!(*v != 0.0, i == 12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_sampled() {
        // Spot check; the exhaustive check lives in the integration tests.
        let mut rng = substream(3, "fd", &[]);
        let mut p = MlpParams::init(&mut rng);
        p.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        let s = random_state(&mut rng);
        let (a, y) = (4, 0.3);
        let g = backward(&p, &s, a, y);
        let loss = |p: &MlpParams| {
            let q = forward(p, &s).unwrap();
            (q[a] - y).powi(2)
        };
        let h = 1e-5;
        for k in (0..p.w1.len()).step_by(37) {
            let mut pp = p.clone();
            pp.w1[k] += h;
            let mut pm = p.clone();
            pm.w1[k] -= h;
            let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
            assert!((fd - g.w1[k]).abs() <= 1e-6 + 1e-4 * fd.abs().max(g.w1[k].abs()));
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut rng = substream(4, "a", &[]);
        let mut p = MlpParams::init(&mut rng);
        let before = p.clone();
        let mut opt = OptimizerState::new(1e-3);
        optimizer_step(&mut p, &mut opt, &MlpParams::zeros());
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = MlpParams::zeros();
        let mut g = MlpParams::zeros();
        g.b3[0] = 1.0;
        let mut opt = OptimizerState::new(1e-3);
        optimizer_step(&mut p, &mut opt, &g);
        // m̂ = 1, v̂ = 1  ⇒  Δ = −lr / (1 + ε̂)
        assert!((p.b3[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
        let first = p.b3[0];
        optimizer_step(&mut p, &mut opt, &g);
        assert!(p.b3[0] < first && first < 0.0);
    }

    #[test]
    fn select_action_rules() {
        let mut rng = substream(5, "sel", &[]);
        let mut p = MlpParams::zeros();
        let s = [0.0; STATE_DIM];
        assert_eq!(select_action(&p, &s, 0.0, &mut rng).unwrap(), 1);
        p.b3[17] = 1.0;
        assert_eq!(select_action(&p, &s, 0.0, &mut rng).unwrap(), 17);
        // Action 0 is never chosen, even when it scores best.
        p.b3[0] = 10.0;
        assert_eq!(select_action(&p, &s, 0.0, &mut rng).unwrap(), 17);
    }

    #[test]
    fn full_exploration_is_uniform_over_nonempty() {
        let mut rng = substream(6, "explore", &[]);
        let p = MlpParams::zeros();
        let n = 100_000;
        let mut counts = [0usize; OUTPUT];
        for _ in 0..n {
            counts[select_action(&p, &[0.0; STATE_DIM], 1.0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[0], 0);
        for c in &counts[1..] {
            assert!((*c as f64 / n as f64 - 1.0 / 31.0).abs() < 0.005);
        }
    }

    fn exp(tag: f64) -> Experience {
        Experience { state: [tag; STATE_DIM], action: 1, reward: 0.0, next_state: [0.0; STATE_DIM], done: true }
    }

    #[test]
    fn replay_eviction_and_readiness() {
        let mut buf = ReplayBuffer::new(2000);
        for i in 0..2001 {
            buf.push(exp(i as f64));
        }
        assert_eq!(buf.len(), 2000);
        assert_eq!(buf.iter().next().unwrap().state[0], 1.0);
        let tags: Vec<f64> = buf.iter().map(|e| e.state[0]).collect();
        assert!(tags.windows(2).all(|w| w[0] < w[1]));

        let mut small = ReplayBuffer::new(2000);
        (0..31).for_each(|i| small.push(exp(i as f64)));
        let mut rng = substream(0, "s", &[]);
        assert_eq!(small.sample_batch(32, &mut rng).unwrap_err(), NotReady { size: 31, needed: 32 });
        small.push(exp(31.0));
        assert_eq!(small.sample_batch(32, &mut rng).unwrap().len(), 32);
    }

    #[test]
    fn sampling_covers_all_slots() {
        let mut buf = ReplayBuffer::new(2000);
        (0..100).for_each(|i| buf.push(exp(i as f64)));
        let mut rng = substream(7, "cover", &[]);
        let mut seen = [false; 100];
        for _ in 0..(10_000 / 32 + 1) {
            for e in buf.sample_batch(32, &mut rng).unwrap() {
                seen[e.state[0] as usize] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn epsilon_endpoints() {
        let e = EpsilonSchedule::default();
        assert_eq!(e.value(0), 1.0);
        assert!((e.value(249) - 0.01).abs() < 1e-6);
        assert!((e.decay_factor() - (0.01f64.ln() / 249.0).exp()).abs() < 1e-15);
        assert!((e.decay_factor() - 0.981675).abs() < 1e-6);
        for t in 0..249 {
            assert!(e.value(t + 1) < e.value(t));
        }
        assert_eq!(e.value(400), 0.01);
    }

    #[test]
    fn td_step_at_fixed_point_is_noop() {
        let mut rng = substream(8, "td", &[]);
        let mut online = MlpParams::init(&mut rng);
        let target = online.clone();
        let batch: Vec<Experience> = (0..32)
            .map(|i| {
                let s = random_state(&mut rng);
                let a = 1 + i % 31;
                let q = forward(&online, &s).unwrap();
                Experience { state: s, action: a, reward: q[a], next_state: s, done: true }
            })
            .collect();
        let refs: Vec<&Experience> = batch.iter().collect();
        let before = online.clone();
        let mut opt = OptimizerState::new(1e-3);
        let loss = td_train_step(&mut online, &target, &refs, 0.995, &mut opt);
        assert_eq!(loss, 0.0);
        assert_eq!(online, before);
    }

    #[test]
    fn target_sync_interval() {
        let mut rng = substream(9, "sync", &[]);
        let online = MlpParams::init(&mut rng);
        let mut target = MlpParams::zeros();
        for step in 1..50 {
            assert!(!target_sync(&online, &mut target, 50, step));
            assert_eq!(target, MlpParams::zeros());
        }
        assert!(target_sync(&online, &mut target, 50, 50));
        assert_eq!(target, online);
        assert!(target_sync(&online, &mut target, 50, 50));
        assert_eq!(target, online);
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let mut rng = substream(10, "ckpt", &[]);
        let p = MlpParams::init(&mut rng);
        let mut bytes = Vec::new();
        p.write_checkpoint(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 16 + 8 * p.num_params());
        assert_eq!(&bytes[..4], b"CSCQ");
        assert_eq!(MlpParams::read_checkpoint(&bytes[..]).unwrap(), p);
        bytes[0] = b'X';
        assert!(matches!(MlpParams::read_checkpoint(&bytes[..]), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn agent_training_is_deterministic() {
        let run = || {
            let mut rng = substream(12, "agent", &[]);
            let mut agent = DqnAgent::new(DqnConfig::default(), &mut rng);
            for t in 0..100u64 {
                let s = random_state(&mut rng);
                let a = agent.act(&s, 0.5, &mut rng).unwrap();
                agent.remember(Experience { state: s, action: a, reward: (t % 3) as f64 / 2.0, next_state: s, done: true });
                agent.train(&mut rng);
            }
            agent.online
        };
        assert_eq!(run(), run());
    }
}
