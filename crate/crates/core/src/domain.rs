//! Shared vocabulary: modalities, task/communication contexts, gating
//! decisions, the prompt corpus and the DQN state vector.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dimension of the pseudo-embedding attached to every prompt.
pub const EMBEDDING_DIM: usize = 384;
/// Length of the state vector fed to the Q-network.
pub const STATE_DIM: usize = 9;
/// Number of joint gating actions (all 5-bit masks).
pub const NUM_ACTIONS: usize = 32;

/// Number of prompts in a generated corpus.
pub const CORPUS_SIZE: usize = 100;

const SNR_FLOOR_DB: f64 = -13.0;
const SNR_SPAN_DB: f64 = 43.0;
const REFERENCE_BANDWIDTH_HZ: f64 = 1.4e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Edge = 0,
    Pose = 1,
    Segmentation = 2,
    Depth = 3,
    Text = 4,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Edge,
        Modality::Pose,
        Modality::Segmentation,
        Modality::Depth,
        Modality::Text,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Modality> {
        Self::ALL.get(i).copied()
    }

    /// Lower-case wire name used in LLM requests/replies and config keys.
    pub fn name(self) -> &'static str {
        match self {
            Modality::Edge => "edge",
            Modality::Pose => "pose",
            Modality::Segmentation => "segmentation",
            Modality::Depth => "depth",
            Modality::Text => "text",
        }
    }

    fn bit(self) -> u8 {
        1 << self.ordinal()
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown modality `{s}`")))
    }
}

/// Nominal size of one encoded modality artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalitySpec {
    pub modality: Modality,
    pub nominal_payload_bytes: u64,
}

/// Payload sizes for all five modalities, indexed by ordinal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadTable([u64; 5]);

impl PayloadTable {
    pub fn new(bytes: [u64; 5]) -> Result<Self> {
        if let Some(m) = Modality::ALL.into_iter().find(|m| bytes[m.ordinal()] == 0) {
            return Err(Error::InvalidInput(format!("payload for {m} must be positive")));
        }
        Ok(Self(bytes))
    }

    pub fn bytes(&self, m: Modality) -> u64 {
        self.0[m.ordinal()]
    }

    pub fn set(&mut self, m: Modality, bytes: u64) -> Result<()> {
        if bytes == 0 {
            return Err(Error::InvalidInput(format!("payload for {m} must be positive")));
        }
        self.0[m.ordinal()] = bytes;
        Ok(())
    }

    pub fn specs(&self) -> Vec<ModalitySpec> {
        Modality::ALL
            .into_iter()
            .map(|modality| ModalitySpec { modality, nominal_payload_bytes: self.bytes(modality) })
            .collect()
    }

    /// Total payload of a selection.
    pub fn total(&self, mask: ModalityMask) -> u64 {
        mask.iter().map(|m| self.bytes(m)).sum()
    }
}

impl Default for PayloadTable {
    fn default() -> Self {
        // Text is 384 f32 values.
        Self([25_000, 2_000, 40_000, 60_000, (EMBEDDING_DIM * 4) as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskCategory {
    Scenery = 0,
    HumanCentric = 1,
    IndoorObjects = 2,
    DynamicScene = 3,
}

impl TaskCategory {
    pub const ALL: [TaskCategory; 4] = [
        TaskCategory::Scenery,
        TaskCategory::HumanCentric,
        TaskCategory::IndoorObjects,
        TaskCategory::DynamicScene,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskCategory::Scenery => "scenery",
            TaskCategory::HumanCentric => "human_centric",
            TaskCategory::IndoorObjects => "indoor_objects",
            TaskCategory::DynamicScene => "dynamic_scene",
        }
    }
}

impl fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown task category `{s}`")))
    }
}

/// Task-side context of one request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskContext {
    pub category: TaskCategory,
    pub priority: u8,
    pub latency_tolerance_ms: f64,
    /// Informational only; never constrains the gate.
    pub bandwidth_requirement_bps: f64,
    pub fidelity_threshold: f64,
}

impl TaskContext {
    pub fn new(
        category: TaskCategory,
        priority: u8,
        latency_tolerance_ms: f64,
        bandwidth_requirement_bps: f64,
        fidelity_threshold: f64,
    ) -> Result<Self> {
        if !(1..=3).contains(&priority) {
            return Err(Error::InvalidInput(format!("priority {priority} outside 1..=3")));
        }
        if !(latency_tolerance_ms > 0.0) {
            return Err(Error::InvalidInput("latency tolerance must be positive".into()));
        }
        if !(bandwidth_requirement_bps >= 0.0) {
            return Err(Error::InvalidInput("bandwidth requirement must be nonnegative".into()));
        }
        if !(fidelity_threshold > 0.0 && fidelity_threshold <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "fidelity threshold {fidelity_threshold} outside (0, 1]"
            )));
        }
        Ok(Self {
            category,
            priority,
            latency_tolerance_ms,
            bandwidth_requirement_bps,
            fidelity_threshold,
        })
    }
}

/// Link-side context observed at decision time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommContext {
    pub bandwidth_hz: f64,
    pub mean_snr_db: f64,
    pub instantaneous_snr_db: f64,
    pub power_gain: f64,
}

/// Selected modalities as a 5-bit mask; bit `i` is the modality with ordinal `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ModalityMask(u8);

impl ModalityMask {
    pub const EMPTY: ModalityMask = ModalityMask(0);
    pub const FULL: ModalityMask = ModalityMask(0b1_1111);

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits > Self::FULL.0 {
            return Err(Error::InvalidInput(format!("mask {bits} outside [0, 31]")));
        }
        Ok(Self(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn with(self, m: Modality) -> Self {
        Self(self.0 | m.bit())
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Selected modalities in ordinal order.
    pub fn iter(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    /// All 31 nonempty masks in increasing order.
    pub fn nonempty() -> impl Iterator<Item = ModalityMask> {
        (1..=Self::FULL.0).map(ModalityMask)
    }
}

impl FromIterator<Modality> for ModalityMask {
    fn from_iter<I: IntoIterator<Item = Modality>>(iter: I) -> Self {
        iter.into_iter().fold(Self::EMPTY, |acc, m| acc.with(m))
    }
}

impl fmt::Display for ModalityMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(Modality::name).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// Identifier of a modality-specific expert encoder (1:1 with modalities).
pub type ExpertId = Modality;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatingDecision {
    pub selection_mask: ModalityMask,
    pub activated_experts: BTreeSet<ExpertId>,
    pub rationale: Option<String>,
}

impl GatingDecision {
    pub fn from_mask(mask: ModalityMask) -> Self {
        Self { selection_mask: mask, activated_experts: mask.iter().collect(), rationale: None }
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = Some(rationale.into());
        self
    }
}

impl FromIterator<Modality> for GatingDecision {
    fn from_iter<I: IntoIterator<Item = Modality>>(iter: I) -> Self {
        Self::from_mask(iter.into_iter().collect())
    }
}

pub fn encode_action_index(decision: &GatingDecision) -> usize {
    decision.selection_mask.bits() as usize
}

pub fn decode_action_index(index: usize) -> Result<GatingDecision> {
    let bits = u8::try_from(index)
        .ok()
        .filter(|b| *b <= ModalityMask::FULL.bits())
        .ok_or_else(|| Error::InvalidInput(format!("action index {index} outside [0, 31]")))?;
    Ok(GatingDecision::from_mask(ModalityMask(bits)))
}

/// Normalized Q-network input.
///
/// Layout: category one-hot (4), priority/3, threshold, latency/1000 ms,
/// SNR mapped from [-13, 30] dB onto [0, 1], bandwidth relative to 1.4 MHz.
/// With `context_blind` the two channel features are zeroed.
pub fn build_state_vector(
    task: &TaskContext,
    comm: &CommContext,
    context_blind: bool,
) -> [f64; STATE_DIM] {
    let mut s = [0.0; STATE_DIM];
    s[task.category.ordinal()] = 1.0;
    s[4] = f64::from(task.priority) / 3.0;
    s[5] = task.fidelity_threshold;
    s[6] = task.latency_tolerance_ms / 1000.0;
    if !context_blind {
        s[7] = (comm.instantaneous_snr_db - SNR_FLOOR_DB) / SNR_SPAN_DB;
        s[8] = comm.bandwidth_hz / REFERENCE_BANDWIDTH_HZ;
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRecord {
    pub prompt_id: usize,
    pub category: TaskCategory,
    pub text: String,
    pub embedding: Vec<f64>,
}

/// FNV-1a, 64-bit.
fn stable_hash(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic unit-norm stand-in for a sentence embedding.
pub fn pseudo_embed(text: &str) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Err(Error::InvalidInput("cannot embed an empty string".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(text.as_bytes()));
    let mut v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

struct TemplateBank {
    templates: [&'static str; 5],
    fillers: [&'static str; 5],
}

fn template_bank(category: TaskCategory) -> TemplateBank {
    match category {
        TaskCategory::Scenery => TemplateBank {
            templates: [
                "A wide view of {} under a clear morning sky",
                "Golden hour light falling across {}",
                "A misty panorama of {} seen from a ridge",
                "An aerial photograph of {} in late autumn",
                "A quiet evening scene of {} after the rain",
            ],
            fillers: [
                "snow-capped mountains",
                "a coastal cliff",
                "rolling green hills",
                "a desert canyon",
                "a pine forest lake",
            ],
        },
        TaskCategory::HumanCentric => TemplateBank {
            templates: [
                "A full-body portrait of {} standing upright",
                "A candid shot of {} mid-stride",
                "{} raising both arms toward the camera",
                "A side profile of {} seated on a bench",
                "{} balancing on one leg in a studio",
            ],
            fillers: [
                "a ballet dancer",
                "an elderly gardener",
                "a street musician",
                "a yoga instructor",
                "a child in a raincoat",
            ],
        },
        TaskCategory::IndoorObjects => TemplateBank {
            templates: [
                "A close-up of {} on a wooden table",
                "{} arranged neatly on a kitchen shelf",
                "A dimly lit room featuring {} in the corner",
                "Studio lighting on {} against a white wall",
                "An overhead view of {} on a tiled floor",
            ],
            fillers: [
                "a ceramic teapot",
                "a stack of old books",
                "a brass desk lamp",
                "a potted fern",
                "a leather armchair",
            ],
        },
        TaskCategory::DynamicScene => TemplateBank {
            templates: [
                "A motion-blurred shot of {} at dusk",
                "{} captured during a sudden downpour",
                "A long exposure of {} crossing a bridge",
                "A frozen moment of {} at full speed",
                "A crowded street where {} weaves through traffic",
            ],
            fillers: [
                "a cyclist",
                "a galloping horse",
                "a commuter train",
                "a skateboarder",
                "a flock of pigeons",
            ],
        },
    }
}

/// Builds the 100-prompt corpus (25 per category). The seed only permutes
/// which prompt receives which id.
pub fn generate_prompt_corpus(seed: u64) -> Vec<PromptRecord> {
    let mut entries = Vec::with_capacity(CORPUS_SIZE);
    for category in TaskCategory::ALL {
        let bank = template_bank(category);
        for template in bank.templates {
            for filler in bank.fillers {
                let text = template.replacen("{}", filler, 1);
                let text = capitalize(&text);
                entries.push((category, text));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entries.shuffle(&mut rng);
    entries
        .into_iter()
        .enumerate()
        .map(|(prompt_id, (category, text))| {
            let embedding = pseudo_embed(&text).expect("templates are nonempty");
            PromptRecord { prompt_id, category, text, embedding }
        })
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Writes the corpus as CSV: `prompt_id,category,text,e0..e383`.
pub fn write_corpus_csv<W: Write>(corpus: &[PromptRecord], mut out: W) -> io::Result<()> {
    write!(out, "prompt_id,category,text")?;
    for i in 0..EMBEDDING_DIM {
        write!(out, ",e{i}")?;
    }
    out.write_all(b"\n")?;
    for rec in corpus {
        write!(out, "{},{},\"{}\"", rec.prompt_id, rec.category, rec.text.replace('"', "\"\""))?;
        for x in &rec.embedding {
            write!(out, ",{x}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}
