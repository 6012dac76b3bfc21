//! Gating policies that do not learn: the LLM gate (a deterministic mock
//! and an HTTP chat-completion client), and the greedy and random baselines.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::channel::{shannon_rate, slot_byte_budget};
use crate::domain::{CommContext, GatingDecision, Modality, ModalityMask, PayloadTable, TaskContext};
use crate::error::{Error, Result};
use crate::fidelity::{FidelityModel, UtilityMatrix};
use crate::rng::Stream;

/// Predicted-quality margin above the threshold at which the mock stops adding.
pub const MOCK_STOP_MARGIN: f64 = 0.05;

/// A gate maps the current task and link context to a modality selection.
pub trait GatePolicy {
    fn name(&self) -> &str;

    /// Never returns the empty mask. Errors only for gates backed by an
    /// external service.
    fn decide(&self, task: &TaskContext, comm: &CommContext, rng: &mut Stream) -> Result<GatingDecision>;
}

fn estimated_budget(comm: &CommContext, slot_ms: f64) -> u64 {
    slot_byte_budget(shannon_rate(comm.bandwidth_hz, comm.instantaneous_snr_db), slot_ms)
}

/// Modalities ordered by utility per byte, highest first; ties by ordinal.
fn by_density(task: &TaskContext, matrix: &UtilityMatrix, payloads: &PayloadTable) -> Vec<Modality> {
    let density = |m: Modality| matrix.utility(task.category, m) / payloads.bytes(m) as f64;
    let mut order = Modality::ALL.to_vec();
    order.sort_by(|a, b| density(*b).total_cmp(&density(*a)).then(a.cmp(b)));
    order
}

/// Rule-based stand-in for LLM reasoning.
///
/// Greedily adds modalities by utility density, each round taking the
/// densest remaining modality that raises predicted quality at the
/// decision-time budget. Stops once predicted quality clears
/// `θ + MOCK_STOP_MARGIN` or no addition helps. If the result still predicts
/// below θ, only the densest modality is sent.
pub fn mock_llm_select(
    task: &TaskContext,
    comm: &CommContext,
    matrix: &UtilityMatrix,
    payloads: &PayloadTable,
    slot_ms: f64,
) -> GatingDecision {
    let budget = estimated_budget(comm, slot_ms);
    let model = FidelityModel { matrix: matrix.clone(), payloads: payloads.clone(), ..Default::default() };
    let order = by_density(task, matrix, payloads);
    let target = task.fidelity_threshold + MOCK_STOP_MARGIN;

    let mut selection = ModalityMask::EMPTY;
    let mut predicted = 0.0;
    while predicted < target {
        let next = order
            .iter()
            .filter(|m| !selection.contains(**m))
            .map(|m| (selection.with(*m), model.predicted_quality(task.category, selection.with(*m), budget)))
            .find(|(_, q)| *q > predicted);
        match next {
            Some((mask, q)) => {
                selection = mask;
                predicted = q;
            }
            None => break,
        }
    }
    if selection.is_empty() || predicted < task.fidelity_threshold {
        selection = ModalityMask::EMPTY.with(order[0]);
    }
    GatingDecision::from_mask(selection)
}

/// Channel-blind baseline: the three highest-utility modalities for the
/// task category, ties broken by lower ordinal.
pub fn greedy_select(task: &TaskContext, matrix: &UtilityMatrix) -> GatingDecision {
    let mut order = Modality::ALL.to_vec();
    order.sort_by(|a, b| {
        matrix
            .utility(task.category, *b)
            .total_cmp(&matrix.utility(task.category, *a))
            .then(a.cmp(b))
    });
    order.into_iter().take(3).collect()
}

/// Uniform over the 31 nonempty masks.
pub fn random_select(rng: &mut Stream) -> GatingDecision {
    let bits: u8 = rng.random_range(1..=ModalityMask::FULL.bits());
    GatingDecision::from_mask(ModalityMask::from_bits(bits).expect("in range"))
}

#[derive(Debug, Clone)]
pub struct MockLlmGate {
    pub model: FidelityModel,
    pub slot_ms: f64,
}

impl GatePolicy for MockLlmGate {
    fn name(&self) -> &str {
        "mock_llm"
    }

    fn decide(&self, task: &TaskContext, comm: &CommContext, _rng: &mut Stream) -> Result<GatingDecision> {
        Ok(mock_llm_select(task, comm, &self.model.matrix, &self.model.payloads, self.slot_ms))
    }
}

#[derive(Debug, Clone)]
pub struct GreedyGate {
    pub matrix: UtilityMatrix,
}

impl GatePolicy for GreedyGate {
    fn name(&self) -> &str {
        "greedy"
    }

    fn decide(&self, task: &TaskContext, _comm: &CommContext, _rng: &mut Stream) -> Result<GatingDecision> {
        Ok(greedy_select(task, &self.matrix))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomGate;

impl GatePolicy for RandomGate {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&self, _task: &TaskContext, _comm: &CommContext, rng: &mut Stream) -> Result<GatingDecision> {
        Ok(random_select(rng))
    }
}

// ---------------------------------------------------------------------------
// External LLM gate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct LlmGateConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub api_key_env_var: String,
}

impl Default for LlmGateConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model_name: "gpt-4o-mini".into(),
            timeout_ms: 10_000,
            max_retries: 1,
            api_key_env_var: "LLM_API_KEY".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completion request body.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlmRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl LlmRequest {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

/// The reply format demanded from the model.
pub fn reply_schema_description() -> String {
    let names: Vec<_> = Modality::ALL.iter().map(|m| format!("\"{}\"", m.name())).collect();
    format!(
        "Reply with exactly one JSON object and nothing else: \
         {{\"modalities\": [<one or more of {}>], \"rationale\": <short string>}}.",
        names.join(", ")
    )
}

#[derive(Serialize)]
struct ContextPayload {
    category: &'static str,
    priority: u8,
    fidelity_threshold: f64,
    latency_tolerance_ms: f64,
    snr_db: f64,
    bandwidth_hz: f64,
    byte_budget_estimate: u64,
}

/// Builds the request for one gating decision. Pure in its inputs.
pub fn llm_request_build(
    task: &TaskContext,
    comm: &CommContext,
    model: &FidelityModel,
    slot_ms: f64,
    model_name: &str,
) -> LlmRequest {
    let mut system = String::from(
        "You are the gating controller of a semantic communication link. \
         Choose which semantic modalities to transmit so the receiver's \
         reconstruction quality meets the fidelity threshold within the byte \
         budget of one slot. Sending more bytes than the budget compresses \
         every selected modality proportionally.\n\nPayload sizes (bytes):",
    );
    for spec in model.payloads.specs() {
        system.push_str(&format!(" {}={};", spec.modality.name(), spec.nominal_payload_bytes));
    }
    system.push_str("\nUtility by task category (edge, pose, segmentation, depth, text):");
    for c in crate::domain::TaskCategory::ALL {
        let row: Vec<_> = model.matrix.u[c.ordinal()].iter().map(|v| format!("{v}")).collect();
        system.push_str(&format!("\n  {c}: [{}]", row.join(", ")));
    }
    system.push_str(&format!(
        "\nQuality = min(1, sum of utilities * (budget/payload)^{}).\n",
        model.matrix.alpha
    ));
    system.push_str(&reply_schema_description());

    let ctx = ContextPayload {
        category: task.category.name(),
        priority: task.priority,
        fidelity_threshold: task.fidelity_threshold,
        latency_tolerance_ms: task.latency_tolerance_ms,
        snr_db: comm.instantaneous_snr_db,
        bandwidth_hz: comm.bandwidth_hz,
        byte_budget_estimate: estimated_budget(comm, slot_ms),
    };
    LlmRequest {
        model: model_name.to_string(),
        messages: vec![
            ChatMessage { role: "system".into(), content: system },
            ChatMessage {
                role: "user".into(),
                content: serde_json::to_string(&ctx).expect("plain data serializes"),
            },
        ],
        temperature: 0.0,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GateReply {
    modalities: Vec<String>,
    #[serde(default)]
    rationale: Option<String>,
}

/// Strict parse of the model's reply object.
pub fn llm_response_parse(body: &str) -> Result<GatingDecision> {
    let reply: GateReply = serde_json::from_str(body.trim())
        .map_err(|e| Error::GateUnavailable(format!("malformed reply: {e}")))?;
    if reply.modalities.is_empty() {
        return Err(Error::GateUnavailable("reply selects no modality".into()));
    }
    let mut mask = ModalityMask::EMPTY;
    for name in &reply.modalities {
        let m: Modality = name
            .parse()
            .map_err(|_| Error::GateUnavailable(format!("unknown modality `{name}`")))?;
        mask = mask.with(m);
    }
    let mut decision = GatingDecision::from_mask(mask);
    decision.rationale = reply.rationale;
    Ok(decision)
}

/// Renders a decision in the reply format accepted by [`llm_response_parse`].
pub fn llm_response_render(decision: &GatingDecision) -> String {
    let names: Vec<_> = decision.selection_mask.iter().map(Modality::name).collect();
    json!({ "modalities": names, "rationale": decision.rationale.clone().unwrap_or_default() }).to_string()
}

/// Pulls the assistant message out of a chat-completion response.
pub fn extract_chat_content(body: &str) -> Result<String> {
    let v: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| Error::GateUnavailable(format!("malformed completion: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::GateUnavailable("completion has no message content".into()))
}

/// LLM gate backed by an HTTP chat-completion endpoint.
pub struct ExternalLlmGate {
    config: LlmGateConfig,
    model: FidelityModel,
    slot_ms: f64,
    agent: ureq::Agent,
}

impl ExternalLlmGate {
    pub fn new(config: LlmGateConfig, model: FidelityModel, slot_ms: f64) -> Result<Self> {
        if config.timeout_ms == 0 {
            return Err(Error::Config("llm.timeout_ms must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(Self { config, model, slot_ms, agent })
    }

    fn call_once(&self, body: &str) -> Result<GatingDecision> {
        let mut req = self.agent.post(&self.config.endpoint_url).header("Content-Type", "application/json");
        if let Ok(key) = std::env::var(&self.config.api_key_env_var) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| Error::GateUnavailable(format!("request failed: {e}")))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::GateUnavailable(format!("reading reply: {e}")))?;
        llm_response_parse(&extract_chat_content(&text)?)
    }
}

impl GatePolicy for ExternalLlmGate {
    fn name(&self) -> &str {
        "external_llm"
    }

    fn decide(&self, task: &TaskContext, comm: &CommContext, _rng: &mut Stream) -> Result<GatingDecision> {
        let body = llm_request_build(task, comm, &self.model, self.slot_ms, &self.config.model_name).to_json();
        let mut last_err = None;
        for attempt in 0..=self.config.max_retries {
            match self.call_once(&body) {
                Ok(d) => return Ok(d),
                Err(e) => {
                    log::debug!("llm gate attempt {attempt} failed: {e}");
                    last_err = Some(e);
                }
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}
