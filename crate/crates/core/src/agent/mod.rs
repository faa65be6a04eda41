//! Observe, plan, act.
//!
//! Each step renders the current page, assembles a planning context from the
//! persona, the episodic memory and the observation, asks a policy for a
//! decision and executes it against the storefront. Guardrails bound every
//! session: step and wall-clock budgets, repeated-action detection and
//! policy retry exhaustion.

mod heuristic;
mod remote_policy;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clickstream::{Event, EventKind, Session};
use crate::persona::{allocate, BuyerArchetype, Persona, PersonaMode};
use crate::seeding::derive_seed;
use crate::storefront::{
    execute, render_ax_tree, Action, AxNode, AxRole, BrowserState, EmittedEvent,
    Outcome, PageKind, PageState, StoreSpec,
};

pub use heuristic::{HeuristicPolicy, HeuristicWeights, ProductView};
pub use remote_policy::{decision_schema, RemoteModelPolicy};

pub const LOG_SCHEMA_VERSION: u32 = 1;
pub const DIGEST_ELEMENTS: usize = 20;

pub const GUARDRAIL_NOTICE: &str = "Allowed actions: click(target_ref), navigate(path), search(query), \
add_to_cart(target_ref), go_back, or terminate. Only reference ref ids present on the current page. \
Repeating the same action on the same page ends the session.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub url: String,
    pub ax_tree: AxNode,
    /// Screenshots are not produced by the simulated storefront.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_payload: Option<Vec<u8>>,
    pub step_index: usize,
}

/// The persona as the shopper sees it under a given persona mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub persona_id: String,
    pub shop_id: String,
    pub cluster_id: usize,
    pub mode: PersonaMode,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guide: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archetype: Option<BuyerArchetype>,
    pub prompt: String,
}

impl AgentProfile {
    pub fn from_persona(p: &Persona, mode: PersonaMode) -> Self {
        let guide = (mode != PersonaMode::ProductOnly).then(|| p.intent.purchase_decision_guide.clone());
        let archetype = (mode == PersonaMode::FullPersona).then(|| p.archetype.clone());
        let prompt = match mode {
            PersonaMode::FullPersona => p.prompt.clone(),
            _ => crate::persona::render_prompt(crate::persona::PromptParts {
                target: &p.intent.product_target,
                guide: guide.as_deref(),
                archetype: None,
                prefs: None,
            }),
        };
        Self {
            persona_id: p.persona_id.clone(),
            shop_id: p.shop_id.clone(),
            cluster_id: p.cluster_id,
            mode,
            target: p.intent.product_target.clone(),
            guide,
            archetype,
            prompt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationDigest {
    pub url: String,
    pub page_kind: Option<PageKind>,
    pub title: String,
    pub elements: Vec<String>,
}

impl ObservationDigest {
    pub fn of(obs: &ObservationRecord) -> Self {
        let nodes = obs.ax_tree.walk();
        let title = nodes
            .iter()
            .find(|n| n.role == AxRole::Heading)
            .map(|n| n.name.clone())
            .unwrap_or_default();
        let elements = nodes
            .iter()
            .filter(|n| !n.name.is_empty() && n.ref_id != obs.ax_tree.ref_id)
            .take(DIGEST_ELEMENTS)
            .map(|n| format!("{:?} {}", n.role, n.name).to_lowercase())
            .collect();
        Self {
            url: obs.url.clone(),
            page_kind: PageState::route(&obs.url).map(|p| p.kind),
            title,
            elements,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub step_index: usize,
    pub observation_digest: ObservationDigest,
    pub reasoning: String,
    pub action: Action,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub emitted_events: Vec<EmittedEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanningContext<'a> {
    pub goal: String,
    pub persona: &'a AgentProfile,
    pub memory_view: &'a [MemoryEntry],
    pub observation: &'a ObservationRecord,
    pub guardrail_notice: &'static str,
    /// Per-session seed; policies draw any randomness from it.
    pub seed: u64,
}

pub fn assemble_context<'a>(
    persona: &'a AgentProfile,
    memory: &'a [MemoryEntry],
    observation: &'a ObservationRecord,
    memory_enabled: bool,
    seed: u64,
) -> PlanningContext<'a> {
    let goal = match &persona.guide {
        Some(g) => format!("Shop for {}. {g}", persona.target),
        None => format!("Shop for {}.", persona.target),
    };
    PlanningContext {
        goal,
        persona,
        memory_view: if memory_enabled { memory } else { &[] },
        observation,
        guardrail_notice: GUARDRAIL_NOTICE,
        seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub reasoning: String,
    pub terminate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
}

impl Decision {
    pub fn act(action: Action, reasoning: impl Into<String>) -> Self {
        Self {
            reasoning: reasoning.into(),
            terminate: false,
            action: Some(action),
        }
    }

    pub fn stop(reasoning: impl Into<String>) -> Self {
        Self {
            reasoning: reasoning.into(),
            terminate: true,
            action: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match (self.terminate, &self.action) {
            (true, Some(_)) => Err("terminate is true but an action was also given".into()),
            (false, None) => Err("terminate is false but no action was given".into()),
            (false, Some(a)) => a.check(),
            (true, None) => Ok(()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy failed after {attempts} attempts: {last}")]
    Failure { attempts: usize, last: String },
}

pub trait DecisionPolicy: Send + Sync {
    fn decide(&self, ctx: &PlanningContext<'_>) -> Result<Decision, PolicyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuardrailConfig {
    pub max_steps: usize,
    pub max_wall_ms: u64,
    pub loop_window: usize,
    pub max_model_retries: usize,
}

impl Default for GuardrailConfig {
    fn default() -> Self {
        Self {
            max_steps: 30,
            max_wall_ms: 120_000,
            loop_window: 3,
            max_model_retries: 2,
        }
    }
}

impl GuardrailConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 || self.max_wall_ms == 0 || self.loop_window < 2 {
            return Err("max_steps and max_wall_ms must be positive and loop_window at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Control,
    Treatment,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Control => "control",
            Variant::Treatment => "treatment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    PolicyTerminate,
    StepBudget,
    TimeBudget,
    LoopGuardrail,
    RetryExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub schema_version: u32,
    pub persona_id: String,
    pub cluster_id: usize,
    pub agent_index: usize,
    pub shop_id: String,
    pub variant: Variant,
    pub trial: u32,
    pub seed: u64,
    pub steps: Vec<MemoryEntry>,
    pub a2c: bool,
    pub termination_reason: TerminationReason,
}

impl SessionLog {
    pub fn session_id(&self) -> String {
        format!("{}-a{}-{}-t{}", self.persona_id, self.agent_index, self.variant.as_str(), self.trial)
    }

    /// Replays the log as a clickstream session: a landing page view, then
    /// every emitted event, one second apart.
    pub fn to_session(&self) -> Session {
        let id = self.session_id();
        let event = |i: usize, kind, product_ref, value| Event {
            session_id: id.clone(),
            buyer_id: self.persona_id.clone(),
            shop_id: self.shop_id.clone(),
            ts_ms: i as u64 * 1000,
            kind,
            product_ref,
            value,
        };
        let mut events = vec![event(0, EventKind::PageView, None, None)];
        for step in &self.steps {
            for e in &step.emitted_events {
                events.push(event(step.step_index + 1, e.kind, e.product_ref.clone(), e.value));
            }
        }
        Session {
            id: id.clone(),
            shop_id: self.shop_id.clone(),
            buyer_id: self.persona_id.clone(),
            events,
        }
    }
}

/// True when the last `window` steps repeat one action on one page.
pub fn detect_loop(memory: &[MemoryEntry], window: usize) -> bool {
    if window < 2 || memory.len() < window {
        return false;
    }
    let tail = &memory[memory.len() - window..];
    let first = &tail[0];
    tail.iter().all(|e| {
        e.action.kind == first.action.kind
            && e.action.target_ref == first.action.target_ref
            && e.action.args == first.action.args
            && e.observation_digest.url == first.observation_digest.url
    })
}

pub struct SessionParams<'a> {
    pub profile: &'a AgentProfile,
    pub spec: &'a StoreSpec,
    pub variant: Variant,
    pub trial: u32,
    pub agent_index: usize,
    pub seed: u64,
    pub guardrails: &'a GuardrailConfig,
    pub memory_enabled: bool,
}

pub fn run_session(policy: &dyn DecisionPolicy, p: &SessionParams<'_>) -> SessionLog {
    let started = Instant::now();
    let wall = Duration::from_millis(p.guardrails.max_wall_ms);
    let mut state = BrowserState::start();
    let mut memory: Vec<MemoryEntry> = Vec::new();
    let reason = loop {
        if memory.len() >= p.guardrails.max_steps {
            break TerminationReason::StepBudget;
        }
        if started.elapsed() >= wall {
            break TerminationReason::TimeBudget;
        }
        let ax_tree = match render_ax_tree(p.spec, &state) {
            Ok(t) => t,
            Err(e) => {
                log::error!("render failed on {}: {e}", state.page.url);
                break TerminationReason::RetryExhausted;
            }
        };
        let observation = ObservationRecord {
            url: state.page.url.clone(),
            ax_tree,
            image_payload: None,
            step_index: memory.len(),
        };
        let decision = {
            let ctx = assemble_context(p.profile, &memory, &observation, p.memory_enabled, p.seed);
            policy.decide(&ctx)
        };
        let decision = match decision {
            Ok(d) => d,
            Err(e) => {
                log::warn!("{}: {e}", p.profile.persona_id);
                break TerminationReason::RetryExhausted;
            }
        };
        let digest = ObservationDigest::of(&observation);
        if decision.terminate {
            memory.push(MemoryEntry {
                step_index: observation.step_index,
                observation_digest: digest,
                reasoning: decision.reasoning,
                action: Action::terminate(),
                outcome: Outcome::Ok,
                emitted_events: Vec::new(),
                error_detail: None,
            });
            break TerminationReason::PolicyTerminate;
        }
        let action = decision.action.unwrap_or_else(Action::terminate);
        let result = execute(p.spec, &state, &action);
        memory.push(MemoryEntry {
            step_index: observation.step_index,
            observation_digest: digest,
            reasoning: decision.reasoning,
            action,
            outcome: result.outcome,
            emitted_events: result.emitted_events,
            error_detail: result.error_detail,
        });
        state = result.new_state;
        if detect_loop(&memory, p.guardrails.loop_window) {
            break TerminationReason::LoopGuardrail;
        }
    };
    let a2c = memory
        .iter()
        .any(|m| m.emitted_events.iter().any(|e| e.kind == EventKind::AddToCart));
    SessionLog {
        schema_version: LOG_SCHEMA_VERSION,
        persona_id: p.profile.persona_id.clone(),
        cluster_id: p.profile.cluster_id,
        agent_index: p.agent_index,
        shop_id: p.spec.shop_id.clone(),
        variant: p.variant,
        trial: p.trial,
        seed: p.seed,
        steps: memory,
        a2c,
        termination_reason: reason,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub agents_per_shop: usize,
    pub trials: u32,
    pub master_seed: u64,
    pub guardrails: GuardrailConfig,
    pub memory_enabled: bool,
    pub mode: PersonaMode,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            agents_per_shop: 600,
            trials: 2,
            master_seed: 0,
            guardrails: GuardrailConfig::default(),
            memory_enabled: true,
            mode: PersonaMode::FullPersona,
        }
    }
}

/// One agent slot: which persona it plays and which replica of it this is.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSlot<'a> {
    pub agent_index: usize,
    pub persona: &'a Persona,
    pub replica: usize,
}

/// Spreads the agent budget over clusters by session mass, then cycles
/// through each cluster's personas.
pub fn allocate_agents(personas: &[Persona], agents: usize) -> Vec<AgentSlot<'_>> {
    let mut by_cluster: BTreeMap<usize, Vec<&Persona>> = BTreeMap::new();
    for p in personas {
        by_cluster.entry(p.cluster_id).or_default().push(p);
    }
    for list in by_cluster.values_mut() {
        list.sort_by(|a, b| a.persona_id.cmp(&b.persona_id));
    }
    let masses: Vec<(usize, usize)> = by_cluster.iter().map(|(c, ps)| (*c, ps[0].cluster_mass)).collect();
    let mut slots = Vec::with_capacity(agents);
    for (cluster, n) in allocate(agents, &masses) {
        let list = &by_cluster[&cluster];
        for i in 0..n {
            slots.push(AgentSlot {
                agent_index: slots.len(),
                persona: list[i % list.len()],
                replica: i / list.len(),
            });
        }
    }
    slots
}

/// Runs every agent against both variants for every trial.
///
/// Logs come back sorted by agent, trial and variant regardless of how the
/// work was scheduled.
pub fn run_cohort(
    personas: &[Persona],
    control: &StoreSpec,
    treatment: &StoreSpec,
    policy: &dyn DecisionPolicy,
    cfg: &CohortConfig,
) -> Vec<SessionLog> {
    let slots = allocate_agents(personas, cfg.agents_per_shop);
    let profiles: Vec<AgentProfile> = slots
        .iter()
        .map(|s| AgentProfile::from_persona(s.persona, cfg.mode))
        .collect();
    let mut jobs = Vec::new();
    for (i, slot) in slots.iter().enumerate() {
        for trial in 0..cfg.trials {
            for variant in [Variant::Control, Variant::Treatment] {
                jobs.push((i, slot, trial, variant));
            }
        }
    }
    jobs.par_iter()
        .map(|&(i, slot, trial, variant)| {
            let seed = derive_seed(
                cfg.master_seed,
                &[
                    &slot.persona.persona_id,
                    &slot.replica.to_string(),
                    variant.as_str(),
                    &trial.to_string(),
                ],
            );
            let spec = match variant {
                Variant::Control => control,
                Variant::Treatment => treatment,
            };
            run_session(
                policy,
                &SessionParams {
                    profile: &profiles[i],
                    spec,
                    variant,
                    trial,
                    agent_index: slot.agent_index,
                    seed,
                    guardrails: &cfg.guardrails,
                    memory_enabled: cfg.memory_enabled,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests;
