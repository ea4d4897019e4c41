//! Training-protocol state machine.
//!
//! The teacher sends [`TeacherMessage`]s; every accepted message yields one
//! [`AgentMessage`] and two transcript events. Rejected messages leave the
//! session untouched.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::htn::{HtnError, KnowledgeBase, MethodKey, TaskName};
use crate::layout::{LayoutError, LayoutNode, LayoutTree, NodeKind};
use crate::learner::{
    integrate_demonstration, integrate_feedback, Demonstration, Directive, LearnError, Verdict,
};
use crate::planner::{attempt_excluding, explain_trace, Attempt, FieldAction, Plan, PlanError};
use crate::value::Value;
use crate::wm::{TutorState, WmError, WorkingMemory};

pub const TRANSCRIPT_SCHEMA: u32 = 1;

/// Task label offered for a done-button demonstration.
pub const DONE_LABEL: &str = "done";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Setup,
    /// Transient: the agent is planning. Never observed between messages.
    AgentTurn,
    AwaitingDemo,
    AwaitingLabel,
    AwaitingFeedback,
    AwaitingDoneConfirm,
    ProblemComplete,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Setup,
        Phase::AgentTurn,
        Phase::AwaitingDemo,
        Phase::AwaitingLabel,
        Phase::AwaitingFeedback,
        Phase::AwaitingDoneConfirm,
        Phase::ProblemComplete,
    ];

    /// Teacher message kinds accepted in this phase.
    pub fn legal_messages(self) -> &'static [&'static str] {
        const EDITS: [&str; 3] = ["insert-node", "delete-node", "reorder-node"];
        match self {
            Phase::Setup => &[
                "set-field",
                "start-problem",
                "reset",
                EDITS[0],
                EDITS[1],
                EDITS[2],
            ],
            Phase::ProblemComplete => &["set-field", "reset", EDITS[0], EDITS[1], EDITS[2]],
            Phase::AgentTurn => &["reset"],
            Phase::AwaitingDemo => &["demonstrate", "done-button", "reset"],
            Phase::AwaitingLabel => &["label", "reset"],
            Phase::AwaitingFeedback => &["feedback", "done-button", "reset"],
            Phase::AwaitingDoneConfirm => &["confirm-done", "reset"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::AgentTurn => "agent-turn",
            Phase::AwaitingDemo => "awaiting-demo",
            Phase::AwaitingLabel => "awaiting-label",
            Phase::AwaitingFeedback => "awaiting-feedback",
            Phase::AwaitingDoneConfirm => "awaiting-done-confirm",
            Phase::ProblemComplete => "problem-complete",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TeacherMessage {
    SetField {
        field: String,
        value: Value,
    },
    StartProblem,
    Demonstrate {
        field: String,
        value: Value,
    },
    Label {
        text: String,
    },
    Feedback {
        correct: bool,
    },
    ConfirmDone {
        correct: bool,
    },
    DoneButton,
    Reset,
    InsertNode {
        parent: String,
        index: usize,
        node: LayoutNode,
    },
    DeleteNode {
        id: String,
    },
    ReorderNode {
        id: String,
        parent: String,
        index: usize,
    },
}

impl TeacherMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            TeacherMessage::SetField { .. } => "set-field",
            TeacherMessage::StartProblem => "start-problem",
            TeacherMessage::Demonstrate { .. } => "demonstrate",
            TeacherMessage::Label { .. } => "label",
            TeacherMessage::Feedback { .. } => "feedback",
            TeacherMessage::ConfirmDone { .. } => "confirm-done",
            TeacherMessage::DoneButton => "done-button",
            TeacherMessage::Reset => "reset",
            TeacherMessage::InsertNode { .. } => "insert-node",
            TeacherMessage::DeleteNode { .. } => "delete-node",
            TeacherMessage::ReorderNode { .. } => "reorder-node",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AgentMessage {
    /// Reply to setup messages that need no agent decision.
    Acknowledged {
        phase: Phase,
    },
    RequestDemonstration {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        field: Option<String>,
    },
    RequestLabel {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        field: Option<String>,
        default_label: String,
    },
    AttemptedAction {
        field: String,
        value: Value,
        explanation: String,
        highlights: Vec<String>,
    },
    DoneQuery {
        explanation: String,
    },
    ProblemReset,
}

impl AgentMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            AgentMessage::Acknowledged { .. } => "acknowledged",
            AgentMessage::RequestDemonstration { .. } => "request-demonstration",
            AgentMessage::RequestLabel { .. } => "request-label",
            AgentMessage::AttemptedAction { .. } => "attempted-action",
            AgentMessage::DoneQuery { .. } => "done-query",
            AgentMessage::ProblemReset => "problem-reset",
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("`{got}` is not accepted in phase {phase}; expected one of: {}", expected.join(", "))]
    Protocol {
        phase: Phase,
        got: &'static str,
        expected: &'static [&'static str],
    },
    #[error("every field is empty; give the problem some values before starting")]
    SetupIncomplete,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Wm(#[from] WmError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("transcript: {0}")]
    Transcript(String),
}

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch.
    fn now_millis(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_millis(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// Always reports the same instant; keeps transcripts reproducible in tests.
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_millis(&self) -> u64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Actor {
    Teacher,
    Agent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub transcript: u32,
    pub layout: LayoutTree,
    /// The agent document the session started from.
    pub agent: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub seq: u64,
    pub timestamp: u64,
    pub actor: Actor,
    pub event: String,
    pub payload: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub events: Vec<TranscriptEvent>,
}

impl Transcript {
    fn new(layout: &LayoutTree, kb: &KnowledgeBase) -> Self {
        let agent = serde_json::from_str(&kb.to_json()).expect("agent document is JSON");
        Transcript {
            header: TranscriptHeader {
                transcript: TRANSCRIPT_SCHEMA,
                layout: layout.clone(),
                agent,
            },
            events: Vec::new(),
        }
    }

    pub fn header_line(&self) -> String {
        serde_json::to_string(&self.header).expect("header serializes")
    }

    pub fn event_line(event: &TranscriptEvent) -> String {
        serde_json::to_string(event).expect("event serializes")
    }

    /// One JSON object per line: the header, then every event.
    pub fn to_jsonl(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        for e in &self.events {
            out.push_str(&Self::event_line(e));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(doc: &str) -> Result<Self, SessionError> {
        let bad = |line: usize, e: serde_json::Error| {
            SessionError::Transcript(format!("line {line}: {e}"))
        };
        let mut lines = doc
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| SessionError::Transcript("missing header".into()))?;
        let header: TranscriptHeader = serde_json::from_str(first).map_err(|e| bad(1, e))?;
        if header.transcript != TRANSCRIPT_SCHEMA {
            return Err(SessionError::Transcript(format!(
                "unsupported schema {}",
                header.transcript
            )));
        }
        let events = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(i + 1, e)))
            .collect::<Result<_, _>>()?;
        Ok(Transcript { header, events })
    }

    pub fn initial_agent(&self) -> Result<KnowledgeBase, HtnError> {
        KnowledgeBase::from_json(&self.header.agent.to_string())
    }
}

#[derive(Clone, Debug)]
enum Pending {
    Attempt(Plan),
    Demo {
        action: FieldAction,
        wm: WorkingMemory,
        default_label: String,
    },
}

/// Everything a message may change; cloned per message so a failed message
/// leaves the session as it was.
#[derive(Clone)]
struct Core {
    layout: LayoutTree,
    kb: KnowledgeBase,
    state: TutorState,
    phase: Phase,
    pending: Option<Pending>,
    excluded: BTreeSet<MethodKey>,
}

pub struct Session {
    core: Core,
    transcript: Transcript,
    clock: Arc<dyn Clock>,
}

impl Session {
    pub fn new(layout: LayoutTree, kb: KnowledgeBase) -> Self {
        Self::with_clock(layout, kb, Arc::new(SystemClock))
    }

    pub fn with_clock(layout: LayoutTree, kb: KnowledgeBase, clock: Arc<dyn Clock>) -> Self {
        let transcript = Transcript::new(&layout, &kb);
        Session {
            core: Core {
                layout,
                kb,
                state: TutorState::new(),
                phase: Phase::Setup,
                pending: None,
                excluded: BTreeSet::new(),
            },
            transcript,
            clock,
        }
    }

    pub fn phase(&self) -> Phase {
        self.core.phase
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.core.kb
    }

    pub fn into_kb(self) -> KnowledgeBase {
        self.core.kb
    }

    pub fn layout(&self) -> &LayoutTree {
        &self.core.layout
    }

    pub fn tutor_state(&self) -> &TutorState {
        &self.core.state
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn start_problem(&mut self) -> Result<AgentMessage, SessionError> {
        self.step(TeacherMessage::StartProblem)
    }

    /// Applies one teacher message. Illegal or invalid messages return an
    /// error and change nothing, transcript included.
    pub fn step(&mut self, msg: TeacherMessage) -> Result<AgentMessage, SessionError> {
        let phase = self.core.phase;
        if !phase.legal_messages().contains(&msg.kind()) {
            return Err(SessionError::Protocol {
                phase,
                got: msg.kind(),
                expected: phase.legal_messages(),
            });
        }
        let mut core = self.core.clone();
        let reply = core.handle(&msg)?;
        self.core = core;
        self.record(
            Actor::Teacher,
            msg.kind(),
            serde_json::to_value(&msg).expect("message serializes"),
        );
        self.record(
            Actor::Agent,
            reply.kind(),
            serde_json::to_value(&reply).expect("message serializes"),
        );
        Ok(reply)
    }

    fn record(&mut self, actor: Actor, event: &str, payload: serde_json::Value) {
        let seq = self.transcript.events.len() as u64;
        self.transcript.events.push(TranscriptEvent {
            seq,
            timestamp: self.clock.now_millis(),
            actor,
            event: event.to_owned(),
            payload,
        });
    }
}

impl Core {
    fn handle(&mut self, msg: &TeacherMessage) -> Result<AgentMessage, SessionError> {
        match msg {
            TeacherMessage::SetField { field, value } => {
                self.require_input(field)?;
                if value.is_empty() {
                    self.state.remove(field);
                } else {
                    self.state.insert(field.clone(), value.clone());
                }
                self.phase = Phase::Setup;
                Ok(AgentMessage::Acknowledged { phase: self.phase })
            }
            TeacherMessage::StartProblem => {
                if self.state.values().all(Value::is_empty) {
                    return Err(SessionError::SetupIncomplete);
                }
                self.excluded.clear();
                self.agent_turn()
            }
            TeacherMessage::Demonstrate { field, value } => {
                self.require_input(field)?;
                if value.is_empty() {
                    return Err(SessionError::Invalid(format!(
                        "demonstration for `{field}` has no value"
                    )));
                }
                if self.state.get(field).is_some_and(|v| !v.is_empty()) {
                    return Err(SessionError::Invalid(format!(
                        "`{field}` already has a value"
                    )));
                }
                let wm = self.memory()?;
                self.state.insert(field.clone(), value.clone());
                let action = FieldAction::InputValue {
                    field: field.clone(),
                    value: value.clone(),
                };
                self.pending = Some(Pending::Demo {
                    action,
                    wm,
                    default_label: field.clone(),
                });
                self.phase = Phase::AwaitingLabel;
                Ok(AgentMessage::RequestLabel {
                    field: Some(field.clone()),
                    default_label: field.clone(),
                })
            }
            TeacherMessage::DoneButton => {
                let wm = self.memory()?;
                self.pending = Some(Pending::Demo {
                    action: FieldAction::ClickDone,
                    wm,
                    default_label: DONE_LABEL.into(),
                });
                self.phase = Phase::AwaitingLabel;
                Ok(AgentMessage::RequestLabel {
                    field: None,
                    default_label: DONE_LABEL.into(),
                })
            }
            TeacherMessage::Label { text } => {
                let Some(Pending::Demo {
                    action,
                    wm,
                    default_label,
                }) = self.pending.take()
                else {
                    return Err(SessionError::Invalid(
                        "no demonstration awaits a label".into(),
                    ));
                };
                let label = TaskName::or_default(text, &default_label);
                let done = action == FieldAction::ClickDone;
                integrate_demonstration(&mut self.kb, &Demonstration { action, label, wm })?;
                self.excluded.clear();
                if done {
                    self.finish(Phase::ProblemComplete);
                    return Ok(AgentMessage::ProblemReset);
                }
                self.agent_turn()
            }
            TeacherMessage::Feedback { correct } => self.feedback(*correct),
            TeacherMessage::ConfirmDone { correct: true } => {
                self.finish(Phase::ProblemComplete);
                Ok(AgentMessage::ProblemReset)
            }
            TeacherMessage::ConfirmDone { correct: false } => self.feedback(false),
            TeacherMessage::Reset => {
                self.finish(Phase::Setup);
                Ok(AgentMessage::ProblemReset)
            }
            TeacherMessage::InsertNode {
                parent,
                index,
                node,
            } => {
                self.layout.insert(parent, *index, node.clone())?;
                Ok(AgentMessage::Acknowledged { phase: self.phase })
            }
            TeacherMessage::DeleteNode { id } => {
                let mut layout = self.layout.clone();
                let removed = layout.delete(id)?;
                self.commit_layout(layout, &removed)?;
                Ok(AgentMessage::Acknowledged { phase: self.phase })
            }
            TeacherMessage::ReorderNode { id, parent, index } => {
                self.layout.reorder(id, parent, *index)?;
                Ok(AgentMessage::Acknowledged { phase: self.phase })
            }
        }
    }

    fn commit_layout(
        &mut self,
        layout: LayoutTree,
        removed: &LayoutNode,
    ) -> Result<(), SessionError> {
        let referenced = self.kb.field_references();
        let mut gone = Vec::new();
        collect_fields(removed, &mut gone);
        let clash: Vec<&str> = gone
            .iter()
            .map(String::as_str)
            .filter(|f| referenced.contains(*f))
            .collect();
        if !clash.is_empty() {
            return Err(SessionError::Invalid(format!(
                "the agent still refers to {}",
                clash.join(", ")
            )));
        }
        for f in &gone {
            self.state.remove(f);
        }
        self.layout = layout;
        Ok(())
    }

    fn require_input(&self, field: &str) -> Result<(), SessionError> {
        match self.layout.fields().into_iter().find(|f| f.name == field) {
            Some(f) if f.kind == NodeKind::Input => Ok(()),
            _ => Err(SessionError::Invalid(format!(
                "`{field}` is not an input field"
            ))),
        }
    }

    fn memory(&self) -> Result<WorkingMemory, SessionError> {
        let wm = WorkingMemory::from_tutor_state(&self.state, &self.layout)?;
        Ok(wm.close_relations(&self.kb.relation_operators()))
    }

    fn next_step(&self) -> Option<String> {
        self.layout
            .input_names()
            .into_iter()
            .find(|n| self.state.get(n).is_none_or(Value::is_empty))
    }

    fn finish(&mut self, phase: Phase) {
        self.state.clear();
        self.pending = None;
        self.excluded.clear();
        self.phase = phase;
    }

    fn agent_turn(&mut self) -> Result<AgentMessage, SessionError> {
        self.phase = Phase::AgentTurn;
        let wm = self.memory()?;
        match attempt_excluding(&self.kb, &wm, &TaskName::root(), &self.excluded)? {
            Attempt::Action(plan) => Ok(self.present(plan)),
            Attempt::CannotSolve => Ok(self.request_demo()),
        }
    }

    fn present(&mut self, plan: Plan) -> AgentMessage {
        let explained = explain_trace(&plan.trace);
        let reply = match &plan.action {
            FieldAction::InputValue { field, value } => {
                self.phase = Phase::AwaitingFeedback;
                AgentMessage::AttemptedAction {
                    field: field.clone(),
                    value: value.clone(),
                    explanation: explained.text,
                    highlights: explained.highlights.into_iter().collect(),
                }
            }
            FieldAction::ClickDone => {
                self.phase = Phase::AwaitingDoneConfirm;
                AgentMessage::DoneQuery {
                    explanation: explained.text,
                }
            }
        };
        self.pending = Some(Pending::Attempt(plan));
        reply
    }

    fn request_demo(&mut self) -> AgentMessage {
        self.pending = None;
        self.phase = Phase::AwaitingDemo;
        AgentMessage::RequestDemonstration {
            field: self.next_step(),
        }
    }

    fn feedback(&mut self, correct: bool) -> Result<AgentMessage, SessionError> {
        let Some(Pending::Attempt(plan)) = self.pending.take() else {
            return Err(SessionError::Invalid(
                "no agent action awaits feedback".into(),
            ));
        };
        let wm = self.memory()?;
        let verdict = if correct { Verdict::Yes } else { Verdict::No };
        match integrate_feedback(
            &self.kb,
            &wm,
            &TaskName::root(),
            &plan,
            verdict,
            &mut self.excluded,
        )? {
            Directive::Advance => {
                if let FieldAction::InputValue { field, value } = plan.action {
                    self.state.insert(field, value);
                }
                self.excluded.clear();
                self.agent_turn()
            }
            Directive::Retry(next) => Ok(self.present(next)),
            Directive::RequestDemonstration => Ok(self.request_demo()),
        }
    }
}

fn collect_fields(node: &LayoutNode, out: &mut Vec<String>) {
    if let Some(name) = node.field_name() {
        out.push(name.to_owned());
    }
    for child in &node.children {
        collect_fields(child, out);
    }
}

/// Re-runs a transcript's teacher messages against its initial agent and
/// layout, checking each agent reply against the recorded one.
pub fn replay(transcript: &Transcript) -> Result<Session, SessionError> {
    let kb = transcript
        .initial_agent()
        .map_err(|e| SessionError::Transcript(e.to_string()))?;
    let mut session = Session::with_clock(
        transcript.header.layout.clone(),
        kb,
        Arc::new(FixedClock(0)),
    );
    let mut events = transcript.events.iter().peekable();
    while let Some(event) = events.next() {
        if event.actor != Actor::Teacher {
            return Err(SessionError::Transcript(format!(
                "event {} is an unpaired agent reply",
                event.seq
            )));
        }
        let msg: TeacherMessage = serde_json::from_value(event.payload.clone())
            .map_err(|e| SessionError::Transcript(format!("event {}: {e}", event.seq)))?;
        let reply = session.step(msg)?;
        if let Some(recorded) = events.next_if(|e| e.actor == Actor::Agent) {
            let reply = serde_json::to_value(&reply).expect("message serializes");
            if reply != recorded.payload {
                return Err(SessionError::Transcript(format!(
                    "event {}: replay diverged from the recorded reply",
                    recorded.seq
                )));
            }
        }
    }
    Ok(session)
}
