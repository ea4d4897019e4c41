//! Apprentice agent engine.
//!
//! A teacher builds a tutor interface ([`layout`]), then trains an HTN agent
//! on it by demonstrating steps, naming them and judging the agent's
//! attempts ([`session`]). The agent matches conditions with a rete
//! ([`rete`]) over facts extracted from the interface ([`wm`]), plans with
//! its task network ([`htn`], [`planner`]) and learns new methods from
//! demonstrations ([`learner`]). [`evalsim`] drives the whole loop with a
//! scripted teacher and scores trained agents.

pub mod evalsim;
pub mod htn;
pub mod layout;
pub mod learner;
pub mod planner;
pub mod rete;
pub mod session;
pub mod value;
pub mod wm;

pub use evalsim::{
    Bias, CorrectnessReport, Domain, LabelMode, ProblemSpec, ScriptedTeacher, StopRule,
    TrainingReport,
};
pub use htn::{KnowledgeBase, Method, MethodKey, Operator, TaskName, ROOT_TASK};
pub use layout::{LayoutNode, LayoutTree, NodeKind};
pub use learner::{Demonstration, Explanation};
pub use planner::{Attempt, FieldAction, Plan, PlanTrace};
pub use rete::{BindingSet, FactTemplate, Pattern, Term};
pub use session::{AgentMessage, Phase, Session, SessionError, TeacherMessage, Transcript};
pub use value::Value;
pub use wm::{TutorState, WorkingMemory};
