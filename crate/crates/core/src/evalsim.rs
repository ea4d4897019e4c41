//! No-human harness: tutor domains, seeded problem generators, a scripted
//! teacher that answers from the known solution, and the training and
//! model-correctness runs built on them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::htn::KnowledgeBase;
use crate::layout::{LayoutNode, LayoutTree};
use crate::session::{
    AgentMessage, FixedClock, Phase, Session, SessionError, TeacherMessage, Transcript, DONE_LABEL,
};
use crate::value::Value;
use crate::wm::TutorState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    FractionAddSameDenom,
    FractionMultiply,
    /// Alternating multiplication and same-denominator addition on one tutor.
    FractionArithmetic,
    #[serde(rename = "square-25")]
    Square25,
}

const FRACTION_ANSWERS: &[&str] = &["ans-num", "ans-den"];
const SQUARE25_STEPS: &[(&str, &str)] = &[
    ("initial-value", "Initial Value"),
    ("first-part", "First Part"),
    ("add-one", "Add One"),
    ("multiply", "Multiply"),
    ("append-25", "Append 25"),
];

impl Domain {
    pub const ALL: [Domain; 4] = [
        Domain::FractionAddSameDenom,
        Domain::FractionMultiply,
        Domain::FractionArithmetic,
        Domain::Square25,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Domain::FractionAddSameDenom => "fraction-add-same-denom",
            Domain::FractionMultiply => "fraction-multiply",
            Domain::FractionArithmetic => "fraction-arithmetic",
            Domain::Square25 => "square-25",
        }
    }

    pub fn is_fraction(self) -> bool {
        self != Domain::Square25
    }

    /// The tutor interface for the domain.
    pub fn layout(self) -> LayoutTree {
        let children = if self.is_fraction() {
            vec![LayoutNode::row(
                "problem",
                vec![
                    LayoutNode::column(
                        "frac1",
                        vec![LayoutNode::input("num1"), LayoutNode::input("den1")],
                    ),
                    LayoutNode::input("op"),
                    LayoutNode::column(
                        "frac2",
                        vec![LayoutNode::input("num2"), LayoutNode::input("den2")],
                    ),
                    LayoutNode::label("eq", "="),
                    LayoutNode::column(
                        "answer",
                        vec![LayoutNode::input("ans-num"), LayoutNode::input("ans-den")],
                    ),
                ],
            )]
        } else {
            SQUARE25_STEPS
                .iter()
                .map(|(field, text)| {
                    LayoutNode::row(
                        format!("{field}-row"),
                        vec![
                            LayoutNode::label(format!("{field}-label"), *text),
                            LayoutNode::input(*field),
                        ],
                    )
                })
                .collect()
        };
        LayoutTree::with_children(children).expect("domain layouts are valid")
    }

    pub fn answer_fields(self) -> Vec<&'static str> {
        if self.is_fraction() {
            FRACTION_ANSWERS.to_vec()
        } else {
            SQUARE25_STEPS[1..].iter().map(|(f, _)| *f).collect()
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Domain::ALL.iter().map(|d| d.name()).collect();
                format!(
                    "unknown domain `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bias {
    /// Only multiplication problems with at least one numerator equal to 1.
    NumeratorOne,
}

impl FromStr for Bias {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "numerator-one" => Ok(Bias::NumeratorOne),
            _ => Err(format!("unknown bias `{s}` (expected numerator-one)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// The concrete problem type (never the mixed fraction domain).
    pub domain: Domain,
    pub givens: TutorState,
    pub solution: TutorState,
}

fn state(pairs: &[(&str, Value)]) -> TutorState {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

impl ProblemSpec {
    pub fn fraction_multiply(n1: i64, d1: i64, n2: i64, d2: i64) -> Self {
        ProblemSpec {
            domain: Domain::FractionMultiply,
            givens: fraction_givens(n1, d1, "x", n2, d2),
            solution: state(&[
                ("ans-num", Value::int(n1 * n2)),
                ("ans-den", Value::int(d1 * d2)),
            ]),
        }
    }

    pub fn fraction_add(n1: i64, n2: i64, d: i64) -> Self {
        ProblemSpec {
            domain: Domain::FractionAddSameDenom,
            givens: fraction_givens(n1, d, "+", n2, d),
            solution: state(&[("ans-num", Value::int(n1 + n2)), ("ans-den", Value::int(d))]),
        }
    }

    /// Squares `10k + 5` the Square 25 way.
    pub fn square25(k: i64) -> Self {
        let first = k;
        let plus = k + 1;
        let product = first * plus;
        ProblemSpec {
            domain: Domain::Square25,
            givens: state(&[("initial-value", Value::int(10 * k + 5))]),
            solution: state(&[
                ("first-part", Value::int(first)),
                ("add-one", Value::int(plus)),
                ("multiply", Value::int(product)),
                ("append-25", Value::parse(&format!("{product}25"))),
            ]),
        }
    }

    pub fn expected(&self, field: &str) -> Option<&Value> {
        self.solution.get(field)
    }

    pub fn has_numerator_one(&self) -> bool {
        ["num1", "num2"]
            .iter()
            .any(|f| self.givens.get(*f) == Some(&Value::int(1)))
    }

    /// True when every answer field in `state` holds its solution value.
    pub fn is_solved_by(&self, state: &TutorState) -> bool {
        self.solution.iter().all(|(f, v)| state.get(f) == Some(v))
    }

    pub fn describe(&self) -> String {
        let g = |f: &str| {
            self.givens
                .get(f)
                .map(ToString::to_string)
                .unwrap_or_default()
        };
        match self.domain {
            Domain::Square25 => format!("{}²", g("initial-value")),
            _ => format!(
                "{}/{} {} {}/{}",
                g("num1"),
                g("den1"),
                g("op"),
                g("num2"),
                g("den2")
            ),
        }
    }
}

fn fraction_givens(n1: i64, d1: i64, op: &str, n2: i64, d2: i64) -> TutorState {
    state(&[
        ("num1", Value::int(n1)),
        ("den1", Value::int(d1)),
        ("op", Value::symbol(op)),
        ("num2", Value::int(n2)),
        ("den2", Value::int(d2)),
    ])
}

fn operand(rng: &mut ChaCha8Rng) -> i64 {
    rng.random_range(1..=9)
}

fn random_multiply(rng: &mut ChaCha8Rng) -> ProblemSpec {
    let (n1, d1, n2, d2) = (operand(rng), operand(rng), operand(rng), operand(rng));
    ProblemSpec::fraction_multiply(n1, d1, n2, d2)
}

fn random_add(rng: &mut ChaCha8Rng) -> ProblemSpec {
    let (n1, n2, d) = (operand(rng), operand(rng), operand(rng));
    ProblemSpec::fraction_add(n1, n2, d)
}

/// `count` reproducible problems for `domain`. Fraction operands are 1..=9;
/// Square 25 starts from `10k + 5` with `k` in 1..=99. The mixed fraction
/// domain alternates multiplication and addition, multiplication first.
pub fn generate(domain: Domain, count: usize, seed: u64) -> Vec<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| match domain {
            Domain::FractionMultiply => random_multiply(&mut rng),
            Domain::FractionAddSameDenom => random_add(&mut rng),
            Domain::FractionArithmetic if i % 2 == 0 => random_multiply(&mut rng),
            Domain::FractionArithmetic => random_add(&mut rng),
            Domain::Square25 => ProblemSpec::square25(rng.random_range(1..=99)),
        })
        .collect()
}

/// Like [`generate`] but restricted by `bias`; biased problems are always
/// multiplications.
pub fn generate_biased(bias: Bias, count: usize, seed: u64) -> Vec<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = random_multiply(&mut rng);
        match bias {
            Bias::NumeratorOne if p.has_numerator_one() => out.push(p),
            Bias::NumeratorOne => {}
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// Accept the offered default (the field id).
    #[default]
    Default,
    /// Name steps after what they do, e.g. `multiply-numerators`.
    Canonical,
}

pub fn canonical_label(domain: Domain, field: Option<&str>) -> String {
    let Some(field) = field else {
        return DONE_LABEL.to_owned();
    };
    let label = match (domain, field) {
        (Domain::FractionMultiply, "ans-num") => "multiply-numerators",
        (Domain::FractionMultiply, "ans-den") => "multiply-denominators",
        (Domain::FractionAddSameDenom, "ans-num") => "add-numerators",
        (Domain::FractionAddSameDenom, "ans-den") => "copy-denominator",
        (Domain::Square25, "first-part") => "take-first-part",
        (Domain::Square25, "add-one") => "add-one",
        (Domain::Square25, "multiply") => "multiply-parts",
        (Domain::Square25, "append-25") => "append-25",
        _ => field,
    };
    label.to_owned()
}

/// Decides the teacher's reply to an agent message.
pub trait TeacherPolicy {
    /// `None` when the message needs no reply.
    fn respond(
        &mut self,
        problem: &ProblemSpec,
        state: &TutorState,
        msg: &AgentMessage,
    ) -> Option<TeacherMessage>;
}

/// Truthful teacher that knows each problem's solution.
#[derive(Clone, Debug, Default)]
pub struct ScriptedTeacher {
    pub labels: LabelMode,
}

impl ScriptedTeacher {
    pub fn new(labels: LabelMode) -> Self {
        ScriptedTeacher { labels }
    }
}

impl TeacherPolicy for ScriptedTeacher {
    fn respond(
        &mut self,
        problem: &ProblemSpec,
        state: &TutorState,
        msg: &AgentMessage,
    ) -> Option<TeacherMessage> {
        let empty = |f: &str| state.get(f).is_none_or(Value::is_empty);
        Some(match msg {
            AgentMessage::RequestDemonstration { field } => {
                let hinted = field
                    .as_deref()
                    .filter(|f| problem.expected(f).is_some() && empty(f));
                let next = hinted.or_else(|| {
                    problem
                        .domain
                        .answer_fields()
                        .into_iter()
                        .find(|f| empty(f))
                });
                match next {
                    Some(f) => TeacherMessage::Demonstrate {
                        field: f.to_owned(),
                        value: problem.solution[f].clone(),
                    },
                    None => TeacherMessage::DoneButton,
                }
            }
            AgentMessage::RequestLabel {
                field,
                default_label,
            } => TeacherMessage::Label {
                text: match self.labels {
                    LabelMode::Default => default_label.clone(),
                    LabelMode::Canonical => canonical_label(problem.domain, field.as_deref()),
                },
            },
            AgentMessage::AttemptedAction { field, value, .. } => TeacherMessage::Feedback {
                correct: problem.expected(field) == Some(value),
            },
            AgentMessage::DoneQuery { .. } => TeacherMessage::ConfirmDone {
                correct: problem.is_solved_by(state),
            },
            AgentMessage::Acknowledged { .. } | AgentMessage::ProblemReset => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no training problems")]
    NoProblems,
    #[error("problem {problem}: teacher and agent stopped making progress in phase {phase}")]
    Deadlock { problem: usize, phase: Phase },
    #[error("problem {problem}: {source}")]
    Session {
        problem: usize,
        source: SessionError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "n", rename_all = "kebab-case")]
pub enum StopRule {
    /// Use every problem given, up to this many.
    Fixed(usize),
    /// Stop once this many problems in a row were solved without any
    /// demonstration or rejected attempt.
    Consecutive(usize),
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::Consecutive(2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemLog {
    /// 1-based position in the training sequence.
    pub index: usize,
    pub problem: String,
    pub demonstrations: usize,
    pub rejections: usize,
    pub solved_unaided: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub problems: Vec<ProblemLog>,
    pub problems_used: usize,
    pub total_demonstrations: usize,
    /// Training problems given after the first one the agent solved unaided.
    pub validation_problems: usize,
    /// 1-based index of the first problem that needed no demonstration.
    pub first_zero_demo_problem: Option<usize>,
    /// Whether the stop rule's consecutive-solve condition was met.
    pub converged: bool,
}

pub struct TrainingRun {
    pub kb: KnowledgeBase,
    pub report: TrainingReport,
    pub transcript: Transcript,
}

const MESSAGE_BUDGET: usize = 200;

/// Trains `kb` on `problems` in order through one session, stopping per
/// `stop`.
pub fn train(
    kb: KnowledgeBase,
    layout: &LayoutTree,
    teacher: &mut dyn TeacherPolicy,
    problems: &[ProblemSpec],
    stop: StopRule,
) -> Result<TrainingRun, HarnessError> {
    if problems.is_empty() {
        return Err(HarnessError::NoProblems);
    }
    let mut session = Session::with_clock(layout.clone(), kb, Arc::new(FixedClock(0)));
    let mut logs: Vec<ProblemLog> = Vec::new();
    let mut streak = 0;
    let mut converged = false;
    for (i, problem) in problems.iter().enumerate() {
        if let StopRule::Fixed(n) = stop {
            if i >= n {
                break;
            }
        }
        let index = i + 1;
        let wrap = |source| HarnessError::Session {
            problem: index,
            source,
        };
        for (field, value) in &problem.givens {
            session
                .step(TeacherMessage::SetField {
                    field: field.clone(),
                    value: value.clone(),
                })
                .map_err(wrap)?;
        }
        let mut reply = session.start_problem().map_err(wrap)?;
        let (mut demos, mut rejections) = (0, 0);
        let mut budget = MESSAGE_BUDGET;
        while session.phase() != Phase::ProblemComplete {
            let phase = session.phase();
            let msg = teacher
                .respond(problem, session.tutor_state(), &reply)
                .filter(|_| budget > 0)
                .ok_or(HarnessError::Deadlock {
                    problem: index,
                    phase,
                })?;
            budget -= 1;
            match &msg {
                TeacherMessage::Demonstrate { .. } | TeacherMessage::DoneButton => demos += 1,
                TeacherMessage::Feedback { correct: false }
                | TeacherMessage::ConfirmDone { correct: false } => rejections += 1,
                _ => {}
            }
            reply = session.step(msg).map_err(wrap)?;
        }
        let solved_unaided = demos == 0 && rejections == 0;
        logs.push(ProblemLog {
            index,
            problem: problem.describe(),
            demonstrations: demos,
            rejections,
            solved_unaided,
        });
        streak = if solved_unaided { streak + 1 } else { 0 };
        if let StopRule::Consecutive(n) = stop {
            if streak >= n {
                converged = true;
                break;
            }
        }
    }
    let first_solved = logs.iter().position(|l| l.solved_unaided);
    let report = TrainingReport {
        problems_used: logs.len(),
        total_demonstrations: logs.iter().map(|l| l.demonstrations).sum(),
        validation_problems: first_solved.map_or(0, |i| logs.len() - i - 1),
        first_zero_demo_problem: logs.iter().find(|l| l.demonstrations == 0).map(|l| l.index),
        converged,
        problems: logs,
    };
    let transcript = session.transcript().clone();
    Ok(TrainingRun {
        kb: session.into_kb(),
        report,
        transcript,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Divergence {
    WrongValue {
        field: String,
        expected: Value,
        got: Value,
    },
    DemonstrationRequested {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        field: Option<String>,
    },
    /// The agent clicked done with answers missing or wrong.
    PrematureDone,
    Error {
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemResult {
    pub index: usize,
    pub problem: String,
    pub solved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<Divergence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessReport {
    pub total: usize,
    pub solved: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_problems: Option<usize>,
    pub problems: Vec<ProblemResult>,
}

impl CorrectnessReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "accuracy {:.3} ({}/{})\n",
            self.accuracy, self.solved, self.total
        );
        if let Some(v) = self.validation_problems {
            out.push_str(&format!("validation problems {v}\n"));
        }
        for p in &self.problems {
            let status = if p.solved {
                "solved".to_owned()
            } else {
                format!("FAILED {:?}", p.divergence)
            };
            out.push_str(&format!("  #{:<3} {:<16} {status}\n", p.index, p.problem));
        }
        out
    }
}

impl TrainingReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "trained on {} problems, {} demonstrations, converged: {}\n",
            self.problems_used, self.total_demonstrations, self.converged
        );
        out.push_str(&format!(
            "first zero-demonstration problem: {}\nvalidation problems: {}\n",
            self.first_zero_demo_problem
                .map_or("none".into(), |i| i.to_string()),
            self.validation_problems
        ));
        for p in &self.problems {
            out.push_str(&format!(
                "  #{:<3} {:<16} demos {} rejections {}{}\n",
                p.index,
                p.problem,
                p.demonstrations,
                p.rejections,
                if p.solved_unaided { "  (unaided)" } else { "" }
            ));
        }
        out
    }
}

/// Lets the agent work each problem alone: correct steps are accepted, and
/// the first wrong value, demonstration request, or premature done fails the
/// problem. `kb` is never modified.
pub fn evaluate(
    kb: &KnowledgeBase,
    layout: &LayoutTree,
    problems: &[ProblemSpec],
) -> CorrectnessReport {
    let problems: Vec<ProblemResult> = problems
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let divergence = evaluate_one(kb, layout, p).err();
            ProblemResult {
                index: i + 1,
                problem: p.describe(),
                solved: divergence.is_none(),
                divergence,
            }
        })
        .collect();
    let solved = problems.iter().filter(|p| p.solved).count();
    let total = problems.len();
    CorrectnessReport {
        total,
        solved,
        accuracy: if total == 0 {
            0.0
        } else {
            solved as f64 / total as f64
        },
        validation_problems: None,
        problems,
    }
}

fn evaluate_one(
    kb: &KnowledgeBase,
    layout: &LayoutTree,
    problem: &ProblemSpec,
) -> Result<(), Divergence> {
    let err = |e: SessionError| Divergence::Error {
        message: e.to_string(),
    };
    let mut session = Session::with_clock(layout.clone(), kb.clone(), Arc::new(FixedClock(0)));
    for (field, value) in &problem.givens {
        session
            .step(TeacherMessage::SetField {
                field: field.clone(),
                value: value.clone(),
            })
            .map_err(err)?;
    }
    let mut reply = session.start_problem().map_err(err)?;
    for _ in 0..MESSAGE_BUDGET {
        reply = match reply {
            AgentMessage::AttemptedAction { field, value, .. } => match problem.expected(&field) {
                Some(expected) if *expected == value => session
                    .step(TeacherMessage::Feedback { correct: true })
                    .map_err(err)?,
                expected => {
                    let expected = expected.cloned().unwrap_or(Value::Empty);
                    return Err(Divergence::WrongValue {
                        field,
                        expected,
                        got: value,
                    });
                }
            },
            AgentMessage::DoneQuery { .. } if problem.is_solved_by(session.tutor_state()) => {
                return Ok(())
            }
            AgentMessage::DoneQuery { .. } => return Err(Divergence::PrematureDone),
            AgentMessage::RequestDemonstration { field } => {
                return Err(Divergence::DemonstrationRequested { field })
            }
            other => {
                return Err(Divergence::Error {
                    message: format!("unexpected agent message {}", other.kind()),
                })
            }
        };
    }
    Err(Divergence::Error {
        message: "message budget exhausted".into(),
    })
}
