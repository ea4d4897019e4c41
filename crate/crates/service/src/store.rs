//! Filesystem persistence: one directory per tutor holding the tutor
//! document, the agent document and one transcript log per session.
//!
//! ```text
//! <data>/tutors/<id>/tutor.json
//! <data>/tutors/<id>/agent.json
//! <data>/tutors/<id>/sessions/<session>.live.jsonl   (open session)
//! <data>/tutors/<id>/sessions/<session>.jsonl        (closed session)
//! ```
//!
//! Documents are replaced atomically (write, fsync, rename). Live transcripts
//! are appended and fsynced once per accepted message, before the reply is
//! sent, so a restart can rebuild the agent by replaying them.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use atb_core::htn::HtnError;
use atb_core::session::{replay, Actor, SessionError, Transcript};
use atb_core::{KnowledgeBase, LayoutTree};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TUTOR_SCHEMA: u32 = 1;

const LIVE_SUFFIX: &str = ".live.jsonl";
const CLOSED_SUFFIX: &str = ".jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no tutor `{0}`")]
    NoTutor(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt document {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error(transparent)]
    Agent(#[from] HtnError),
    #[error("recovering {path}: {source}")]
    Replay { path: String, source: SessionError },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TutorDoc {
    pub schema: u32,
    pub id: String,
    /// Bumped on every stored change; clients send it back to detect
    /// concurrent edits.
    pub version: u64,
    #[serde(default)]
    pub name: String,
    pub layout: LayoutTree,
}

#[derive(Clone, Debug, Serialize)]
pub struct TranscriptInfo {
    pub session: String,
    pub live: bool,
    pub events: usize,
}

pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("tutors"))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn tutor_dir(&self, id: &str) -> PathBuf {
        self.root.join("tutors").join(id)
    }

    fn sessions_dir(&self, id: &str) -> PathBuf {
        self.tutor_dir(id).join("sessions")
    }

    pub fn exists(&self, id: &str) -> bool {
        self.tutor_dir(id).join("tutor.json").is_file()
    }

    pub fn tutor_ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join("tutors"))? {
            let entry = entry?;
            if let Some(name) = entry.file_name().to_str() {
                if self.exists(name) {
                    ids.push(name.to_owned());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn create(&self, doc: &TutorDoc, agent: &KnowledgeBase) -> Result<(), StoreError> {
        fs::create_dir_all(self.sessions_dir(&doc.id))?;
        self.write_agent(&doc.id, agent)?;
        self.write_tutor(doc)?;
        sync_dir(&self.root.join("tutors"))?;
        Ok(())
    }

    pub fn read_tutor(&self, id: &str) -> Result<TutorDoc, StoreError> {
        let path = self.tutor_dir(id).join("tutor.json");
        let text = read_existing(&path, id)?;
        serde_json::from_str(&text).map_err(|e| corrupt(&path, e))
    }

    pub fn read_agent_text(&self, id: &str) -> Result<String, StoreError> {
        read_existing(&self.tutor_dir(id).join("agent.json"), id)
    }

    pub fn read_agent(&self, id: &str) -> Result<KnowledgeBase, StoreError> {
        Ok(KnowledgeBase::from_json(&self.read_agent_text(id)?)?)
    }

    pub fn write_tutor(&self, doc: &TutorDoc) -> Result<(), StoreError> {
        let text = serde_json::to_string_pretty(doc).expect("tutor serializes");
        write_atomic(&self.tutor_dir(&doc.id).join("tutor.json"), text.as_bytes())?;
        Ok(())
    }

    pub fn write_agent(&self, id: &str, kb: &KnowledgeBase) -> Result<(), StoreError> {
        write_atomic(
            &self.tutor_dir(id).join("agent.json"),
            kb.to_json().as_bytes(),
        )?;
        Ok(())
    }

    pub fn delete(&self, id: &str) -> Result<(), StoreError> {
        if !self.exists(id) {
            return Err(StoreError::NoTutor(id.to_owned()));
        }
        fs::remove_dir_all(self.tutor_dir(id))?;
        sync_dir(&self.root.join("tutors"))?;
        Ok(())
    }

    /// Starts the live log for a session with the transcript header.
    pub fn begin_transcript(
        &self,
        id: &str,
        session: &str,
        transcript: &Transcript,
    ) -> Result<TranscriptLog, StoreError> {
        let dir = self.sessions_dir(id);
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{session}{LIVE_SUFFIX}"));
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)?;
        let mut log = TranscriptLog { file, path };
        log.append(&[transcript.header_line()])?;
        sync_dir(&dir)?;
        Ok(log)
    }

    /// Marks a live log as closed once the agent it produced is stored.
    pub fn close_transcript(&self, id: &str, session: &str) -> Result<(), StoreError> {
        let dir = self.sessions_dir(id);
        fs::rename(
            dir.join(format!("{session}{LIVE_SUFFIX}")),
            dir.join(format!("{session}{CLOSED_SUFFIX}")),
        )?;
        sync_dir(&dir)?;
        Ok(())
    }

    pub fn transcripts(&self, id: &str) -> Result<Vec<TranscriptInfo>, StoreError> {
        if !self.exists(id) {
            return Err(StoreError::NoTutor(id.to_owned()));
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(self.sessions_dir(id))? {
            let entry = entry?;
            let Some(name) = entry.file_name().to_str().map(str::to_owned) else {
                continue;
            };
            let (session, live) = match name.strip_suffix(LIVE_SUFFIX) {
                Some(s) => (s.to_owned(), true),
                None => match name.strip_suffix(CLOSED_SUFFIX) {
                    Some(s) => (s.to_owned(), false),
                    None => continue,
                },
            };
            let text = fs::read_to_string(entry.path())?;
            let events = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .count()
                .saturating_sub(1);
            out.push(TranscriptInfo {
                session,
                live,
                events,
            });
        }
        out.sort_by(|a, b| a.session.cmp(&b.session));
        Ok(out)
    }

    pub fn transcript_text(&self, id: &str, session: &str) -> Result<Option<String>, StoreError> {
        let dir = self.sessions_dir(id);
        for suffix in [CLOSED_SUFFIX, LIVE_SUFFIX] {
            match fs::read_to_string(dir.join(format!("{session}{suffix}"))) {
                Ok(text) => return Ok(Some(text)),
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(None)
    }

    /// Replays every live transcript left by a crash, stores the agent and
    /// layout it reconstructs, and closes it. Returns the recovered sessions.
    pub fn recover(&self) -> Result<Vec<String>, StoreError> {
        let mut recovered = Vec::new();
        for id in self.tutor_ids()? {
            let dir = self.sessions_dir(&id);
            if !dir.is_dir() {
                continue;
            }
            let mut live: Vec<PathBuf> = fs::read_dir(&dir)?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.ends_with(LIVE_SUFFIX))
                })
                .collect();
            live.sort();
            for path in live {
                let text = fs::read_to_string(&path)?;
                let transcript = acknowledged_prefix(&text).map_err(|e| StoreError::Replay {
                    path: display(&path),
                    source: e,
                })?;
                let session = replay(&transcript).map_err(|e| StoreError::Replay {
                    path: display(&path),
                    source: e,
                })?;
                let mut doc = self.read_tutor(&id)?;
                self.write_agent(&id, session.kb())?;
                if &doc.layout != session.layout() {
                    doc.layout = session.layout().clone();
                    doc.version += 1;
                    self.write_tutor(&doc)?;
                }
                let name = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default();
                let session_id = name.trim_end_matches(LIVE_SUFFIX).to_owned();
                self.close_transcript(&id, &session_id)?;
                recovered.push(session_id);
            }
        }
        Ok(recovered)
    }
}

/// Append-only, fsynced transcript log of one live session.
pub struct TranscriptLog {
    file: File,
    path: PathBuf,
}

impl TranscriptLog {
    /// Writes `lines` in one call and waits for them to reach the disk.
    pub fn append(&mut self, lines: &[String]) -> io::Result<()> {
        let mut buf = String::new();
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Parses a live log, dropping a torn final line and a trailing teacher
/// event whose reply never made it to disk: neither was acknowledged.
fn acknowledged_prefix(text: &str) -> Result<Transcript, SessionError> {
    let complete = match text.rfind('\n') {
        Some(end) => &text[..=end],
        None => "",
    };
    let mut transcript = Transcript::from_jsonl(complete)?;
    if transcript
        .events
        .last()
        .is_some_and(|e| e.actor == Actor::Teacher)
    {
        transcript.events.pop();
    }
    Ok(transcript)
}

fn read_existing(path: &Path, id: &str) -> Result<String, StoreError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NoTutor(id.to_owned())),
        Err(e) => Err(e.into()),
    }
}

fn corrupt(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Corrupt {
        path: display(path),
        reason: e.to_string(),
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    match path.parent() {
        Some(dir) => sync_dir(dir),
        None => Ok(()),
    }
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}
