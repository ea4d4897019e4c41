//! Runs the real service binary and talks to it over HTTP.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::process::{Child, ChildStdout, Command, Stdio};

use atb_core::evalsim::{ScriptedTeacher, TeacherPolicy};
use atb_core::{
    AgentMessage, Domain, KnowledgeBase, LabelMode, ProblemSpec, TeacherMessage, TutorState,
};
use atb_service::{BIND_ENV, DATA_DIR_ENV};
use serde_json::{json, Value as Json};

pub struct Server {
    child: Child,
    _stdout: BufReader<ChildStdout>,
    pub base: String,
    http: ureq::Agent,
}

impl Server {
    /// Starts the service on an ephemeral port over `data`, returning once
    /// it has recovered the store and is accepting connections.
    pub fn start(data: &Path) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_atb-service"))
            .env(BIND_ENV, "127.0.0.1:0")
            .env(DATA_DIR_ENV, data)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("service starts");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"));
        // one connection per request, so no socket outlives the server it was
        // opened to
        let http = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .max_idle_connections(0)
            .build()
            .into();
        Server {
            base: format!("http://{addr}"),
            child,
            _stdout: stdout,
            http,
        }
    }

    /// SIGKILL: no shutdown hooks, no flushing beyond what was already done.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }

    pub fn call(&self, method: &str, path: &str, body: Option<Json>) -> (u16, Json) {
        let url = format!("{}{path}", self.base);
        let resp = match (method, body) {
            ("GET", _) => self.http.get(&url).call(),
            ("DELETE", _) => self.http.delete(&url).call(),
            ("POST", b) => self.http.post(&url).send_json(b.unwrap_or(json!({}))),
            ("PUT", b) => self.http.put(&url).send_json(b.unwrap_or(json!({}))),
            _ => panic!("unsupported method {method}"),
        };
        let mut resp = resp.unwrap_or_else(|e| panic!("{method} {path}: {e:?}"));
        let status = resp.status().as_u16();
        let mut text = String::new();
        resp.body_mut()
            .as_reader()
            .read_to_string(&mut text)
            .unwrap();
        let body = if text.is_empty() {
            Json::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Json::String(text))
        };
        (status, body)
    }

    pub fn ok(&self, method: &str, path: &str, body: Option<Json>) -> Json {
        let (status, body) = self.call(method, path, body);
        assert!(
            (200..300).contains(&status),
            "{method} {path} → {status}: {body}"
        );
        body
    }

    pub fn create_tutor(&self, domain: Domain) -> String {
        let body = self.ok(
            "POST",
            "/tutors",
            Some(json!({ "name": domain.name(), "layout": domain.layout() })),
        );
        body["id"].as_str().unwrap().to_owned()
    }

    pub fn open_session(&self, tutor: &str) -> String {
        self.ok("POST", &format!("/tutors/{tutor}/sessions"), None)["session"]
            .as_str()
            .unwrap()
            .to_owned()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Canonical agent bytes for an agent document returned by the API.
pub fn agent_bytes(agent: &Json) -> String {
    KnowledgeBase::from_json(&agent.to_string())
        .expect("agent document parses")
        .to_json()
}

/// Trains over HTTP with the scripted teacher, stopping after `limit`
/// acknowledged messages. Returns how many were sent.
pub fn drive(server: &Server, session: &str, problems: &[ProblemSpec], limit: usize) -> usize {
    let mut teacher = ScriptedTeacher::new(LabelMode::Default);
    let mut sent = 0;
    let path = format!("/sessions/{session}/messages");
    let mut post = |msg: TeacherMessage| -> Option<AgentMessage> {
        if sent == limit {
            return None;
        }
        let reply = server.ok("POST", &path, Some(serde_json::to_value(&msg).unwrap()));
        sent += 1;
        Some(serde_json::from_value(reply).unwrap())
    };
    for problem in problems {
        for (field, value) in &problem.givens {
            if post(TeacherMessage::SetField {
                field: field.clone(),
                value: value.clone(),
            })
            .is_none()
            {
                return sent;
            }
        }
        let Some(mut reply) = post(TeacherMessage::StartProblem) else {
            return sent;
        };
        loop {
            let view = server.ok("GET", &format!("/sessions/{session}"), None);
            if view["phase"] == "problem-complete" {
                break;
            }
            let state: TutorState = serde_json::from_value(view["state"].clone()).unwrap();
            let msg = teacher
                .respond(problem, &state, &reply)
                .expect("teacher has a reply");
            match post(msg) {
                Some(r) => reply = r,
                None => return sent,
            }
        }
    }
    sent
}
