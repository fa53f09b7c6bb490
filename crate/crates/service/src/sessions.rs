//! Chat sessions persisted as append-only JSONL logs, one file per session.
//!
//! The first line of `<session_id>.jsonl` is a `session` record; every
//! answered message appends a `turn` record.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use litrag_core::{Answer, DocId, RetrievalMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub mode: RetrievalMode,
    pub answer: Answer,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    /// Mode used for messages that do not override it.
    pub mode: RetrievalMode,
    pub doc_filter: Option<BTreeSet<DocId>>,
    pub turns: Vec<Turn>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Session {
        session_id: String,
        created_at: u64,
        mode: RetrievalMode,
        doc_filter: Option<BTreeSet<DocId>>,
    },
    Turn(Turn),
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct SessionStore {
    dir: PathBuf,
    sessions: Mutex<BTreeMap<String, ChatSession>>,
}

impl SessionStore {
    /// Opens `dir`, replaying every session log found there. Unreadable
    /// logs are skipped with a warning.
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let mut sessions = BTreeMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                match replay(&path) {
                    Ok(s) => {
                        sessions.insert(s.session_id.clone(), s);
                    }
                    Err(e) => tracing::warn!(path = %path.display(), "skipping session log: {e}"),
                }
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            sessions: Mutex::new(sessions),
        })
    }

    pub fn create(
        &self,
        mode: RetrievalMode,
        doc_filter: Option<BTreeSet<DocId>>,
    ) -> io::Result<ChatSession> {
        let session = ChatSession {
            session_id: format!("s-{}", uuid::Uuid::new_v4().simple()),
            created_at: now_ms(),
            mode,
            doc_filter,
            turns: Vec::new(),
        };
        let mut sessions = self.sessions.lock().expect("session lock");
        self.append(
            &session.session_id,
            &Record::Session {
                session_id: session.session_id.clone(),
                created_at: session.created_at,
                mode,
                doc_filter: session.doc_filter.clone(),
            },
        )?;
        sessions.insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Option<ChatSession> {
        self.sessions.lock().expect("session lock").get(id).cloned()
    }

    /// Appends a turn to the log and the in-memory transcript; returns the
    /// turn's index.
    pub fn append_turn(&self, id: &str, turn: Turn) -> io::Result<Option<usize>> {
        let mut sessions = self.sessions.lock().expect("session lock");
        let Some(session) = sessions.get_mut(id) else {
            return Ok(None);
        };
        let record = Record::Turn(turn);
        self.append(id, &record)?;
        let Record::Turn(turn) = record else {
            unreachable!()
        };
        session.turns.push(turn);
        Ok(Some(session.turns.len() - 1))
    }

    fn append(&self, id: &str, record: &Record) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(format!("{id}.jsonl")))?;
        file.write_all(line.as_bytes())?;
        file.sync_data()
    }
}

fn replay(path: &Path) -> io::Result<ChatSession> {
    let mut session: Option<ChatSession> = None;
    for (n, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad =
            |m: String| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {m}", n + 1));
        match serde_json::from_str::<Record>(&line).map_err(|e| bad(e.to_string()))? {
            Record::Session {
                session_id,
                created_at,
                mode,
                doc_filter,
            } if session.is_none() => {
                session = Some(ChatSession {
                    session_id,
                    created_at,
                    mode,
                    doc_filter,
                    turns: Vec::new(),
                })
            }
            Record::Turn(t) => session
                .as_mut()
                .ok_or_else(|| bad("turn before session header".into()))?
                .turns
                .push(t),
            Record::Session { .. } => return Err(bad("repeated session header".into())),
        }
    }
    session.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty session log"))
}
