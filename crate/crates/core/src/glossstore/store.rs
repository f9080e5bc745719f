// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::{Mutex, RwLock};

use super::record::Record;
use super::{check_body, new_id, Gloss, GlossFilter, GlossPatch, NewGloss, Session, StoreError};
use crate::tokenizer::TokenId;

/// Record kind for the projection basis line in session exports; it can
/// be recomputed from the session, so import ignores it.
pub const DERIVED_KIND: &str = "basis";

/// Immutable view of the store at one point in time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    sessions: HashMap<String, Session>,
    glosses: HashMap<String, Gloss>,
}

impl Snapshot {
    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    /// Sessions ordered by creation time, then id.
    pub fn sessions(&self) -> Vec<&Session> {
        let mut v: Vec<&Session> = self.sessions.values().collect();
        v.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
        v
    }

    pub fn gloss(&self, id: &str) -> Option<&Gloss> {
        self.glosses.get(id)
    }

    pub fn gloss_count(&self) -> usize {
        self.glosses.len()
    }

    /// Glosses of `session_id` passing `filter`, ordered by creation time,
    /// then id.
    pub fn list(&self, session_id: &str, filter: &GlossFilter) -> Result<Vec<Gloss>, StoreError> {
        if !self.sessions.contains_key(session_id) {
            return Err(not_found("session", session_id));
        }
        let mut v: Vec<Gloss> = self
            .glosses
            .values()
            .filter(|g| g.session_id == session_id && filter.matches(g))
            .cloned()
            .collect();
        v.sort_by(|a, b| (a.created_at, &a.gloss_id).cmp(&(b.created_at, &b.gloss_id)));
        Ok(v)
    }

    fn apply(&mut self, record: &Record) -> Result<(), StoreError> {
        match record {
            Record::Session(s) => {
                if self.sessions.contains_key(&s.session_id) {
                    return Err(StoreError::Conflict {
                        what: "session",
                        id: s.session_id.clone(),
                    });
                }
                self.sessions.insert(s.session_id.clone(), s.clone());
            }
            Record::GlossCreate(g) => {
                let session = self
                    .sessions
                    .get(&g.session_id)
                    .ok_or_else(|| not_found("session", &g.session_id))?;
                g.anchor.validate(session)?;
                check_body(&g.body)?;
                if self.glosses.contains_key(&g.gloss_id) {
                    return Err(StoreError::Conflict {
                        what: "gloss",
                        id: g.gloss_id.clone(),
                    });
                }
                self.glosses.insert(g.gloss_id.clone(), g.clone());
            }
            Record::GlossUpdate {
                gloss_id,
                body,
                tags,
                updated_at,
            } => {
                let g = self
                    .glosses
                    .get_mut(gloss_id)
                    .ok_or_else(|| not_found("gloss", gloss_id))?;
                if let Some(body) = body {
                    check_body(body)?;
                    g.body = body.clone();
                }
                if let Some(tags) = tags {
                    g.tags = tags.clone();
                }
                g.updated_at = *updated_at;
            }
            Record::GlossDelete { gloss_id, .. } => {
                self.glosses
                    .remove(gloss_id)
                    .ok_or_else(|| not_found("gloss", gloss_id))?;
            }
        }
        Ok(())
    }

    /// Records that rebuild this snapshot from nothing.
    fn compacted_records(&self) -> Vec<Record> {
        let mut out: Vec<Record> = self.sessions().into_iter().cloned().map(Record::Session).collect();
        let mut glosses: Vec<&Gloss> = self.glosses.values().collect();
        glosses.sort_by(|a, b| (a.created_at, &a.gloss_id).cmp(&(b.created_at, &b.gloss_id)));
        out.extend(glosses.into_iter().cloned().map(Record::GlossCreate));
        out
    }
}

fn not_found(what: &'static str, id: &str) -> StoreError {
    StoreError::NotFound {
        what,
        id: id.to_string(),
    }
}

struct Writer {
    log: Option<(PathBuf, File)>,
    records: usize,
    last_stamp: DateTime<Utc>,
}

impl Writer {
    /// Current time at microsecond precision, strictly after every stamp
    /// issued or loaded before.
    fn stamp(&mut self) -> DateTime<Utc> {
        let now = Utc::now();
        let now = DateTime::from_timestamp_micros(now.timestamp_micros()).unwrap_or(now);
        let t = if now > self.last_stamp {
            now
        } else {
            self.last_stamp + TimeDelta::microseconds(1)
        };
        self.last_stamp = t;
        t
    }

    fn observe(&mut self, record: &Record) {
        let t = match record {
            Record::Session(s) => s.created_at,
            Record::GlossCreate(g) => g.updated_at.max(g.created_at),
            Record::GlossUpdate { updated_at, .. } => *updated_at,
            Record::GlossDelete { deleted_at, .. } => *deleted_at,
        };
        self.last_stamp = self.last_stamp.max(t);
        self.records += 1;
    }

    /// Appends and syncs; nothing is visible to readers until this returns.
    fn append(&mut self, records: &[Record]) -> Result<(), StoreError> {
        if let Some((path, file)) = &mut self.log {
            let text: String = records.iter().map(Record::to_line).collect();
            file.write_all(text.as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|source| StoreError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        for r in records {
            self.observe(r);
        }
        Ok(())
    }
}

/// Gloss and session store; one writer at a time, lock-free reads of the
/// latest snapshot.
pub struct GlossStore {
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl std::fmt::Debug for GlossStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GlossStore")
            .field("path", &self.path())
            .field("glosses", &self.snapshot().gloss_count())
            .finish()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl GlossStore {
    /// A store without a log file.
    pub fn in_memory() -> Self {
        GlossStore {
            writer: Mutex::new(Writer {
                log: None,
                records: 0,
                last_stamp: DateTime::<Utc>::MIN_UTC,
            }),
            snapshot: RwLock::new(Arc::new(Snapshot::default())),
        }
    }

    /// Opens or creates the log at `path` and replays it.
    ///
    /// A final line without its newline is the remains of an interrupted
    /// append and is cut off. Any other unreadable line is an error. When
    /// more than half of the records are dead (deletions, and creates and
    /// updates of glosses since deleted or rewritten), the log is rewritten
    /// with only live state.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err(&path))?;

        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            tracing::warn!(path = %path.display(), bytes = bytes.len() - complete, "dropping torn final log line");
            file.set_len(complete as u64)
                .and_then(|_| file.sync_all())
                .map_err(io_err(&path))?;
        }

        let mut writer = Writer {
            log: None,
            records: 0,
            last_stamp: DateTime::<Utc>::MIN_UTC,
        };
        let mut snap = Snapshot::default();
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            let corrupt = |message: String| StoreError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message,
            };
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let record: Record = serde_json::from_slice(line).map_err(|e| corrupt(e.to_string()))?;
            snap.apply(&record).map_err(|e| corrupt(e.to_string()))?;
            writer.observe(&record);
        }
        writer.log = Some((path, file));

        let store = GlossStore {
            writer: Mutex::new(writer),
            snapshot: RwLock::new(Arc::new(snap)),
        };
        let (records, dead) = store.stats();
        if dead * 2 > records {
            store.compact()?;
        }
        Ok(store)
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.writer.lock().log.as_ref().map(|(p, _)| p.clone())
    }

    /// `(records in the log, records a compaction would drop)`.
    pub fn stats(&self) -> (usize, usize) {
        let w = self.writer.lock();
        let snap = self.snapshot();
        let live = snap.sessions.len() + snap.glosses.len();
        (w.records, w.records - live)
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().clone()
    }

    /// Rewrites the log to hold only live sessions and glosses.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut w = self.writer.lock();
        let snap = self.snapshot();
        let records = snap.compacted_records();
        if let Some((path, file)) = &mut w.log {
            let mut tmp_name = path.as_os_str().to_owned();
            tmp_name.push(".compact");
            let tmp = PathBuf::from(tmp_name);
            let text: String = records.iter().map(Record::to_line).collect();
            let mut out = File::create(&tmp).map_err(io_err(&tmp))?;
            out.write_all(text.as_bytes())
                .and_then(|_| out.sync_all())
                .map_err(io_err(&tmp))?;
            std::fs::rename(&tmp, &*path).map_err(io_err(path))?;
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                // persist the rename itself; not every platform can open a directory
                if let Ok(d) = File::open(dir) {
                    let _ = d.sync_all();
                }
            }
            *file = OpenOptions::new().append(true).open(&*path).map_err(io_err(path))?;
        }
        let last = w.last_stamp;
        w.records = 0;
        for r in &records {
            w.observe(r);
        }
        w.last_stamp = w.last_stamp.max(last);
        Ok(())
    }

    /// Runs `build` under the writer lock; its records are validated against
    /// a copy of the current state, appended, and then published.
    fn mutate<T>(
        &self,
        build: impl FnOnce(&mut Writer, &Snapshot) -> Result<(Vec<Record>, T), StoreError>,
    ) -> Result<T, StoreError> {
        let mut w = self.writer.lock();
        let current = self.snapshot();
        let (records, out) = build(&mut w, &current)?;
        if records.is_empty() {
            return Ok(out);
        }
        let mut next = (*current).clone();
        for r in &records {
            next.apply(r)?;
        }
        w.append(&records)?;
        *self.snapshot.write() = Arc::new(next);
        Ok(out)
    }

    pub fn create_session(
        &self,
        prompt: &str,
        token_ids: Vec<TokenId>,
        model_id: &str,
        n_layers: usize,
    ) -> Result<Session, StoreError> {
        self.mutate(|w, snap| {
            let mut session_id = new_id();
            while snap.session(&session_id).is_some() {
                session_id = new_id();
            }
            let s = Session {
                session_id,
                prompt: prompt.to_string(),
                token_ids,
                model_id: model_id.to_string(),
                n_layers,
                created_at: w.stamp(),
            };
            Ok((vec![Record::Session(s.clone())], s))
        })
    }

    pub fn get_session(&self, id: &str) -> Result<Session, StoreError> {
        self.snapshot().session(id).cloned().ok_or_else(|| not_found("session", id))
    }

    pub fn create_gloss(&self, new: NewGloss) -> Result<Gloss, StoreError> {
        self.mutate(|w, snap| {
            let mut gloss_id = new_id();
            while snap.gloss(&gloss_id).is_some() {
                gloss_id = new_id();
            }
            let now = w.stamp();
            let g = Gloss {
                gloss_id,
                session_id: new.session_id,
                anchor: new.anchor,
                body: new.body,
                author: new.author,
                created_at: now,
                updated_at: now,
                tags: new.tags,
            };
            Ok((vec![Record::GlossCreate(g.clone())], g))
        })
    }

    pub fn get_gloss(&self, id: &str) -> Result<Gloss, StoreError> {
        self.snapshot().gloss(id).cloned().ok_or_else(|| not_found("gloss", id))
    }

    pub fn list_glosses(&self, session_id: &str, filter: &GlossFilter) -> Result<Vec<Gloss>, StoreError> {
        self.snapshot().list(session_id, filter)
    }

    /// Changes body and/or tags. Any anchor in the patch is refused, even
    /// one equal to the current anchor.
    pub fn update_gloss(&self, id: &str, patch: GlossPatch) -> Result<Gloss, StoreError> {
        self.mutate(|w, snap| {
            if snap.gloss(id).is_none() {
                return Err(not_found("gloss", id));
            }
            if patch.anchor.is_some() {
                return Err(StoreError::ImmutableField("anchor"));
            }
            if let Some(body) = &patch.body {
                check_body(body)?;
            }
            let rec = Record::GlossUpdate {
                gloss_id: id.to_string(),
                body: patch.body,
                tags: patch.tags,
                updated_at: w.stamp(),
            };
            Ok((vec![rec], ()))
        })?;
        self.get_gloss(id)
    }

    pub fn delete_gloss(&self, id: &str) -> Result<(), StoreError> {
        self.mutate(|w, snap| {
            if snap.gloss(id).is_none() {
                return Err(not_found("gloss", id));
            }
            let rec = Record::GlossDelete {
                gloss_id: id.to_string(),
                deleted_at: w.stamp(),
            };
            Ok((vec![rec], ()))
        })
    }

    /// The session record followed by one `gloss_create` line per live
    /// gloss, oldest first.
    pub fn export_session(&self, session_id: &str) -> Result<String, StoreError> {
        let snap = self.snapshot();
        let session = snap.session(session_id).ok_or_else(|| not_found("session", session_id))?;
        let mut out = Record::Session(session.clone()).to_line();
        for g in snap.list(session_id, &GlossFilter::default())? {
            out.push_str(&Record::GlossCreate(g).to_line());
        }
        Ok(out)
    }

    /// Imports an export stream; returns the number of glosses added.
    ///
    /// Lines of kind `basis` carry derived data and are skipped. Sessions already present must match exactly and are skipped. Any
    /// gloss id already present, or repeated in the stream, rejects the
    /// whole import.
    pub fn import(&self, data: &[u8]) -> Result<usize, StoreError> {
        let mut parsed = Vec::new();
        for (i, line) in data.split(|&b| b == b'\n').enumerate() {
            let parse_err = |message: String| StoreError::Parse { line: i + 1, message };
            let text = std::str::from_utf8(line).map_err(|e| parse_err(e.to_string()))?;
            if text.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
            if value.get("kind").and_then(|k| k.as_str()) == Some(DERIVED_KIND) {
                continue;
            }
            let record: Record = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
            if !matches!(record, Record::Session(_) | Record::GlossCreate(_)) {
                return Err(parse_err("only session and gloss_create records can be imported".into()));
            }
            parsed.push(record);
        }
        self.mutate(|_, snap| {
            let mut records = Vec::new();
            let mut count = 0;
            for record in parsed {
                match &record {
                    Record::Session(s) => match snap.session(&s.session_id) {
                        Some(existing) if existing == s => continue,
                        Some(_) => {
                            return Err(StoreError::Conflict {
                                what: "session",
                                id: s.session_id.clone(),
                            })
                        }
                        None => {}
                    },
                    _ => count += 1,
                }
                records.push(record);
            }
            Ok((records, count))
        })
    }
}
