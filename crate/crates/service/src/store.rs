//! Per-project persistence: an append-only commit log plus a current-state
//! document, and the feed of committed events.
//!
//! Layout under the data directory:
//!
//! ```text
//! projects/<project_id>/log.jsonl   one Commit per line, fsynced before acknowledging
//! projects/<project_id>/state.json  StoredProject at the latest revision
//! ```
//!
//! The log is authoritative. On open, the state document is used as a
//! checkpoint and any later commits in the log are replayed over it; a torn
//! final log line (crash mid-append) is discarded.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use pmdss_core::{
    Baseline, EventKind, LifecycleEvent, ProgressSnapshot, ProjectId, ProjectPhase, ProjectRecord,
    TimePoint,
};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::error::{Result, ServiceError};

const FEED_CAPACITY: usize = 1024;

/// A project record together with its write revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredProject {
    pub revision: u64,
    pub record: ProjectRecord,
}

impl StoredProject {
    /// Canonical serialization used for the state document and equality checks.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("stored project serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedKind {
    SnapshotRecorded,
    PhaseChanged,
    BaselineSet,
    DecisionRecorded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedEvent {
    pub sequence: u64,
    pub project_id: ProjectId,
    pub revision: u64,
    pub kind: FeedKind,
    /// Phase after the commit.
    pub phase: ProjectPhase,
    pub summary: String,
}

/// A state change, as written to the commit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Change {
    Created {
        project_id: ProjectId,
    },
    BaselineSet {
        baseline: Baseline,
        rebaseline: bool,
    },
    BaselineCleared,
    SnapshotRecorded {
        snapshot: ProgressSnapshot,
    },
    Advanced {
        event: LifecycleEvent,
        at: TimePoint,
    },
}

impl Change {
    /// The record after applying this change to `current`.
    pub fn apply(&self, current: &ProjectRecord) -> Result<ProjectRecord> {
        Ok(match self {
            Change::Created { project_id } => ProjectRecord::new(project_id.clone()),
            Change::BaselineSet {
                baseline,
                rebaseline,
            } => current.set_baseline(baseline.clone(), *rebaseline)?,
            Change::BaselineCleared => current.clear_baseline()?,
            Change::SnapshotRecorded { snapshot } => current.record_snapshot(snapshot.clone())?,
            Change::Advanced { event, at } => current.advance(*event, *at)?,
        })
    }

    fn feed_entry(
        &self,
        before: &ProjectRecord,
        after: &ProjectRecord,
    ) -> Option<(FeedKind, String)> {
        match self {
            Change::Created { .. } => None,
            Change::BaselineSet {
                baseline,
                rebaseline,
            } => Some((
                FeedKind::BaselineSet,
                format!(
                    "{} with {} tasks, BAC {}",
                    if *rebaseline {
                        "re-baselined"
                    } else {
                        "baseline set"
                    },
                    baseline.tasks().len(),
                    baseline.bac()
                ),
            )),
            Change::BaselineCleared => Some((FeedKind::BaselineSet, "baseline removed".to_owned())),
            Change::SnapshotRecorded { snapshot } => Some((
                FeedKind::SnapshotRecorded,
                format!(
                    "progress recorded at {} for {} tasks",
                    snapshot.status_date(),
                    snapshot.entries().len()
                ),
            )),
            Change::Advanced { event, .. } => {
                let transition = format!("{} -> {}", before.phase, after.phase);
                Some(match event.kind {
                    EventKind::Decision { .. } => (
                        FeedKind::DecisionRecorded,
                        format!("{} by {}; {transition}", event.kind, event.actor),
                    ),
                    kind => (
                        FeedKind::PhaseChanged,
                        format!("{kind} by {}; {transition}", event.actor),
                    ),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Commit {
    revision: u64,
    change: Change,
    feed: Option<FeedEvent>,
}

struct SlotState {
    stored: StoredProject,
    feed: Vec<FeedEvent>,
    dir: Option<PathBuf>,
    log: Option<File>,
    deleted: bool,
}

struct Slot {
    state: RwLock<SlotState>,
    tx: broadcast::Sender<FeedEvent>,
}

impl Slot {
    fn new(state: SlotState) -> Arc<Self> {
        let (tx, _) = broadcast::channel(FEED_CAPACITY);
        Arc::new(Slot {
            state: RwLock::new(state),
            tx,
        })
    }
}

/// Project ids double as directory names.
pub fn validate_project_id(id: &ProjectId) -> Result<()> {
    let s = id.as_str();
    let ok = !s.is_empty()
        && s.len() <= 64
        && !s.starts_with('.')
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::ValidationFailed(format!(
            "project_id `{s}` must be 1-64 characters of [A-Za-z0-9._-] and not start with '.'"
        )))
    }
}

/// Thread-safe project store. Each project has its own lock; a write to one
/// project never waits on another.
pub struct Store {
    root: Option<PathBuf>,
    projects: RwLock<BTreeMap<ProjectId, Arc<Slot>>>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            root: None,
            projects: RwLock::new(BTreeMap::new()),
        }
    }

    /// Opens (creating if needed) the store rooted at `data_dir`, recovering
    /// every project from its commit log.
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self> {
        let root = data_dir.as_ref().join("projects");
        fs::create_dir_all(&root)?;
        let mut projects = BTreeMap::new();
        let mut dirs: Vec<_> = fs::read_dir(&root)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("log.jsonl").is_file())
            .map(|e| e.path())
            .collect();
        dirs.sort();
        for dir in dirs {
            let state = recover(&dir)?;
            projects.insert(state.stored.record.project_id.clone(), Slot::new(state));
        }
        Ok(Self {
            root: Some(root),
            projects: RwLock::new(projects),
        })
    }

    pub fn is_persistent(&self) -> bool {
        self.root.is_some()
    }

    fn slot(&self, id: &ProjectId) -> Result<Arc<Slot>> {
        self.projects
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownProject(id.clone()))
    }

    pub fn list(&self) -> Vec<ProjectId> {
        self.projects.read().keys().cloned().collect()
    }

    pub fn create(&self, id: ProjectId) -> Result<StoredProject> {
        validate_project_id(&id)?;
        let mut projects = self.projects.write();
        if projects.contains_key(&id) {
            return Err(ServiceError::AlreadyExists(id));
        }
        let change = Change::Created {
            project_id: id.clone(),
        };
        let stored = StoredProject {
            revision: 1,
            record: ProjectRecord::new(id.clone()),
        };
        let commit = Commit {
            revision: 1,
            change,
            feed: None,
        };
        let (dir, log) = match &self.root {
            Some(root) => {
                let dir = root.join(id.as_str());
                if dir.exists() {
                    // left over from an interrupted create or delete
                    fs::remove_dir_all(&dir)?;
                }
                fs::create_dir_all(&dir)?;
                let mut log = open_log(&dir)?;
                append(&mut log, &commit)?;
                write_state(&dir, &stored)?;
                (Some(dir), Some(log))
            }
            None => (None, None),
        };
        projects.insert(
            id,
            Slot::new(SlotState {
                stored: stored.clone(),
                feed: Vec::new(),
                dir,
                log,
                deleted: false,
            }),
        );
        Ok(stored)
    }

    pub fn get(&self, id: &ProjectId) -> Result<StoredProject> {
        let slot = self.slot(id)?;
        let state = slot.state.read();
        Ok(state.stored.clone())
    }

    pub fn delete(&self, id: &ProjectId) -> Result<()> {
        let slot = self
            .projects
            .write()
            .remove(id)
            .ok_or_else(|| ServiceError::UnknownProject(id.clone()))?;
        let mut state = slot.state.write();
        state.deleted = true;
        state.log = None;
        if let Some(dir) = &state.dir {
            fs::remove_dir_all(dir)?;
        }
        Ok(())
    }

    /// Serialized write: checks `expected_revision`, builds the change from the
    /// current state, validates it by applying it, makes it durable, then
    /// publishes the resulting feed event.
    pub fn commit<F>(
        &self,
        id: &ProjectId,
        expected_revision: Option<u64>,
        build: F,
    ) -> Result<(StoredProject, Option<FeedEvent>)>
    where
        F: FnOnce(&StoredProject) -> Result<Change>,
    {
        let slot = self.slot(id)?;
        let mut state = slot.state.write();
        if state.deleted {
            return Err(ServiceError::UnknownProject(id.clone()));
        }
        let current = state.stored.revision;
        if let Some(expected) = expected_revision {
            if expected != current {
                return Err(ServiceError::ConflictingRevision {
                    expected,
                    actual: current,
                });
            }
        }
        let change = build(&state.stored)?;
        let record = change.apply(&state.stored.record)?;
        let revision = current + 1;
        let feed = change
            .feed_entry(&state.stored.record, &record)
            .map(|(kind, summary)| FeedEvent {
                sequence: state.feed.last().map_or(1, |e| e.sequence + 1),
                project_id: id.clone(),
                revision,
                kind,
                phase: record.phase,
                summary,
            });
        let stored = StoredProject { revision, record };
        let commit = Commit {
            revision,
            change,
            feed: feed.clone(),
        };
        if let Some(log) = state.log.as_mut() {
            append(log, &commit)?;
        }
        if let Some(dir) = &state.dir {
            write_state(dir, &stored)?;
        }
        state.stored = stored.clone();
        if let Some(ev) = &feed {
            state.feed.push(ev.clone());
            // no receivers is fine
            let _ = slot.tx.send(ev.clone());
        }
        Ok((stored, feed))
    }

    /// Committed events with `sequence > from`, in commit order.
    pub fn feed_since(&self, id: &ProjectId, from: u64) -> Result<Vec<FeedEvent>> {
        let slot = self.slot(id)?;
        let state = slot.state.read();
        Ok(backlog(&state.feed, from))
    }

    /// Backlog after `from` plus a receiver for later commits. The receiver is
    /// registered before the backlog is read, so nothing is missed; consumers
    /// drop live events whose sequence they have already seen.
    pub fn subscribe(
        &self,
        id: &ProjectId,
        from: u64,
    ) -> Result<(Vec<FeedEvent>, broadcast::Receiver<FeedEvent>)> {
        let slot = self.slot(id)?;
        let state = slot.state.read();
        let rx = slot.tx.subscribe();
        Ok((backlog(&state.feed, from), rx))
    }

    /// Syncs every open log to disk.
    pub fn flush(&self) -> Result<()> {
        for slot in self.projects.read().values() {
            if let Some(log) = slot.state.write().log.as_mut() {
                log.sync_all()?;
            }
        }
        Ok(())
    }
}

fn backlog(feed: &[FeedEvent], from: u64) -> Vec<FeedEvent> {
    let start = feed.partition_point(|e| e.sequence <= from);
    feed[start..].to_vec()
}

fn open_log(dir: &Path) -> Result<File> {
    Ok(OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("log.jsonl"))?)
}

fn append(log: &mut File, commit: &Commit) -> Result<()> {
    let mut line = serde_json::to_vec(commit).expect("commit serializes");
    line.push(b'\n');
    log.write_all(&line)?;
    log.sync_data()?;
    Ok(())
}

fn write_state(dir: &Path, stored: &StoredProject) -> Result<()> {
    let tmp = dir.join("state.json.tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(&stored.canonical_bytes())?;
    f.sync_all()?;
    fs::rename(&tmp, dir.join("state.json"))?;
    Ok(())
}

fn corrupt(dir: &Path, reason: impl Into<String>) -> ServiceError {
    ServiceError::Corrupt {
        project: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        reason: reason.into(),
    }
}

/// Rebuilds a project from its directory.
fn recover(dir: &Path) -> Result<SlotState> {
    let log_path = dir.join("log.jsonl");
    let mut commits = Vec::new();
    let mut valid_len = 0u64;
    let mut torn = false;
    {
        let mut reader = BufReader::new(File::open(&log_path)?);
        let mut line = Vec::new();
        loop {
            line.clear();
            let n = reader.read_until(b'\n', &mut line)?;
            if n == 0 {
                break;
            }
            let complete = line.ends_with(b"\n");
            match serde_json::from_slice::<Commit>(&line) {
                Ok(c) if complete => {
                    commits.push(c);
                    valid_len += n as u64;
                }
                _ => {
                    // only the final line may be torn
                    let mut rest = Vec::new();
                    std::io::Read::read_to_end(&mut reader, &mut rest)?;
                    if !rest.iter().all(u8::is_ascii_whitespace) {
                        return Err(corrupt(
                            dir,
                            format!("unreadable commit after byte {valid_len}"),
                        ));
                    }
                    torn = true;
                    break;
                }
            }
        }
    }
    if torn {
        OpenOptions::new()
            .write(true)
            .open(&log_path)?
            .set_len(valid_len)?;
    }
    if commits.is_empty() {
        return Err(corrupt(dir, "empty commit log"));
    }

    let checkpoint: Option<StoredProject> = fs::read(dir.join("state.json"))
        .ok()
        .and_then(|bytes| serde_json::from_slice(&bytes).ok());

    let mut stored: Option<StoredProject> = None;
    let mut feed = Vec::new();
    for (i, c) in commits.iter().enumerate() {
        if c.revision != i as u64 + 1 {
            return Err(corrupt(
                dir,
                format!("revision {} found at position {}", c.revision, i + 1),
            ));
        }
        if let Some(ev) = &c.feed {
            feed.push(ev.clone());
        }
        if let Some(cp) = &checkpoint {
            if c.revision == cp.revision {
                stored = Some(cp.clone());
                continue;
            }
        }
        let base = match &stored {
            Some(s) => s.record.clone(),
            None if matches!(c.change, Change::Created { .. }) => {
                ProjectRecord::new(ProjectId::new(""))
            }
            None => return Err(corrupt(dir, "log does not start with project creation")),
        };
        let record = c
            .change
            .apply(&base)
            .map_err(|e| corrupt(dir, format!("replaying revision {}: {e}", c.revision)))?;
        stored = Some(StoredProject {
            revision: c.revision,
            record,
        });
    }
    let stored = stored.expect("at least one commit");
    if checkpoint.as_ref() != Some(&stored) {
        write_state(dir, &stored)?;
    }
    Ok(SlotState {
        stored,
        feed,
        dir: Some(dir.to_path_buf()),
        log: Some(open_log(dir)?),
        deleted: false,
    })
}
