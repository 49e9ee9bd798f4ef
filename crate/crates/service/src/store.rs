//! On-disk state: datasets by content hash, calibrations, and one
//! append-only JSON-lines log per session.
//!
//! Layout under the data directory:
//!
//! ```text
//! datasets/<hash>.json        values and optional gold labels
//! calibrations/<id>.json      exported or imported calibration results
//! sessions/<id>.jsonl         {"created": spec}, then one {"action": ...} per accepted submission
//! ```
//!
//! Sessions are loaded lazily: the first request for an id that is not in
//! memory replays its log, which is how a restarted server resumes.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vnorm_core::calibration::CalibrationResult;
use vnorm_core::pipeline::{PipelineConfig, Prepared};
use vnorm_core::similarity::SimilarityConfig;
use vnorm_core::{GoldPartition, ValueTable};

use crate::error::{ServiceError, ServiceResult};
use crate::live::{Applied, LiveSession, SessionSpec, Submission};

/// An uploaded dataset. `labels`, when present, is the gold entity of each value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub values: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl DatasetRecord {
    /// Collapses duplicate values; their labels must agree.
    pub fn normalized(self) -> ServiceResult<Self> {
        let (table, ids) = ValueTable::ingest(self.values.iter().cloned());
        let labels = match self.labels {
            None => None,
            Some(labels) => {
                if labels.len() != ids.len() {
                    return Err(ServiceError::BadRequest(format!(
                        "{} labels for {} values",
                        labels.len(),
                        ids.len()
                    )));
                }
                let mut out: Vec<Option<String>> = vec![None; table.len()];
                for (&id, label) in ids.iter().zip(labels) {
                    match &out[id] {
                        Some(prev) if *prev != label => {
                            return Err(ServiceError::BadRequest(format!(
                                "duplicate value {:?} has labels {prev:?} and {label:?}",
                                table.get(id)
                            )))
                        }
                        _ => out[id] = Some(label),
                    }
                }
                Some(out.into_iter().map(|l| l.expect("every id has a position")).collect())
            }
        };
        Ok(Self {
            values: table.values().to_vec(),
            labels,
        })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plain data serializes");
        hex::encode(Sha256::digest(&bytes))[..32].to_string()
    }

    pub fn gold(&self) -> Option<GoldPartition> {
        self.labels.as_ref().map(|l| GoldPartition::from_labels(l))
    }
}

pub struct Dataset {
    pub id: String,
    pub record: DatasetRecord,
    pub table: Arc<ValueTable>,
    pub gold: Option<GoldPartition>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LogRecord {
    Created(SessionSpec),
    Action(ActionRecord),
}

/// One accepted submission as persisted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub seq: u64,
    /// Seconds since the Unix epoch when the action was accepted.
    pub timestamp: f64,
    pub slot: usize,
    pub task: u64,
    pub action: Submission,
    pub charged_seconds: f64,
    pub assertions: usize,
}

pub struct SessionEntry {
    pub id: String,
    pub live: LiveSession,
    log: File,
}

type Shared<T> = Arc<Mutex<T>>;

pub struct Store {
    dir: PathBuf,
    datasets: Mutex<HashMap<String, Arc<Dataset>>>,
    prepared: Mutex<HashMap<String, Arc<Prepared>>>,
    sessions: Mutex<HashMap<String, Shared<SessionEntry>>>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Ids become file names; only accept what we hand out.
fn check_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> ServiceResult<Self> {
        let dir = dir.as_ref().to_path_buf();
        for sub in ["datasets", "calibrations", "sessions"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        Ok(Self {
            dir,
            datasets: Mutex::new(HashMap::new()),
            prepared: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, kind: &str, id: &str, ext: &str) -> PathBuf {
        self.dir.join(kind).join(format!("{id}.{ext}"))
    }

    /// Stores a dataset; uploading the same content twice returns the same id.
    pub fn put_dataset(&self, record: DatasetRecord) -> ServiceResult<Arc<Dataset>> {
        let record = record.normalized()?;
        let id = record.content_hash();
        let path = self.path("datasets", &id, "json");
        if !path.exists() {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, serde_json::to_vec(&record)?)?;
            fs::rename(&tmp, &path)?;
        }
        self.dataset(&id)
    }

    pub fn dataset(&self, id: &str) -> ServiceResult<Arc<Dataset>> {
        if let Some(d) = lock(&self.datasets).get(id) {
            return Ok(Arc::clone(d));
        }
        if !check_id(id) {
            return Err(ServiceError::UnknownDataset(id.to_string()));
        }
        let path = self.path("datasets", id, "json");
        let bytes = fs::read(&path).map_err(|_| ServiceError::UnknownDataset(id.to_string()))?;
        let record: DatasetRecord = serde_json::from_slice(&bytes)?;
        let dataset = Arc::new(Dataset {
            id: id.to_string(),
            table: Arc::new(ValueTable::new(record.values.iter().cloned())),
            gold: record.gold(),
            record,
        });
        lock(&self.datasets).insert(id.to_string(), Arc::clone(&dataset));
        Ok(dataset)
    }

    /// Joint HAC and calibration tasks for a dataset, cached per configuration.
    pub fn prepared(
        &self,
        dataset: &str,
        similarity: &SimilarityConfig,
        caps: Option<&[usize]>,
        calibration_seed: u64,
    ) -> ServiceResult<Arc<Prepared>> {
        let key = serde_json::to_string(&(dataset, similarity, caps, calibration_seed))?;
        if let Some(p) = lock(&self.prepared).get(&key) {
            return Ok(Arc::clone(p));
        }
        let data = self.dataset(dataset)?;
        let config = PipelineConfig {
            similarity: *similarity,
            caps: caps.map(<[usize]>::to_vec),
            calibration_seed,
            ..Default::default()
        };
        let prepared = Arc::new(Prepared::new(Arc::clone(&data.table), config)?);
        lock(&self.prepared).insert(key, Arc::clone(&prepared));
        Ok(prepared)
    }

    pub fn put_calibration(&self, id: &str, result: &CalibrationResult) -> ServiceResult<()> {
        if !check_id(id) {
            return Err(ServiceError::BadRequest(format!("bad calibration id {id:?}")));
        }
        let path = self.path("calibrations", id, "json");
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(result)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn calibration(&self, id: &str) -> ServiceResult<CalibrationResult> {
        if !check_id(id) {
            return Err(ServiceError::UnknownCalibration(id.to_string()));
        }
        let path = self.path("calibrations", id, "json");
        match fs::read(&path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            // A finished calibrate session doubles as a calibration.
            Err(_) => match self.session(id) {
                Ok(entry) => lock(&entry).live.calibration(),
                Err(_) => Err(ServiceError::UnknownCalibration(id.to_string())),
            },
        }
    }

    fn build(&self, spec: SessionSpec) -> ServiceResult<LiveSession> {
        let prepared = self.prepared(&spec.dataset, &spec.similarity, spec.caps.as_deref(), spec.calibration_seed)?;
        LiveSession::new(spec, prepared)
    }

    pub fn create_session(&self, spec: SessionSpec) -> ServiceResult<String> {
        let live = self.build(spec.clone())?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = self.path("sessions", &id, "jsonl");
        let mut log = OpenOptions::new().create_new(true).append(true).open(&path)?;
        append(&mut log, &LogRecord::Created(spec))?;
        let entry = SessionEntry {
            id: id.clone(),
            live,
            log,
        };
        lock(&self.sessions).insert(id.clone(), Arc::new(Mutex::new(entry)));
        Ok(id)
    }

    /// A session from memory, or rebuilt from its log.
    pub fn session(&self, id: &str) -> ServiceResult<Shared<SessionEntry>> {
        if let Some(s) = lock(&self.sessions).get(id) {
            return Ok(Arc::clone(s));
        }
        if !check_id(id) {
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        let path = self.path("sessions", id, "jsonl");
        if !path.exists() {
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        let live = self.replay(&path)?;
        let log = OpenOptions::new().append(true).open(&path)?;
        let entry = Arc::new(Mutex::new(SessionEntry {
            id: id.to_string(),
            live,
            log,
        }));
        // Another request may have replayed the same log meanwhile; keep the first.
        let mut sessions = lock(&self.sessions);
        Ok(Arc::clone(sessions.entry(id.to_string()).or_insert(entry)))
    }

    /// Rebuilds a session from its log. A torn final record (a crash mid-write)
    /// was never acknowledged, so it is cut off and the log is left ending in a
    /// newline, ready for the next append.
    fn replay(&self, path: &Path) -> ServiceResult<LiveSession> {
        let bytes = fs::read(path)?;
        let mut live: Option<LiveSession> = None;
        let mut good_end = 0;
        let mut start = 0;
        let mut line_no = 0;
        while start < bytes.len() {
            line_no += 1;
            let end = bytes[start..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| start + i);
            let line = &bytes[start..end];
            let next = (end + 1).min(bytes.len());
            if line.iter().all(u8::is_ascii_whitespace) {
                start = next;
                good_end = next;
                continue;
            }
            let record: LogRecord = match serde_json::from_slice(line) {
                Ok(r) => r,
                Err(e) if e.is_eof() && end == bytes.len() => {
                    log::warn!("{}: cutting torn line {line_no}", path.display());
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            match (record, live.as_mut()) {
                (LogRecord::Created(spec), None) => live = Some(self.build(spec)?),
                (LogRecord::Action(a), Some(l)) => {
                    let applied = l.submit(a.slot, a.action)?;
                    if applied.charged_seconds.to_bits() != a.charged_seconds.to_bits() {
                        log::warn!("{}: action {} replays to a different charge", path.display(), a.seq);
                    }
                }
                _ => {
                    return Err(ServiceError::Storage(format!(
                        "{}: malformed log at line {line_no}",
                        path.display()
                    )))
                }
            }
            start = next;
            good_end = next;
        }
        let unterminated = good_end > 0 && bytes[good_end - 1] != b'\n';
        if good_end < bytes.len() || unterminated {
            let mut f = OpenOptions::new().write(true).open(path)?;
            f.set_len(good_end as u64)?;
            if unterminated {
                use std::io::{Seek, SeekFrom};
                f.seek(SeekFrom::End(0))?;
                f.write_all(b"\n")?;
            }
            f.sync_data()?;
        }
        live.ok_or_else(|| ServiceError::Storage(format!("{}: empty log", path.display())))
    }

    /// Applies a submission and appends it to the log before returning.
    pub fn submit(&self, id: &str, slot: usize, submission: Submission) -> ServiceResult<Applied> {
        let entry = self.session(id)?;
        let mut entry = lock(&entry);
        let applied = entry.live.submit(slot, submission.clone())?;
        let record = LogRecord::Action(ActionRecord {
            seq: entry.live.applied(),
            timestamp: now(),
            slot,
            task: applied.task_id,
            action: submission,
            charged_seconds: applied.charged_seconds,
            assertions: applied.assertions,
        });
        if let Err(e) = append(&mut entry.log, &record) {
            // Not durable, so not accepted: fall back to what the log says.
            let path = self.path("sessions", id, "jsonl");
            entry.live = self.replay(&path)?;
            return Err(e);
        }
        if entry.live.is_done() && entry.live.spec().mode == crate::live::Mode::Calibrate {
            let result = entry.live.calibration()?;
            self.put_calibration(id, &result)?;
        }
        Ok(applied)
    }

    /// Drops in-memory sessions so the next access replays from disk.
    pub fn evict_sessions(&self) {
        lock(&self.sessions).clear();
    }
}

fn append(log: &mut File, record: &LogRecord) -> ServiceResult<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    log.write_all(&line)?;
    log.sync_data()?;
    Ok(())
}
