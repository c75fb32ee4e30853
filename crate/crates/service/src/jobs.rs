use std::collections::HashMap;
use std::sync::Mutex;

use panelmap::Totals;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done | JobState::Failed)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobRecord {
    pub job_id: String,
    pub state: JobState,
    pub region: Value,
    pub region_id: String,
    pub zoom: u8,
    pub tile_w: u32,
    pub tile_h: u32,
    pub progress: Progress,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals: Option<Totals>,
    /// Result document path, present once the job is done.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// In-memory job table. Every mutation goes through one lock, so state
/// changes are atomic and only ever move forward.
#[derive(Default)]
pub struct JobStore {
    jobs: Mutex<HashMap<String, JobRecord>>,
}

impl JobStore {
    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, JobRecord>> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn insert(&self, job: JobRecord) {
        self.lock().insert(job.job_id.clone(), job);
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.lock().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Apply `f` after moving to `next`; returns false for a backwards move.
    pub fn transition(&self, id: &str, next: JobState, f: impl FnOnce(&mut JobRecord)) -> bool {
        let mut jobs = self.lock();
        let Some(job) = jobs.get_mut(id) else { return false };
        if !job.state.can_become(next) {
            tracing::warn!(job_id = id, from = ?job.state, to = ?next, "rejected job state change");
            return false;
        }
        job.state = next;
        f(job);
        true
    }

    pub fn set_progress(&self, id: &str, done: usize) {
        if let Some(job) = self.lock().get_mut(id) {
            job.progress.done = job.progress.done.max(done.min(job.progress.total));
        }
    }
}
