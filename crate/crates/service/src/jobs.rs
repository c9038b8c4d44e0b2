//! Training job bookkeeping. One job runs at a time on a dedicated worker
//! thread; at most one more may wait.

use std::collections::BTreeMap;
use std::sync::Arc;

use lagrisk_core::lstm::{FeatureMatrix, Sample, TrainConfig};
use lagrisk_core::risk::GridSpec;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::registry::GridRef;

/// Running job plus queued jobs.
pub const MAX_PENDING: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_final(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    /// Epochs completed so far.
    pub progress: usize,
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_loss: Option<f64>,
    /// Model handle when done, error text when failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_ref: Option<String>,
}

fn default_hidden() -> usize {
    8
}

/// Body of `POST /train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    /// Handle of a `samples` dataset.
    pub samples: String,
    /// Handle for the trained model; `model-<job_id>` when absent.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub config: TrainConfig,
    /// Baseline feature matrix attached to the trained model.
    #[serde(default)]
    pub features: Option<String>,
    #[serde(default)]
    pub grid: Option<GridRef>,
}

/// Everything the worker needs, resolved at submission time.
#[derive(Debug, Clone)]
pub struct TrainJob {
    pub job_id: String,
    pub name: String,
    pub samples: Arc<Vec<Sample>>,
    pub n_in: usize,
    pub n_out: usize,
    pub hidden: usize,
    pub config: TrainConfig,
    pub features: Option<(String, Arc<FeatureMatrix>)>,
    pub grid: GridSpec,
    pub grid_ref: Option<GridRef>,
}

#[derive(Debug, Default)]
pub struct JobTable {
    records: BTreeMap<String, JobRecord>,
    next_id: u64,
    pending: usize,
}

impl JobTable {
    /// Reserves a queue slot and returns the new job id.
    pub fn submit(&mut self, epochs: usize) -> ApiResult<String> {
        if self.pending >= MAX_PENDING {
            return Err(ApiError::conflict(
                "queue_full",
                "a training job is running and another is queued; retry later",
            ));
        }
        self.next_id += 1;
        let job_id = format!("job-{}", self.next_id);
        self.records.insert(
            job_id.clone(),
            JobRecord {
                job_id: job_id.clone(),
                kind: JobKind::Train,
                status: JobStatus::Queued,
                progress: 0,
                epochs,
                last_loss: None,
                result_ref: None,
            },
        );
        self.pending += 1;
        Ok(job_id)
    }

    /// Undo a submission that never reached the worker.
    pub fn cancel_unqueued(&mut self, job_id: &str) {
        if self.records.remove(job_id).is_some() {
            self.pending -= 1;
        }
    }

    pub fn get(&self, job_id: &str) -> Option<&JobRecord> {
        self.records.get(job_id)
    }

    pub fn pending(&self) -> usize {
        self.pending
    }

    /// Moves a job forward; backwards or repeated final transitions are ignored.
    pub fn advance(&mut self, job_id: &str, status: JobStatus, result_ref: Option<String>) {
        let Some(r) = self.records.get_mut(job_id) else {
            return;
        };
        if status <= r.status || r.status.is_final() {
            return;
        }
        r.status = status;
        if status.is_final() {
            r.result_ref = result_ref;
            self.pending -= 1;
        }
    }

    pub fn progress(&mut self, job_id: &str, epoch: usize, loss: f64) {
        if let Some(r) = self.records.get_mut(job_id) {
            r.progress = epoch;
            r.last_loss = Some(loss);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_only_moves_forward() {
        let mut t = JobTable::default();
        let id = t.submit(10).unwrap();
        t.advance(&id, JobStatus::Running, None);
        t.advance(&id, JobStatus::Queued, None);
        assert_eq!(t.get(&id).unwrap().status, JobStatus::Running);
        t.advance(&id, JobStatus::Done, Some("m".into()));
        t.advance(&id, JobStatus::Failed, Some("late".into()));
        let r = t.get(&id).unwrap();
        assert_eq!(r.status, JobStatus::Done);
        assert_eq!(r.result_ref.as_deref(), Some("m"));
        assert_eq!(t.pending(), 0);
    }

    #[test]
    fn third_submission_is_refused() {
        let mut t = JobTable::default();
        let a = t.submit(1).unwrap();
        let b = t.submit(1).unwrap();
        assert_ne!(a, b);
        assert_eq!(t.submit(1).unwrap_err().status, 409);
        t.advance(&a, JobStatus::Running, None);
        t.advance(&a, JobStatus::Failed, Some("x".into()));
        assert!(t.submit(1).is_ok());
    }
}
