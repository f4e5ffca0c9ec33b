use serde::Serialize;

use crate::domain::{AgentId, TaskId, TaskMode, TaskStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Every task finished or was cancelled by an event.
    Completed,
    /// The run ended but some tasks expired unserved.
    Incomplete,
    /// The step cap was reached first.
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskMetrics {
    pub id: TaskId,
    pub mode: TaskMode,
    pub status: TaskStatus,
    /// Update index of the first allocation that assigned the task.
    pub assigned_step: Option<u32>,
    pub completed_step: Option<u32>,
    pub completion_time: Option<f64>,
    /// Instant service began at the task origin.
    pub pickup_time: Option<f64>,
    pub agent: Option<AgentId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub status: RunStatus,
    pub steps: u32,
    pub updates: u32,
    /// Update index by which the last task completed.
    pub completion_step: u32,
    /// Update index by which every served task had been assigned.
    pub all_assigned_step: u32,
    pub total_robot_distance: f64,
    pub total_wait_steps: u64,
    pub collisions: usize,
    pub expired: Vec<TaskId>,
    pub solver_ms_per_update: Vec<f64>,
    pub per_task: Vec<TaskMetrics>,
}
