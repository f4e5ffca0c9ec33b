use crate::domain::{TaskId, TimeWindow, TIME_EPS};

/// One leg of a chain: travel to a task's start, then serve it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainLeg {
    pub task: TaskId,
    /// Seconds of travel from the previous stop (or the agent) to this task.
    pub travel: f64,
    pub window: TimeWindow,
    pub service_time: f64,
}

/// Timing at one served task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stop {
    pub task: TaskId,
    /// Raw arrival instant before any waiting.
    pub arrival: f64,
    /// Service start t^h: arrival pushed to the window opening.
    pub start: f64,
    /// Idle time t^w absorbed by an early arrival.
    pub wait: f64,
    pub departure: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Schedule {
    pub stops: Vec<Stop>,
}

impl Schedule {
    pub fn departure(&self) -> Option<f64> {
        self.stops.last().map(|s| s.departure)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Infeasible {
    Unreachable { task: TaskId },
    WindowClosed { task: TaskId, start: f64 },
    BeyondHorizon { task: TaskId, start: f64 },
    RepeatedTask { task: TaskId },
}

/// Serves one more task after leaving the previous stop at `departure`.
pub(crate) fn next_stop(
    departure: f64,
    leg: &ChainLeg,
    horizon_end: f64,
) -> Result<Stop, Infeasible> {
    if !leg.travel.is_finite() {
        return Err(Infeasible::Unreachable { task: leg.task });
    }
    let arrival = departure + leg.travel;
    let start = arrival.max(leg.window.open);
    if start > leg.window.close + TIME_EPS {
        return Err(Infeasible::WindowClosed {
            task: leg.task,
            start,
        });
    }
    if start > horizon_end + TIME_EPS {
        return Err(Infeasible::BeyondHorizon {
            task: leg.task,
            start,
        });
    }
    Ok(Stop {
        task: leg.task,
        arrival,
        start,
        wait: start - arrival,
        departure: start + leg.service_time,
    })
}

/// Forward-propagates service start times along a chain. Early arrivals
/// wait for the window to open; a chain is rejected as soon as a start
/// falls after its window closes or past `horizon_end`.
pub fn check_time_feasibility(
    chain: &[ChainLeg],
    start_time: f64,
    horizon_end: f64,
) -> Result<Schedule, Infeasible> {
    let mut stops: Vec<Stop> = Vec::with_capacity(chain.len());
    let mut departure = start_time;
    for leg in chain {
        if stops.iter().any(|s| s.task == leg.task) {
            return Err(Infeasible::RepeatedTask { task: leg.task });
        }
        let stop = next_stop(departure, leg, horizon_end)?;
        departure = stop.departure;
        stops.push(stop);
    }
    Ok(Schedule { stops })
}
