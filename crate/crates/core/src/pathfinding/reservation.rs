use std::collections::{BTreeSet, HashMap, HashSet};

use crate::world::Position;

/// Space-time occupancy claimed by already planned robots.
///
/// A vertex entry `(p, t)` means some robot is at `p` at step `t`; an entry
/// `(p, t)` in `entries` means it moved into `p` at step `t`. A parked cell is
/// blocked from its step onward, which is how robots that have finished their
/// legs (or have none) are kept out of everyone's way.
///
/// Planned robots keep a two-step clearance: whenever one robot enters a cell
/// at step `k`, no other robot occupies it at any step in `k-2..=k`. A robot
/// on schedule therefore never senses another robot on the next two cells of
/// its plan.
#[derive(Clone, Debug, Default)]
pub struct ReservationTable {
    vertices: HashMap<Position, BTreeSet<u32>>,
    entries: HashSet<(Position, u32)>,
    edges: HashSet<(Position, Position, u32)>,
    parked: HashMap<Position, u32>,
}

impl ReservationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reserve_vertex(&mut self, p: Position, t: u32) {
        self.vertices.entry(p).or_default().insert(t);
    }

    /// Records a move leaving `from` at step `t` and entering `to` at `t + 1`.
    pub fn reserve_edge(&mut self, from: Position, to: Position, t: u32) {
        self.edges.insert((from, to, t));
        self.entries.insert((to, t + 1));
    }

    /// Reserves a whole trajectory whose first cell is occupied at `start`.
    pub fn reserve_path(&mut self, cells: &[Position], start: u32) {
        for (k, &p) in cells.iter().enumerate() {
            let t = start + k as u32;
            self.reserve_vertex(p, t);
            if let Some(&next) = cells.get(k + 1) {
                if next != p {
                    self.reserve_edge(p, next, t);
                }
            }
        }
    }

    /// Undoes [`reserve_path`](Self::reserve_path) for the same arguments.
    pub fn release_path(&mut self, cells: &[Position], start: u32) {
        for (k, &p) in cells.iter().enumerate() {
            let t = start + k as u32;
            if let Some(ts) = self.vertices.get_mut(&p) {
                ts.remove(&t);
                if ts.is_empty() {
                    self.vertices.remove(&p);
                }
            }
            if let Some(&next) = cells.get(k + 1) {
                if next != p {
                    self.edges.remove(&(p, next, t));
                    self.entries.remove(&(next, t + 1));
                }
            }
        }
    }

    pub fn park(&mut self, p: Position, from: u32) {
        self.parked.insert(p, from);
    }

    pub fn unpark(&mut self, p: Position) -> Option<u32> {
        self.parked.remove(&p)
    }

    pub fn parked_at(&self, p: Position) -> Option<u32> {
        self.parked.get(&p).copied()
    }

    pub fn vertex_free(&self, p: Position, t: u32) -> bool {
        !self.vertices.get(&p).is_some_and(|ts| ts.contains(&t))
            && self.parked.get(&p).is_none_or(|&s| s > t)
    }

    /// Whether a robot may be at `p` at step `t` without standing where
    /// another robot is about to enter.
    pub fn occupiable(&self, p: Position, t: u32) -> bool {
        self.vertex_free(p, t)
            && !self.entries.contains(&(p, t + 1))
            && !self.entries.contains(&(p, t + 2))
    }

    /// Whether a robot at `from` at step `t` may be at `to` at `t + 1`. A
    /// newly entered cell must also be empty for the two steps before entry,
    /// which rules out swaps and following.
    pub fn move_free(&self, from: Position, to: Position, t: u32) -> bool {
        if !self.occupiable(to, t + 1) {
            return false;
        }
        from == to
            || ((t == 0 || self.vertex_free(to, t - 1))
                && self.vertex_free(to, t)
                && !self.edges.contains(&(to, from, t)))
    }

    /// Whether a robot may arrive at `p` at step `t` and stay there for good.
    pub fn can_rest(&self, p: Position, t: u32) -> bool {
        self.occupiable(p, t)
            && !self.parked.contains_key(&p)
            && self
                .vertices
                .get(&p)
                .and_then(|ts| ts.last())
                .is_none_or(|&l| l < t)
    }
}
