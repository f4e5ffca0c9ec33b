//! Grid map, passability, free-space distances and the two graph views used
//! by the planners: the weighted task graph and the passable-cell graph.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentState, Task, TaskMode};

/// A grid cell coordinate. Columns and rows are 1-based; rows grow downward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub col: u16,
    pub row: u16,
}

impl Position {
    pub const fn new(col: u16, row: u16) -> Self {
        Self { col, row }
    }

    pub fn manhattan(self, other: Position) -> u32 {
        u32::from(self.col.abs_diff(other.col)) + u32::from(self.row.abs_diff(other.row))
    }

    /// Offsets the position, returning `None` when it would leave the
    /// positive quadrant. Bounds against a concrete map are checked elsewhere.
    pub fn offset(self, dcol: i32, drow: i32) -> Option<Position> {
        let col = i32::from(self.col) + dcol;
        let row = i32::from(self.row) + drow;
        if col < 1 || row < 1 || col > i32::from(u16::MAX) || row > i32::from(u16::MAX) {
            return None;
        }
        Some(Position::new(col as u16, row as u16))
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

/// Neighbor offsets in the order north, east, south, west.
pub const NEIGHBOR_OFFSETS: [(i32, i32); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Road,
    Workstation,
    Charging,
    Warehouse,
    Obstacle,
}

impl CellKind {
    pub fn from_char(c: char) -> Option<CellKind> {
        match c {
            '.' => Some(CellKind::Road),
            '#' => Some(CellKind::Obstacle),
            'W' => Some(CellKind::Workstation),
            'C' => Some(CellKind::Charging),
            'H' => Some(CellKind::Warehouse),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            CellKind::Road => '.',
            CellKind::Obstacle => '#',
            CellKind::Workstation => 'W',
            CellKind::Charging => 'C',
            CellKind::Warehouse => 'H',
        }
    }

    pub fn is_passable(self) -> bool {
        self != CellKind::Obstacle
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid position {0}: out of bounds or obstacle")]
    InvalidPosition(Position),
    #[error("map row {row} has width {found}, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("unknown map character {ch:?} at row {row}, column {col}")]
    UnknownCell { ch: char, row: usize, col: usize },
    #[error("map must contain exactly one warehouse cell, found {0}")]
    WarehouseCount(usize),
    #[error("map is empty")]
    Empty,
    #[error("grid side must be positive, got {0}")]
    GridSide(f64),
    #[error("no path between {0} and {1}")]
    Unreachable(Position, Position),
}

/// The rasterized warehouse floor.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    width: u16,
    height: u16,
    cells: Vec<CellKind>,
    grid_side: f64,
    warehouse: Position,
}

impl GridMap {
    /// Builds a map from row strings using the legend
    /// `.` road, `#` obstacle, `W` workstation, `C` charging, `H` warehouse.
    pub fn parse<S: AsRef<str>>(rows: &[S], grid_side: f64) -> Result<GridMap, WorldError> {
        if !grid_side.is_finite() || grid_side <= 0.0 {
            return Err(WorldError::GridSide(grid_side));
        }
        let height = rows.len();
        if height == 0 {
            return Err(WorldError::Empty);
        }
        let width = rows[0].as_ref().chars().count();
        if width == 0 {
            return Err(WorldError::Empty);
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut warehouses = Vec::new();
        for (r, line) in rows.iter().enumerate() {
            let line = line.as_ref();
            let found = line.chars().count();
            if found != width {
                return Err(WorldError::RaggedRow {
                    row: r + 1,
                    found,
                    expected: width,
                });
            }
            for (c, ch) in line.chars().enumerate() {
                let kind = CellKind::from_char(ch).ok_or(WorldError::UnknownCell {
                    ch,
                    row: r + 1,
                    col: c + 1,
                })?;
                if kind == CellKind::Warehouse {
                    warehouses.push(Position::new(c as u16 + 1, r as u16 + 1));
                }
                cells.push(kind);
            }
        }
        if warehouses.len() != 1 {
            return Err(WorldError::WarehouseCount(warehouses.len()));
        }
        Ok(GridMap {
            width: width as u16,
            height: height as u16,
            cells,
            grid_side,
            warehouse: warehouses[0],
        })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn area(&self) -> usize {
        usize::from(self.width) * usize::from(self.height)
    }

    /// Side length of one cell in meters.
    pub fn grid_side(&self) -> f64 {
        self.grid_side
    }

    pub fn warehouse(&self) -> Position {
        self.warehouse
    }

    pub fn in_bounds(&self, p: Position) -> bool {
        p.col >= 1 && p.row >= 1 && p.col <= self.width && p.row <= self.height
    }

    /// Dense index of an in-bounds position.
    pub fn index(&self, p: Position) -> usize {
        debug_assert!(self.in_bounds(p));
        usize::from(p.row - 1) * usize::from(self.width) + usize::from(p.col - 1)
    }

    pub fn position(&self, index: usize) -> Position {
        let w = usize::from(self.width);
        Position::new((index % w) as u16 + 1, (index / w) as u16 + 1)
    }

    pub fn kind(&self, p: Position) -> Option<CellKind> {
        self.in_bounds(p).then(|| self.cells[self.index(p)])
    }

    pub fn is_passable(&self, p: Position) -> bool {
        self.kind(p).is_some_and(CellKind::is_passable)
    }

    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        (0..self.cells.len()).map(|i| self.position(i))
    }

    pub fn passable_positions(&self) -> impl Iterator<Item = Position> + '_ {
        self.positions().filter(|p| self.is_passable(*p))
    }

    pub fn rows(&self) -> Vec<String> {
        (0..usize::from(self.height))
            .map(|r| {
                let w = usize::from(self.width);
                self.cells[r * w..(r + 1) * w]
                    .iter()
                    .map(|k| k.to_char())
                    .collect()
            })
            .collect()
    }

    /// Passable 4-neighbors in north, east, south, west order.
    pub fn neighbors(&self, p: Position) -> Result<Vec<Position>, WorldError> {
        if !self.is_passable(p) {
            return Err(WorldError::InvalidPosition(p));
        }
        Ok(self.passable_neighbors(p).collect())
    }

    pub(crate) fn passable_neighbors(&self, p: Position) -> impl Iterator<Item = Position> + '_ {
        NEIGHBOR_OFFSETS
            .iter()
            .filter_map(move |&(dc, dr)| p.offset(dc, dr))
            .filter(move |q| self.is_passable(*q))
    }

    /// Breadth-first step counts from `source` to every cell, `None` where
    /// unreachable or impassable.
    pub fn distance_field(&self, source: Position) -> Vec<Option<u32>> {
        self.distance_field_avoiding(source, |_| false)
    }

    /// Like [`GridMap::distance_field`] but treats cells for which `blocked`
    /// returns true as impassable. The source itself is never blocked.
    pub fn distance_field_avoiding(
        &self,
        source: Position,
        blocked: impl Fn(Position) -> bool,
    ) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.cells.len()];
        if !self.is_passable(source) {
            return dist;
        }
        let mut queue = VecDeque::new();
        dist[self.index(source)] = Some(0);
        queue.push_back(source);
        while let Some(p) = queue.pop_front() {
            let d = dist[self.index(p)].unwrap_or(0);
            for q in self.passable_neighbors(p) {
                let qi = self.index(q);
                if dist[qi].is_none() && !blocked(q) {
                    dist[qi] = Some(d + 1);
                    queue.push_back(q);
                }
            }
        }
        dist
    }

    /// Minimal number of 4-connected moves between two passable cells, or
    /// `None` when no path exists.
    pub fn grid_distance(&self, a: Position, b: Position) -> Result<Option<u32>, WorldError> {
        for p in [a, b] {
            if !self.is_passable(p) {
                return Err(WorldError::InvalidPosition(p));
            }
        }
        if a == b {
            return Ok(Some(0));
        }
        Ok(self.distance_field(a)[self.index(b)])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexKind {
    Agent(u32),
    PickupStart(u32),
    DeliveryOrigin(u32),
    DeliveryDestination(u32),
    Warehouse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub kind: VertexKind,
    pub position: Position,
}

/// Complete weighted digraph over agent positions, task endpoints and the
/// warehouse. Weights are free-space distances in meters.
#[derive(Clone, Debug)]
pub struct TaskGraph {
    vertices: Vec<Vertex>,
    distance: Vec<Vec<f64>>,
}

impl TaskGraph {
    /// Builds the graph over an explicit vertex list.
    pub fn from_vertices(map: &GridMap, vertices: Vec<Vertex>) -> Result<TaskGraph, WorldError> {
        for v in &vertices {
            if !map.is_passable(v.position) {
                return Err(WorldError::InvalidPosition(v.position));
            }
        }
        let mut distance = Vec::with_capacity(vertices.len());
        for a in &vertices {
            let field = map.distance_field(a.position);
            let mut row = Vec::with_capacity(vertices.len());
            for b in &vertices {
                let steps = field[map.index(b.position)]
                    .ok_or(WorldError::Unreachable(a.position, b.position))?;
                row.push(f64::from(steps) * map.grid_side());
            }
            distance.push(row);
        }
        Ok(TaskGraph { vertices, distance })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Number of directed edges: every ordered pair of distinct vertices.
    pub fn edge_count(&self) -> usize {
        let n = self.vertices.len();
        n * n.saturating_sub(1)
    }

    /// Edge weight d(i, j) in meters.
    pub fn distance(&self, from: usize, to: usize) -> f64 {
        self.distance[from][to]
    }

    pub fn find(&self, kind: VertexKind) -> Option<usize> {
        self.vertices.iter().position(|v| v.kind == kind)
    }

    pub fn warehouse(&self) -> usize {
        self.find(VertexKind::Warehouse)
            .expect("task graph always holds the warehouse")
    }
}

/// Builds the task graph over agent positions, pickup starts, delivery
/// origins and destinations, and the warehouse, in that order.
pub fn build_task_graph(
    map: &GridMap,
    agents: &[AgentState],
    tasks: &[Task],
) -> Result<TaskGraph, WorldError> {
    let mut vertices: Vec<Vertex> = agents
        .iter()
        .map(|a| Vertex {
            kind: VertexKind::Agent(a.id),
            position: a.position,
        })
        .collect();
    for t in tasks.iter().filter(|t| t.mode == TaskMode::Pickup) {
        vertices.push(Vertex {
            kind: VertexKind::PickupStart(t.id),
            position: t.origin,
        });
    }
    for t in tasks.iter().filter(|t| t.mode == TaskMode::Delivery) {
        vertices.push(Vertex {
            kind: VertexKind::DeliveryOrigin(t.id),
            position: t.origin,
        });
    }
    for t in tasks.iter().filter(|t| t.mode == TaskMode::Delivery) {
        vertices.push(Vertex {
            kind: VertexKind::DeliveryDestination(t.id),
            position: t.destination,
        });
    }
    vertices.push(Vertex {
        kind: VertexKind::Warehouse,
        position: map.warehouse(),
    });
    TaskGraph::from_vertices(map, vertices)
}

/// Unweighted graph over passable cells with 4-adjacency edges.
#[derive(Clone, Debug)]
pub struct PathGraph<'m> {
    map: &'m GridMap,
    adjacency: Vec<Vec<usize>>,
}

impl<'m> PathGraph<'m> {
    pub fn new(map: &'m GridMap) -> Self {
        let adjacency = (0..map.area())
            .map(|i| {
                let p = map.position(i);
                if !map.is_passable(p) {
                    return Vec::new();
                }
                map.passable_neighbors(p).map(|q| map.index(q)).collect()
            })
            .collect();
        PathGraph { map, adjacency }
    }

    pub fn map(&self) -> &'m GridMap {
        self.map
    }

    /// Neighbor cell indices of a cell index, in north, east, south, west order.
    pub fn adjacent(&self, index: usize) -> &[usize] {
        &self.adjacency[index]
    }

    pub fn edges(&self) -> impl Iterator<Item = (Position, Position)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(move |(i, nbrs)| {
                nbrs.iter()
                    .map(move |&j| (self.map.position(i), self.map.position(j)))
            })
    }
}
