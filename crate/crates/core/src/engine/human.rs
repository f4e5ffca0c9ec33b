use crate::world::{GridMap, Position, NEIGHBOR_OFFSETS};

/// Next cell for a human walking to `goal`: a shortest route around the
/// other agents if one exists, otherwise a shortest route ignoring them (the
/// caller only steps if that cell is free). `None` means stay.
pub fn next_human_cell(
    map: &GridMap,
    at: Position,
    goal: Position,
    others: &[Position],
) -> Option<Position> {
    if at == goal {
        return None;
    }
    let avoiding = map.distance_field_avoiding(goal, |p| p != at && others.contains(&p));
    let field = if avoiding[map.index(at)].is_some() {
        avoiding
    } else {
        map.distance_field(goal)
    };
    let here = field[map.index(at)]?;
    NEIGHBOR_OFFSETS
        .iter()
        .filter_map(|&(dc, dr)| at.offset(dc, dr))
        .filter(|&q| map.in_bounds(q) && map.is_passable(q))
        .find(|&q| field[map.index(q)] == Some(here - 1))
}
