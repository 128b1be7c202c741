use super::geometry::point_polyline_distance;
use super::{RouteLabeling, ScenarioError, TopologyGraph, Trajectory};

/// Maximum distance in meters between a trajectory point and its lane piece.
pub const DEFAULT_OFF_ROAD_THRESHOLD: f64 = 5.0;

/// Index of the lane piece whose reference polyline is closest to `(x, y)`.
/// Ties resolve to the lowest vertex id.
pub fn map_point_to_vertex(
    graph: &TopologyGraph,
    x: f64,
    y: f64,
    threshold: f64,
) -> Result<usize, ScenarioError> {
    let mut best = (0, f64::INFINITY);
    for (i, v) in graph.vertices().iter().enumerate() {
        let d = point_polyline_distance([x, y], &v.polyline);
        if d < best.1 {
            best = (i, d);
        }
    }
    if best.1 > threshold {
        return Err(ScenarioError::OffRoad {
            x,
            y,
            distance: best.1,
            threshold,
        });
    }
    Ok(best.0)
}

/// Route labels from the visited lane pieces: 2 for the piece of the first
/// trajectory point, 1 for every other visited piece, 0 elsewhere.
pub fn derive_route_labeling(
    graph: &TopologyGraph,
    traj: &Trajectory,
    threshold: f64,
) -> Result<RouteLabeling, ScenarioError> {
    let mut labels = vec![0u8; graph.vertex_count()];
    let mut start = None;
    for [x, y] in traj.positions() {
        let v = map_point_to_vertex(graph, x, y, threshold)?;
        match start {
            None => {
                start = Some(v);
                labels[v] = 2;
            }
            Some(s) if s != v => labels[v] = 1,
            _ => {}
        }
    }
    RouteLabeling::new(labels, graph)
}
