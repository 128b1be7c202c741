//! The built-in road templates, one per scenario category, in local meters
//! around the origin. Every template stays within 90 m of the
//! origin so that any rotation keeps it inside the 200 m frame.

use std::f64::consts::PI;

use crate::scenario::geometry::{point_at_arc_length, polyline_length, Point};
use crate::scenario::{Category, Edge, EdgeKind, LanePiece, RouteLabeling, TopologyGraph};

#[cfg(test)]
pub(crate) const MAX_RADIUS: f64 = 90.0;
const SPACING: f64 = 2.0;
const LANE: f64 = 3.5;

/// A stretch of one lane piece between two arc lengths. `to = INFINITY`
/// runs to the end of the piece.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Leg {
    pub piece: usize,
    pub from: f64,
    pub to: f64,
}

const fn full(piece: usize) -> Leg {
    Leg {
        piece,
        from: 0.0,
        to: f64::INFINITY,
    }
}

const fn part(piece: usize, from: f64, to: f64) -> Leg {
    Leg { piece, from, to }
}

/// A legal way through a template. The trajectory starts on the first leg
/// and ends on the last one.
#[derive(Debug, Clone)]
pub struct RouteTemplate {
    pub name: &'static str,
    pub labels: RouteLabeling,
    pub(crate) legs: Vec<Leg>,
}

/// One road family: its lane graph, legal routes and plausible speeds.
#[derive(Debug, Clone)]
pub struct Template {
    pub category: Category,
    pub graph: TopologyGraph,
    pub routes: Vec<RouteTemplate>,
    /// Mean ego speed range in m/s.
    pub speed_range: (f64, f64),
    spur: (usize, f64),
}

impl Template {
    /// Number of graph variants the generator draws from.
    pub const VARIANTS: usize = 2;

    /// Variant 0 is the plain template. Variant 1 adds a short spur lane that
    /// branches off one piece, which changes the graph class but none of the
    /// routes' geometry.
    pub fn graph_variant(&self, variant: usize) -> TopologyGraph {
        if variant == 0 {
            return self.graph.clone();
        }
        let (from, turn) = self.spur;
        let mut vertices = self.graph.vertices().to_vec();
        let base = &vertices[from].polyline;
        let end = *base.last().unwrap();
        let prev = base[base.len() - 2];
        let heading = (end[1] - prev[1]).atan2(end[0] - prev[0]) + turn;
        let tip = [end[0] + 22.0 * heading.cos(), end[1] + 22.0 * heading.sin()];
        vertices.push(LanePiece {
            polyline: line(end, tip),
        });
        let mut edges = self.graph.edges().to_vec();
        edges.push(Edge {
            from,
            to: vertices.len() - 1,
            kind: EdgeKind::Successor,
        });
        TopologyGraph::new(vertices, edges).expect("spur keeps the graph valid")
    }

    pub fn route_labels(&self, route: usize, variant: usize) -> RouteLabeling {
        let mut labels = self.routes[route].labels.labels().to_vec();
        if variant > 0 {
            labels.push(0);
        }
        RouteLabeling::new(labels, &self.graph_variant(variant)).expect("route stays valid")
    }

    /// Centerline of a route in local coordinates, with the path arc length
    /// at which the first leg ends and the last leg begins.
    pub(crate) fn route_path(&self, route: usize) -> (Vec<Point>, f64, f64) {
        let legs = &self.routes[route].legs;
        let mut path: Vec<Point> = Vec::new();
        let (mut first_end, mut last_start) = (0.0, 0.0);
        for (k, leg) in legs.iter().enumerate() {
            let poly = &self.graph.vertices()[leg.piece].polyline;
            let len = polyline_length(poly);
            let (a, b) = (leg.from.min(len), leg.to.min(len));
            let mut sub = vec![point_at_arc_length(poly, a)];
            let mut s = 0.0;
            for w in poly.windows(2) {
                s += ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
                if s > a + 1e-9 && s < b - 1e-9 {
                    sub.push(w[1]);
                }
            }
            sub.push(point_at_arc_length(poly, b));
            if let Some(&last) = path.last() {
                let gap = ((sub[0][0] - last[0]).powi(2) + (sub[0][1] - last[1]).powi(2)).sqrt();
                if gap < 1e-9 {
                    sub.remove(0);
                }
            }
            if k == legs.len() - 1 {
                let mut join = path.clone();
                join.push(sub[0]);
                last_start = polyline_length(&join);
            }
            path.extend(sub);
            if k == 0 {
                first_end = polyline_length(&path);
            }
        }
        (path, first_end, last_start)
    }
}

fn line(a: Point, b: Point) -> Vec<Point> {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let n = (len / SPACING).ceil().max(1.0) as usize;
    (0..=n)
        .map(|k| {
            let f = k as f64 / n as f64;
            [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
        })
        .collect()
}

/// Circular arc from angle `a0` to `a1` (degrees, either direction).
fn arc(c: Point, r: f64, a0: f64, a1: f64) -> Vec<Point> {
    let (t0, t1) = (a0 * PI / 180.0, a1 * PI / 180.0);
    let n = (r * (t1 - t0).abs() / SPACING).ceil().max(1.0) as usize;
    (0..=n)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / n as f64;
            [c[0] + r * t.cos(), c[1] + r * t.sin()]
        })
        .collect()
}

struct Builder {
    pieces: Vec<Vec<Point>>,
    edges: Vec<Edge>,
}

impl Builder {
    fn new(pieces: Vec<Vec<Point>>) -> Self {
        Self {
            pieces,
            edges: Vec::new(),
        }
    }

    fn succ(mut self, pairs: &[(usize, usize)]) -> Self {
        for &(from, to) in pairs {
            self.edges.push(Edge {
                from,
                to,
                kind: EdgeKind::Successor,
            });
        }
        self
    }

    /// Neighbor edges in both directions.
    fn nb(mut self, pairs: &[(usize, usize)]) -> Self {
        for &(a, b) in pairs {
            for (from, to) in [(a, b), (b, a)] {
                self.edges.push(Edge {
                    from,
                    to,
                    kind: EdgeKind::Neighbor,
                });
            }
        }
        self
    }

    fn finish(
        self,
        category: Category,
        speed_range: (f64, f64),
        spur: (usize, f64),
        routes: &[(&'static str, Vec<Leg>)],
    ) -> Template {
        let graph = TopologyGraph::new(
            self.pieces
                .into_iter()
                .map(|polyline| LanePiece { polyline })
                .collect(),
            self.edges,
        )
        .expect("template graph is valid");
        let routes = routes
            .iter()
            .map(|(name, legs)| {
                let mut labels = vec![0u8; graph.vertex_count()];
                for leg in legs.iter().skip(1) {
                    labels[leg.piece] = 1;
                }
                labels[legs[0].piece] = 2;
                RouteTemplate {
                    name,
                    labels: RouteLabeling::new(labels, &graph).expect("template route is valid"),
                    legs: legs.clone(),
                }
            })
            .collect();
        Template {
            category,
            graph,
            routes,
            speed_range,
            spur: (spur.0, spur.1 * PI / 180.0),
        }
    }
}

fn single_lane() -> Template {
    Builder::new(vec![
        line([-75.0, 0.0], [-25.0, 0.0]),
        line([-25.0, 0.0], [25.0, 0.0]),
        line([25.0, 0.0], [75.0, 0.0]),
    ])
    .succ(&[(0, 1), (1, 2)])
    .finish(
        Category::SingleLane,
        (4.0, 14.0),
        (1, -45.0),
        &[
            ("follow", vec![full(0), full(1)]),
            ("follow-through", vec![full(0), full(1), full(2)]),
            ("follow-late", vec![full(1), full(2)]),
        ],
    )
}

fn multi_lane() -> Template {
    // right lane 0-2, left lane 3-4 opens next to piece 1
    Builder::new(vec![
        line([-80.0, 0.0], [-25.0, 0.0]),
        line([-25.0, 0.0], [25.0, 0.0]),
        line([25.0, 0.0], [80.0, 0.0]),
        line([-25.0, LANE], [25.0, LANE]),
        line([25.0, LANE], [80.0, LANE]),
    ])
    .succ(&[(0, 1), (1, 2), (3, 4)])
    .nb(&[(1, 3), (2, 4)])
    .finish(
        Category::MultiLane,
        (4.0, 14.0),
        (1, -45.0),
        &[
            ("keep-right", vec![full(0), full(1)]),
            ("change-left", vec![full(0), part(1, 0.0, 15.0), part(3, 35.0, 50.0)]),
            ("keep-left", vec![full(3), full(4)]),
        ],
    )
}

fn intersection() -> Template {
    let x = LANE / 2.0;
    Builder::new(vec![
        line([x, -80.0], [x, -45.0]),
        line([x, -45.0], [x, -10.0]),
        line([x, -10.0], [x, 10.0]),
        arc([-10.0, -10.0], 10.0 + x, 0.0, 90.0),
        arc([10.0, -10.0], 10.0 - x, 180.0, 90.0),
        line([x, 10.0], [x, 60.0]),
        line([x + LANE, 10.0], [x + LANE, 60.0]),
        line([-10.0, x], [-45.0, x]),
        line([-45.0, x], [-80.0, x]),
        line([10.0, -x], [60.0, -x]),
    ])
    .succ(&[(0, 1), (1, 2), (1, 3), (1, 4), (2, 5), (3, 7), (7, 8), (4, 9)])
    .nb(&[(5, 6)])
    .finish(
        Category::Intersection,
        (3.0, 12.0),
        (5, -45.0),
        &[
            ("straight", vec![full(1), full(2), full(5)]),
            ("left", vec![full(1), full(3), full(7)]),
            ("right", vec![full(1), full(4), full(9)]),
            ("approach", vec![full(0), full(1)]),
        ],
    )
}

fn intersection_entering() -> Template {
    let x = LANE / 2.0;
    Builder::new(vec![
        line([x, -80.0], [x, -40.0]),
        line([x, -40.0], [x, -10.0]),
        line([-x, -30.0], [-x, -10.0]),
        line([x, -10.0], [x, 30.0]),
        arc([-12.0, -10.0], 12.0 - x, 0.0, 90.0),
    ])
    .succ(&[(0, 1), (1, 3), (2, 4)])
    .nb(&[(1, 2)])
    .finish(
        Category::IntersectionEntering,
        (3.0, 11.0),
        (3, -45.0),
        &[
            ("approach", vec![full(0), full(1)]),
            ("into-pocket", vec![full(0), part(1, 0.0, 12.0), part(2, 8.0, 20.0)]),
            ("cross", vec![full(1), full(3)]),
        ],
    )
}

fn roundabout() -> Template {
    let r = 14.0;
    Builder::new(vec![
        arc([0.0, 0.0], r, -90.0, 0.0),
        arc([0.0, 0.0], r, 0.0, 90.0),
        arc([0.0, 0.0], r, 90.0, 180.0),
        arc([0.0, 0.0], r, 180.0, 270.0),
        line([0.0, -60.0], [0.0, -r]),
        line([-60.0, 0.0], [-r, 0.0]),
        line([r, 0.0], [60.0, 0.0]),
        line([0.0, r], [0.0, 60.0]),
    ])
    .succ(&[(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (5, 3), (0, 6), (1, 7)])
    .finish(
        Category::Roundabout,
        (3.0, 10.0),
        (7, -45.0),
        &[
            ("first-exit", vec![full(4), full(0), full(6)]),
            ("circulate-exit", vec![full(0), full(1), full(7)]),
            ("enter-circulate", vec![full(5), full(3), full(0)]),
        ],
    )
}

fn roundabout_entering() -> Template {
    let r = 14.0;
    let at = |deg: f64| [r * (deg * PI / 180.0).cos(), r * (deg * PI / 180.0).sin()];
    let out = |deg: f64| [60.0 * (deg * PI / 180.0).cos(), 60.0 * (deg * PI / 180.0).sin()];
    Builder::new(vec![
        line([0.0, -80.0], [0.0, -45.0]),
        line([0.0, -45.0], [0.0, -r]),
        arc([0.0, 0.0], r, -90.0, 30.0),
        arc([0.0, 0.0], r, 30.0, 150.0),
        arc([0.0, 0.0], r, 150.0, 270.0),
        line(at(30.0), out(30.0)),
        line(at(150.0), out(150.0)),
    ])
    .succ(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 2), (2, 5), (3, 6)])
    .finish(
        Category::RoundaboutEntering,
        (3.0, 10.0),
        (6, -45.0),
        &[
            ("approach", vec![full(0), full(1)]),
            ("enter", vec![full(1), full(2)]),
            ("enter-exit", vec![full(1), full(2), full(5)]),
        ],
    )
}

fn highway() -> Template {
    let w = 3.75;
    // right 0-1, middle 2-3, left 4-5
    Builder::new(vec![
        line([-85.0, -w], [0.0, -w]),
        line([0.0, -w], [85.0, -w]),
        line([-85.0, 0.0], [0.0, 0.0]),
        line([0.0, 0.0], [85.0, 0.0]),
        line([-85.0, w], [0.0, w]),
        line([0.0, w], [85.0, w]),
    ])
    .succ(&[(0, 1), (2, 3), (4, 5)])
    .nb(&[(0, 2), (2, 4), (1, 3), (3, 5)])
    .finish(
        Category::Highway,
        (15.0, 25.0),
        (0, -45.0),
        &[
            ("keep-middle", vec![full(2), full(3)]),
            ("keep-right", vec![full(0), full(1)]),
            ("right-to-middle", vec![part(0, 0.0, 40.0), part(2, 60.0, 85.0), full(3)]),
        ],
    )
}

fn highway_entering() -> Template {
    let w = 3.75;
    Builder::new(vec![
        line([-85.0, 0.0], [0.0, 0.0]),
        line([0.0, 0.0], [85.0, 0.0]),
        line([-85.0, w], [0.0, w]),
        line([0.0, w], [85.0, w]),
        line([-80.0, -30.0], [-25.0, -w]),
        line([-25.0, -w], [40.0, -w]),
    ])
    .succ(&[(0, 1), (2, 3), (4, 5)])
    .nb(&[(0, 2), (1, 3), (5, 0), (5, 1)])
    .finish(
        Category::HighwayEntering,
        (12.0, 24.0),
        (5, -45.0),
        &[
            ("merge", vec![full(4), part(5, 0.0, 30.0), part(1, 25.0, 85.0)]),
            ("keep-right", vec![full(0), full(1)]),
            ("keep-left", vec![full(2), full(3)]),
        ],
    )
}

/// The eight built-in road families, in category order.
pub fn template_catalog() -> Vec<Template> {
    vec![
        single_lane(),
        multi_lane(),
        intersection(),
        intersection_entering(),
        roundabout(),
        roundabout_entering(),
        highway(),
        highway_entering(),
    ]
}
