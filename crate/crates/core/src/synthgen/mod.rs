//! Procedural scenario generator. Each scenario instantiates one of the
//! built-in road templates with a smooth geometric warp, a heading-aligned pose and
//! optional distractor roads, and drives one of the template's legal routes
//! with a sampled speed profile.

mod templates;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::geometry::{point_at_arc_length, point_polyline_distance, polyline_length, Point};
use crate::scenario::{
    derive_route_labeling, render_lanes, Category, Dataset, LanePiece, Scenario, ScenarioError,
    TopologyGraph, Trajectory, DEFAULT_OFF_ROAD_THRESHOLD,
};

pub use templates::{template_catalog, RouteTemplate, Template};

/// Side length of the square world in meters.
pub const WORLD_EXTENT: f64 = 200.0;
/// Trajectory span in seconds.
pub const SPAN: f64 = 6.0;
/// Trajectory sampling interval in seconds.
pub const TIME_STEP: f64 = 0.1;

const END_MARGIN: f64 = 2.0;
const MAX_ATTEMPTS: usize = 200;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("template set empty")]
    EmptyTemplates,
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("no valid sample for route {route} of {category} after {attempts} attempts")]
    Exhausted {
        category: Category,
        route: &'static str,
        attempts: usize,
    },
}

/// A family of ego speed curves. The mean speed is drawn from `cruise`
/// (intersected with what the template and route allow), a linear trend
/// from `accel` and a stop-and-go dip depth from `wave`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub cruise: (f64, f64),
    pub accel: (f64, f64),
    pub wave: (f64, f64),
}

impl SpeedProfile {
    pub fn defaults() -> Vec<SpeedProfile> {
        vec![
            // free flow
            SpeedProfile {
                cruise: (0.0, 40.0),
                accel: (-0.2, 0.2),
                wave: (0.0, 0.05),
            },
            // stop and go
            SpeedProfile {
                cruise: (0.0, 40.0),
                accel: (-0.3, 0.3),
                wave: (0.5, 0.9),
            },
            // speeding up
            SpeedProfile {
                cruise: (0.0, 40.0),
                accel: (0.5, 1.5),
                wave: (0.0, 0.05),
            },
            // slowing down
            SpeedProfile {
                cruise: (0.0, 40.0),
                accel: (-1.5, -0.5),
                wave: (0.0, 0.05),
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Scenarios per (template, route) pair.
    pub per_template: usize,
    pub templates: Vec<Category>,
    pub image_size: usize,
    pub speed_profiles: Vec<SpeedProfile>,
    /// Amplitude in meters of the smooth geometric warp.
    pub jitter: f64,
    /// Upper bound on distractor roads drawn into the image only.
    pub distractors: usize,
    /// Scenes are rotated so the ego starts heading up, give or take this
    /// many degrees.
    pub heading_jitter: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            per_template: 10,
            templates: Category::ALL.to_vec(),
            image_size: 64,
            speed_profiles: SpeedProfile::defaults(),
            jitter: 1.5,
            distractors: 2,
            heading_jitter: 5.0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<(), SynthError> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(SynthError::InvalidConfig(format!("{name} range ({lo}, {hi}) is not ordered")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.templates.is_empty() {
            return Err(SynthError::EmptyTemplates);
        }
        if self.per_template == 0 {
            return Err(SynthError::InvalidConfig("per_template must be at least 1".into()));
        }
        if self.image_size < 8 {
            return Err(SynthError::InvalidConfig(format!(
                "image_size must be at least 8, got {}",
                self.image_size
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter <= 5.0) {
            return Err(SynthError::InvalidConfig(format!(
                "jitter must lie in [0, 5] meters, got {}",
                self.jitter
            )));
        }
        if !(0.0..=180.0).contains(&self.heading_jitter) {
            return Err(SynthError::InvalidConfig(format!(
                "heading_jitter must lie in [0, 180] degrees, got {}",
                self.heading_jitter
            )));
        }
        if self.speed_profiles.is_empty() {
            return Err(SynthError::InvalidConfig("no speed profiles".into()));
        }
        for p in &self.speed_profiles {
            check_range("cruise", p.cruise)?;
            check_range("accel", p.accel)?;
            check_range("wave", p.wave)?;
            if p.wave.0 < 0.0 || p.wave.1 >= 1.0 {
                return Err(SynthError::InvalidConfig("wave depth must lie in [0, 1)".into()));
            }
        }
        Ok(())
    }

    /// Catalog templates selected by the config, in category order.
    pub fn selected_templates(&self) -> Vec<Template> {
        template_catalog()
            .into_iter()
            .filter(|t| self.templates.contains(&t.category))
            .collect()
    }

    /// Graph variant of the `k`-th scenario of a (template, route) block.
    /// Spur variants are only used when both variants get two members.
    pub fn variant_of(&self, k: usize) -> usize {
        if self.per_template >= 2 * Template::VARIANTS {
            k % Template::VARIANTS
        } else {
            0
        }
    }
}

/// Smooth warp plus rigid pose from template to world coordinates.
struct Warp {
    amp: f64,
    waves: [(Point, f64); 2],
    rot: f64,
    offset: Point,
}

impl Warp {
    fn sample(rng: &mut ChaCha8Rng, amp: f64, rot: f64) -> Self {
        let mut wave = || {
            let dir = rng.gen_range(0.0..2.0 * PI);
            let k = 2.0 * PI / rng.gen_range(80.0..160.0);
            ([k * dir.cos(), k * dir.sin()], rng.gen_range(0.0..2.0 * PI))
        };
        let waves = [wave(), wave()];
        let c = WORLD_EXTENT / 2.0;
        Self {
            amp,
            waves,
            rot,
            offset: [c + rng.gen_range(-3.0..3.0), c + rng.gen_range(-3.0..3.0)],
        }
    }

    fn apply(&self, p: Point) -> Point {
        let d = |(k, phase): &(Point, f64)| self.amp * (k[0] * p[0] + k[1] * p[1] + phase).sin();
        let q = [p[0] + d(&self.waves[0]), p[1] + d(&self.waves[1])];
        let (s, c) = self.rot.sin_cos();
        [
            self.offset[0] + c * q[0] - s * q[1],
            self.offset[1] + s * q[0] + c * q[1],
        ]
    }

    fn graph(&self, g: &TopologyGraph) -> TopologyGraph {
        let vertices = g
            .vertices()
            .iter()
            .map(|v| LanePiece {
                polyline: v.polyline.iter().map(|&p| self.apply(p)).collect(),
            })
            .collect();
        TopologyGraph::new(vertices, g.edges().to_vec()).expect("warp keeps topology")
    }
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let r = (a.0.max(b.0), a.1.min(b.1));
    (r.0 <= r.1).then_some(r)
}

/// Cumulative distance at each sample time for one speed curve.
fn sample_distances(rng: &mut ChaCha8Rng, profile: &SpeedProfile, mean: f64) -> Vec<f64> {
    let n = (SPAN / TIME_STEP).round() as usize + 1;
    let w = rng.gen_range(profile.wave.0..=profile.wave.1);
    let a = rng.gen_range(profile.accel.0..=profile.accel.1);
    let dips = rng.gen_range(1..=2) as f64;
    let cruise = mean / (1.0 - w / 2.0);
    let speed = |t: f64| {
        let dip = (PI * dips * t / SPAN).sin().powi(2);
        (cruise * (1.0 - w * dip) + a * (t - SPAN / 2.0)).max(0.5)
    };
    let mut dist = Vec::with_capacity(n);
    let mut acc = 0.0;
    dist.push(0.0);
    for k in 1..n {
        let (t0, t1) = ((k - 1) as f64 * TIME_STEP, k as f64 * TIME_STEP);
        acc += 0.5 * (speed(t0) + speed(t1)) * (t1 - t0);
        dist.push(acc);
    }
    dist
}

fn distractor_roads(rng: &mut ChaCha8Rng, graph: &TopologyGraph, max: usize) -> Vec<Vec<Point>> {
    let count = rng.gen_range(0..=max);
    let c = WORLD_EXTENT / 2.0;
    let mut roads = Vec::new();
    for _ in 0..count {
        for _ in 0..10 {
            let (r, phi) = (70.0 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI));
            let mid = [c + r * phi.cos(), c + r * phi.sin()];
            let dir = rng.gen_range(0.0..PI);
            let half = rng.gen_range(30.0..60.0);
            let pts: Vec<Point> = (-30..=30)
                .map(|k| {
                    let s = half * k as f64 / 30.0;
                    [mid[0] + s * dir.cos(), mid[1] + s * dir.sin()]
                })
                .filter(|p| ((p[0] - c).powi(2) + (p[1] - c).powi(2)).sqrt() < 95.0)
                .collect();
            let clear = pts.iter().all(|&p| {
                graph
                    .vertices()
                    .iter()
                    .all(|v| point_polyline_distance(p, &v.polyline) > 10.0)
            });
            if pts.len() >= 2 && clear {
                roads.push(pts);
                break;
            }
        }
    }
    roads
}

/// One scenario for (template, route, variant) from its own random stream.
fn sample_scenario(
    config: &GeneratorConfig,
    template: &Template,
    route: usize,
    variant: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Scenario, crate::Error> {
    let size = config.image_size;
    let mpp = WORLD_EXTENT / size as f64;
    let (path, first_end, last_start) = template.route_path(route);
    let total = polyline_length(&path);
    let feasible = (
        ((last_start - first_end + 2.0 * END_MARGIN) / SPAN).max(0.0),
        (total - 2.0 * END_MARGIN) / SPAN,
    );
    let base = template.graph_variant(variant);
    let expected = template.route_labels(route, variant);
    for _ in 0..MAX_ATTEMPTS {
        let profile = &config.speed_profiles[rng.gen_range(0..config.speed_profiles.len())];
        let Some(range) = intersect(template.speed_range, feasible)
            .and_then(|r| intersect(r, profile.cruise).or(Some(r)))
        else {
            break;
        };
        let mean = rng.gen_range(range.0..=range.1);
        let dist = sample_distances(rng, profile, mean);
        let len = *dist.last().unwrap();
        let lo = END_MARGIN.max(last_start + END_MARGIN - len);
        let hi = (first_end - END_MARGIN).min(total - END_MARGIN - len);
        if lo > hi {
            continue;
        }
        let s0 = rng.gen_range(lo..=hi);
        let (a, b) = (point_at_arc_length(&path, s0), point_at_arc_length(&path, s0 + 1.0));
        let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
        let jitter = config.heading_jitter.to_radians();
        let turn = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
        let warp = Warp::sample(rng, config.jitter, PI / 2.0 - heading + turn);
        let graph = warp.graph(&base);
        let xyt: Vec<[f64; 3]> = dist
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let p = warp.apply(point_at_arc_length(&path, s0 + d));
                [p[0], p[1], k as f64 * TIME_STEP]
            })
            .collect();
        let trajectory = Trajectory::from_xyt(&xyt)?;
        match derive_route_labeling(&graph, &trajectory, DEFAULT_OFF_ROAD_THRESHOLD) {
            Ok(labels) if labels == expected => {}
            Ok(_) | Err(ScenarioError::OffRoad { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
        let mut lanes: Vec<Vec<Point>> = graph.vertices().iter().map(|v| v.polyline.clone()).collect();
        lanes.extend(distractor_roads(rng, &graph, config.distractors));
        let image = render_lanes(size, mpp, &lanes)?;
        return Ok(Scenario::new(image, trajectory, graph, expected, template.category)?);
    }
    Err(SynthError::Exhausted {
        category: template.category,
        route: template.routes[route].name,
        attempts: MAX_ATTEMPTS,
    }
    .into())
}

/// Generates the dataset described by `config`: for every selected template,
/// every route and `per_template` repetitions, in that nesting order.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset, crate::Error> {
    config.validate()?;
    let templates = config.selected_templates();
    let mut jobs = Vec::new();
    for (ti, t) in templates.iter().enumerate() {
        for r in 0..t.routes.len() {
            for k in 0..config.per_template {
                jobs.push((ti, r, config.variant_of(k)));
            }
        }
    }
    let entries = jobs
        .par_iter()
        .enumerate()
        .map(|(index, &(ti, r, variant))| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index as u64);
            sample_scenario(config, &templates[ti], r, variant, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(entries)
}
