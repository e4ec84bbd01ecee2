//! Turns cell-visit sequences into 1 Hz planar tracks.

use petgraph::algo::astar;
use petgraph::graph::{NodeIndex, UnGraph};

use super::ingest::Waypoint;
use super::{BehaviorError, TrajectorySequence};
use crate::exec::Exec;
use crate::scenario::{cell_center, GeoGrid, Point, RoadGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct PostConfig {
    pub walk_speed_mps: f64,
    /// Road snapping and routing radius.
    pub snap_radius_m: f64,
}

impl Default for PostConfig {
    fn default() -> Self {
        Self {
            walk_speed_mps: 1.5,
            snap_radius_m: 30.0,
        }
    }
}

/// Positions sampled once per second from `start_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTrack {
    pub user_id: u64,
    pub start_s: f64,
    pub points: Vec<Point>,
}

impl UserTrack {
    /// Position at time `t`; before the start and after the end the track
    /// holds its first and last point.
    pub fn position_at(&self, t: f64) -> Point {
        let i = ((t - self.start_s).floor().max(0.0) as usize).min(self.points.len().saturating_sub(1));
        self.points[i]
    }

    pub fn waypoints(&self) -> impl Iterator<Item = Waypoint> + '_ {
        self.points.iter().enumerate().map(|(i, p)| Waypoint {
            user_id: self.user_id,
            t_s: self.start_s + i as f64,
            position: *p,
        })
    }
}

struct Roads<'a> {
    nodes: &'a [Point],
    graph: UnGraph<(), f64>,
}

impl<'a> Roads<'a> {
    fn new(r: &'a RoadGraph) -> Self {
        let mut graph = UnGraph::with_capacity(r.nodes.len(), r.edges.len());
        for _ in &r.nodes {
            graph.add_node(());
        }
        for &(a, b, len) in &r.edges {
            graph.add_edge(NodeIndex::new(a), NodeIndex::new(b), len);
        }
        Self { nodes: &r.nodes, graph }
    }

    fn nearest_within(&self, p: Point, radius: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = p.dist(*n);
            if d <= radius && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    fn route(&self, a: usize, b: usize) -> Option<Vec<Point>> {
        let goal = self.nodes[b];
        let (_, path) = astar(
            &self.graph,
            NodeIndex::new(a),
            |n| n.index() == b,
            |e| *e.weight(),
            |n| self.nodes[n.index()].dist(goal),
        )?;
        Some(path.into_iter().map(|n| self.nodes[n.index()]).collect())
    }
}

/// `ceil(length / speed)` points along the polyline at equal arc fractions,
/// ending on its last vertex.
fn sample_polyline(line: &[Point], speed: f64) -> Vec<Point> {
    let seg: Vec<f64> = line.windows(2).map(|w| w[0].dist(w[1])).collect();
    let total: f64 = seg.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let n = (total / speed).ceil() as usize;
    (1..=n)
        .map(|k| {
            let mut s = total * k as f64 / n as f64;
            for (i, len) in seg.iter().enumerate() {
                if s <= *len || i + 1 == seg.len() {
                    return line[i].lerp(line[i + 1], if *len > 0.0 { (s / len).min(1.0) } else { 1.0 });
                }
                s -= len;
            }
            unreachable!("polyline has at least one segment")
        })
        .collect()
}

fn track(seq: &TrajectorySequence, grid: &GeoGrid, roads: Option<&Roads>, cfg: &PostConfig) -> Result<UserTrack, BehaviorError> {
    let centers = seq.steps.iter().map(|s| cell_center(grid, s.token)).collect::<Result<Vec<_>, _>>()?;
    let mut points = Vec::new();
    for (i, st) in seq.steps.iter().enumerate() {
        let transit = match centers.get(i + 1) {
            None => Vec::new(),
            Some(&next) => {
                let line = roads
                    .and_then(|r| {
                        let a = r.nearest_within(centers[i], cfg.snap_radius_m)?;
                        let b = r.nearest_within(next, cfg.snap_radius_m)?;
                        let mut path = r.route(a, b)?;
                        path.insert(0, centers[i]);
                        path.push(next);
                        Some(path)
                    })
                    .unwrap_or_else(|| vec![centers[i], next]);
                sample_polyline(&line, cfg.walk_speed_mps)
            }
        };
        let hold = (st.stay_s.ceil() as usize).saturating_sub(transit.len()).max(1);
        points.extend(std::iter::repeat_n(centers[i], hold));
        points.extend(transit);
    }
    if let Some(r) = roads {
        for p in &mut points {
            if let Some(n) = r.nearest_within(*p, cfg.snap_radius_m) {
                *p = r.nodes[n];
            }
        }
    }
    Ok(UserTrack {
        user_id: seq.user_id,
        start_s: seq.steps.first().map_or(0.0, |s| s.arrival_s),
        points,
    })
}

/// One track per sequence. Each visit holds its cell center; the move to the
/// next cell is walked at `walk_speed_mps` along a road route when both
/// centers are near the network, else straight. The transit time comes out
/// of the hold.
pub fn postprocess_trajectories(
    seqs: &[TrajectorySequence],
    grid: &GeoGrid,
    roads: Option<&RoadGraph>,
    cfg: &PostConfig,
    exec: Exec,
) -> Result<Vec<UserTrack>, BehaviorError> {
    if !(cfg.walk_speed_mps > 0.0 && cfg.snap_radius_m >= 0.0) {
        return Err(BehaviorError::Invalid("walk speed must be positive and snap radius non-negative".into()));
    }
    let roads = roads.filter(|r| !r.nodes.is_empty()).map(Roads::new);
    exec.map(seqs, |s| track(s, grid, roads.as_ref(), cfg))
        .into_iter()
        .filter(|t| t.as_ref().map_or(true, |t| !t.points.is_empty()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::TrajectoryStep;
    use super::*;
    use crate::scenario::CellToken;

    fn grid() -> GeoGrid {
        GeoGrid::flat(Point::new(0.0, 0.0), 100.0, 100.0, 10.0)
    }

    fn seq(steps: &[(usize, f64)]) -> TrajectorySequence {
        let mut t = 0.0;
        TrajectorySequence {
            user_id: 1,
            steps: steps
                .iter()
                .map(|&(k, s)| {
                    let st = TrajectoryStep::new(CellToken(k), t, s);
                    t += s;
                    st
                })
                .collect(),
        }
    }

    #[test]
    fn single_step_holds() {
        let t = postprocess_trajectories(&[seq(&[(0, 5.0)])], &grid(), None, &PostConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(t[0].points, vec![Point::new(5.0, 5.0); 5]);
    }

    #[test]
    fn adjacent_transit_count() {
        let t = postprocess_trajectories(&[seq(&[(0, 30.0), (1, 5.0)])], &grid(), None, &PostConfig::default(), Exec::Sequential).unwrap();
        let moving: Vec<&Point> = t[0].points.iter().filter(|p| p.x > 5.0 && p.x < 15.0).collect();
        // 7 samples of the segment, the last of which is the destination center
        assert_eq!(moving.len(), 6);
        assert_eq!(t[0].points.len(), (30 - 7) + 7 + 5);
    }

    #[test]
    fn snaps_near_roads() {
        let roads = RoadGraph::from_edges(vec![Point::new(25.0, 5.0), Point::new(95.0, 95.0)], &[(0, 1)]);
        let t = postprocess_trajectories(&[seq(&[(0, 3.0)])], &grid(), Some(&roads), &PostConfig::default(), Exec::Sequential).unwrap();
        assert!(t[0].points.iter().all(|p| *p == Point::new(25.0, 5.0)));
    }

    #[test]
    fn polyline_sampling() {
        let pts = sample_polyline(&[Point::new(0.0, 0.0), Point::new(3.0, 0.0), Point::new(3.0, 3.0)], 1.5);
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[1], Point::new(3.0, 0.0));
        assert_eq!(pts[3], Point::new(3.0, 3.0));
    }
}
