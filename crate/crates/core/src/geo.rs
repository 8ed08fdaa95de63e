//! Geographic primitives: validated WGS84 points, planar polygons, and an
//! exact spatial index for nearest-distance and radius queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius (IUGG), metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// One quarter of an international mile, metres.
pub const QUARTER_MILE_M: f64 = 1_609.344 / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon)
        {
            Ok(GeoPoint { lat, lon })
        } else {
            Err(Error::InvalidCoordinate { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Unit vector on the sphere.
    fn unit(&self) -> [f64; 3] {
        let (phi, lambda) = (self.lat.to_radians(), self.lon.to_radians());
        [phi.cos() * lambda.cos(), phi.cos() * lambda.sin(), phi.sin()]
    }
}

/// Great-circle distance in metres on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).abs().to_radians();
    let dlambda = (b.lon - a.lon).abs().to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Chord length on the unit sphere subtending a surface distance of `meters`.
fn chord_for(meters: f64) -> f64 {
    2.0 * (meters / (2.0 * EARTH_RADIUS_M)).min(std::f64::consts::FRAC_PI_2).sin()
}

// Slack on the unit-sphere chord (~6 mm on the ground). Pruning only ever uses
// this to visit more nodes; accepted points are decided by haversine itself.
const CHORD_SLACK: f64 = 1e-9;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

impl Node {
    fn min_dist2(&self, q: &[f64; 3]) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let d = if q[k] < self.lo[k] {
                self.lo[k] - q[k]
            } else if q[k] > self.hi[k] {
                q[k] - self.hi[k]
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }
}

/// Immutable spatial index over a set of points. Ids are the positions of the
/// points in the slice the index was built from.
///
/// Internally a k-d tree over unit vectors on the sphere. Chord length is
/// monotone in great-circle distance, so box bounds prune conservatively while
/// every reported distance is the plain haversine value; query results are
/// identical to an exhaustive scan.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<GeoPoint>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl PointIndex {
    pub fn new(points: &[GeoPoint]) -> Self {
        let units: Vec<[f64; 3]> = points.iter().map(GeoPoint::unit).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&units, &mut order, 0, points.len(), &mut nodes);
        }
        PointIndex {
            points: points.to_vec(),
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    /// Closest indexed point and its distance. Equal distances resolve to the
    /// smaller id.
    pub fn nearest(&self, q: GeoPoint) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let qu = q.unit();
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(0, q, &qu, &mut best);
        Some(best)
    }

    fn nearest_in(&self, node: usize, q: GeoPoint, qu: &[f64; 3], best: &mut (usize, f64)) {
        let n = &self.nodes[node];
        let bound = chord_for(best.1) + CHORD_SLACK;
        if best.1.is_finite() && n.min_dist2(qu) > bound * bound {
            return;
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    let d = haversine_distance(q, self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Some((l, r)) => {
                let (first, second) = if self.nodes[l].min_dist2(qu) <= self.nodes[r].min_dist2(qu) {
                    (l, r)
                } else {
                    (r, l)
                };
                self.nearest_in(first, q, qu, best);
                self.nearest_in(second, q, qu, best);
            }
        }
    }

    pub fn nearest_distance(&self, q: GeoPoint) -> Result<f64> {
        self.nearest(q).map(|(_, d)| d).ok_or(Error::EmptyLayer)
    }

    /// Calls `f` with the id of every point at distance `<= radius_m` from `q`,
    /// in unspecified order.
    pub fn for_each_within<F: FnMut(usize)>(&self, q: GeoPoint, radius_m: f64, mut f: F) {
        if self.is_empty() {
            return;
        }
        let qu = q.unit();
        let bound = chord_for(radius_m) + CHORD_SLACK;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.min_dist2(&qu) > bound * bound {
                continue;
            }
            match n.children {
                None => {
                    for &i in &self.order[n.start..n.end] {
                        if haversine_distance(q, self.points[i]) <= radius_m {
                            f(i);
                        }
                    }
                }
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
    }

    /// Ids within `radius_m` of `q` (boundary inclusive), ascending.
    pub fn within_radius(&self, q: GeoPoint, radius_m: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, radius_m, |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// Number of points within `radius_m` of `q` (boundary inclusive),
    /// omitting `exclude` if given.
    pub fn count_within_radius(&self, q: GeoPoint, radius_m: f64, exclude: Option<usize>) -> usize {
        let mut count = 0;
        self.for_each_within(q, radius_m, |i| {
            if Some(i) != exclude {
                count += 1;
            }
        });
        count
    }
}

fn build(units: &[[f64; 3]], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &order[start..end] {
        for k in 0..3 {
            lo[k] = lo[k].min(units[i][k]);
            hi[k] = hi[k].max(units[i][k]);
        }
    }
    let id = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        start,
        end,
        children: None,
    });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let mid = (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| units[a][axis].total_cmp(&units[b][axis]));
    let left = build(units, order, start, start + mid, nodes);
    let right = build(units, order, start + mid, end, nodes);
    nodes[id].children = Some((left, right));
    id
}

/// A polygon in the lon/lat plane. Rings are implicitly closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoPolygon {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
}

impl GeoPolygon {
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self> {
        let exterior = open_ring(exterior)?;
        let holes = holes.into_iter().map(open_ring).collect::<Result<Vec<_>>>()?;
        Ok(GeoPolygon { exterior, holes })
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    pub fn contains(&self, q: GeoPoint) -> bool {
        point_in_polygon(self, q)
    }
}

fn open_ring(mut ring: Vec<GeoPoint>) -> Result<Vec<GeoPoint>> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    let mut distinct: Vec<GeoPoint> = Vec::with_capacity(ring.len());
    for p in &ring {
        if !distinct.contains(p) {
            distinct.push(*p);
        }
    }
    if distinct.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "polygon ring needs at least 3 distinct vertices, got {}",
            distinct.len()
        )));
    }
    Ok(ring)
}

const BOUNDARY_EPS: f64 = 1e-12;

fn on_segment(a: GeoPoint, b: GeoPoint, q: GeoPoint) -> bool {
    let (ax, ay, bx, by, qx, qy) = (a.lon, a.lat, b.lon, b.lat, q.lon, q.lat);
    let cross = (bx - ax) * (qy - ay) - (by - ay) * (qx - ax);
    if cross.abs() > BOUNDARY_EPS {
        return false;
    }
    qx >= ax.min(bx) - BOUNDARY_EPS
        && qx <= ax.max(bx) + BOUNDARY_EPS
        && qy >= ay.min(by) - BOUNDARY_EPS
        && qy <= ay.max(by) + BOUNDARY_EPS
}

fn edges(ring: &[GeoPoint]) -> impl Iterator<Item = (GeoPoint, GeoPoint)> + '_ {
    ring.iter()
        .zip(ring.iter().cycle().skip(1))
        .map(|(a, b)| (*a, *b))
}

fn on_ring(ring: &[GeoPoint], q: GeoPoint) -> bool {
    edges(ring).any(|(a, b)| on_segment(a, b, q))
}

/// Even-odd ray casting along +lon.
fn ring_contains(ring: &[GeoPoint], q: GeoPoint) -> bool {
    let mut inside = false;
    for (a, b) in edges(ring) {
        if (a.lat > q.lat) != (b.lat > q.lat) {
            let x = a.lon + (q.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if q.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Planar containment in the lon/lat plane. Points on any ring boundary count
/// as inside; holes subtract.
pub fn point_in_polygon(poly: &GeoPolygon, q: GeoPoint) -> bool {
    if on_ring(&poly.exterior, q) || poly.holes.iter().any(|h| on_ring(h, q)) {
        return true;
    }
    ring_contains(&poly.exterior, q) && !poly.holes.iter().any(|h| ring_contains(h, q))
}
