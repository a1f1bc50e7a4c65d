//! Planar geometry in projected meters: areas, centroids, clipping,
//! distances and exact union area.

use serde::{Deserialize, Serialize};

/// Areas at or below this are treated as degenerate (m²).
pub const AREA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    /// Closed containment.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min_x <= other.max_x && other.min_x <= self.max_x && self.min_y <= other.max_y && other.min_y <= self.max_y
    }

    pub fn expand(&self, p: Point) -> Rect {
        Rect::new(
            self.min_x.min(p.x),
            self.min_y.min(p.y),
            self.max_x.max(p.x),
            self.max_y.max(p.y),
        )
    }

    fn empty() -> Rect {
        Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY)
    }
}

/// A polygon with an exterior ring and optional holes. Rings are stored
/// closed (first vertex repeated at the end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<Point>>", into = "Vec<Vec<Point>>")]
pub struct Polygon {
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

impl From<Vec<Vec<Point>>> for Polygon {
    fn from(mut rings: Vec<Vec<Point>>) -> Self {
        if rings.is_empty() {
            return Polygon {
                exterior: Vec::new(),
                holes: Vec::new(),
            };
        }
        let exterior = rings.remove(0);
        Polygon { exterior, holes: rings }
    }
}

impl From<Polygon> for Vec<Vec<Point>> {
    fn from(p: Polygon) -> Self {
        let mut rings = vec![p.exterior];
        rings.extend(p.holes);
        rings
    }
}

impl Polygon {
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Self {
        Polygon { exterior, holes }
    }

    /// Axis-aligned rectangle polygon, counter-clockwise in a y-up frame.
    pub fn rect(r: Rect) -> Self {
        Polygon::new(
            vec![
                Point::new(r.min_x, r.min_y),
                Point::new(r.max_x, r.min_y),
                Point::new(r.max_x, r.max_y),
                Point::new(r.min_x, r.max_y),
                Point::new(r.min_x, r.min_y),
            ],
            Vec::new(),
        )
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Point>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    /// Exterior area minus hole areas.
    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
        (ring_signed_area(&self.exterior).abs() - holes).max(0.0)
    }

    pub fn centroid(&self) -> Option<(Point, f64)> {
        let (c, a) = ring_centroid(&self.exterior)?;
        let mut sx = c.x * a;
        let mut sy = c.y * a;
        let mut total = a;
        for h in &self.holes {
            if let Some((hc, ha)) = ring_centroid(h) {
                sx -= hc.x * ha;
                sy -= hc.y * ha;
                total -= ha;
            }
        }
        (total > AREA_EPS).then(|| (Point::new(sx / total, sy / total), total))
    }

    /// Even-odd containment over all rings.
    pub fn contains(&self, p: Point) -> bool {
        self.rings().filter(|r| ring_crosses_ray(r, p)).count() % 2 == 1
    }

    pub fn map(&self, f: impl Fn(Point) -> Point + Copy) -> Polygon {
        Polygon::new(
            self.exterior.iter().copied().map(f).collect(),
            self.holes.iter().map(|h| h.iter().copied().map(f).collect()).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Point,
    LineString,
    MultiLineString,
    Polygon,
    MultiPolygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "coordinates")]
pub enum Geometry {
    Point(Point),
    LineString(Vec<Point>),
    MultiLineString(Vec<Vec<Point>>),
    Polygon(Polygon),
    MultiPolygon(Vec<Polygon>),
}

impl Geometry {
    pub fn kind(&self) -> GeometryKind {
        match self {
            Geometry::Point(_) => GeometryKind::Point,
            Geometry::LineString(_) => GeometryKind::LineString,
            Geometry::MultiLineString(_) => GeometryKind::MultiLineString,
            Geometry::Polygon(_) => GeometryKind::Polygon,
            Geometry::MultiPolygon(_) => GeometryKind::MultiPolygon,
        }
    }

    pub fn is_areal(&self) -> bool {
        matches!(self, Geometry::Polygon(_) | Geometry::MultiPolygon(_))
    }

    pub fn polygons(&self) -> &[Polygon] {
        match self {
            Geometry::Polygon(p) => std::slice::from_ref(p),
            Geometry::MultiPolygon(ps) => ps,
            _ => &[],
        }
    }

    /// Polylines of a linear geometry; polygon rings are not included.
    pub fn lines(&self) -> &[Vec<Point>] {
        match self {
            Geometry::LineString(l) => std::slice::from_ref(l),
            Geometry::MultiLineString(ls) => ls,
            _ => &[],
        }
    }

    pub fn area(&self) -> f64 {
        self.polygons().iter().map(Polygon::area).sum()
    }

    pub fn points(&self) -> Box<dyn Iterator<Item = Point> + '_> {
        match self {
            Geometry::Point(p) => Box::new(std::iter::once(*p)),
            Geometry::LineString(l) => Box::new(l.iter().copied()),
            Geometry::MultiLineString(ls) => Box::new(ls.iter().flatten().copied()),
            Geometry::Polygon(p) => Box::new(p.rings().flatten().copied()),
            Geometry::MultiPolygon(ps) => Box::new(ps.iter().flat_map(|p| p.rings().flatten().copied())),
        }
    }

    /// All boundary / line segments.
    pub fn segments(&self) -> Vec<(Point, Point)> {
        let mut out = Vec::new();
        let mut push = |pts: &[Point]| {
            out.extend(pts.windows(2).map(|w| (w[0], w[1])));
        };
        match self {
            Geometry::Point(_) => {}
            Geometry::LineString(l) => push(l),
            Geometry::MultiLineString(ls) => ls.iter().for_each(|l| push(l)),
            Geometry::Polygon(p) => p.rings().for_each(|r| push(r)),
            Geometry::MultiPolygon(ps) => ps.iter().flat_map(|p| p.rings()).for_each(|r| push(r)),
        }
        out
    }

    pub fn bbox(&self) -> Rect {
        self.points().fold(Rect::empty(), |r, p| r.expand(p))
    }

    pub fn all_finite(&self) -> bool {
        self.points().all(Point::is_finite)
    }

    /// Area-weighted for polygons, length-weighted for lines.
    pub fn centroid(&self) -> Option<Point> {
        match self {
            Geometry::Point(p) => Some(*p),
            Geometry::LineString(_) | Geometry::MultiLineString(_) => {
                let mut sx = 0.0;
                let mut sy = 0.0;
                let mut total = 0.0;
                for (a, b) in self.segments() {
                    let len = a.dist(b);
                    sx += 0.5 * (a.x + b.x) * len;
                    sy += 0.5 * (a.y + b.y) * len;
                    total += len;
                }
                if total > 0.0 {
                    Some(Point::new(sx / total, sy / total))
                } else {
                    mean_point(self.points())
                }
            }
            Geometry::Polygon(_) | Geometry::MultiPolygon(_) => {
                let mut sx = 0.0;
                let mut sy = 0.0;
                let mut total = 0.0;
                for (c, a) in self.polygons().iter().filter_map(Polygon::centroid) {
                    sx += c.x * a;
                    sy += c.y * a;
                    total += a;
                }
                if total > AREA_EPS {
                    Some(Point::new(sx / total, sy / total))
                } else {
                    mean_point(self.points())
                }
            }
        }
    }

    pub fn map(&self, f: impl Fn(Point) -> Point + Copy) -> Geometry {
        let line = |l: &Vec<Point>| l.iter().copied().map(f).collect::<Vec<_>>();
        match self {
            Geometry::Point(p) => Geometry::Point(f(*p)),
            Geometry::LineString(l) => Geometry::LineString(line(l)),
            Geometry::MultiLineString(ls) => Geometry::MultiLineString(ls.iter().map(line).collect()),
            Geometry::Polygon(p) => Geometry::Polygon(p.map(f)),
            Geometry::MultiPolygon(ps) => Geometry::MultiPolygon(ps.iter().map(|p| p.map(f)).collect()),
        }
    }
}

fn mean_point(points: impl Iterator<Item = Point>) -> Option<Point> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64))
}

/// Shoelace signed area of a closed ring.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    0.5 * ring.windows(2).map(|w| w[0].x * w[1].y - w[1].x * w[0].y).sum::<f64>()
}

/// Centroid and absolute area of a closed ring.
fn ring_centroid(ring: &[Point]) -> Option<(Point, f64)> {
    let a = ring_signed_area(ring);
    if a.abs() <= AREA_EPS {
        return None;
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for w in ring.windows(2) {
        let cross = w[0].x * w[1].y - w[1].x * w[0].y;
        cx += (w[0].x + w[1].x) * cross;
        cy += (w[0].y + w[1].y) * cross;
    }
    Some((Point::new(cx / (6.0 * a), cy / (6.0 * a)), a.abs()))
}

fn ring_crosses_ray(ring: &[Point], p: Point) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Closes a ring in place if its last vertex differs from the first.
pub fn close_ring(ring: &mut Vec<Point>) {
    if let (Some(first), Some(last)) = (ring.first().copied(), ring.last().copied()) {
        if first != last {
            ring.push(first);
        }
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection, including touching and collinear overlap.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

pub fn segment_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// True if the ring has at least three distinct vertices, non-zero area
/// and no two edges meeting anywhere except shared endpoints of
/// consecutive edges.
pub fn ring_is_simple(ring: &[Point]) -> bool {
    if ring.len() < 4 || ring.first() != ring.last() {
        return false;
    }
    if ring_signed_area(ring).abs() <= AREA_EPS {
        return false;
    }
    let n = ring.len() - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[i + 1]);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let (c, d) = (ring[j], ring[j + 1]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex only: reject collinear back-tracking.
                let (shared, other_a, other_b) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if orient(shared, other_a, other_b) == 0.0
                    && ((other_a.x - shared.x) * (other_b.x - shared.x)
                        + (other_a.y - shared.y) * (other_b.y - shared.y))
                        > 0.0
                {
                    return false;
                }
            } else if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Minimum Euclidean distance between two geometries; 0 when they touch,
/// cross, or one lies inside the other's area.
pub fn geometry_distance(a: &Geometry, b: &Geometry) -> f64 {
    if inside_area(a, b) || inside_area(b, a) {
        return 0.0;
    }
    let sa = a.segments();
    let sb = b.segments();
    let pa: Vec<Point> = if sa.is_empty() {
        a.points().collect()
    } else {
        Vec::new()
    };
    let pb: Vec<Point> = if sb.is_empty() {
        b.points().collect()
    } else {
        Vec::new()
    };
    let mut best = f64::INFINITY;
    for &(p, q) in &sa {
        for &(r, s) in &sb {
            best = best.min(segment_distance(p, q, r, s));
            if best == 0.0 {
                return 0.0;
            }
        }
        for &r in &pb {
            best = best.min(point_segment_distance(r, p, q));
        }
    }
    for &p in &pa {
        for &(r, s) in &sb {
            best = best.min(point_segment_distance(p, r, s));
        }
        for &r in &pb {
            best = best.min(p.dist(r));
        }
    }
    best
}

/// Any vertex of `probe` inside an area of `area`.
fn inside_area(area: &Geometry, probe: &Geometry) -> bool {
    let polys = area.polygons();
    !polys.is_empty() && probe.points().any(|p| polys.iter().any(|poly| poly.contains(p)))
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    fn inside(self, p: Point, r: &Rect) -> bool {
        match self {
            Side::Left => p.x >= r.min_x,
            Side::Right => p.x <= r.max_x,
            Side::Bottom => p.y >= r.min_y,
            Side::Top => p.y <= r.max_y,
        }
    }

    fn intersect(self, a: Point, b: Point, r: &Rect) -> Point {
        match self {
            Side::Left | Side::Right => {
                let x = if matches!(self, Side::Left) { r.min_x } else { r.max_x };
                let t = (x - a.x) / (b.x - a.x);
                let y = (a.y + t * (b.y - a.y)).clamp(a.y.min(b.y), a.y.max(b.y));
                Point::new(x, y)
            }
            Side::Bottom | Side::Top => {
                let y = if matches!(self, Side::Bottom) { r.min_y } else { r.max_y };
                let t = (y - a.y) / (b.y - a.y);
                let x = (a.x + t * (b.x - a.x)).clamp(a.x.min(b.x), a.x.max(b.x));
                Point::new(x, y)
            }
        }
    }
}

/// Sutherland–Hodgman clip of a closed ring against a rectangle. Returns a
/// closed ring, or `None` when nothing of positive area survives.
///
/// Concave rings that leave and re-enter through the same side produce
/// zero-width bridges along that side; they carry no area and no pixel
/// centers, but they do count as boundary for distance queries.
pub fn clip_ring(ring: &[Point], rect: &Rect) -> Option<Vec<Point>> {
    let mut pts: Vec<Point> = ring.to_vec();
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    for side in [Side::Left, Side::Right, Side::Bottom, Side::Top] {
        if pts.is_empty() {
            return None;
        }
        let mut out = Vec::with_capacity(pts.len() + 4);
        let mut prev = *pts.last().unwrap();
        for &cur in &pts {
            let cur_in = side.inside(cur, rect);
            let prev_in = side.inside(prev, rect);
            if cur_in {
                if !prev_in {
                    out.push(side.intersect(prev, cur, rect));
                }
                out.push(cur);
            } else if prev_in {
                out.push(side.intersect(prev, cur, rect));
            }
            prev = cur;
        }
        pts = out;
    }
    pts.dedup();
    while pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() < 3 {
        return None;
    }
    pts.push(pts[0]);
    (ring_signed_area(&pts).abs() > AREA_EPS).then_some(pts)
}

pub fn clip_polygon(poly: &Polygon, rect: &Rect) -> Option<Polygon> {
    let exterior = clip_ring(&poly.exterior, rect)?;
    let holes = poly.holes.iter().filter_map(|h| clip_ring(h, rect)).collect();
    let clipped = Polygon::new(exterior, holes);
    (clipped.area() > AREA_EPS).then_some(clipped)
}

/// Liang–Barsky clip of one segment; returns the surviving sub-segment.
fn clip_segment(a: Point, b: Point, r: &Rect) -> Option<(Point, Point, bool, bool)> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a.x - r.min_x),
        (dx, r.max_x - a.x),
        (-dy, a.y - r.min_y),
        (dy, r.max_y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    let at = |t: f64| {
        Point::new(
            (a.x + t * dx).clamp(r.min_x, r.max_x),
            (a.y + t * dy).clamp(r.min_y, r.max_y),
        )
    };
    let start = if t0 == 0.0 { a } else { at(t0) };
    let end = if t1 == 1.0 { b } else { at(t1) };
    Some((start, end, t0 > 0.0, t1 < 1.0))
}

/// Clips a polyline to a rectangle; the result may split into several pieces.
pub fn clip_polyline(line: &[Point], rect: &Rect) -> Vec<Vec<Point>> {
    let mut pieces: Vec<Vec<Point>> = Vec::new();
    let mut current: Vec<Point> = Vec::new();
    for w in line.windows(2) {
        match clip_segment(w[0], w[1], rect) {
            None => {
                if current.len() >= 2 {
                    pieces.push(std::mem::take(&mut current));
                }
                current.clear();
            }
            Some((s, e, entered, exited)) => {
                if entered || current.last() != Some(&s) {
                    if current.len() >= 2 {
                        pieces.push(std::mem::take(&mut current));
                    }
                    current.clear();
                    current.push(s);
                }
                if e != s {
                    current.push(e);
                }
                if exited {
                    if current.len() >= 2 {
                        pieces.push(std::mem::take(&mut current));
                    }
                    current.clear();
                }
            }
        }
    }
    if current.len() >= 2 {
        pieces.push(current);
    }
    pieces.retain(|p| p.windows(2).any(|w| w[0] != w[1]));
    pieces
}

/// Clips any geometry to `rect`. Points use closed containment; lines and
/// polygons return `None` when nothing of positive length / area survives.
pub fn clip_geometry(geom: &Geometry, rect: &Rect) -> Option<Geometry> {
    match geom {
        Geometry::Point(p) => rect.contains(*p).then_some(Geometry::Point(*p)),
        Geometry::LineString(_) | Geometry::MultiLineString(_) => {
            let mut pieces: Vec<Vec<Point>> = geom.lines().iter().flat_map(|l| clip_polyline(l, rect)).collect();
            match pieces.len() {
                0 => None,
                1 => Some(Geometry::LineString(pieces.pop().unwrap())),
                _ => Some(Geometry::MultiLineString(pieces)),
            }
        }
        Geometry::Polygon(_) | Geometry::MultiPolygon(_) => {
            let mut polys: Vec<Polygon> = geom.polygons().iter().filter_map(|p| clip_polygon(p, rect)).collect();
            match polys.len() {
                0 => None,
                1 => Some(Geometry::Polygon(polys.pop().unwrap())),
                _ => Some(Geometry::MultiPolygon(polys)),
            }
        }
    }
}

/// Exact area of the union of polygons (each polygon even-odd over its
/// own rings).
///
/// Vertical slabs are cut at every vertex abscissa and every pairwise edge
/// crossing. Inside a slab no two edges cross, so the covered length of a
/// vertical line is affine in x and the midpoint rule integrates it exactly.
pub fn union_area(polys: &[&Polygon]) -> f64 {
    let edges: Vec<Vec<(Point, Point)>> = polys
        .iter()
        .map(|p| {
            p.rings()
                .flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
                .filter(|(a, b)| a.x != b.x)
                .collect()
        })
        .collect();
    let flat: Vec<(Point, Point)> = edges.iter().flatten().copied().collect();
    let mut xs: Vec<f64> = polys.iter().flat_map(|p| p.rings().flatten().map(|q| q.x)).collect();
    for i in 0..flat.len() {
        let (a, b) = flat[i];
        for &(c, d) in &flat[i + 1..] {
            if let Some(x) = crossing_x(a, b, c, d) {
                xs.push(x);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let mut area = 0.0;
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for w in xs.windows(2) {
        let width = w[1] - w[0];
        if width <= 0.0 {
            continue;
        }
        let xm = 0.5 * (w[0] + w[1]);
        intervals.clear();
        for poly_edges in &edges {
            ys.clear();
            for &(a, b) in poly_edges {
                if (a.x < xm) != (b.x < xm) {
                    ys.push(a.y + (xm - a.x) * (b.y - a.y) / (b.x - a.x));
                }
            }
            ys.sort_by(f64::total_cmp);
            intervals.extend(ys.chunks_exact(2).map(|c| (c[0], c[1])));
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let mut cur: Option<(f64, f64)> = None;
        for &(lo, hi) in &intervals {
            cur = match cur {
                Some((clo, chi)) if lo <= chi => Some((clo, chi.max(hi))),
                Some((clo, chi)) => {
                    covered += chi - clo;
                    Some((lo, hi))
                }
                None => Some((lo, hi)),
            };
        }
        if let Some((clo, chi)) = cur {
            covered += chi - clo;
        }
        area += covered * width;
    }
    area
}

/// Abscissa of a proper crossing of two segments, if any.
fn crossing_x(a: Point, b: Point, c: Point, d: Point) -> Option<f64> {
    if a.x.max(b.x) < c.x.min(d.x) || c.x.max(d.x) < a.x.min(b.x) {
        return None;
    }
    let r = Point::new(b.x - a.x, b.y - a.y);
    let s = Point::new(d.x - c.x, d.y - c.y);
    let denom = r.x * s.y - r.y * s.x;
    if denom == 0.0 {
        return None;
    }
    let t = ((c.x - a.x) * s.y - (c.y - a.y) * s.x) / denom;
    let u = ((c.x - a.x) * r.y - (c.y - a.y) * r.x) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(a.x + t * r.x)
}
