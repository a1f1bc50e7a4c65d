//! Brute-force reference implementations and random toy scenes shared by
//! the integration tests. Nothing here calls into the library's geometry.

#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::Rng;
use segvqa::geom::{Geometry, Point, Polygon};
use segvqa::ingest::{GeoObject, PatchObjects, PatchSpec};
use segvqa::taxonomy::ClassId;

pub fn spec(id: &str, side: f64, px: u32) -> PatchSpec {
    PatchSpec {
        patch_id: id.into(),
        row: 0,
        col: 0,
        origin: Point::new(0.0, side),
        side_m: side,
        px,
        resolution_m_per_px: side / px as f64,
    }
}

/// Simple star-shaped polygon: sorted random angles, random radii.
pub fn star<R: Rng>(rng: &mut R, cx: f64, cy: f64, rmin: f64, rmax: f64, n: usize) -> Polygon {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let mut ring: Vec<Point> = angles
        .iter()
        .map(|a| {
            let r = rng.random_range(rmin..rmax);
            Point::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    ring.push(ring[0]);
    Polygon::new(ring, vec![])
}

/// Regular-ish convex polygon.
pub fn convex<R: Rng>(rng: &mut R, cx: f64, cy: f64, r: f64, n: usize) -> Polygon {
    let phase = rng.random_range(0.0..TAU);
    let mut ring: Vec<Point> = (0..n)
        .map(|k| {
            let a = phase + TAU * k as f64 / n as f64;
            Point::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    ring.push(ring[0]);
    Polygon::new(ring, vec![])
}

/// A patch-frame toy scene with polygons, lines and points of a few classes,
/// all inside `[0, 200]²`.
pub fn toy_patch<R: Rng>(rng: &mut R, id: &str) -> PatchObjects {
    let mut objects = Vec::new();
    let n = rng.random_range(0..12);
    for k in 0..n {
        let class = ClassId(rng.random_range(0..5u8) * 3);
        let geometry = match rng.random_range(0..4) {
            0 | 1 => {
                let r = rng.random_range(6.0..30.0);
                let (cx, cy) = (rng.random_range(r..200.0 - r), rng.random_range(r..200.0 - r));
                if rng.random_bool(0.5) {
                    {
                        let k = rng.random_range(3..9);
                        Geometry::Polygon(convex(rng, cx, cy, r, k))
                    }
                } else {
                    {
                        let k = rng.random_range(5..12);
                        Geometry::Polygon(star(rng, cx, cy, 0.4 * r, r, k))
                    }
                }
            }
            2 => {
                let m = rng.random_range(2..5);
                Geometry::LineString(
                    (0..m)
                        .map(|_| Point::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)))
                        .collect(),
                )
            }
            _ => Geometry::Point(Point::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0))),
        };
        objects.push(GeoObject {
            id: format!("o{k:02}"),
            class_id: class,
            geometry,
            name: None,
        });
    }
    PatchObjects {
        spec: spec(id, 200.0, 1000),
        objects,
    }
}

/// Even-odd crossing test.
pub fn inside_ring(ring: &[Point], p: Point) -> bool {
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

pub fn inside_polygon(poly: &Polygon, p: Point) -> bool {
    inside_ring(&poly.exterior, p) && !poly.holes.iter().any(|h| inside_ring(h, p))
}

fn pt_seg(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.x - a.x - t * dx).powi(2) + (p.y - a.y - t * dy).powi(2)).sqrt()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

struct Parts {
    segments: Vec<(Point, Point)>,
    vertices: Vec<Point>,
    polygons: Vec<Polygon>,
}

fn parts(g: &Geometry) -> Parts {
    let mut segments = Vec::new();
    let mut vertices = Vec::new();
    let mut polygons = Vec::new();
    let chain = |pts: &[Point], segments: &mut Vec<(Point, Point)>, vertices: &mut Vec<Point>| {
        vertices.extend_from_slice(pts);
        if pts.len() == 1 {
            segments.push((pts[0], pts[0]));
        }
        for w in pts.windows(2) {
            segments.push((w[0], w[1]));
        }
    };
    match g {
        Geometry::Point(p) => chain(&[*p], &mut segments, &mut vertices),
        Geometry::LineString(l) => chain(l, &mut segments, &mut vertices),
        Geometry::MultiLineString(ls) => ls.iter().for_each(|l| chain(l, &mut segments, &mut vertices)),
        Geometry::Polygon(p) => {
            polygons.push(p.clone());
        }
        Geometry::MultiPolygon(ps) => polygons.extend(ps.iter().cloned()),
    }
    for p in &polygons {
        chain(&p.exterior, &mut segments, &mut vertices);
        for h in &p.holes {
            chain(h, &mut segments, &mut vertices);
        }
    }
    Parts {
        segments,
        vertices,
        polygons,
    }
}

/// Exhaustive geometry distance: zero on any crossing or containment,
/// otherwise the smallest vertex-to-segment distance in either direction.
pub fn brute_distance(a: &Geometry, b: &Geometry) -> f64 {
    let (pa, pb) = (parts(a), parts(b));
    for &(s, t) in &pa.segments {
        for &(u, v) in &pb.segments {
            if cross(s, t, u, v) {
                return 0.0;
            }
        }
    }
    if pa
        .vertices
        .iter()
        .any(|&v| pb.polygons.iter().any(|p| inside_polygon(p, v)))
        || pb
            .vertices
            .iter()
            .any(|&v| pa.polygons.iter().any(|p| inside_polygon(p, v)))
    {
        return 0.0;
    }
    let one_way = |x: &Parts, y: &Parts| {
        x.vertices
            .iter()
            .flat_map(|&v| y.segments.iter().map(move |&(s, t)| pt_seg(v, s, t)))
            .fold(f64::INFINITY, f64::min)
    };
    one_way(&pa, &pb).min(one_way(&pb, &pa))
}

/// Monte-Carlo area over the bounding box.
pub fn mc_area<R: Rng>(poly: &Polygon, samples: usize, rng: &mut R) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &poly.exterior {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let hits = (0..samples)
        .filter(|_| inside_polygon(poly, Point::new(rng.random_range(x0..x1), rng.random_range(y0..y1))))
        .count();
    hits as f64 / samples as f64 * (x1 - x0) * (y1 - y0)
}

/// Reference shoelace area of a plain ring.
pub fn shoelace(ring: &[Point]) -> f64 {
    ring.windows(2)
        .map(|w| w[0].x * w[1].y - w[1].x * w[0].y)
        .sum::<f64>()
        .abs()
        / 2.0
}
