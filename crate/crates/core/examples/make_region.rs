//! Writes the bundled synthetic mini-region: a 1000 m × 800 m block of
//! vector features (20 patches) in a projected metric frame.
//!
//! ```text
//! cargo run --example make_region -- [output.geojson]
//! ```

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const X0: f64 = 652_000.0;
const Y0: f64 = 6_862_000.0;
const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 800.0;

struct Region {
    features: Vec<Value>,
}

fn pt(x: f64, y: f64) -> [f64; 2] {
    let r = |v: f64| (v * 100.0).round() / 100.0;
    [r(X0 + x), r(Y0 + y)]
}

impl Region {
    fn add(&mut self, layer: &str, geometry: Value) {
        let id = format!("{layer}-{:04}", self.features.len());
        self.features.push(json!({
            "type": "Feature",
            "id": id,
            "properties": { "layer": layer },
            "geometry": geometry,
        }));
    }

    fn polygon(&mut self, layer: &str, ring: Vec<[f64; 2]>) {
        let mut ring: Vec<[f64; 2]> = ring.into_iter().map(|[x, y]| pt(x, y)).collect();
        ring.push(ring[0]);
        self.add(layer, json!({ "type": "Polygon", "coordinates": [ring] }));
    }

    fn rect(&mut self, layer: &str, x: f64, y: f64, w: f64, h: f64) {
        self.polygon(layer, vec![[x, y], [x + w, y], [x + w, y + h], [x, y + h]]);
    }

    /// Rectangle rotated by `angle` about its centre.
    fn rotated(&mut self, layer: &str, cx: f64, cy: f64, w: f64, h: f64, angle: f64) {
        let (s, c) = angle.sin_cos();
        let corners = [(-w, -h), (w, -h), (w, h), (-w, h)]
            .map(|(dx, dy)| [cx + 0.5 * (dx * c - dy * s), cy + 0.5 * (dx * s + dy * c)]);
        self.polygon(layer, corners.to_vec());
    }

    /// Convex blob: a jittered regular polygon.
    fn blob(&mut self, layer: &str, rng: &mut ChaCha8Rng, cx: f64, cy: f64, r: f64, sides: usize) {
        let phase = rng.random_range(0.0..TAU);
        let ring = (0..sides)
            .map(|k| {
                let a = phase + TAU * k as f64 / sides as f64;
                [cx + r * a.cos(), cy + r * a.sin()]
            })
            .collect();
        self.polygon(layer, ring);
    }

    fn line(&mut self, layer: &str, pts: &[[f64; 2]]) {
        let coords: Vec<[f64; 2]> = pts.iter().map(|&[x, y]| pt(x, y)).collect();
        self.add(layer, json!({ "type": "LineString", "coordinates": coords }));
    }

    fn point(&mut self, layer: &str, x: f64, y: f64) {
        self.add(layer, json!({ "type": "Point", "coordinates": pt(x, y) }));
    }
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_region.geojson").to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut g = Region { features: Vec::new() };

    // Road grid; the outer roads fix the region extent.
    for y in [0.0, 410.0, HEIGHT] {
        g.line("road", &[[0.0, y], [WIDTH, y]]);
    }
    for x in [0.0, 330.0, 690.0, WIDTH] {
        g.line("road", &[[x, 0.0], [x, HEIGHT]]);
    }
    g.line("road", &[[330.0, 600.0], [520.0, 700.0], [690.0, 640.0]]);
    g.line("railway", &[[0.0, 120.0], [400.0, 300.0], [1000.0, 520.0]]);

    // Villages of small buildings along the roads.
    for &(cx, cy, n) in &[
        (160.0, 480.0, 50),
        (520.0, 520.0, 60),
        (850.0, 300.0, 45),
        (200.0, 700.0, 30),
        (820.0, 700.0, 25),
    ] {
        for _ in 0..n {
            let x = cx + rng.random_range(-120.0..120.0);
            let y = cy + rng.random_range(-70.0..70.0);
            let w = rng.random_range(8.0..22.0);
            let h = rng.random_range(8.0..18.0);
            g.rotated("building", x, y, w, h, rng.random_range(0.0..0.5));
        }
    }
    // Isolated houses, so some patches hold a single building.
    for &(x, y) in &[(60.0, 60.0), (940.0, 90.0), (450.0, 60.0), (610.0, 240.0)] {
        g.rect("building", x, y, 14.0, 11.0);
    }

    for &(x, y) in &[(40.0, 250.0), (720.0, 450.0), (560.0, 740.0)] {
        g.rect("sports_field", x, y, 95.0, 60.0);
    }
    g.rect("cemetery", 395.0, 440.0, 45.0, 55.0);
    g.rect("cemetery", 905.0, 560.0, 40.0, 40.0);
    for &(x, y) in &[
        (300.0, 200.0),
        (640.0, 580.0),
        (980.0, 760.0),
        (120.0, 380.0),
        (760.0, 150.0),
    ] {
        g.rect("water_tank", x, y, 6.0, 6.0);
    }
    for k in 0..12 {
        let t = k as f64 / 11.0;
        g.point("pylon", 20.0 + 960.0 * t, 760.0 - 480.0 * t);
    }
    for _ in 0..6 {
        let (x, y) = (rng.random_range(20.0..960.0), rng.random_range(20.0..760.0));
        g.rotated("surface_construction", x, y, 20.0, 12.0, rng.random_range(0.0..1.5));
    }

    g.blob("water_area", &mut rng, 560.0, 150.0, 70.0, 10);
    g.blob("water_area", &mut rng, 90.0, 590.0, 38.0, 8);
    g.polygon(
        "foreshore_zone",
        vec![[480.0, 60.0], [640.0, 60.0], [650.0, 80.0], [470.0, 80.0]],
    );
    for _ in 0..10 {
        let (x, y) = (rng.random_range(40.0..960.0), rng.random_range(40.0..760.0));
        let r = rng.random_range(25.0..80.0);
        g.blob("vegetation_zone", &mut rng, x, y, r, 7);
    }

    g.rect("airfield", 700.0, 20.0, 280.0, 110.0);
    g.rect("transportation_construction", 320.0, 240.0, 25.0, 12.0);
    g.rect("transportation_construction", 680.0, 400.0, 22.0, 20.0);
    g.rect("transportation_construction", 150.0, 395.0, 18.0, 30.0);

    g.polygon(
        "public_forest",
        vec![
            [10.0, 10.0],
            [290.0, 15.0],
            [310.0, 190.0],
            [120.0, 230.0],
            [15.0, 160.0],
        ],
    );
    g.polygon(
        "national_park",
        vec![[200.0, 20.0], [340.0, 30.0], [330.0, 160.0], [210.0, 120.0]],
    );
    for &(x, y) in &[
        (250.0, 560.0),
        (610.0, 470.0),
        (900.0, 420.0),
        (430.0, 660.0),
        (60.0, 720.0),
    ] {
        g.rect("services_and_activities", x, y, 30.0, 24.0);
    }

    let n = g.features.len();
    let doc = json!({ "type": "FeatureCollection", "features": g.features });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializes");
    text.push('\n');
    std::fs::write(&out, text).expect("write region");
    println!("wrote {n} features to {out}");
}
