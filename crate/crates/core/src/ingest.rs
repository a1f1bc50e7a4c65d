//! Vector ingest: feature-collection parsing, patch tiling and
//! object-to-patch assignment.
//!
//! World coordinates are projected meters with y pointing up. Clipped
//! geometries inside a [`PatchObjects`] are expressed in the patch frame:
//! origin at the patch's top-left corner, x to the right, y pointing down,
//! both in meters within `[0, side_m]`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geom::{self, clip_geometry, Geometry, Point, Polygon, Rect};
use crate::taxonomy::{ClassId, ClassTaxonomy};

pub const PATCH_SIDE_M: f64 = 200.0;
pub const PATCH_PX: u32 = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("feature collection is not valid JSON: {0}")]
    Json(String),
    #[error("document is not a feature collection: {0}")]
    NotACollection(String),
    #[error("feature {index}: malformed geometry: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("feature {index}: non-finite coordinate")]
    NonFinite { index: usize },
    #[error("feature {index}: missing `properties.layer`")]
    MissingLayer { index: usize },
    #[error("unknown layers (not in taxonomy layer map): {}", .0.join(", "))]
    UnknownLayers(Vec<String>),
    #[error("degenerate extent {0:?}: width and height must be positive")]
    DegenerateExtent(Rect),
    #[error("invalid patch template: side {side_m} m over {px} px")]
    BadTemplate { side_m: f64, px: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoObject {
    pub id: String,
    pub class_id: ClassId,
    pub geometry: Geometry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchTemplate {
    pub side_m: f64,
    pub px: u32,
}

impl Default for PatchTemplate {
    fn default() -> Self {
        PatchTemplate {
            side_m: PATCH_SIDE_M,
            px: PATCH_PX,
        }
    }
}

impl PatchTemplate {
    pub fn resolution_m_per_px(&self) -> f64 {
        self.side_m / self.px as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub patch_id: String,
    pub row: u32,
    pub col: u32,
    /// World coordinates of the top-left corner.
    pub origin: Point,
    pub side_m: f64,
    pub px: u32,
    pub resolution_m_per_px: f64,
}

impl PatchSpec {
    pub fn world_rect(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y - self.side_m,
            self.origin.x + self.side_m,
            self.origin.y,
        )
    }

    /// Patch-frame rectangle `[0, side]²`.
    pub fn local_rect(&self) -> Rect {
        Rect::new(0.0, 0.0, self.side_m, self.side_m)
    }

    pub fn to_local(&self, p: Point) -> Point {
        Point::new(p.x - self.origin.x, self.origin.y - p.y)
    }

    pub fn area_m2(&self) -> f64 {
        self.side_m * self.side_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchObjects {
    pub spec: PatchSpec,
    pub objects: Vec<GeoObject>,
}

impl PatchObjects {
    pub fn of_class(&self, class: ClassId) -> impl Iterator<Item = &GeoObject> {
        self.objects.iter().filter(move |o| o.class_id == class)
    }

    pub fn object(&self, id: &str) -> Option<&GeoObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Reject features whose layer is not mapped; otherwise they are skipped.
    pub strict: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { strict: true }
    }
}

/// Parses an RFC-7946-shaped feature collection. Each feature needs
/// `properties.layer`; `properties.name` is optional. The object id is the
/// feature `id`, else `properties.id`, else `f{index:06}`.
pub fn parse_vectors(
    document: &str,
    taxonomy: &ClassTaxonomy,
    options: ParseOptions,
) -> Result<Vec<GeoObject>, IngestError> {
    let root: Value = serde_json::from_str(document).map_err(|e| IngestError::Json(e.to_string()))?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(IngestError::NotACollection("missing `type: FeatureCollection`".into()));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::NotACollection("missing `features` array".into()))?;

    let mut objects = Vec::with_capacity(features.len());
    let mut unknown = BTreeSet::new();
    for (index, feature) in features.iter().enumerate() {
        let props = feature.get("properties");
        let layer = props
            .and_then(|p| p.get("layer"))
            .and_then(Value::as_str)
            .ok_or(IngestError::MissingLayer { index })?;
        let Some(class_id) = taxonomy.class_for_layer(layer) else {
            if options.strict {
                unknown.insert(layer.to_string());
            } else {
                log::warn!("feature {index}: skipping unmapped layer `{layer}`");
            }
            continue;
        };
        let geometry = parse_geometry(feature.get("geometry"), index)?;
        let id = feature_id(feature, index);
        let name = props
            .and_then(|p| p.get("name"))
            .and_then(Value::as_str)
            .map(str::to_string);
        objects.push(GeoObject {
            id,
            class_id,
            geometry,
            name,
        });
    }
    if !unknown.is_empty() {
        return Err(IngestError::UnknownLayers(unknown.into_iter().collect()));
    }
    Ok(objects)
}

fn feature_id(feature: &Value, index: usize) -> String {
    let id = feature
        .get("id")
        .or_else(|| feature.get("properties").and_then(|p| p.get("id")));
    match id {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("f{index:06}"),
    }
}

fn parse_geometry(value: Option<&Value>, index: usize) -> Result<Geometry, IngestError> {
    let malformed = |reason: &str| IngestError::Malformed {
        index,
        reason: reason.to_string(),
    };
    let value = value.ok_or_else(|| malformed("missing geometry"))?;
    let kind = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing geometry type"))?;
    let coords = value
        .get("coordinates")
        .ok_or_else(|| malformed("missing coordinates"))?;

    let geometry = match kind {
        "Point" => Geometry::Point(position(coords, index)?),
        "LineString" => Geometry::LineString(line(coords, index)?),
        "MultiLineString" => Geometry::MultiLineString(
            array(coords, index)?
                .iter()
                .map(|l| line(l, index))
                .collect::<Result<_, _>>()?,
        ),
        "Polygon" => Geometry::Polygon(polygon(coords, index)?),
        "MultiPolygon" => Geometry::MultiPolygon(
            array(coords, index)?
                .iter()
                .map(|p| polygon(p, index))
                .collect::<Result<_, _>>()?,
        ),
        other => return Err(malformed(&format!("unsupported geometry type `{other}`"))),
    };
    Ok(geometry)
}

fn array(v: &Value, index: usize) -> Result<&Vec<Value>, IngestError> {
    v.as_array().ok_or_else(|| IngestError::Malformed {
        index,
        reason: "expected an array".into(),
    })
}

fn position(v: &Value, index: usize) -> Result<Point, IngestError> {
    let a = array(v, index)?;
    if a.len() < 2 {
        return Err(IngestError::Malformed {
            index,
            reason: "position needs two numbers".into(),
        });
    }
    let num = |v: &Value| {
        v.as_f64().ok_or_else(|| IngestError::Malformed {
            index,
            reason: "coordinate is not a number".into(),
        })
    };
    let p = Point::new(num(&a[0])?, num(&a[1])?);
    if !p.is_finite() {
        return Err(IngestError::NonFinite { index });
    }
    Ok(p)
}

fn line(v: &Value, index: usize) -> Result<Vec<Point>, IngestError> {
    let pts: Vec<Point> = array(v, index)?
        .iter()
        .map(|p| position(p, index))
        .collect::<Result<_, _>>()?;
    if pts.len() < 2 || pts.windows(2).all(|w| w[0] == w[1]) {
        return Err(IngestError::Malformed {
            index,
            reason: "line string needs two distinct positions".into(),
        });
    }
    Ok(pts)
}

fn polygon(v: &Value, index: usize) -> Result<Polygon, IngestError> {
    let mut rings = Vec::new();
    for ring in array(v, index)? {
        let mut pts: Vec<Point> = array(ring, index)?
            .iter()
            .map(|p| position(p, index))
            .collect::<Result<_, _>>()?;
        geom::close_ring(&mut pts);
        if !geom::ring_is_simple(&pts) {
            return Err(IngestError::Malformed {
                index,
                reason: "polygon ring is degenerate or self-intersecting".into(),
            });
        }
        rings.push(pts);
    }
    if rings.is_empty() {
        return Err(IngestError::Malformed {
            index,
            reason: "polygon has no rings".into(),
        });
    }
    Ok(Polygon::from(rings))
}

/// Bounding box of a set of objects, or `None` when empty.
pub fn objects_extent(objects: &[GeoObject]) -> Option<Rect> {
    objects.iter().map(|o| o.geometry.bbox()).reduce(|a, b| {
        Rect::new(
            a.min_x.min(b.min_x),
            a.min_y.min(b.min_y),
            a.max_x.max(b.max_x),
            a.max_y.max(b.max_y),
        )
    })
}

/// Tiles `bbox` into full patches anchored at its top-left corner, in
/// row-major order. Partial patches along the right and bottom edges are
/// dropped.
pub fn tile_extent(bbox: Rect, template: PatchTemplate) -> Result<Vec<PatchSpec>, IngestError> {
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return Err(IngestError::DegenerateExtent(bbox));
    }
    if template.side_m.is_nan() || template.side_m <= 0.0 || template.px == 0 {
        return Err(IngestError::BadTemplate {
            side_m: template.side_m,
            px: template.px,
        });
    }
    // Tolerate representation error for extents that are exact multiples.
    let fit = |len: f64| ((len / template.side_m) + 1e-9).floor() as u32;
    let cols = fit(bbox.width());
    let rows = fit(bbox.height());
    let mut out = Vec::with_capacity((rows * cols) as usize);
    for row in 0..rows {
        for col in 0..cols {
            out.push(PatchSpec {
                patch_id: format!("p{row:04}_{col:04}"),
                row,
                col,
                origin: Point::new(
                    bbox.min_x + col as f64 * template.side_m,
                    bbox.max_y - row as f64 * template.side_m,
                ),
                side_m: template.side_m,
                px: template.px,
                resolution_m_per_px: template.resolution_m_per_px(),
            });
        }
    }
    Ok(out)
}

/// Clips one object into a patch, returning it in the patch frame.
pub fn clip_to_patch(object: &GeoObject, spec: &PatchSpec) -> Option<GeoObject> {
    let local = object.geometry.map(|p| spec.to_local(p));
    clip_geometry(&local, &spec.local_rect()).map(|geometry| GeoObject {
        id: object.id.clone(),
        class_id: object.class_id,
        geometry,
        name: object.name.clone(),
    })
}

type Indexed = GeomWithData<Rectangle<[f64; 2]>, usize>;

/// Assigns every object to the patches it intersects, clipped to each.
/// Objects keep their input order within a patch; patches are returned
/// sorted by `patch_id`.
pub fn assign_objects(objects: &[GeoObject], patches: &[PatchSpec]) -> Vec<PatchObjects> {
    let entries: Vec<Indexed> = objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let b = o.geometry.bbox();
            GeomWithData::new(Rectangle::from_corners([b.min_x, b.min_y], [b.max_x, b.max_y]), i)
        })
        .collect();
    let tree = RTree::bulk_load(entries);

    let mut out: Vec<PatchObjects> = patches
        .par_iter()
        .map(|spec| {
            let r = spec.world_rect();
            let query = AABB::from_corners([r.min_x, r.min_y], [r.max_x, r.max_y]);
            let mut hits: Vec<usize> = tree.locate_in_envelope_intersecting(&query).map(|e| e.data).collect();
            hits.sort_unstable();
            PatchObjects {
                spec: spec.clone(),
                objects: hits
                    .into_iter()
                    .filter_map(|i| clip_to_patch(&objects[i], spec))
                    .collect(),
            }
        })
        .collect();
    out.sort_by(|a, b| a.spec.patch_id.cmp(&b.spec.patch_id));
    out
}
