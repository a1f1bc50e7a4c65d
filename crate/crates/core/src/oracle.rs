//! Ground-truth answers computed from a patch's clipped geometry.
//!
//! All positions are in the patch frame (meters, y down). Location labels
//! use four quadrants plus a central square spanning the middle third of
//! each axis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{geometry_distance, union_area, Geometry, Point, Polygon};
use crate::ingest::{GeoObject, PatchObjects};
use crate::taxonomy::ClassId;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("point ({x}, {y}) lies outside the patch")]
    OutsidePatch { x: f64, y: f64 },
    #[error("object `{0}` has no area")]
    NotAreal(String),
    #[error("comparison needs two different classes")]
    SameClass,
    #[error("objects `{0}` and `{1}` have coincident centroids")]
    CoincidentCentroids(String, String),
    #[error("relation needs two distinct objects")]
    SameObject,
    #[error("object `{0}` has no centroid")]
    NoCentroid(String),
    #[error("no candidate object of the requested class")]
    NoCandidate,
    #[error("no object `{0}` in patch")]
    UnknownObject(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Presence,
    Count,
    Density,
    AbsLocation,
    Area,
    CountComparison,
    RelLocation,
    Distance,
    Nearest,
}

impl QuestionType {
    pub const ALL: [QuestionType; 9] = [
        QuestionType::Presence,
        QuestionType::Count,
        QuestionType::Density,
        QuestionType::AbsLocation,
        QuestionType::Area,
        QuestionType::CountComparison,
        QuestionType::RelLocation,
        QuestionType::Distance,
        QuestionType::Nearest,
    ];

    /// Short label in the `1a`..`4c` numbering.
    pub fn label(self) -> &'static str {
        match self {
            QuestionType::Presence => "1a",
            QuestionType::Count => "1b",
            QuestionType::Density => "1c",
            QuestionType::AbsLocation => "2a",
            QuestionType::Area => "2b",
            QuestionType::CountComparison => "3",
            QuestionType::RelLocation => "4a",
            QuestionType::Distance => "4b",
            QuestionType::Nearest => "4c",
        }
    }

    pub fn category(self) -> u8 {
        match self {
            QuestionType::Presence | QuestionType::Count | QuestionType::Density => 1,
            QuestionType::AbsLocation | QuestionType::Area => 2,
            QuestionType::CountComparison => 3,
            _ => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QuestionType::Presence => "presence",
            QuestionType::Count => "count",
            QuestionType::Density => "density",
            QuestionType::AbsLocation => "abs_location",
            QuestionType::Area => "area",
            QuestionType::CountComparison => "count_comparison",
            QuestionType::RelLocation => "rel_location",
            QuestionType::Distance => "distance",
            QuestionType::Nearest => "nearest",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuestionType::ALL
            .into_iter()
            .find(|q| q.name() == s || q.label() == s)
            .ok_or_else(|| format!("unknown question type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub value: String,
    /// Unrounded quantity behind a numeric answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric: Option<f64>,
}

impl Answer {
    pub fn text(value: impl Into<String>) -> Self {
        Answer {
            value: value.into(),
            numeric: None,
        }
    }

    fn number(value: String, numeric: f64) -> Self {
        Answer {
            value,
            numeric: Some(numeric),
        }
    }

    fn yes_no(b: bool) -> Self {
        Answer::text(if b { "yes" } else { "no" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocationLabel {
    #[serde(rename = "top-left")]
    TopLeft,
    #[serde(rename = "top-right")]
    TopRight,
    #[serde(rename = "bottom-left")]
    BottomLeft,
    #[serde(rename = "bottom-right")]
    BottomRight,
    #[serde(rename = "center")]
    Center,
}

impl LocationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            LocationLabel::TopLeft => "top-left",
            LocationLabel::TopRight => "top-right",
            LocationLabel::BottomLeft => "bottom-left",
            LocationLabel::BottomRight => "bottom-right",
            LocationLabel::Center => "center",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationLabel {
    #[serde(rename = "above")]
    Above,
    #[serde(rename = "below")]
    Below,
    #[serde(rename = "left of")]
    LeftOf,
    #[serde(rename = "right of")]
    RightOf,
}

impl RelationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Above => "above",
            RelationLabel::Below => "below",
            RelationLabel::LeftOf => "left of",
            RelationLabel::RightOf => "right of",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            RelationLabel::Above => RelationLabel::Below,
            RelationLabel::Below => RelationLabel::Above,
            RelationLabel::LeftOf => RelationLabel::RightOf,
            RelationLabel::RightOf => RelationLabel::LeftOf,
        }
    }
}

/// Maximum answer values at the default 200 m patch size.
pub const MAX_AREA_M2: f64 = 40_000.0;
pub const MAX_DISTANCE_M: f64 = 283.0;

pub fn presence(patch: &PatchObjects, class: ClassId) -> Answer {
    Answer::yes_no(patch.of_class(class).next().is_some())
}

pub fn count_of(patch: &PatchObjects, class: ClassId) -> usize {
    patch.of_class(class).count()
}

pub fn count(patch: &PatchObjects, class: ClassId) -> Answer {
    let n = count_of(patch, class);
    Answer::number(n.to_string(), n as f64)
}

/// Union area of the class's polygons inside the patch, in m².
pub fn class_area(patch: &PatchObjects, class: ClassId) -> f64 {
    let polys: Vec<&Polygon> = patch.of_class(class).flat_map(|o| o.geometry.polygons()).collect();
    union_area(&polys)
}

/// Covered fraction of the patch, rendered with two decimals.
pub fn density(patch: &PatchObjects, class: ClassId) -> Answer {
    let ratio = (class_area(patch, class) / patch.spec.area_m2()).clamp(0.0, 1.0);
    Answer::number(format!("{ratio:.2}"), ratio)
}

pub fn abs_location(point: Point, side_m: f64) -> Result<LocationLabel, OracleError> {
    let Point { x, y } = point;
    if !(0.0..=side_m).contains(&x) || !(0.0..=side_m).contains(&y) {
        return Err(OracleError::OutsidePatch { x, y });
    }
    let (lo, hi) = (side_m / 3.0, 2.0 * side_m / 3.0);
    if (lo..=hi).contains(&x) && (lo..=hi).contains(&y) {
        return Ok(LocationLabel::Center);
    }
    let half = side_m / 2.0;
    Ok(match (x <= half, y <= half) {
        (true, true) => LocationLabel::TopLeft,
        (false, true) => LocationLabel::TopRight,
        (true, false) => LocationLabel::BottomLeft,
        (false, false) => LocationLabel::BottomRight,
    })
}

pub fn object_centroid(object: &GeoObject) -> Result<Point, OracleError> {
    object
        .geometry
        .centroid()
        .ok_or_else(|| OracleError::NoCentroid(object.id.clone()))
}

/// Location label of an object's centroid.
pub fn object_location(object: &GeoObject, side_m: f64) -> Result<LocationLabel, OracleError> {
    abs_location(object_centroid(object)?, side_m)
}

pub fn area(object: &GeoObject) -> Result<Answer, OracleError> {
    let a = object.geometry.area();
    if !object.geometry.is_areal() || a <= 0.0 {
        return Err(OracleError::NotAreal(object.id.clone()));
    }
    let rounded = a.round().clamp(1.0, MAX_AREA_M2);
    Ok(Answer::number(format!("{rounded}"), a))
}

/// "Are there more A than B?"
pub fn compare_counts(patch: &PatchObjects, a: ClassId, b: ClassId) -> Result<Answer, OracleError> {
    if a == b {
        return Err(OracleError::SameClass);
    }
    Ok(Answer::yes_no(count_of(patch, a) > count_of(patch, b)))
}

/// Position of A relative to B from centroids; exact diagonals resolve to
/// the vertical axis.
pub fn rel_location(a: &GeoObject, b: &GeoObject) -> Result<RelationLabel, OracleError> {
    if a.id == b.id {
        return Err(OracleError::SameObject);
    }
    let ca = object_centroid(a)?;
    let cb = object_centroid(b)?;
    let dx = ca.x - cb.x;
    let dy = ca.y - cb.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(OracleError::CoincidentCentroids(a.id.clone(), b.id.clone()));
    }
    Ok(if dy.abs() >= dx.abs() {
        if dy < 0.0 {
            RelationLabel::Above
        } else {
            RelationLabel::Below
        }
    } else if dx < 0.0 {
        RelationLabel::LeftOf
    } else {
        RelationLabel::RightOf
    })
}

fn rounded_distance(d: f64) -> Answer {
    Answer::number(format!("{}", d.round()), d)
}

pub fn distance(a: &GeoObject, b: &GeoObject) -> Answer {
    rounded_distance(geometry_distance(&a.geometry, &b.geometry))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Anchor {
    Object(String),
    /// Pixel row/column; distances are measured from the pixel center.
    Pixel {
        row: u32,
        col: u32,
    },
}

/// Closest object of `class` to the anchor (ties: smaller id).
pub fn nearest_object<'a>(
    patch: &'a PatchObjects,
    class: ClassId,
    anchor: &Anchor,
) -> Result<&'a GeoObject, OracleError> {
    let anchor_geom = match anchor {
        Anchor::Object(id) => patch
            .object(id)
            .ok_or_else(|| OracleError::UnknownObject(id.clone()))?
            .geometry
            .clone(),
        Anchor::Pixel { row, col } => {
            let res = patch.spec.resolution_m_per_px;
            Geometry::Point(Point::new((*col as f64 + 0.5) * res, (*row as f64 + 0.5) * res))
        }
    };
    let excluded = match anchor {
        Anchor::Object(id) => Some(id.as_str()),
        Anchor::Pixel { .. } => None,
    };
    patch
        .of_class(class)
        .filter(|o| Some(o.id.as_str()) != excluded)
        .map(|o| (geometry_distance(&o.geometry, &anchor_geom), o))
        .min_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.id.cmp(&b.id)))
        .map(|(_, o)| o)
        .ok_or(OracleError::NoCandidate)
}

pub fn nearest(patch: &PatchObjects, class: ClassId, anchor: &Anchor) -> Result<LocationLabel, OracleError> {
    object_location(nearest_object(patch, class, anchor)?, patch.spec.side_m)
}
