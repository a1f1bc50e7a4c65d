//! Segmentation class taxonomy and the source-layer → class mapping.
//!
//! The taxonomy is loaded from a small TOML document:
//!
//! ```toml
//! [[classes]]
//! name = "Building"
//! group = "Buildings"
//!
//! [[classes]]
//! name = "Road"
//! group = "Transport"
//!
//! [layer_map]
//! building = "Building"
//! road = "Road"
//! ```
//!
//! Class indices are dense and follow declaration order. Layer keys are
//! matched case-insensitively after trimming.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on the number of classes a taxonomy may declare.
pub const MAX_CLASSES: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("taxonomy document does not parse: {0}")]
    Parse(String),
    #[error("duplicate key in taxonomy document: {0}")]
    DuplicateKey(String),
    #[error("duplicate class name `{0}`")]
    DuplicateClass(String),
    #[error("layer `{0}` is mapped more than once")]
    DuplicateLayer(String),
    #[error("layer `{layer}` maps to unknown class `{class}`")]
    UnknownClass { layer: String, class: String },
    #[error("taxonomy declares no classes")]
    Empty,
    #[error("taxonomy declares {0} classes, at most {MAX_CLASSES} are supported")]
    TooManyClasses(usize),
}

/// Dense index of a segmentation class (one mask channel per class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u8);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: ClassId,
    pub name: String,
    pub group: String,
}

impl ClassInfo {
    /// Lower-case singular noun phrase used in question text.
    pub fn singular(&self) -> String {
        singular_phrase(&self.name)
    }

    /// Lower-case plural noun phrase used in question text.
    pub fn plural(&self) -> String {
        plural_phrase(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTaxonomy {
    classes: Vec<ClassInfo>,
    layer_map: BTreeMap<String, ClassId>,
}

// (name, group) in channel order.
const DEFAULT_CLASSES: [(&str, &str); 16] = [
    ("Building", "Buildings"),
    ("Cemetery", "Buildings"),
    ("Sports Field", "Buildings"),
    ("Water Tank", "Buildings"),
    ("Pylon", "Buildings"),
    ("Surface Construction", "Buildings"),
    ("Foreshore Zone", "Land Use"),
    ("Vegetation Zone", "Land Use"),
    ("Water Area", "Water Area"),
    ("Airfield", "Transport"),
    ("Transportation Construction", "Transport"),
    ("Road", "Transport"),
    ("Railway", "Transport"),
    ("Public Forest", "Regulated Areas"),
    ("National Park", "Regulated Areas"),
    ("Services and Activities", "Services and Activities"),
];

#[derive(Debug, Serialize, Deserialize)]
struct TaxonomyDoc {
    classes: Vec<ClassDoc>,
    #[serde(default)]
    layer_map: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassDoc {
    name: String,
    group: String,
}

impl Default for ClassTaxonomy {
    fn default() -> Self {
        let classes = DEFAULT_CLASSES
            .iter()
            .enumerate()
            .map(|(i, (name, group))| ClassInfo {
                id: ClassId(i as u8),
                name: name.to_string(),
                group: group.to_string(),
            })
            .collect::<Vec<_>>();
        let layer_map = classes.iter().map(|c| (layer_key(&c.name), c.id)).collect();
        ClassTaxonomy { classes, layer_map }
    }
}

/// `"Sports Field"` → `"sports_field"`.
fn layer_key(name: &str) -> String {
    name.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
}

fn normalize_layer(layer: &str) -> String {
    layer.trim().to_lowercase()
}

/// Loads a taxonomy; `None` yields the default 16-class taxonomy.
pub fn load_taxonomy(document: Option<&str>) -> Result<ClassTaxonomy, TaxonomyError> {
    match document {
        None => Ok(ClassTaxonomy::default()),
        Some(text) => ClassTaxonomy::from_toml(text),
    }
}

impl ClassTaxonomy {
    pub fn from_toml(text: &str) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDoc = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            if msg.contains("duplicate key") {
                TaxonomyError::DuplicateKey(msg)
            } else {
                TaxonomyError::Parse(e.to_string())
            }
        })?;
        Self::from_parts(doc.classes.into_iter().map(|c| (c.name, c.group)), doc.layer_map)
    }

    fn from_parts(
        classes: impl IntoIterator<Item = (String, String)>,
        layer_map: BTreeMap<String, String>,
    ) -> Result<Self, TaxonomyError> {
        let mut infos = Vec::new();
        let mut seen = HashSet::new();
        for (name, group) in classes {
            let name = name.trim().to_string();
            if !seen.insert(name.to_lowercase()) {
                return Err(TaxonomyError::DuplicateClass(name));
            }
            infos.push((name, group.trim().to_string()));
        }
        if infos.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        if infos.len() > MAX_CLASSES {
            return Err(TaxonomyError::TooManyClasses(infos.len()));
        }
        let classes: Vec<ClassInfo> = infos
            .into_iter()
            .enumerate()
            .map(|(i, (name, group))| ClassInfo {
                id: ClassId(i as u8),
                name,
                group,
            })
            .collect();
        let by_name: HashMap<String, ClassId> = classes.iter().map(|c| (c.name.to_lowercase(), c.id)).collect();
        let mut map = BTreeMap::new();
        for (layer, class) in layer_map {
            let key = normalize_layer(&layer);
            let id = *by_name
                .get(&class.trim().to_lowercase())
                .ok_or_else(|| TaxonomyError::UnknownClass {
                    layer: layer.clone(),
                    class: class.clone(),
                })?;
            if map.insert(key.clone(), id).is_some() {
                return Err(TaxonomyError::DuplicateLayer(key));
            }
        }
        Ok(ClassTaxonomy {
            classes,
            layer_map: map,
        })
    }

    /// Serializes to the same TOML document shape accepted by [`ClassTaxonomy::from_toml`].
    pub fn to_toml(&self) -> String {
        let doc = TaxonomyDoc {
            classes: self
                .classes
                .iter()
                .map(|c| ClassDoc {
                    name: c.name.clone(),
                    group: c.group.clone(),
                })
                .collect(),
            layer_map: self
                .layer_map
                .iter()
                .map(|(layer, id)| (layer.clone(), self.classes[id.index()].name.clone()))
                .collect(),
        };
        toml::to_string(&doc).expect("taxonomy document always serializes")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().map(|c| c.id)
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassInfo> {
        self.classes.get(id.index())
    }

    pub fn class(&self, id: ClassId) -> &ClassInfo {
        &self.classes[id.index()]
    }

    pub fn by_name(&self, name: &str) -> Option<ClassId> {
        let name = name.trim().to_lowercase();
        self.classes
            .iter()
            .find(|c| c.name.to_lowercase() == name)
            .map(|c| c.id)
    }

    pub fn class_for_layer(&self, layer: &str) -> Option<ClassId> {
        self.layer_map.get(&normalize_layer(layer)).copied()
    }

    pub fn layer_map(&self) -> &BTreeMap<String, ClassId> {
        &self.layer_map
    }

    /// Classes belonging to `group`, in channel order.
    pub fn group(&self, group: &str) -> Vec<&ClassInfo> {
        self.classes.iter().filter(|c| c.group == group).collect()
    }
}

// Irregular forms used in question text. Everything else goes through
// the regular English rules in `pluralize`.
const PHRASES: [(&str, &str, &str); 1] = [(
    "services and activities",
    "service and activity site",
    "service and activity sites",
)];

fn singular_phrase(name: &str) -> String {
    let lower = name.trim().to_lowercase();
    PHRASES
        .iter()
        .find(|(n, _, _)| *n == lower)
        .map(|(_, s, _)| s.to_string())
        .unwrap_or(lower)
}

fn plural_phrase(name: &str) -> String {
    let lower = name.trim().to_lowercase();
    if let Some((_, _, p)) = PHRASES.iter().find(|(n, _, _)| *n == lower) {
        return p.to_string();
    }
    match lower.rsplit_once(' ') {
        Some((head, last)) => format!("{head} {}", pluralize(last)),
        None => pluralize(&lower),
    }
}

fn pluralize(word: &str) -> String {
    let consonant_y = word.len() > 1
        && word.ends_with('y')
        && !matches!(word.as_bytes()[word.len() - 2], b'a' | b'e' | b'i' | b'o' | b'u');
    if consonant_y {
        format!("{}ies", &word[..word.len() - 1])
    } else if ["s", "x", "z", "ch", "sh"].iter().any(|s| word.ends_with(s)) {
        format!("{word}es")
    } else {
        format!("{word}s")
    }
}

/// Indefinite article for a noun phrase.
pub fn article(phrase: &str) -> &'static str {
    match phrase.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_sixteen_classes_in_six_groups() {
        let tax = load_taxonomy(None).unwrap();
        assert_eq!(tax.len(), 16);
        let transport: Vec<_> = tax.group("Transport").iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            transport,
            ["Airfield", "Transportation Construction", "Road", "Railway"]
        );
        let sizes: Vec<usize> = [
            "Buildings",
            "Land Use",
            "Water Area",
            "Transport",
            "Regulated Areas",
            "Services and Activities",
        ]
        .iter()
        .map(|g| tax.group(g).len())
        .collect();
        assert_eq!(sizes, [6, 2, 1, 4, 2, 1]);
        for (i, c) in tax.classes().iter().enumerate() {
            assert_eq!(c.id.index(), i);
        }
    }

    #[test]
    fn single_class_document() {
        let tax = ClassTaxonomy::from_toml(
            r#"
            [[classes]]
            name = "A"
            group = "G"

            [layer_map]
            roads = "A"
            "#,
        )
        .unwrap();
        assert_eq!(tax.len(), 1);
        assert_eq!(tax.class_for_layer("roads"), Some(ClassId(0)));
        assert_eq!(tax.class_for_layer(" ROADS "), Some(ClassId(0)));
        assert_eq!(tax.class_for_layer("rivers"), None);
    }

    #[test]
    fn duplicate_layer_is_rejected() {
        let literal = ClassTaxonomy::from_toml(
            r#"
            [[classes]]
            name = "A"
            group = "G"
            [layer_map]
            x = "A"
            x = "A"
            "#,
        );
        assert!(matches!(literal, Err(TaxonomyError::DuplicateKey(_))));

        let folded = ClassTaxonomy::from_toml(
            r#"
            [[classes]]
            name = "A"
            group = "G"
            [layer_map]
            x = "A"
            X = "A"
            "#,
        );
        assert_eq!(folded, Err(TaxonomyError::DuplicateLayer("x".into())));
    }

    #[test]
    fn duplicate_class_and_empty_are_rejected() {
        let dup = ClassTaxonomy::from_toml(
            r#"
            [[classes]]
            name = "A"
            group = "G"
            [[classes]]
            name = "a"
            group = "H"
            "#,
        );
        assert_eq!(dup, Err(TaxonomyError::DuplicateClass("a".into())));
        assert_eq!(ClassTaxonomy::from_toml("classes = []"), Err(TaxonomyError::Empty));
    }

    #[test]
    fn unknown_class_in_layer_map() {
        let err = ClassTaxonomy::from_toml(
            r#"
            [[classes]]
            name = "A"
            group = "G"
            [layer_map]
            x = "B"
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, TaxonomyError::UnknownClass { .. }));
    }

    #[test]
    fn too_many_classes() {
        let mut doc = String::new();
        for i in 0..65 {
            doc.push_str(&format!("[[classes]]\nname = \"c{i}\"\ngroup = \"g\"\n"));
        }
        assert_eq!(ClassTaxonomy::from_toml(&doc), Err(TaxonomyError::TooManyClasses(65)));
    }

    #[test]
    fn default_round_trips_through_toml() {
        let tax = ClassTaxonomy::default();
        let again = ClassTaxonomy::from_toml(&tax.to_toml()).unwrap();
        assert_eq!(tax, again);
    }

    #[test]
    fn phrases() {
        let tax = ClassTaxonomy::default();
        let id = |n| tax.by_name(n).unwrap();
        assert_eq!(tax.class(id("Cemetery")).plural(), "cemeteries");
        assert_eq!(tax.class(id("Sports Field")).plural(), "sports fields");
        assert_eq!(tax.class(id("Railway")).plural(), "railways");
        assert_eq!(
            tax.class(id("Services and Activities")).plural(),
            "service and activity sites"
        );
        assert_eq!(article("airfield"), "an");
        assert_eq!(article("road"), "a");
    }
}
