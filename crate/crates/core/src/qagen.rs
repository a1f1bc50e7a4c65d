//! Question/answer generation: templated questions per type, answer-type
//! balancing, patch-level splits and the answer vocabulary.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{GeoObject, PatchObjects};
use crate::oracle::{self, Anchor, Answer, OracleError, QuestionType};
use crate::seeding::derive_rng;
use crate::taxonomy::{article, ClassId, ClassTaxonomy};

#[derive(Debug, Error, PartialEq)]
pub enum QaError {
    #[error("{qtype} answer `{answer}` is outside every bucket")]
    OutOfRange { qtype: QuestionType, answer: String },
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    BadRatios([f64; 3]),
    #[error("cannot split an empty patch list")]
    NoPatches,
    #[error("balance cap for {0} must be at least 1")]
    ZeroCap(QuestionType),
}

/// A well-posed question, referring to objects by id.
#[derive(Debug, Clone, PartialEq)]
pub enum QuestionSpec {
    Presence(ClassId),
    Count(ClassId),
    Density(ClassId),
    AbsLocation(String),
    Area(String),
    CountComparison(ClassId, ClassId),
    RelLocation(String, String),
    Distance(String, String),
    Nearest { class: ClassId, anchor: Anchor },
}

impl QuestionSpec {
    pub fn qtype(&self) -> QuestionType {
        match self {
            QuestionSpec::Presence(_) => QuestionType::Presence,
            QuestionSpec::Count(_) => QuestionType::Count,
            QuestionSpec::Density(_) => QuestionType::Density,
            QuestionSpec::AbsLocation(_) => QuestionType::AbsLocation,
            QuestionSpec::Area(_) => QuestionType::Area,
            QuestionSpec::CountComparison(..) => QuestionType::CountComparison,
            QuestionSpec::RelLocation(..) => QuestionType::RelLocation,
            QuestionSpec::Distance(..) => QuestionType::Distance,
            QuestionSpec::Nearest { .. } => QuestionType::Nearest,
        }
    }

    /// Oracle answer on `patch`.
    pub fn answer(&self, patch: &PatchObjects) -> Result<Answer, OracleError> {
        let obj = |id: &str| {
            patch
                .object(id)
                .ok_or_else(|| OracleError::UnknownObject(id.to_string()))
        };
        let side = patch.spec.side_m;
        Ok(match self {
            QuestionSpec::Presence(c) => oracle::presence(patch, *c),
            QuestionSpec::Count(c) => oracle::count(patch, *c),
            QuestionSpec::Density(c) => oracle::density(patch, *c),
            QuestionSpec::AbsLocation(id) => Answer::text(oracle::object_location(obj(id)?, side)?.as_str()),
            QuestionSpec::Area(id) => oracle::area(obj(id)?)?,
            QuestionSpec::CountComparison(a, b) => oracle::compare_counts(patch, *a, *b)?,
            QuestionSpec::RelLocation(a, b) => Answer::text(oracle::rel_location(obj(a)?, obj(b)?)?.as_str()),
            QuestionSpec::Distance(a, b) => oracle::distance(obj(a)?, obj(b)?),
            QuestionSpec::Nearest { class, anchor } => Answer::text(oracle::nearest(patch, *class, anchor)?.as_str()),
        })
    }

    /// Question text. Object references are rendered through their class,
    /// which is unambiguous under the sole-instance rule.
    pub fn render(&self, patch: &PatchObjects, taxonomy: &ClassTaxonomy) -> Option<String> {
        let s = |c: ClassId| taxonomy.get(c).map(|i| i.singular());
        let p = |c: ClassId| taxonomy.get(c).map(|i| i.plural());
        let os = |id: &str| patch.object(id).and_then(|o| s(o.class_id));
        Some(match self {
            QuestionSpec::Presence(c) => {
                let s = s(*c)?;
                format!("Is there {} {s} in the image?", article(&s))
            }
            QuestionSpec::Count(c) => format!("How many {} are there in the image?", p(*c)?),
            QuestionSpec::Density(c) => format!("What fraction of the image is covered by {}?", p(*c)?),
            QuestionSpec::AbsLocation(id) => format!("Where is the {} located in the image?", os(id)?),
            QuestionSpec::Area(id) => format!("What is the area of the {}?", os(id)?),
            QuestionSpec::CountComparison(a, b) => {
                format!("Are there more {} than {} in the image?", p(*a)?, p(*b)?)
            }
            QuestionSpec::RelLocation(a, b) => {
                format!("What is the position of the {} relative to the {}?", os(a)?, os(b)?)
            }
            QuestionSpec::Distance(a, b) => {
                format!("What is the distance between the {} and the {}?", os(a)?, os(b)?)
            }
            QuestionSpec::Nearest { class, anchor } => match anchor {
                Anchor::Object(id) => format!("Where is the nearest {} to the {}?", s(*class)?, os(id)?),
                Anchor::Pixel { row, col } => format!(
                    "Where is the nearest {} to the pixel at row {row}, column {col}?",
                    s(*class)?
                ),
            },
        })
    }
}

/// Objects that are the only instance of their class in the patch.
pub fn sole_instances(patch: &PatchObjects) -> Vec<&GeoObject> {
    let mut counts: HashMap<ClassId, usize> = HashMap::new();
    for o in &patch.objects {
        *counts.entry(o.class_id).or_default() += 1;
    }
    patch.objects.iter().filter(|o| counts[&o.class_id] == 1).collect()
}

fn present_classes(patch: &PatchObjects, taxonomy: &ClassTaxonomy) -> Vec<ClassId> {
    taxonomy.ids().filter(|c| patch.of_class(*c).next().is_some()).collect()
}

/// All well-posed questions of a type that do not need random parameters,
/// in a fixed enumeration order.
fn enumerate_specs(patch: &PatchObjects, taxonomy: &ClassTaxonomy, qtype: QuestionType) -> Vec<QuestionSpec> {
    let classes: Vec<ClassId> = taxonomy.ids().collect();
    let sole = sole_instances(patch);
    let pairs = |f: &dyn Fn(String, String) -> QuestionSpec| -> Vec<QuestionSpec> {
        let mut out = Vec::new();
        for a in &sole {
            for b in &sole {
                if a.class_id != b.class_id {
                    out.push(f(a.id.clone(), b.id.clone()));
                }
            }
        }
        out
    };
    match qtype {
        QuestionType::Presence => classes.iter().map(|&c| QuestionSpec::Presence(c)).collect(),
        QuestionType::Count => classes.iter().map(|&c| QuestionSpec::Count(c)).collect(),
        QuestionType::Density => classes.iter().map(|&c| QuestionSpec::Density(c)).collect(),
        QuestionType::AbsLocation => sole.iter().map(|o| QuestionSpec::AbsLocation(o.id.clone())).collect(),
        QuestionType::Area => sole
            .iter()
            .filter(|o| o.geometry.is_areal() && o.geometry.area() > 0.0)
            .map(|o| QuestionSpec::Area(o.id.clone()))
            .collect(),
        QuestionType::CountComparison => {
            let mut out = Vec::new();
            for &a in &classes {
                for &b in &classes {
                    if a != b {
                        out.push(QuestionSpec::CountComparison(a, b));
                    }
                }
            }
            out
        }
        QuestionType::RelLocation => pairs(&|a, b| QuestionSpec::RelLocation(a, b)),
        QuestionType::Distance => pairs(&|a, b| QuestionSpec::Distance(a, b)),
        QuestionType::Nearest => {
            let mut out = Vec::new();
            for class in present_classes(patch, taxonomy) {
                for anchor in &sole {
                    if anchor.class_id != class {
                        out.push(QuestionSpec::Nearest {
                            class,
                            anchor: Anchor::Object(anchor.id.clone()),
                        });
                    }
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub spec: QuestionSpec,
    pub question: String,
    pub answer: Answer,
}

/// Up to `n` distinct well-posed questions of `qtype` for the patch, each
/// with its oracle answer. Object-specific questions only reference sole
/// instances of their class.
pub fn propose_questions<R: Rng>(
    patch: &PatchObjects,
    taxonomy: &ClassTaxonomy,
    qtype: QuestionType,
    n: usize,
    rng: &mut R,
) -> Vec<Proposal> {
    let mut pool = enumerate_specs(patch, taxonomy, qtype);
    if qtype == QuestionType::Nearest {
        let present = present_classes(patch, taxonomy);
        if !present.is_empty() {
            let px = patch.spec.px;
            for _ in 0..n {
                let class = *present.choose(rng).unwrap();
                pool.push(QuestionSpec::Nearest {
                    class,
                    anchor: Anchor::Pixel {
                        row: rng.random_range(0..px),
                        col: rng.random_range(0..px),
                    },
                });
            }
        }
    }
    pool.shuffle(rng);

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n.min(pool.len()));
    for spec in pool {
        if out.len() == n {
            break;
        }
        let Some(question) = spec.render(patch, taxonomy) else {
            continue;
        };
        if !seen.insert(question.clone()) {
            continue;
        }
        // Specs whose oracle refuses (e.g. coincident centroids) are not well-posed.
        if let Ok(answer) = spec.answer(patch) {
            out.push(Proposal { spec, question, answer });
        }
    }
    out
}

/// Recovers the `QuestionSpec` behind a generated question by re-rendering every
/// candidate for the patch.
pub fn parse_question(
    text: &str,
    qtype: QuestionType,
    patch: &PatchObjects,
    taxonomy: &ClassTaxonomy,
) -> Option<QuestionSpec> {
    if qtype == QuestionType::Nearest {
        if let Some(rest) = text.strip_prefix("Where is the nearest ") {
            if let Some((_, tail)) = rest.split_once(" to the pixel at row ") {
                let (row, col) = tail.strip_suffix('?')?.split_once(", column ")?;
                let anchor = Anchor::Pixel {
                    row: row.parse().ok()?,
                    col: col.parse().ok()?,
                };
                return taxonomy
                    .ids()
                    .map(|class| QuestionSpec::Nearest {
                        class,
                        anchor: anchor.clone(),
                    })
                    .find(|s| s.render(patch, taxonomy).as_deref() == Some(text));
            }
        }
    }
    enumerate_specs(patch, taxonomy, qtype)
        .into_iter()
        .find(|s| s.render(patch, taxonomy).as_deref() == Some(text))
}

fn range_bucket(v: u64, edges: &[(u64, u64)]) -> Option<String> {
    edges.iter().find(|(lo, hi)| (*lo..=*hi).contains(&v)).map(|(lo, hi)| {
        if lo == hi {
            lo.to_string()
        } else {
            format!("{lo}-{hi}")
        }
    })
}

/// Answer-type bucket used for balancing: categorical answers are their
/// own bucket, numeric answers fall into fixed ranges.
pub fn bucket_answer(qtype: QuestionType, answer: &str) -> Result<String, QaError> {
    let err = || QaError::OutOfRange {
        qtype,
        answer: answer.to_string(),
    };
    let int = || answer.trim().parse::<u64>().map_err(|_| err());
    match qtype {
        QuestionType::Presence
        | QuestionType::AbsLocation
        | QuestionType::CountComparison
        | QuestionType::RelLocation
        | QuestionType::Nearest => Ok(answer.to_string()),
        QuestionType::Count => range_bucket(int()?, &[(0, 0), (1, 10), (11, 100), (101, 1000)]).ok_or_else(err),
        QuestionType::Area => {
            range_bucket(int()?, &[(1, 100), (101, 1000), (1001, 10_000), (10_001, 40_000)]).ok_or_else(err)
        }
        QuestionType::Distance => range_bucket(int()?, &[(0, 0), (1, 10), (11, 100), (101, 283)]).ok_or_else(err),
        QuestionType::Density => {
            let v: f64 = answer.trim().parse().map_err(|_| err())?;
            if !(0.0..=1.0).contains(&v) {
                return Err(err());
            }
            let decile = (((v * 100.0).round() as u32) / 10).min(9);
            Ok(format!("{:.1}-{:.1}", decile as f64 / 10.0, (decile + 1) as f64 / 10.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    /// Per-type cap on accepted questions per answer bucket.
    pub caps: BTreeMap<QuestionType, usize>,
    pub questions_per_type: usize,
    pub passes: u32,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        let caps = [
            (QuestionType::Presence, 60),
            (QuestionType::Count, 40),
            (QuestionType::Density, 6),
            (QuestionType::AbsLocation, 20),
            (QuestionType::Area, 20),
            (QuestionType::CountComparison, 60),
            (QuestionType::RelLocation, 24),
            (QuestionType::Distance, 30),
            (QuestionType::Nearest, 24),
        ]
        .into_iter()
        .collect();
        BalanceConfig {
            caps,
            questions_per_type: 10,
            passes: 2,
            seed: 0,
        }
    }
}

impl BalanceConfig {
    pub fn cap(&self, qtype: QuestionType) -> usize {
        self.caps.get(&qtype).copied().unwrap_or(usize::MAX)
    }

    pub fn validate(&self) -> Result<(), QaError> {
        match self.caps.iter().find(|(_, &c)| c == 0) {
            Some((q, _)) => Err(QaError::ZeroCap(*q)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub qid: String,
    pub patch_id: String,
    pub qtype: QuestionType,
    pub question: String,
    pub answer: String,
    pub answer_bucket: String,
    pub split: Option<Split>,
}

/// One proposed question as it arrives at the balancing filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub pass: u32,
    pub patch_id: String,
    pub qtype: QuestionType,
    pub question: String,
    pub answer: Answer,
}

/// Random source for one (pass, patch, type) proposal batch.
pub fn proposal_rng(seed: u64, pass: u32, patch_id: &str, qtype: QuestionType) -> rand_chacha::ChaCha8Rng {
    derive_rng(
        seed,
        &[
            b"propose",
            &pass.to_le_bytes(),
            patch_id.as_bytes(),
            qtype.name().as_bytes(),
        ],
    )
}

/// The full candidate stream: every pass browses the patches in order and
/// proposes `questions_per_type` fresh random questions per type.
pub fn candidate_stream(patches: &[PatchObjects], taxonomy: &ClassTaxonomy, config: &BalanceConfig) -> Vec<Candidate> {
    let mut out = Vec::new();
    for pass in 0..config.passes {
        let per_patch: Vec<Vec<Candidate>> = patches
            .par_iter()
            .map(|patch| {
                let id = &patch.spec.patch_id;
                QuestionType::ALL
                    .iter()
                    .flat_map(|&qtype| {
                        let mut rng = proposal_rng(config.seed, pass, id, qtype);
                        propose_questions(patch, taxonomy, qtype, config.questions_per_type, &mut rng)
                            .into_iter()
                            .map(move |p| Candidate {
                                pass,
                                patch_id: id.clone(),
                                qtype,
                                question: p.question,
                                answer: p.answer,
                            })
                    })
                    .collect()
            })
            .collect();
        out.extend(per_patch.into_iter().flatten());
    }
    out
}

/// Streaming answer-type balancing. A candidate is kept iff its
/// (type, bucket) counter is below the type's cap and the same question
/// was not already kept for its patch. Kept records get sequential ids.
pub fn balance(candidates: &[Candidate], config: &BalanceConfig) -> Vec<QaRecord> {
    let mut counters: HashMap<(QuestionType, String), usize> = HashMap::new();
    let mut kept: HashSet<(&str, &str)> = HashSet::new();
    let mut out = Vec::new();
    for c in candidates {
        let bucket = match bucket_answer(c.qtype, &c.answer.value) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("dropping candidate for {}: {e}", c.patch_id);
                continue;
            }
        };
        if kept.contains(&(c.patch_id.as_str(), c.question.as_str())) {
            continue;
        }
        let counter = counters.entry((c.qtype, bucket.clone())).or_default();
        if *counter >= config.cap(c.qtype) {
            continue;
        }
        *counter += 1;
        kept.insert((c.patch_id.as_str(), c.question.as_str()));
        out.push(QaRecord {
            qid: format!("q{:07}", out.len()),
            patch_id: c.patch_id.clone(),
            qtype: c.qtype,
            question: c.question.clone(),
            answer: c.answer.value.clone(),
            answer_bucket: bucket,
            split: None,
        });
    }
    out
}

/// Candidate stream followed by balancing.
pub fn generate(patches: &[PatchObjects], taxonomy: &ClassTaxonomy, config: &BalanceConfig) -> Vec<QaRecord> {
    balance(&candidate_stream(patches, taxonomy, config), config)
}

/// Split sizes for `n` patches: train = ⌊r₀·n⌋, val = round(r₁·n), test = rest.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3], QaError> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(QaError::BadRatios(ratios));
    }
    let train = ((ratios[0] * n as f64) + 1e-9).floor() as usize;
    let val = ((ratios[1] * n as f64).round() as usize).min(n - train);
    Ok([train, val, n - train - val])
}

/// Seeded permutation of the (sorted) patch ids, sliced train/val/test.
pub fn split_patches(patch_ids: &[String], ratios: [f64; 3], seed: u64) -> Result<BTreeMap<String, Split>, QaError> {
    if patch_ids.is_empty() {
        return Err(QaError::NoPatches);
    }
    let [train, val, _] = split_sizes(patch_ids.len(), ratios)?;
    let mut ids: Vec<&String> = patch_ids.iter().collect();
    ids.sort();
    ids.dedup();
    ids.shuffle(&mut derive_rng(seed, &[b"split"]));
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            (id.clone(), split)
        })
        .collect())
}

/// Stamps every record with its patch's split.
pub fn assign_splits(records: &mut [QaRecord], splits: &BTreeMap<String, Split>) {
    for r in records {
        r.split = splits.get(&r.patch_id).copied();
    }
}

pub const MAX_VOCABULARY: usize = 1000;

#[derive(Debug, Clone)]
pub struct AnswerVocabulary {
    entries: Vec<(String, u64)>,
    index: HashMap<String, usize>,
}

impl PartialEq for AnswerVocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl AnswerVocabulary {
    pub fn from_entries(entries: Vec<(String, u64)>) -> Self {
        let index = entries.iter().enumerate().map(|(i, (a, _))| (a.clone(), i)).collect();
        AnswerVocabulary { entries, index }
    }

    /// Most frequent answers, descending frequency, ties lexicographic.
    pub fn from_answers<'a>(answers: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for a in answers {
            *freq.entry(a).or_default() += 1;
        }
        let mut entries: Vec<(String, u64)> = freq.into_iter().map(|(a, n)| (a.to_string(), n)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries.truncate(max_size);
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn answer(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    /// `None` is the out-of-vocabulary marker.
    pub fn index_of(&self, answer: &str) -> Option<usize> {
        self.index.get(answer).copied()
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }
}

/// Vocabulary over the training split only.
pub fn build_vocabulary(records: &[QaRecord], max_size: usize) -> AnswerVocabulary {
    AnswerVocabulary::from_answers(
        records
            .iter()
            .filter(|r| r.split == Some(Split::Train))
            .map(|r| r.answer.as_str()),
        max_size,
    )
}

/// A record whose stored answer disagrees with recomputation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub qid: String,
    pub reason: String,
}

/// Recomputes every record's answer and bucket from its patch geometry.
pub fn verify_records(records: &[QaRecord], patches: &[PatchObjects], taxonomy: &ClassTaxonomy) -> Vec<Mismatch> {
    let by_id: HashMap<&str, &PatchObjects> = patches.iter().map(|p| (p.spec.patch_id.as_str(), p)).collect();
    records
        .par_iter()
        .filter_map(|r| {
            let fail = |reason: String| {
                Some(Mismatch {
                    qid: r.qid.clone(),
                    reason,
                })
            };
            let Some(patch) = by_id.get(r.patch_id.as_str()) else {
                return fail(format!("unknown patch {}", r.patch_id));
            };
            let Some(spec) = parse_question(&r.question, r.qtype, patch, taxonomy) else {
                return fail(format!("question does not parse: {}", r.question));
            };
            match spec.answer(patch) {
                Ok(a) if a.value == r.answer => {}
                Ok(a) => return fail(format!("stored `{}`, oracle `{}`", r.answer, a.value)),
                Err(e) => return fail(e.to_string()),
            }
            match bucket_answer(r.qtype, &r.answer) {
                Ok(b) if b == r.answer_bucket => None,
                _ => fail(format!("bucket `{}` is stale", r.answer_bucket)),
            }
        })
        .collect()
}

/// One JSON object per line, sorted by qid.
pub fn write_jsonl(records: &[QaRecord]) -> String {
    let mut sorted: Vec<&QaRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.qid.cmp(&b.qid));
    let mut s = String::new();
    for r in sorted {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

pub fn read_jsonl(text: &str) -> Result<Vec<QaRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
