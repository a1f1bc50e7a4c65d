//! VQA accuracy metrics and segmentation precision/recall/F1 with
//! per-class threshold selection.

use std::collections::BTreeMap;
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::QuestionType;
use crate::raster::{ChannelGrid, MultiChannelMask};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("score map is {scores:?} but truth mask is {truth:?} (channels, height, width)")]
    DimMismatch {
        scores: (usize, usize, usize),
        truth: (usize, usize, usize),
    },
    #[error("expected {expected} thresholds, got {got}")]
    ThresholdCount { expected: usize, got: usize },
    #[error("no images to evaluate")]
    Empty,
}

/// Trim and case-fold.
pub fn normalize_answer(a: &str) -> String {
    a.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub total: usize,
    pub correct: usize,
    /// `None` when the type has no questions.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaReport {
    pub per_type: BTreeMap<QuestionType, TypeAccuracy>,
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub total: usize,
    /// Types without questions, excluded from the average accuracy.
    pub missing_types: Vec<QuestionType>,
}

/// One evaluated question.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<'a> {
    pub qtype: QuestionType,
    pub truth: &'a str,
    pub predicted: &'a str,
}

pub fn vqa_metrics<'a>(items: impl IntoIterator<Item = Scored<'a>>) -> VqaReport {
    let mut counts: BTreeMap<QuestionType, (usize, usize)> = QuestionType::ALL.iter().map(|&q| (q, (0, 0))).collect();
    for it in items {
        let c = counts.get_mut(&it.qtype).expect("all types present");
        c.0 += 1;
        if normalize_answer(it.truth) == normalize_answer(it.predicted) {
            c.1 += 1;
        }
    }
    let total: usize = counts.values().map(|c| c.0).sum();
    let correct: usize = counts.values().map(|c| c.1).sum();
    let per_type: BTreeMap<QuestionType, TypeAccuracy> = counts
        .iter()
        .map(|(&q, &(t, c))| {
            let accuracy = (t > 0).then(|| c as f64 / t as f64);
            (
                q,
                TypeAccuracy {
                    total: t,
                    correct: c,
                    accuracy,
                },
            )
        })
        .collect();
    let present: Vec<f64> = per_type.values().filter_map(|t| t.accuracy).collect();
    VqaReport {
        overall_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        average_accuracy: if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        },
        total,
        missing_types: per_type.iter().filter(|(_, t)| t.total == 0).map(|(q, _)| *q).collect(),
        per_type,
    }
}

impl VqaReport {
    /// One header row of type labels plus OA and AA, one row of percentages.
    pub fn table(&self, row_name: &str) -> String {
        let mut head = format!("{:<12}", "");
        let mut row = format!("{row_name:<12}");
        for (q, t) in &self.per_type {
            write!(head, "{:>7}", q.label()).unwrap();
            match t.accuracy {
                Some(a) => write!(row, "{:>7.2}", 100.0 * a).unwrap(),
                None => write!(row, "{:>7}", "-").unwrap(),
            }
        }
        write!(head, "{:>7}{:>7}", "OA", "AA").unwrap();
        write!(
            row,
            "{:>7.2}{:>7.2}",
            100.0 * self.overall_accuracy,
            100.0 * self.average_accuracy
        )
        .unwrap();
        format!("{head}\n{row}\n")
    }
}

/// Per-class real-valued score rasters in [0,1], channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ScoreMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * height * width);
        ScoreMap {
            channels,
            height,
            width,
            data,
        }
    }

    /// Binary mask bits as scores.
    pub fn from_mask(mask: &MultiChannelMask) -> Self {
        let (c, h, w) = dims_of(mask);
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c as u32 {
            for r in 0..h as u32 {
                for col in 0..w as u32 {
                    data.push(if mask.get(ch, r, col) { 1.0 } else { 0.0 });
                }
            }
        }
        ScoreMap::new(c, h, w, data)
    }

    /// Nearest-neighbour upsampling of a coarse coverage grid.
    pub fn upsample(grid: &ChannelGrid, height: usize, width: usize) -> Self {
        let mut data = Vec::with_capacity(grid.channels * height * width);
        for c in 0..grid.channels {
            for r in 0..height {
                let gr = r * grid.height / height;
                for col in 0..width {
                    data.push(grid.get(c, gr, col * grid.width / width) as f32);
                }
            }
        }
        ScoreMap::new(grid.channels, height, width, data)
    }

    fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

fn dims_of(mask: &MultiChannelMask) -> (usize, usize, usize) {
    (mask.channels() as usize, mask.height() as usize, mask.width() as usize)
}

/// `n` interior thresholds `k/(n+1)`, k = 1..n.
pub fn threshold_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn prf(&self) -> Prf {
        let ratio = |a: u64, b: u64| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let precision = ratio(self.tp, self.fp);
        let recall = ratio(self.tp, self.fn_);
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSeg {
    pub channel: usize,
    pub threshold: f64,
    pub counts: Confusion,
    pub metrics: Prf,
    /// No positive truth pixels: recall is undefined and reported as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReport {
    pub per_class: Vec<ClassSeg>,
    /// Pooled counts over all pixels and classes.
    pub micro: Prf,
    /// Mean over non-degenerate classes.
    #[serde(rename = "macro")]
    pub macro_: Prf,
    pub totals: Confusion,
}

fn check_pairs(pairs: &[(&ScoreMap, &MultiChannelMask)]) -> Result<usize, EvalError> {
    let (first, _) = pairs.first().ok_or(EvalError::Empty)?;
    for (s, m) in pairs {
        let truth = dims_of(m);
        if (s.channels, s.height, s.width) != truth || s.channels != first.channels {
            return Err(EvalError::DimMismatch {
                scores: (s.channels, s.height, s.width),
                truth,
            });
        }
    }
    Ok(first.channels)
}

fn channel_curve(pairs: &[(&ScoreMap, &MultiChannelMask)], c: usize, thresholds: &[f64]) -> Vec<Confusion> {
    let n = thresholds.len();
    // hist[m] counts pixels whose score clears exactly the first m thresholds.
    let mut pos = vec![0u64; n + 1];
    let mut neg = vec![0u64; n + 1];
    for (s, mask) in pairs {
        let w = s.width;
        for (i, &v) in s.plane(c).iter().enumerate() {
            let m = thresholds.partition_point(|&t| v as f64 >= t);
            if mask.get(c as u32, (i / w) as u32, (i % w) as u32) {
                pos[m] += 1;
            } else {
                neg[m] += 1;
            }
        }
    }
    let total_pos: u64 = pos.iter().sum();
    (0..n)
        .map(|k| {
            let tp: u64 = pos[k + 1..].iter().sum();
            let fp: u64 = neg[k + 1..].iter().sum();
            Confusion {
                tp,
                fp,
                fn_: total_pos - tp,
            }
        })
        .collect()
}

/// Confusion counts per class at each (ascending) threshold. A pixel is
/// predicted positive iff its score is at least the threshold.
pub fn confusion_curves(
    pairs: &[(&ScoreMap, &MultiChannelMask)],
    thresholds: &[f64],
) -> Result<Vec<Vec<Confusion>>, EvalError> {
    let channels = check_pairs(pairs)?;
    Ok((0..channels)
        .into_par_iter()
        .map(|c| channel_curve(pairs, c, thresholds))
        .collect())
}

fn report(per_class: Vec<ClassSeg>) -> SegReport {
    let mut totals = Confusion::default();
    for c in &per_class {
        totals.add(&c.counts);
    }
    let live: Vec<&ClassSeg> = per_class.iter().filter(|c| !c.degenerate).collect();
    let mean = |f: fn(&Prf) -> f64| {
        if live.is_empty() {
            0.0
        } else {
            live.iter().map(|c| f(&c.metrics)).sum::<f64>() / live.len() as f64
        }
    };
    SegReport {
        micro: totals.prf(),
        macro_: Prf {
            precision: mean(|p| p.precision),
            recall: mean(|p| p.recall),
            f1: mean(|p| p.f1),
        },
        totals,
        per_class,
    }
}

/// Elementwise sum of curves from several batches of images.
pub fn add_curves(acc: &mut Vec<Vec<Confusion>>, other: &[Vec<Confusion>]) {
    if acc.is_empty() {
        *acc = other.to_vec();
        return;
    }
    for (a, o) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(o) {
            x.add(y);
        }
    }
}

fn class_seg(channel: usize, threshold: f64, counts: Confusion) -> ClassSeg {
    ClassSeg {
        channel,
        threshold,
        counts,
        metrics: counts.prf(),
        degenerate: counts.tp + counts.fn_ == 0,
    }
}

/// Picks, per class, the grid threshold with the best F1 and reports metrics
/// there. Ties go to fewer false positives, then to the lower threshold, so
/// a class without positives gets as few false positives as the grid allows.
pub fn select_thresholds(curves: &[Vec<Confusion>], grid: &[f64]) -> SegReport {
    let per_class = curves
        .iter()
        .enumerate()
        .map(|(c, curve)| {
            let mut best = 0;
            for (k, conf) in curve.iter().enumerate() {
                let (f, b) = (conf.prf().f1, curve[best].prf().f1);
                if f > b || (f == b && conf.fp < curve[best].fp) {
                    best = k;
                }
            }
            class_seg(c, grid[best], curve[best])
        })
        .collect();
    report(per_class)
}

pub fn threshold_sweep(pairs: &[(&ScoreMap, &MultiChannelMask)], n_thresholds: usize) -> Result<SegReport, EvalError> {
    let grid = threshold_grid(n_thresholds);
    Ok(select_thresholds(&confusion_curves(pairs, &grid)?, &grid))
}

/// Per-class counts at fixed per-class thresholds.
pub fn counts_at(pairs: &[(&ScoreMap, &MultiChannelMask)], thresholds: &[f64]) -> Result<Vec<Confusion>, EvalError> {
    let channels = check_pairs(pairs)?;
    if thresholds.len() != channels {
        return Err(EvalError::ThresholdCount {
            expected: channels,
            got: thresholds.len(),
        });
    }
    Ok((0..channels)
        .into_par_iter()
        .map(|c| channel_curve(pairs, c, &thresholds[c..=c])[0])
        .collect())
}

pub fn report_at(counts: &[Confusion], thresholds: &[f64]) -> SegReport {
    report(
        counts
            .iter()
            .zip(thresholds)
            .enumerate()
            .map(|(c, (&n, &t))| class_seg(c, t, n))
            .collect(),
    )
}

/// Metrics at fixed per-class thresholds, e.g. ones chosen on validation.
pub fn evaluate_thresholds(
    pairs: &[(&ScoreMap, &MultiChannelMask)],
    thresholds: &[f64],
) -> Result<SegReport, EvalError> {
    Ok(report_at(&counts_at(pairs, thresholds)?, thresholds))
}

impl SegReport {
    pub fn thresholds(&self) -> Vec<f64> {
        self.per_class.iter().map(|c| c.threshold).collect()
    }

    pub fn table(&self, class_names: &[String]) -> String {
        let mut s = format!("{:<28}{:>8}{:>8}{:>8}{:>8}\n", "class", "thr", "P", "R", "F1");
        for c in &self.per_class {
            let name = class_names.get(c.channel).map(String::as_str).unwrap_or("?");
            let flag = if c.degenerate { " *" } else { "" };
            writeln!(
                s,
                "{:<28}{:>8.3}{:>8.2}{:>8.2}{:>8.2}{flag}",
                name,
                c.threshold,
                100.0 * c.metrics.precision,
                100.0 * c.metrics.recall,
                100.0 * c.metrics.f1
            )
            .unwrap();
        }
        for (name, m) in [("micro", &self.micro), ("macro", &self.macro_)] {
            writeln!(
                s,
                "{name:<28}{:>8}{:>8.2}{:>8.2}{:>8.2}",
                "",
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1
            )
            .unwrap();
        }
        s
    }
}
