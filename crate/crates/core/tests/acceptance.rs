//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use segvqa::eval::{self, Confusion, ScoreMap, Scored};
use segvqa::geom::{Geometry, Point};
use segvqa::ingest::{self, GeoObject, PatchObjects, PatchTemplate};
use segvqa::nnet::features::{seg_features, stub_text_features, MaskVisualProvider};
use segvqa::nnet::train::{accuracy, fit, initial_params};
use segvqa::nnet::{
    attention_forward, loss_and_grads, AttentionMode, FeatureBundle, Mode, ModelDims, ModelParams, Sample, Tensor,
    TrainConfig,
};
use segvqa::oracle::{self, Anchor, QuestionType};
use segvqa::qagen::{self, AnswerVocabulary, BalanceConfig, Candidate, QaRecord, Split};
use segvqa::raster::{self, MultiChannelMask};
use segvqa::taxonomy::{load_taxonomy, ClassId, ClassTaxonomy};

use common::{brute_distance, mc_area, shoelace, star, toy_patch};

/// Checks run and mismatches found by one worker in criterion 1.
type Tally = (usize, usize, usize, usize, Vec<String>);
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn region() -> (ClassTaxonomy, Vec<PatchObjects>) {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let tax = load_taxonomy(Some(&std::fs::read_to_string(format!("{dir}/taxonomy.toml")).unwrap())).unwrap();
    let doc = std::fs::read_to_string(format!("{dir}/mini_region.geojson")).unwrap();
    let objects = ingest::parse_vectors(&doc, &tax, Default::default()).unwrap();
    let specs = ingest::tile_extent(ingest::objects_extent(&objects).unwrap(), PatchTemplate::default()).unwrap();
    (tax, ingest::assign_objects(&objects, &specs))
}

// 1 ---------------------------------------------------------------------

fn brute_nearest_ok(patch: &PatchObjects, class: ClassId, anchor: &Geometry, chosen: &GeoObject) -> bool {
    let best = patch
        .of_class(class)
        .map(|o| brute_distance(&o.geometry, anchor))
        .fold(f64::INFINITY, f64::min);
    (brute_distance(&chosen.geometry, anchor) - best).abs() <= 1e-6
}

fn geometry_oracles() -> Outcome {
    let patches: Vec<PatchObjects> = (0..120)
        .map(|i| toy_patch(&mut ChaCha8Rng::seed_from_u64(1000 + i), &format!("t{i}")))
        .collect();
    let results: Vec<Tally> = patches
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let mut errors = Vec::new();
            let (mut counts, mut nearest, mut dists, mut areas) = (0, 0, 0, 0);
            for c in 0..16u8 {
                let brute = p.objects.iter().filter(|o| o.class_id == ClassId(c)).count();
                counts += 1;
                if oracle::count(p, ClassId(c)).value != brute.to_string() {
                    errors.push(format!("{}: count class {c}", p.spec.patch_id));
                }
            }
            for _ in 0..3 {
                let (row, col) = (rng.random_range(0..1000u32), rng.random_range(0..1000u32));
                let anchor = Geometry::Point(Point::new((col as f64 + 0.5) * 0.2, (row as f64 + 0.5) * 0.2));
                for c in [0u8, 3, 6, 9, 12] {
                    let got = oracle::nearest_object(p, ClassId(c), &Anchor::Pixel { row, col });
                    nearest += 1;
                    match got {
                        Ok(o) if brute_nearest_ok(p, ClassId(c), &anchor, o) => {}
                        Err(oracle::OracleError::NoCandidate) if p.of_class(ClassId(c)).next().is_none() => {}
                        other => errors.push(format!("{}: nearest class {c}: {other:?}", p.spec.patch_id)),
                    }
                }
            }
            for a in &p.objects {
                for b in &p.objects {
                    if a.id < b.id {
                        dists += 1;
                        let got: f64 = oracle::distance(a, b).value.parse().unwrap();
                        let want = brute_distance(&a.geometry, &b.geometry);
                        if (got - want).abs() > 1.0 {
                            errors.push(format!(
                                "{}: distance {}-{}: {got} vs {want:.3}",
                                p.spec.patch_id, a.id, b.id
                            ));
                        }
                    }
                }
            }
            if let Some((o, poly)) = p.objects.iter().find_map(|o| match &o.geometry {
                Geometry::Polygon(poly) if shoelace(&poly.exterior) >= 100.0 => Some((o, poly)),
                _ => None,
            }) {
                areas += 1;
                let got: f64 = oracle::area(o).unwrap().value.parse().unwrap();
                let want = mc_area(poly, 1_000_000, &mut rng);
                if (got - want).abs() > 0.01 * want {
                    errors.push(format!("{}: area {got} vs MC {want:.1}", p.spec.patch_id));
                }
            }
            (counts, nearest, dists, areas, errors)
        })
        .collect();
    let sum = |f: fn(&Tally) -> usize| results.iter().map(f).sum::<usize>();
    let errors: Vec<&String> = results.iter().flat_map(|r| &r.4).collect();
    outcome(
        errors.is_empty(),
        format!(
            "{} patches; {} count, {} nearest, {} distance, {} area checks; {} mismatches{}",
            patches.len(),
            sum(|r| r.0),
            sum(|r| r.1),
            sum(|r| r.2),
            sum(|r| r.3),
            errors.len(),
            errors.first().map(|e| format!(" (first: {e})")).unwrap_or_default()
        ),
    )
}

// 2 ---------------------------------------------------------------------

/// Reference bucket rules.
fn ref_bucket(q: QuestionType, a: &str) -> String {
    let ranges = |v: u64, r: &[(u64, u64)]| {
        let (lo, hi) = r.iter().find(|(lo, hi)| *lo <= v && v <= *hi).unwrap();
        if lo == hi {
            lo.to_string()
        } else {
            format!("{lo}-{hi}")
        }
    };
    match q {
        QuestionType::Count => ranges(a.parse().unwrap(), &[(0, 0), (1, 10), (11, 100), (101, 1000)]),
        QuestionType::Area => ranges(
            a.parse().unwrap(),
            &[(1, 100), (101, 1000), (1001, 10000), (10001, 40000)],
        ),
        QuestionType::Distance => ranges(a.parse().unwrap(), &[(0, 0), (1, 10), (11, 100), (101, 283)]),
        QuestionType::Density => {
            let hundredths: u32 = a.replace('.', "").parse().unwrap();
            let d = (hundredths / 10).min(9);
            format!(
                "0.{d}-{}",
                if d == 9 {
                    "1.0".to_string()
                } else {
                    format!("0.{}", d + 1)
                }
            )
        }
        _ => a.to_string(),
    }
}

fn replay(stream: &[Candidate], cfg: &BalanceConfig) -> Vec<(String, QuestionType, String, String)> {
    let mut counters: HashMap<(QuestionType, String), usize> = HashMap::new();
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for c in stream {
        let b = ref_bucket(c.qtype, &c.answer.value);
        let n = counters.entry((c.qtype, b.clone())).or_insert(0);
        if *n < cfg.cap(c.qtype) && seen.insert((c.patch_id.clone(), c.question.clone())) {
            *n += 1;
            kept.push((c.patch_id.clone(), c.qtype, c.question.clone(), b));
        }
    }
    kept
}

fn balancing() -> Outcome {
    let (tax, patches) = region();
    let cfg = BalanceConfig {
        seed: 11,
        ..BalanceConfig::default()
    };
    let stream = qagen::candidate_stream(&patches, &tax, &cfg);
    let kept = qagen::balance(&stream, &cfg);
    let again = qagen::generate(&patches, &tax, &cfg);
    let mut per_bucket: BTreeMap<(QuestionType, String), usize> = BTreeMap::new();
    for r in &kept {
        *per_bucket.entry((r.qtype, r.answer_bucket.clone())).or_default() += 1;
    }
    let over: Vec<_> = per_bucket.iter().filter(|((q, _), &n)| n > cfg.cap(*q)).collect();
    let budget = patches.len() * 9 * 10 * 2;
    let mine: Vec<_> = kept
        .iter()
        .map(|r| (r.patch_id.clone(), r.qtype, r.question.clone(), r.answer_bucket.clone()))
        .collect();
    let replayed = replay(&stream, &cfg);
    let pass = over.is_empty() && kept.len() <= budget && mine == replayed && again == kept;
    outcome(
        pass,
        format!(
            "{} candidates -> {} kept (budget {budget}); {} buckets, {} over cap; replay {}",
            stream.len(),
            kept.len(),
            per_bucket.len(),
            over.len(),
            if mine == replayed { "identical" } else { "differs" }
        ),
    )
}

// 3 ---------------------------------------------------------------------

fn splits() -> Outcome {
    let (tax, patches) = region();
    let mut records = qagen::generate(&patches, &tax, &BalanceConfig::default());
    let ids: Vec<String> = patches.iter().map(|p| p.spec.patch_id.clone()).collect();
    let mut problems = Vec::new();
    for seed in 0..5 {
        let map = qagen::split_patches(&ids, [0.6, 0.2, 0.2], seed).unwrap();
        let n = ids.len() as f64;
        let want = [(0.6 * n + 1e-9).floor() as usize, (0.2 * n).round() as usize];
        let got = |s| map.values().filter(|&&v| v == s).count();
        if [got(Split::Train), got(Split::Val)] != want || got(Split::Test) != ids.len() - want[0] - want[1] {
            problems.push(format!("seed {seed}: sizes"));
        }
        if map.len() != ids.len() {
            problems.push(format!("seed {seed}: coverage"));
        }
        qagen::assign_splits(&mut records, &map);
        let mut per_patch: HashMap<&str, HashSet<Option<Split>>> = HashMap::new();
        for r in &records {
            per_patch.entry(&r.patch_id).or_default().insert(r.split);
            if r.split != map.get(&r.patch_id).copied() {
                problems.push(format!("seed {seed}: {} does not inherit its patch split", r.qid));
            }
        }
        if per_patch.values().any(|s| s.len() != 1) {
            problems.push(format!("seed {seed}: patch in two splits"));
        }
    }
    let big = qagen::split_sizes(16274, [0.6, 0.2, 0.2]).unwrap();
    let big_want = [9764, 3255, 3255];
    if big != big_want {
        problems.push(format!("16274 -> {big:?}"));
    }
    outcome(
        problems.is_empty(),
        format!(
            "{} patches -> 12/4/4 over 5 seeds, {} records inherit splits; 16274 -> {:?}{}",
            ids.len(),
            records.len(),
            big,
            problems.first().map(|p| format!("; {p}")).unwrap_or_default()
        ),
    )
}

// 4 ---------------------------------------------------------------------

fn raster_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut polys = Vec::new();
    while polys.len() < 50 {
        let r = rng.random_range(15.0..80.0);
        let (cx, cy) = (rng.random_range(r..200.0 - r), rng.random_range(r..200.0 - r));
        let k = rng.random_range(4..14);
        let p = star(&mut rng, cx, cy, 0.5 * r, r, k);
        if shoelace(&p.exterior) >= 400.0 {
            polys.push(p);
        }
    }
    let worst = polys
        .par_iter()
        .map(|p| {
            let patch = PatchObjects {
                spec: common::spec("r", 200.0, 1000),
                objects: vec![GeoObject {
                    id: "a".into(),
                    class_id: ClassId(0),
                    geometry: Geometry::Polygon(p.clone()),
                    name: None,
                }],
            };
            let mask = raster::rasterize(&patch, 1, 4.0);
            let pixel_area = mask.count_ones(0) as f64 * 0.04;
            let area = shoelace(&p.exterior);
            (pixel_area - area).abs() / area
        })
        .reduce(|| 0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut m = MultiChannelMask::new(37, 23, 5);
    for _ in 0..800 {
        m.set(
            rng.random_range(0..5),
            rng.random_range(0..23),
            rng.random_range(0..37),
            true,
        );
    }
    let bytes = raster::write_mask(&m);
    let round_trip = raster::read_mask(&bytes).map(|back| back == m && raster::write_mask(&back) == bytes);

    let mut g = MultiChannelMask::new(8, 1, 1);
    g.set(0, 0, 0, true);
    g.set(0, 0, 7, true);
    let golden = raster::write_mask(&g);
    let golden_ok = golden.len() == 17 && golden[..4] == *b"MCM1" && golden[16] == 0x81;
    outcome(
        worst <= 0.02 && round_trip == Ok(true) && golden_ok,
        format!(
            "50 polygons, worst pixel-area error {:.3}%; round-trip {}; golden byte {:#04x}",
            100.0 * worst,
            if round_trip == Ok(true) { "bit-exact" } else { "FAILED" },
            golden.get(16).copied().unwrap_or(0)
        ),
    )
}

// 5 ---------------------------------------------------------------------

fn grad_dims() -> ModelDims {
    ModelDims {
        c_v: 8,
        d_q: 8,
        c_s: 16,
        h: 2,
        w: 2,
        att_dim: 16,
        mlp_hidden: 16,
        k: 4,
        dropout: 0.0,
        attention: AttentionMode::Guided,
    }
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn reference_loss(p: &ModelParams<f64>, d: &ModelDims, batch: &[(FeatureBundle<f64>, usize)]) -> f64 {
    reference_forward(p, d, batch).0
}

/// Loss from plain loops, written independently of the tape, plus the
/// smallest |pre-activation| over every ReLU.
#[allow(clippy::needless_range_loop)]
fn reference_forward(p: &ModelParams<f64>, d: &ModelDims, batch: &[(FeatureBundle<f64>, usize)]) -> (f64, f64) {
    let n = d.h * d.w;
    let a = d.att_dim;
    let mut total = 0.0;
    let mut margin = f64::INFINITY;
    for (b, target) in batch {
        let t: Vec<f64> = (0..a)
            .map(|i| p.text_b.data()[i] + (0..d.d_q).map(|j| p.text_w.at(i, j) * b.f_q.data()[j]).sum::<f64>())
            .collect();
        let mut logits = vec![0.0; n];
        for (pos, l) in logits.iter_mut().enumerate() {
            let mut acc = p.att_b.data()[0];
            for i in 0..a {
                let s = p.seg_b.data()[i] + (0..d.c_s).map(|c| p.seg_w.at(i, c) * b.f_seg.at(c, pos)).sum::<f64>();
                margin = margin.min(t[i].abs()).min(s.abs());
                acc += p.att_w.data()[i] * t[i].max(0.0) + p.att_w.data()[a + i] * s.max(0.0);
            }
            *l = acc;
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        let glimpse: Vec<f64> = logits.iter().map(|l| (l - m).exp() / z).collect();
        let mut input: Vec<f64> = (0..d.c_v)
            .map(|c| (0..n).map(|pos| glimpse[pos] * b.f_vhr.at(c, pos)).sum())
            .collect();
        input.extend_from_slice(b.f_q.data());
        let h: Vec<f64> = (0..d.mlp_hidden)
            .map(|i| {
                let pre = p.mlp1_b.data()[i] + (0..input.len()).map(|j| p.mlp1_w.at(i, j) * input[j]).sum::<f64>();
                margin = margin.min(pre.abs());
                pre.max(0.0)
            })
            .collect();
        let out: Vec<f64> = (0..d.k)
            .map(|k| p.mlp2_b.data()[k] + (0..d.mlp_hidden).map(|j| p.mlp2_w.at(k, j) * h[j]).sum::<f64>())
            .collect();
        let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + out.iter().map(|o| (o - m).exp()).sum::<f64>().ln();
        total += lse - out[*target];
    }
    (total / batch.len() as f64, margin)
}

fn gradients() -> Outcome {
    let d = grad_dims();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut loss_gap: f64 = 0.0;
    let eps = 1e-3;
    let mut draws = 0;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        // Redraw until no ReLU sits within reach of a single perturbation.
        let (params, batch) = loop {
            draws += 1;
            let mut params = ModelParams::<f64>::init(&d, rng.random());
            for (i, t) in params.tensors_mut().into_iter().enumerate() {
                if i % 2 == 1 {
                    *t = normal(&mut rng, t.shape(), 0.1);
                }
            }
            let batch: Vec<(FeatureBundle<f64>, usize)> = (0..2)
                .map(|i| {
                    let b = FeatureBundle {
                        f_vhr: normal(&mut rng, &[d.c_v, 4], 1.0),
                        f_q: normal(&mut rng, &[d.d_q, 1], 1.0),
                        f_seg: Tensor::from_fn(&[d.c_s, 4], |_| rng.random_range(0.0..1.0)),
                    };
                    (b, (i + seed as usize) % d.k)
                })
                .collect();
            let reach = batch
                .iter()
                .flat_map(|(b, _)| b.f_vhr.data().iter().chain(b.f_q.data()))
                .fold(1.0f64, |m, v| m.max(v.abs()));
            if reference_forward(&params, &d, &batch).1 > 2.0 * eps * reach {
                break (params, batch);
            }
        };
        let refs: Vec<(&FeatureBundle<f64>, usize)> = batch.iter().map(|(b, t)| (b, *t)).collect();
        let (loss, grads) = loss_and_grads(&params, &d, &refs, Mode::Eval).unwrap();
        loss_gap = loss_gap.max((loss - reference_loss(&params, &d, &batch)).abs());
        for (ti, g) in grads.tensors().iter().enumerate() {
            for k in 0..g.len() {
                let mut plus = params.clone();
                plus.tensors_mut()[ti].data_mut()[k] += eps;
                let mut minus = params.clone();
                minus.tensors_mut()[ti].data_mut()[k] -= eps;
                let num = (reference_loss(&plus, &d, &batch) - reference_loss(&minus, &d, &batch)) / (2.0 * eps);
                let ana = g.data()[k];
                let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    outcome(
        worst < 1e-3 && loss_gap < 1e-12,
        format!(
            "3 seeds ({draws} draws), {checked} gradient entries, worst relative error {worst:.2e}; forward gap {loss_gap:.1e}"
        ),
    )
}

// 6 ---------------------------------------------------------------------

fn glimpses() -> Outcome {
    let d = ModelDims {
        k: 8,
        ..ModelDims::default()
    };
    let n = d.positions();
    let f32_normal = |rng: &mut ChaCha8Rng, shape: &[usize], s: f32| {
        Tensor::<f32>::from_fn(shape, |_| {
            let z: f32 = StandardNormal.sample(rng);
            s * z
        })
    };
    let results: Vec<(f64, f64, bool)> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let mut p = ModelParams::<f32>::init(&d, i);
            p.att_w = f32_normal(&mut rng, p.att_w.shape(), 1.0 + (i % 5) as f32);
            let b = FeatureBundle {
                f_vhr: f32_normal(&mut rng, &[d.c_v, n], 1.0),
                f_q: f32_normal(&mut rng, &[d.d_q, 1], 1.0),
                f_seg: Tensor::from_fn(&[d.c_s, n], |_| rng.random_range(0.0f32..1.0)),
            };
            let (_, g) = attention_forward(&p, &d, &b, Mode::Eval).unwrap();
            let sum_err = (g.data().iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs();

            let mut flat = p.clone();
            flat.att_w = Tensor::zeros(p.att_w.shape());
            let (att, _) = attention_forward(&flat, &d, &b, Mode::Eval).unwrap();
            let mean_err = (0..d.c_v)
                .map(|c| {
                    let mean = (0..n).map(|j| b.f_vhr.at(c, j) as f64).sum::<f64>() / n as f64;
                    (att.data()[c] as f64 - mean).abs()
                })
                .fold(0.0, f64::max);

            let other = FeatureBundle {
                f_seg: Tensor::from_fn(&[d.c_s, n], |_| rng.random_range(0.0f32..1.0)),
                ..b.clone()
            };
            let (_, g1) = attention_forward(&p, &d, &b.without_guide(), Mode::Eval).unwrap();
            let (_, g2) = attention_forward(&p, &d, &other.without_guide(), Mode::Eval).unwrap();
            (sum_err, mean_err, g1 == g2)
        })
        .collect();
    let sum_err = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let mean_err = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let independent = results.iter().all(|r| r.2);
    outcome(
        sum_err <= 1e-6 && mean_err <= 1e-5 && independent,
        format!(
            "1000 inputs: max |sum-1| {sum_err:.1e}; uniform-logit mean error {mean_err:.1e}; zero guide mask-independent: {independent}"
        ),
    )
}

// 7 ---------------------------------------------------------------------

struct Built {
    samples: Vec<Sample>,
    vocab: AnswerVocabulary,
}

fn region_samples(records: &[QaRecord], patches: &[PatchObjects], d: &ModelDims, seed: u64) -> Built {
    let vocab = AnswerVocabulary::from_answers(records.iter().map(|r| r.answer.as_str()), 1000);
    let visual = MaskVisualProvider::new(d.c_v, d.c_s, 0.5, seed);
    let mut guides = HashMap::new();
    for p in patches {
        if records.iter().any(|r| r.patch_id == p.spec.patch_id) {
            let mut small = p.clone();
            small.spec.px = 200;
            let mask = raster::rasterize(&small, d.c_s as u32, 4.0);
            guides.insert(p.spec.patch_id.clone(), seg_features(&mask, d.h, d.w).unwrap());
        }
    }
    let samples = records
        .iter()
        .map(|r| {
            let guide = guides[&r.patch_id].clone();
            Sample {
                bundle: FeatureBundle {
                    f_vhr: visual.features(&guide, &r.patch_id),
                    f_q: stub_text_features(&r.question, d.d_q, seed),
                    f_seg: guide,
                },
                target: vocab.index_of(&r.answer).unwrap(),
            }
        })
        .collect();
    Built { samples, vocab }
}

fn memorization() -> Outcome {
    let (tax, patches) = region();
    let records = qagen::generate(&patches, &tax, &BalanceConfig::default());
    let picked: Vec<QaRecord> = records.iter().step_by(records.len() / 32).take(32).cloned().collect();
    let d0 = ModelDims::default();
    let probe = region_samples(&picked, &patches, &d0, 3);
    let d = ModelDims {
        k: probe.vocab.len(),
        ..d0
    };
    let cfg = TrainConfig {
        epochs: usize::MAX,
        lr: 1e-2,
        batch_size: 4,
        seed: 9,
        max_steps: Some(500),
    };
    let run = || {
        let mut p = initial_params(&d, &probe.vocab, cfg.seed);
        let hist = fit(&mut p, &d, &probe.samples, &[], &cfg).unwrap();
        (p, hist)
    };
    let (p1, h1) = run();
    let (p2, _) = run();
    let acc = accuracy(&p1, &d, &probe.samples).unwrap();
    let steps = h1.last().map(|h| h.steps).unwrap_or(0);
    outcome(
        acc >= 0.95 && p1 == p2 && steps <= 500,
        format!(
            "{} samples, {} answers, {steps} steps: train accuracy {:.1}%; repeat run {}",
            probe.samples.len(),
            probe.vocab.len(),
            100.0 * acc,
            if p1 == p2 { "identical" } else { "differs" }
        ),
    )
}

// 8 ---------------------------------------------------------------------

const TREND_CLASSES: [u8; 4] = [0, 3, 4, 5];

/// Patches with a handful of small objects of a few classes; presence is
/// only visible in a few grid cells.
fn trend_patches(n: usize, seed: u64) -> Vec<PatchObjects> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut objects = Vec::new();
            for (k, &c) in TREND_CLASSES.iter().enumerate() {
                if rng.random_bool(0.5) {
                    let s = rng.random_range(6.0..14.0);
                    let (x, y) = (rng.random_range(5.0..190.0 - s), rng.random_range(5.0..190.0 - s));
                    objects.push(GeoObject {
                        id: format!("o{k}"),
                        class_id: ClassId(c),
                        geometry: Geometry::Polygon(common::convex(&mut rng, x + s / 2.0, y + s / 2.0, s / 2.0, 6)),
                        name: None,
                    });
                }
            }
            PatchObjects {
                spec: common::spec(&format!("s{i:04}"), 200.0, 200),
                objects,
            }
        })
        .collect()
}

fn trend_samples(patches: &[PatchObjects], tax: &ClassTaxonomy, d: &ModelDims, seed: u64, guided: bool) -> Vec<Sample> {
    let visual = MaskVisualProvider::new(d.c_v, d.c_s, 0.5, seed);
    patches
        .par_iter()
        .flat_map_iter(|p| {
            let mask = raster::rasterize(p, d.c_s as u32, 4.0);
            let guide = seg_features(&mask, d.h, d.w).unwrap();
            let f_vhr = visual.features(&guide, &p.spec.patch_id);
            let f_seg = if guided { guide } else { Tensor::zeros(guide.shape()) };
            TREND_CLASSES
                .iter()
                .map(|&c| {
                    let question = format!("Is there a {} in the image?", tax.get(ClassId(c)).unwrap().singular());
                    let yes = oracle::presence(p, ClassId(c)).value == "yes";
                    Sample {
                        bundle: FeatureBundle {
                            f_vhr: f_vhr.clone(),
                            f_q: stub_text_features(&question, d.d_q, seed),
                            f_seg: f_seg.clone(),
                        },
                        target: usize::from(!yes),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn guided_trend() -> Outcome {
    let tax = ClassTaxonomy::default();
    let d = ModelDims {
        c_v: 32,
        d_q: 32,
        att_dim: 64,
        mlp_hidden: 64,
        k: 2,
        ..ModelDims::default()
    };
    let vocab = AnswerVocabulary::from_entries(vec![("yes".into(), 1), ("no".into(), 1)]);
    let mut rows = Vec::new();
    let mut wins = 0;
    let seeds = [1u64, 2, 3];
    for &seed in &seeds {
        let train_p = trend_patches(300, 100 + seed);
        let val_p = trend_patches(100, 200 + seed);
        let cfg = TrainConfig {
            epochs: usize::MAX,
            lr: 1e-3,
            batch_size: 4,
            seed,
            max_steps: Some(1500),
        };
        let mut acc = [0.0; 2];
        for (slot, guided) in [true, false].into_iter().enumerate() {
            let train = trend_samples(&train_p, &tax, &d, seed, guided);
            let val = trend_samples(&val_p, &tax, &d, seed, guided);
            let mut p = initial_params(&d, &vocab, seed);
            fit(&mut p, &d, &train, &[], &cfg).unwrap();
            acc[slot] = accuracy(&p, &d, &val).unwrap();
        }
        if acc[0] > acc[1] {
            wins += 1;
        }
        rows.push(format!(
            "seed {seed}: guided {:.1}% vs zeroed {:.1}%",
            100.0 * acc[0],
            100.0 * acc[1]
        ));
    }
    outcome(
        2 * wins > seeds.len(),
        format!("{wins}/{} seeds favour the guide; {}", seeds.len(), rows.join(", ")),
    )
}

// 9 ---------------------------------------------------------------------

fn metrics_algebra() -> Outcome {
    let s = |q, t: &'static str, p: &'static str| Scored {
        qtype: q,
        truth: t,
        predicted: p,
    };
    let all = eval::vqa_metrics(QuestionType::ALL.iter().map(|&q| s(q, "yes", "yes")));
    let even = eval::vqa_metrics(vec![
        s(QuestionType::Presence, "a", "a"),
        s(QuestionType::Count, "1", "2"),
    ]);
    let mut skew = vec![s(QuestionType::Presence, "yes", "yes"); 10];
    skew.extend(vec![s(QuestionType::Count, "3", "0"); 30]);
    let skew = eval::vqa_metrics(skew);
    let hand = (all.overall_accuracy, all.average_accuracy) == (1.0, 1.0)
        && (even.overall_accuracy, even.average_accuracy) == (0.5, 0.5)
        && (skew.overall_accuracy, skew.average_accuracy) == (0.25, 0.5);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (c, h, w) = (5usize, 40usize, 30usize);
    let images: Vec<(ScoreMap, MultiChannelMask)> = (0..4)
        .map(|_| {
            let mut m = MultiChannelMask::new(w as u32, h as u32, c as u32);
            let mut data = Vec::with_capacity(c * h * w);
            for ch in 0..c {
                for r in 0..h {
                    for col in 0..w {
                        let truth = rng.random_bool(0.1 + 0.15 * ch as f64);
                        m.set(ch as u32, r as u32, col as u32, truth);
                        let base: f32 = rng.random_range(0.0..1.0);
                        data.push(if truth { (base + 0.3).min(1.0) } else { base * 0.9 });
                    }
                }
            }
            (ScoreMap::new(c, h, w, data), m)
        })
        .collect();
    let pairs: Vec<(&ScoreMap, &MultiChannelMask)> = images.iter().map(|(s, m)| (s, m)).collect();
    let report = eval::threshold_sweep(&pairs, 20).unwrap();
    let mut recount = Confusion::default();
    for (ch, cls) in report.per_class.iter().enumerate() {
        for (s, m) in &images {
            for r in 0..h {
                for col in 0..w {
                    let pred = s.data[(ch * h + r) * w + col] as f64 >= cls.threshold;
                    let truth = m.get(ch as u32, r as u32, col as u32);
                    recount.tp += u64::from(pred && truth);
                    recount.fp += u64::from(pred && !truth);
                    recount.fn_ += u64::from(!pred && truth);
                }
            }
        }
    }
    let p = recount.tp as f64 / (recount.tp + recount.fp) as f64;
    let r = recount.tp as f64 / (recount.tp + recount.fn_) as f64;
    let f = 2.0 * p * r / (p + r);
    let micro_ok = recount == report.totals
        && (report.micro.precision - p).abs() < 1e-12
        && (report.micro.recall - r).abs() < 1e-12
        && (report.micro.f1 - f).abs() < 1e-12;
    let curves = eval::confusion_curves(&pairs, &eval::threshold_grid(20)).unwrap();
    let monotone = curves
        .iter()
        .all(|curve| curve.windows(2).all(|w| w[1].prf().recall <= w[0].prf().recall));
    outcome(
        hand && micro_ok && monotone,
        format!(
            "hand cases {}; micro P/R/F1 {:.4}/{:.4}/{:.4} vs recount {}; recall monotone over 20 thresholds: {monotone}",
            if hand { "exact" } else { "WRONG" },
            report.micro.precision,
            report.micro.recall,
            report.micro.f1,
            if micro_ok { "equal" } else { "DIFFERENT" }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "geometry oracle equivalence",
            geometry_oracles,
            Some(Duration::from_secs(60)),
        ),
        ("balancing invariant", balancing, Some(Duration::from_secs(10))),
        ("split proportions", splits, None),
        ("raster fidelity", raster_fidelity, None),
        ("gradient correctness", gradients, Some(Duration::from_secs(5))),
        ("glimpse properties", glimpses, None),
        ("memorization run", memorization, Some(Duration::from_secs(60))),
        ("guided vs unguided trend", guided_trend, None),
        ("metrics algebra", metrics_algebra, None),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut o = run();
        let took = start.elapsed();
        if let Some(limit) = limit {
            if took > *limit {
                o.pass = false;
                o.detail
                    .push_str(&format!("; exceeded {:.0} s budget", limit.as_secs_f64()));
            }
        }
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {}. {name}: {} [{:.2} s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            took.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
