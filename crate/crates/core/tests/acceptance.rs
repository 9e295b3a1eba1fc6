//! Acceptance suite: one verdict line per criterion, exit status 1 if any
//! criterion fails. Runs without the libtest harness so the lines always
//! reach the terminal.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use altsim::catalog::{generate_synthetic, uniform_schema, Attribute, Item};
use altsim::harness::report::write_comparison;
use altsim::harness::{
    compare, tolerance_sweep, AlternativesSource, CatalogSource, Comparison, ExperimentConfig, SimulatorMode,
    SyntheticCatalog, TargetSource,
};
use altsim::metrics::{cohens_kappa, mrr_at_k, ndcg_at_k, success_at_1, Judgments, Metric, RelevanceSet};
use altsim::pooling::{build_pool, ModelSources, PoolSpec, Provenance, SampleSpec};
use altsim::ranker::{RankedList, RankerSpec};
use altsim::simulator::{
    AlternativesMap, BaseSimulator, MetaSimConfig, MetaSimulator, Simulator, SyntheticAlternatives,
};
use altsim::{Catalog, ItemId};

struct Verdict {
    pass: bool,
    detail: String,
}

fn check(id: u32, title: &str, bound: Duration, body: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = body();
    let elapsed = start.elapsed();
    let in_time = elapsed <= bound;
    let pass = verdict.pass && in_time;
    println!(
        "criterion {id} {}: {title}: {} [{:.2?} of {:.0?}{}]",
        if pass { "PASS" } else { "FAIL" },
        verdict.detail,
        elapsed,
        bound,
        if in_time { "" } else { ", too slow" },
    );
    pass
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Items drawn from a handful of directions so exact similarity ties are common.
fn tie_heavy_catalog(rng: &mut ChaCha8Rng, n: usize) -> Catalog {
    let dim = 4;
    let directions: Vec<Vec<f64>> = (0..rng.random_range(2..=6))
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-3..=3) as f64 + 0.5).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let schema = vec![Attribute::new("colour", ["red", "blue"])];
    let items = (0..n)
        .map(|i| Item {
            id: ItemId::new(format!("i{i:02}")),
            embedding: directions[rng.random_range(0..directions.len())].clone(),
            attributes: vec![if rng.random_bool(0.5) { "red" } else { "blue" }.to_owned()],
        })
        .collect();
    Catalog::new(dim, schema, items).expect("valid fixture")
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = 1000;
    let mut mismatches = 0;
    for _ in 0..cases {
        let n = rng.random_range(2..=50);
        let catalog = Arc::new(tie_heavy_catalog(&mut rng, n));
        let ids: Vec<ItemId> = catalog.ids().cloned().collect();
        let target = ids[rng.random_range(0..n)].clone();
        let mut map = AlternativesMap::new("fixture");
        map.declare(target.clone());
        let n_alts = rng.random_range(0..=10.min(n));
        for id in ids.choose_multiple(&mut rng, n_alts) {
            map.insert(target.clone(), id.clone());
        }
        let alts = map.get(target.as_str()).unwrap().clone();
        let tolerance = rng.random_range(0..=5);
        let turn = rng.random_range(1..=10);
        let shown = ids[rng.random_range(0..n)].clone();
        let meta = MetaSimulator::new(
            BaseSimulator::new(catalog.clone()),
            MetaSimConfig {
                tolerance,
                similarity_space: catalog.clone(),
            },
            Arc::new(map),
        );
        let got = meta.critique(turn, &shown, &target).expect("valid case").effective_target;

        let expected = if turn <= tolerance {
            target.clone()
        } else {
            let q = &catalog.get(shown.as_str()).unwrap().embedding;
            let mut pool: Vec<&ItemId> = alts.iter().chain([&target]).collect();
            pool.sort();
            pool.dedup();
            let mut best = pool[0];
            let mut best_sim = oracle_cosine(q, &catalog.get(best.as_str()).unwrap().embedding);
            for cand in &pool[1..] {
                let s = oracle_cosine(q, &catalog.get(cand.as_str()).unwrap().embedding);
                if s > best_sim {
                    best = cand;
                    best_sim = s;
                }
            }
            best.clone()
        };
        if got != expected {
            mismatches += 1;
        }
    }
    Verdict {
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches over {cases} random cases"),
    }
}

fn criterion_2() -> Verdict {
    let catalog = Arc::new(generate_synthetic(2, 40, 12, uniform_schema(&[3, 3, 3])).expect("fixture"));
    let ids: Vec<ItemId> = catalog.ids().cloned().collect();
    let targets: Vec<ItemId> = ids.iter().step_by(2).cloned().collect();
    assert_eq!(targets.len(), 20);
    let alternatives = Arc::new(
        AlternativesMap::synthesize(
            &catalog,
            &targets,
            &SyntheticAlternatives {
                min_shared: Some(1),
                ..SyntheticAlternatives::default()
            },
        )
        .expect("fixture"),
    );
    let mut degenerate = AlternativesMap::new("degenerate");
    for (i, t) in targets.iter().enumerate() {
        degenerate.declare(t.clone());
        if i % 2 == 0 {
            degenerate.insert(t.clone(), t.clone());
        }
    }
    let degenerate = Arc::new(degenerate);
    let base = BaseSimulator::new(catalog.clone());
    let meta = |tolerance, alts: &Arc<AlternativesMap>| {
        MetaSimulator::new(
            base.clone(),
            MetaSimConfig {
                tolerance,
                similarity_space: catalog.clone(),
            },
            alts.clone(),
        )
    };
    let bytes = |r: altsim::simulator::Response| serde_json::to_vec(&r).expect("serializable");

    let expected: Vec<Vec<u8>> = targets
        .iter()
        .flat_map(|t| ids.iter().flat_map(move |s| (1..=10).map(move |turn| (t, s, turn))))
        .map(|(t, s, turn)| bytes(base.respond(turn, s, t).unwrap()))
        .collect();
    let mut gate_checks = 0;
    let mut degenerate_checks = 0;
    let mut failures = Vec::new();
    for tolerance in 0..=5 {
        let gated = meta(tolerance, &alternatives);
        let trivial = meta(tolerance, &degenerate);
        let mut want = expected.iter();
        for target in &targets {
            for shown in &ids {
                for turn in 1..=10 {
                    let want = want.next().unwrap();
                    if turn <= tolerance {
                        gate_checks += 1;
                        if bytes(gated.respond(turn, shown, target).unwrap()) != *want {
                            failures.push(format!("gate t={turn} tol={tolerance} {target}/{shown}"));
                        }
                    }
                    degenerate_checks += 1;
                    if bytes(trivial.respond(turn, shown, target).unwrap()) != *want {
                        failures.push(format!("degenerate t={turn} tol={tolerance} {target}/{shown}"));
                    }
                }
            }
        }
    }
    let switches_seen = targets.iter().any(|t| {
        ids.iter()
            .any(|s| meta(0, &alternatives).respond(1, s, t).unwrap().switch_event.is_some())
    });
    Verdict {
        pass: failures.is_empty() && switches_seen,
        detail: format!(
            "{gate_checks} gated and {degenerate_checks} degenerate responses compared, {} differ{}",
            failures.len(),
            if switches_seen { "" } else { "; fixture never switches" }
        ),
    }
}

fn list(ids: &[&str]) -> RankedList {
    let n = ids.len();
    RankedList::new(
        ids.iter()
            .enumerate()
            .map(|(i, id)| (ItemId::new(*id), (n - i) as f64))
            .collect(),
        1,
    )
    .expect("valid ranking")
}

fn judgments(labels: &[bool]) -> Judgments {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| ((ItemId::new("t"), ItemId::new(format!("c{i}"))), l))
        .collect()
}

fn criterion_3() -> Verdict {
    let ids = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"];
    let ndcg = ndcg_at_k(&list(&ids), &RelevanceSet::single(ItemId::new("c")), 10);
    let mrr = mrr_at_k(&list(&ids), &RelevanceSet::single(ItemId::new("d")), 10);
    let k_hand = cohens_kappa(&judgments(&[true, true, false, false]), &judgments(&[true, false, true, false])).unwrap();
    let mixed = judgments(&[true, false, true, true, false]);
    let k_same = cohens_kappa(&mixed, &mixed).unwrap();
    let pass = (ndcg - 0.5).abs() <= 1e-9 && mrr == 0.25 && k_hand.abs() <= 1e-9 && k_same == 1.0;
    Verdict {
        pass,
        detail: format!("nDCG@10 {ndcg:.12}, MRR@10 {mrr}, kappa {k_hand:.3e} and {k_same}"),
    }
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let universe: Vec<ItemId> = (0..30).map(|i| ItemId::new(format!("x{i:02}"))).collect();
    let pairs = 10_000;
    let mut violations = [0usize; 3];
    let mut example = None;
    for _ in 0..pairs {
        let len = rng.random_range(1..=universe.len());
        let mut shuffled = universe.clone();
        shuffled.shuffle(&mut rng);
        let ranking = RankedList::new(
            shuffled[..len]
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), -(i as f64)))
                .collect(),
            1,
        )
        .unwrap();
        shuffled.shuffle(&mut rng);
        let small = rng.random_range(1..=5);
        let large = small + rng.random_range(0..=5);
        let rel = RelevanceSet::new(shuffled[..small].iter().cloned()).unwrap();
        let sup = RelevanceSet::new(shuffled[..large].iter().cloned()).unwrap();
        let values = |r: &RelevanceSet| {
            [
                ndcg_at_k(&ranking, r, 10),
                mrr_at_k(&ranking, r, 10),
                success_at_1(&ranking, r),
            ]
        };
        let (under, over) = (values(&rel), values(&sup));
        for (m, count) in violations.iter_mut().enumerate() {
            if over[m] < under[m] {
                *count += 1;
                if example.is_none() {
                    example = Some(format!(
                        "e.g. {} fell from {:.4} to {:.4} as |rel| grew {small}->{large}",
                        Metric::ALL[m],
                        under[m],
                        over[m]
                    ));
                }
            }
        }
    }
    let [ndcg, mrr, sr] = violations;
    Verdict {
        pass: violations.iter().all(|&v| v == 0),
        detail: format!(
            "decreases over {pairs} pairs: ndcg {ndcg}, mrr {mrr}, sr {sr}{}",
            example.map(|e| format!("; {e}")).unwrap_or_default()
        ),
    }
}

fn criterion_5() -> Verdict {
    let spec = PoolSpec::default();
    let target = ItemId::new("t");
    let ids = |names: &[&str]| names.iter().map(|n| ItemId::new(*n)).collect::<Vec<_>>();
    let fixtures = [
        // neighbour lists share items with each other and contain the target
        vec![
            ModelSources::new("model-a", ids(&["t", "n1", "n2", "n3", "n4", "n5", "n6"]), &list(&["r1", "n1", "r2", "r3", "r4"])),
            ModelSources::new("model-b", ids(&["n2", "n1", "t", "n7", "n8", "n9", "n10"]), &list(&["n7", "r1", "r2", "r5", "r6", "r7"])),
        ],
        // retrieved lists repeat neighbours and each other
        vec![
            ModelSources::new("model-a", ids(&["n1", "n2", "n3", "n4", "n5"]), &list(&["t", "n1", "n2", "r1", "r2", "r3", "r4"])),
            ModelSources::new("model-b", ids(&["n5", "n6", "n7", "n8", "n9"]), &list(&["r1", "r2", "n6", "r5", "r6", "r7", "r8"])),
        ],
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (i, sources) in fixtures.iter().enumerate() {
        let pool = build_pool(&target, sources, &spec).expect("fixture has enough depth");
        let unique: BTreeSet<&ItemId> = pool.candidates.iter().map(|c| &c.id).collect();
        let ok = pool.len() == 14
            && unique.len() == 14
            && !unique.contains(&target)
            && pool.count(Provenance::Nn) == 8
            && pool.count(Provenance::Retrieved) == 6;
        pass &= ok;
        details.push(format!(
            "fixture {}: {} unique, {} nn + {} retrieved",
            i + 1,
            unique.len(),
            pool.count(Provenance::Nn),
            pool.count(Provenance::Retrieved)
        ));
    }
    Verdict {
        pass,
        detail: details.join("; "),
    }
}

fn desk_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 42,
        catalog: CatalogSource::Synthetic(SyntheticCatalog {
            seed: 42,
            n_items: 1000,
            dimension: 32,
            domain_sizes: vec![6, 6, 6],
            ..SyntheticCatalog::default()
        }),
        ranker: RankerSpec::from_name("oracle_embedding").unwrap(),
        simulator: SimulatorMode::Meta,
        tolerance: 2,
        alternatives: Some(AlternativesSource::Synthetic(SyntheticAlternatives {
            seed: 42,
            ..SyntheticAlternatives::default()
        })),
        targets: TargetSource::Sample(SampleSpec {
            n: 200,
            seed: 42,
            ..SampleSpec::default()
        }),
        ..ExperimentConfig::default()
    }
}

fn criterion_6(out: &mut Option<Comparison>) -> Verdict {
    let cmp = match compare(&desk_config()) {
        Ok(c) => c,
        Err(e) => {
            return Verdict {
                pass: false,
                detail: format!("run failed: {e}"),
            }
        }
    };
    let base = &cmp.without.report;
    let meta = &cmp.with.report;
    let rejudged = &cmp.without.rejudged.as_ref().expect("base run has alternatives").report;
    let mut pass = cmp.with.targets.len() == 200;
    let mut cells = Vec::new();
    for turn in [3, 5, 10] {
        for metric in [Metric::Sr, Metric::Mrr] {
            let b = base.value(turn, metric).unwrap();
            let m = meta.value(turn, metric).unwrap();
            let r = rejudged.value(turn, metric).unwrap();
            pass &= m >= b && r >= b;
            if turn == 10 || metric == Metric::Sr {
                cells.push(format!("{metric}@t{turn} base {b:.3} meta {m:.3} rejudged {r:.3}"));
            }
        }
    }
    *out = Some(cmp);
    Verdict {
        pass,
        detail: cells.join(", "),
    }
}

fn criterion_7() -> Verdict {
    let tolerances = [1, 2, 3, 4];
    let sweep = match tolerance_sweep(&desk_config(), &tolerances) {
        Ok(s) => s,
        Err(e) => {
            return Verdict {
                pass: false,
                detail: format!("sweep failed: {e}"),
            }
        }
    };
    let system = sweep.systems[0].clone();
    let early: u64 = sweep
        .switch_counts
        .iter()
        .flat_map(|s| s.counts.iter().filter(move |c| c.turn <= s.tolerance))
        .map(|c| c.count as u64)
        .sum();
    let late: u64 = sweep
        .switch_counts
        .iter()
        .flat_map(|s| s.counts.iter().filter(move |c| c.turn > s.tolerance))
        .map(|c| c.count as u64)
        .sum();
    let shape = sweep.series_for(&system, None).is_some()
        && tolerances.iter().all(|&t| sweep.series_for(&system, Some(t)).is_some())
        && sweep.series.len() == tolerances.len() + 1;
    Verdict {
        pass: early == 0 && shape,
        detail: format!(
            "{early} switches at turns <= tolerance ({late} after), {} series for {system}",
            sweep.series.len()
        ),
    }
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn criterion_8(first: Option<Comparison>) -> Verdict {
    let Some(first) = first else {
        return Verdict {
            pass: false,
            detail: "criterion 6 produced no reports".into(),
        };
    };
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_comparison(&a, &first).unwrap();
    write_comparison(&b, &compare(&desk_config()).unwrap()).unwrap();
    let (fa, fb) = (dir_contents(&a), dir_contents(&b));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Verdict {
        pass: fa.len() == fb.len() && differing.is_empty() && !fa.is_empty(),
        detail: format!("{} files written twice, {} differ {:?}", fa.len(), differing.len(), differing),
    }
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut desk = None;
    let mut results = vec![
        check(1, "meta target selection matches brute-force argmax", secs(5), criterion_1),
        check(2, "gate and degenerate alternatives reproduce the base simulator", secs(1), criterion_2),
        check(3, "metric unit values", secs(1), criterion_3),
        check(4, "superset monotonicity of every metric", secs(10), criterion_4),
        check(5, "pool size and provenance", secs(1), criterion_5),
        check(6, "desk-scale meta vs base at turns 3, 5, 10", secs(60), || criterion_6(&mut desk)),
    ];
    results.push(check(7, "tolerance sweep switch gating and report shape", secs(180), criterion_7));
    results.push(check(8, "byte-identical reports on rerun", secs(60), || criterion_8(desk.take())));
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
