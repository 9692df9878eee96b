//! Acceptance gate: prints one PASS or FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../common/mod.rs"]
mod common;
mod oracles;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use kgcrowd::analytics::{self, AnalyticsError, SubgraphKind};
use kgcrowd::consensus::{is_multi, resolve_votes, AnswerLedger, ConsensusConfig, ResolutionKind, Slot, SlotKey};
use kgcrowd::crowd::{apportion, Crowd, CrowdConfig, Payload, Role, TaskStatus};
use kgcrowd::graph::{self, Graph, Object, Origin, Pattern};
use kgcrowd::ids::{EntityId, LedgerId, TaskId, TripleId};
use kgcrowd::recommend::{self, learning_situation, ErrorRate, LearnerRecord, RecommendConfig, ResourceType};
use kgcrowd::sim::{self, SimConfig};
use kgcrowd_service::{ApiRequest, Service, ServiceConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LS_REAL_TOLERANCE: f64 = 1e-12;
const LS_TIME_LIMIT: Duration = Duration::from_secs(5);
const SIM_TIME_LIMIT: Duration = Duration::from_secs(10);
const SIM_MIN_CORRECT: f64 = 0.95;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn learning_situation_and_completion() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (mut records, mut compared, mut exact, mut worst) = (0, 0, 0, 0.0_f64);
    while records < 1000 {
        let mut g = oracles::random_graph(&mut rng, 100);
        oracles::enrich(&mut g, &mut rng);
        let Some(&student) = oracles::ids_of(&g, "student").choose(&mut rng) else { continue };
        let record = oracles::random_record(&g, &mut rng, student);
        record.validate(&g).map_err(|e| format!("generated record rejected: {e}"))?;
        records += 1;
        let got = recommend::exercise_situations(&g, &record);
        let want = oracles::situations(&g, &record);
        ensure!(got.len() == want.len(), "record {records}: {} situations, oracle has {}", got.len(), want.len());
        for ((x, ls, rate, error), w) in got.iter().zip(&want) {
            ensure!(*x == w.exercise, "exercise order differs: {x} vs {}", w.exercise);
            ensure!((rate.finished, rate.total) == (w.finished, w.total), "completion of {x}: {rate:?}");
            ensure!(*ls == w.exact, "exact LS of {x}: {ls:?} vs {:?}", w.exact);
            let real = learning_situation(rate.value(), error.value()).ok();
            match (real, w.real) {
                (Some(a), Some(b)) => {
                    worst = worst.max((a - b).abs());
                    ensure!((a - b).abs() <= LS_REAL_TOLERANCE, "real LS of {x}: {a} vs {b}");
                }
                (None, None) => {}
                other => return Err(format!("real LS of {x}: {other:?}")),
            }
            exact += usize::from(ls.is_some());
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < LS_TIME_LIMIT, "took {elapsed:?}");
    Ok(format!(
        "{records} records, {compared} exercises, {exact} exact ratios, max real error {worst:e}, {elapsed:.2?}"
    ))
}

/// Two courses with one exercise each, both fully finished, so LS equals the
/// error rate.
fn threshold_graph() -> (Graph, LearnerRecord, [EntityId; 2]) {
    let mut g = Graph::new();
    let add =
        |g: &mut Graph, kind: &str, label: &str| g.add_entity(kind, label, BTreeMap::new(), Origin::import()).unwrap();
    let student = add(&mut g, "student", "learner");
    let mut record = LearnerRecord::new(student);
    let mut exercises = [EntityId(0); 2];
    for (i, (incorrect, attempts)) in [(1, 4), (3, 20)].into_iter().enumerate() {
        let course = add(&mut g, "course", &format!("course {i}"));
        let x = add(&mut g, "exercise", &format!("exercise {i}"));
        g.add_triple(x, "resource-of", Object::Entity(course), Origin::import(), 1.0).unwrap();
        record.finish(course, ResourceType::Exercise, x);
        record.error_rates.insert(x, ErrorRate::new(incorrect, attempts).unwrap());
        exercises[i] = x;
    }
    (g, record, exercises)
}

fn threshold_boundaries() -> Outcome {
    let (g, record, [quarter, fifteen]) = threshold_graph();
    let config = RecommendConfig::new(0.20).map_err(|e| e.to_string())?;
    let past: Vec<EntityId> = recommend::past_recommend(&g, &record, &config).iter().map(|p| p.exercise_id).collect();
    ensure!(past.contains(&quarter), "LS 0.25 not recommended at P = 0.20: {past:?}");
    ensure!(!past.contains(&fifteen), "LS 0.15 recommended at P = 0.20: {past:?}");

    let consensus = ConsensusConfig::default();
    ensure!(is_multi(0.351, &consensus), "0.351 should resolve multi");
    ensure!(!is_multi(0.349, &consensus), "0.349 should resolve single");
    ensure!(!is_multi(0.350, &consensus), "0.350 should resolve single");
    for (unequal, total, kind) in
        [(351, 1000, ResolutionKind::Multi), (349, 1000, ResolutionKind::Single), (350, 1000, ResolutionKind::Single)]
    {
        let r = resolve_votes("a", "b", unequal, total, &consensus).map_err(|e| e.to_string())?;
        ensure!(r.kind == kind, "{unequal}/{total} resolved {:?}", r.kind);
    }
    Ok("LS 0.25 in, LS 0.15 out; 0.351 multi, 0.350 and 0.349 single".into())
}

fn simulation() -> Outcome {
    let run = |accuracy: f64| -> Result<(f64, Duration), String> {
        let config = SimConfig {
            seed: 42,
            population: 100,
            accuracy,
            slots: 50,
            submissions_per_slot: 100,
            ..Default::default()
        };
        let start = Instant::now();
        let report = sim::run(&config).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        if elapsed >= SIM_TIME_LIMIT {
            return Err(format!("p = {accuracy} took {elapsed:?}"));
        }
        Ok((report.fraction_correct, elapsed))
    };
    let grid = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let mut fractions = Vec::new();
    let mut slowest = Duration::ZERO;
    for p in grid {
        let (f, t) = run(p)?;
        fractions.push(f);
        slowest = slowest.max(t);
    }
    let at = |p: f64| fractions[grid.iter().position(|&q| q == p).unwrap()];
    ensure!(at(0.8) >= SIM_MIN_CORRECT, "p = 0.8 got {}", at(0.8));
    ensure!(at(1.0) == 1.0, "p = 1.0 got {}", at(1.0));
    ensure!(fractions.windows(2).all(|w| w[0] <= w[1]), "not monotone: {fractions:?}");
    Ok(format!("correct by p {grid:?}: {fractions:?}, slowest run {slowest:.2?}"))
}

fn ledger_with(counts: &[u64]) -> AnswerLedger {
    let config = ConsensusConfig { cycle_length: 10_000, ..Default::default() };
    let mut l = AnswerLedger::new(LedgerId(1), SlotKey { triple: TripleId(1), slot: Slot::Object }, &config);
    for (name, &n) in ["a", "b", "c", "d"].iter().zip(counts) {
        for _ in 0..n {
            l.record_occurrence(name).unwrap();
        }
    }
    l
}

fn ledger_cycles() -> Outcome {
    let mut l = ledger_with(&[5, 3, 1]);
    let removed = l.end_cycle().map_err(|e| e.to_string())?;
    ensure!(removed == Some(("c".into(), 1)), "{{A:5, B:3, C:1}} removed {removed:?}");
    let t = l.top2().map_err(|e| e.to_string())?;
    ensure!(t == ("a".into(), Some("b".into())), "Top-2 {t:?}");

    let mut vectors: Vec<Vec<u64>> = vec![Vec::new()];
    let mut all = Vec::new();
    for _ in 0..4 {
        vectors = vectors.iter().flat_map(|v| (1..=6).map(move |c| [v.clone(), vec![c]].concat())).collect();
        all.extend(vectors.iter().cloned());
    }
    for counts in &all {
        let mut l = ledger_with(counts);
        let before: BTreeMap<String, u64> = l.candidates.iter().map(|(k, c)| (k.clone(), c.count)).collect();
        let top = oracles::top2(&before);
        let removed = l.end_cycle().map_err(|e| e.to_string())?.map(|(k, _)| k);
        ensure!(removed == oracles::loser(&before), "{counts:?}: removed {removed:?}");
        ensure!(removed.as_ref().is_none_or(|k| !top.contains(k)), "{counts:?}: eliminated a Top-2 answer");
        ensure!(top.iter().all(|k| l.candidates.contains_key(k)), "{counts:?}: Top-2 missing after the cycle");
    }
    Ok(format!("worked example holds; {} ledgers checked exhaustively", all.len()))
}

fn analytics_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut routes, mut unreachable) = (0, 0);
    for i in 0..200 {
        let g = oracles::random_graph(&mut rng, 100);
        for (kind, first) in [
            (SubgraphKind::TeacherCourseType, "teacher"),
            (SubgraphKind::StudentCourseType, "student"),
            (SubgraphKind::KnowledgeCourseType, "knowledgepoint"),
        ] {
            let sub = analytics::extract_subgraph(&g, kind);
            let (nodes, triples) = oracles::subgraph(&g, first);
            ensure!(
                sub.node_ids == nodes && sub.triple_ids == triples,
                "graph {i}: {} subgraph differs",
                kind.as_str()
            );
        }
        let (ids, dist) = oracles::floyd_warshall(&g);
        let courses = oracles::ids_of(&g, "course");
        for _ in 0..5 {
            let (Some(&from), Some(&to)) = (courses.choose(&mut rng), courses.choose(&mut rng)) else { break };
            let pos = |id: EntityId| ids.iter().position(|n| *n == id).unwrap();
            let expected = dist[pos(from)][pos(to)];
            match analytics::learning_route(&g, from, to) {
                Ok(route) => {
                    ensure!(route.length == expected, "graph {i}: {from}->{to} length {} vs {expected}", route.length);
                    routes += 1;
                }
                Err(AnalyticsError::NoRoute(..)) if expected == oracles::INF => unreachable += 1,
                Err(e) => return Err(format!("graph {i}: {from}->{to}: {e}")),
            }
        }
    }
    Ok(format!("200 graphs, 600 subgraphs, {routes} routes and {unreachable} unreachable pairs agree"))
}

fn allocation() -> Outcome {
    let mut graph = Graph::new();
    let course =
        graph.add_entity("course", "databases", BTreeMap::new(), Origin::import()).map_err(|e| e.to_string())?;
    for i in 0..5 {
        let kp = graph.add_entity("knowledgepoint", &format!("kp {i}"), BTreeMap::new(), Origin::import()).unwrap();
        graph.add_triple(course, "covers", Object::Entity(kp), Origin::crowd(kgcrowd::ids::UserId(99)), 0.3).unwrap();
    }
    let mut crowd = Crowd::new(CrowdConfig::default());
    let mut groups = Vec::new();
    for i in 0..2 {
        let lead = crowd.register_user(Role::GroupAdmin, format!("lead {i}"));
        let g = crowd.create_group(lead, Pattern::predicate("covers"), None).unwrap();
        let m = crowd.register_user(Role::Common, format!("member {i}"));
        crowd.join_group(m, m, g).unwrap();
        groups.push((g, lead, m));
    }
    crowd.generate_and_allocate(&graph, 80).map_err(|e| e.to_string())?;
    for (&(g, lead, member), n) in groups.iter().zip([10, 30]) {
        let open: Vec<TaskId> =
            crowd.tasks().filter(|t| t.group_id == g && t.status == TaskStatus::Open).map(|t| t.id).take(n).collect();
        for id in open {
            crowd.assign_task(lead, id, member).map_err(|e| e.to_string())?;
            crowd.complete_task(&mut graph, member, id, Payload::Vote { valid: false }).map_err(|e| e.to_string())?;
        }
    }
    let scores: Vec<u64> = groups.iter().map(|(g, _, _)| crowd.group(*g).unwrap().score).collect();
    ensure!(scores == [10, 30], "group scores {scores:?}");
    let created = crowd.generate_and_allocate(&graph, 40).map_err(|e| e.to_string())?;
    let shares: Vec<usize> = groups
        .iter()
        .map(|(g, _, _)| created.iter().filter(|id| crowd.task(**id).unwrap().group_id == *g).count())
        .collect();
    ensure!(shares == [11, 29], "shares {shares:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..1000 {
        let weights: Vec<u64> = (0..rng.gen_range(1..12)).map(|_| rng.gen_range(0..200u64) + 1).collect();
        let batch = rng.gen_range(1..500);
        let shares = apportion(&weights, batch);
        ensure!(shares.iter().sum::<u64>() == batch, "{weights:?} with batch {batch}: {shares:?}");
    }
    Ok("{10, 30} with batch 40 gives {11, 29}; 1000 random vectors sum to the batch".into())
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for i in 0..200 {
        let g = oracles::random_graph(&mut rng, 150);
        let text = graph::export(&g);
        let back = graph::import(&text).map_err(|e| format!("graph {i}: {e}"))?;
        ensure!(back == g, "graph {i}: import(export(G)) differs");
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut replays = 0;
    for (seed, snapshot_every) in [(1, 1_000_000), (2, 13), (3, 1)] {
        let path = dir.path().join(format!("events-{seed}.log"));
        let config = ServiceConfig { snapshot_every, ..Default::default() };
        let mut live = Service::open(&path, config.clone()).map_err(|e| e.to_string())?;
        common::workload::drive(&mut live, seed, 300);
        let replayed = Service::open(&path, config).map_err(|e| e.to_string())?;
        ensure!(replayed.engine() == live.engine(), "seed {seed}: replayed state differs");
        ensure!(common::workload::scores(&replayed) == common::workload::scores(&live), "seed {seed}: scores differ");
        replays += 1;
    }
    Ok(format!("200 graphs round-trip; {replays} event logs replay to equal state and scores"))
}

fn role_matrix() -> Outcome {
    let table = common::matrix::table();
    let covered: BTreeSet<String> =
        table.iter().map(|(m, r, _, _)| format!("{m} {}", r.split('#').next().unwrap())).collect();
    let missing: Vec<&&str> = common::matrix::ENDPOINTS.iter().filter(|e| !covered.contains(**e)).collect();
    ensure!(missing.is_empty(), "endpoints without rows: {missing:?}");
    let mut pairs = 0;
    for (method, route, build, expected) in &table {
        for (who, want) in expected.iter().enumerate() {
            let mut f = common::fixture();
            let got = f.send(who, build(&f));
            ensure!(got.status == *want, "{method} {route} as {}: {} (want {want})", common::ROLES[who], got.status);
            pairs += 1;
        }
    }
    let mut f = common::fixture();
    let r = f.send(0, ApiRequest::new("DELETE", &format!("/groups/{}", f.group)));
    ensure!(r.status == 403, "common-user dissolve gave {}", r.status);
    Ok(format!("{pairs} (role, endpoint) pairs over {} endpoints; common-user dissolve is 403", covered.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("learning situation and completion rate match oracles", learning_situation_and_completion),
        ("threshold boundaries", threshold_boundaries),
        ("simulated crowd accuracy", simulation),
        ("ledger cycle rules", ledger_cycles),
        ("subgraphs and learning routes match oracles", analytics_oracles),
        ("score-weighted allocation", allocation),
        ("graph round trip and event-log replay", round_trips),
        ("role and endpoint matrix", role_matrix),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}: {name}: {why}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
