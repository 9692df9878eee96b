//! Reference implementations written straight from the definitions, with
//! no code shared with the library beyond the graph container itself.

use std::collections::{BTreeMap, BTreeSet};

use kgcrowd::graph::{Graph, Object, Origin, Status};
use kgcrowd::ids::{EntityId, UserId};
use kgcrowd::recommend::{ErrorRate, LearnerRecord, ResourceType};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;

pub const KINDS: [&str; 9] =
    ["teacher", "student", "course", "knowledgepoint", "category", "exercise", "video", "note", "handout"];

fn predicate_for(subject: &str, object: &str) -> &'static str {
    match (subject, object) {
        ("teacher", "course") => "offers",
        ("student", "course") => "learned",
        ("course", "knowledgepoint") => "covers",
        ("course", "course") => "prerequisite",
        ("course", "category") => "in-category",
        ("knowledgepoint", "knowledgepoint") => "related-to",
        ("exercise", "knowledgepoint") => "exercise-of",
        ("exercise" | "video" | "note" | "handout", "course") => "resource-of",
        _ => "mentions",
    }
}

/// Random graph of at most `max_nodes` entities with mixed triple statuses.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> Graph {
    let mut g = Graph::new();
    let n = rng.gen_range(1..=max_nodes);
    let ids: Vec<EntityId> = (0..n)
        .map(|i| {
            let kind = KINDS.choose(rng).unwrap();
            g.add_entity(kind, &format!("{kind} {i}"), BTreeMap::new(), Origin::import()).unwrap()
        })
        .collect();
    for _ in 0..rng.gen_range(0..=3 * n) {
        let s = *ids.choose(rng).unwrap();
        let o = *ids.choose(rng).unwrap();
        let (sk, ok) = (g.entity(s).unwrap().kind.clone(), g.entity(o).unwrap().kind.clone());
        let predicate = if rng.gen_bool(0.8) { predicate_for(&sk, &ok) } else { "mentions" };
        let origin = if rng.gen_bool(0.6) { Origin::import() } else { Origin::crowd(UserId(1)) };
        let t = g.add_triple(s, predicate, Object::Entity(o), origin, rng.gen_range(0.0..=1.0)).unwrap();
        if g.triple(t).unwrap().status == Status::Candidate {
            match rng.gen_range(0..3) {
                0 => drop(g.set_status(t, Status::Accepted).unwrap()),
                1 => drop(g.set_status(t, Status::Eliminated).unwrap()),
                _ => {}
            }
        }
    }
    if rng.gen_bool(0.5) {
        let s = *ids.choose(rng).unwrap();
        g.add_triple(s, "definition", Object::Literal("a\tb\\c\nd".into()), Origin::import(), 1.0).unwrap();
    }
    g
}

pub fn ids_of(g: &Graph, kind: &str) -> Vec<EntityId> {
    g.entities().filter(|e| e.kind == kind).map(|e| e.id).collect()
}

fn accepted(g: &Graph, s: EntityId, p: &str, o: EntityId) -> bool {
    g.find_triple(s, p, &Object::Entity(o)).is_some_and(|t| t.status == Status::Accepted)
}

fn resources_of(g: &Graph, course: EntityId) -> BTreeSet<EntityId> {
    g.entities().map(|e| e.id).filter(|&r| accepted(g, r, "resource-of", course)).collect()
}

/// Attaches resources to courses so learner records have something to cover.
pub fn enrich<R: Rng>(g: &mut Graph, rng: &mut R) {
    let courses = ids_of(g, "course");
    if courses.is_empty() {
        return;
    }
    let resources: Vec<EntityId> = g
        .entities()
        .filter(|e| ["exercise", "video", "note", "handout"].contains(&e.kind.as_str()))
        .map(|e| e.id)
        .collect();
    for r in resources {
        let c = courses[rng.gen_range(0..courses.len())];
        let origin = if rng.gen_bool(0.85) { Origin::import() } else { Origin::crowd(UserId(3)) };
        g.add_triple(r, "resource-of", Object::Entity(c), origin, 0.5).unwrap();
    }
}

pub fn random_record<R: Rng>(g: &Graph, rng: &mut R, student: EntityId) -> LearnerRecord {
    let mut record = LearnerRecord::new(student);
    for c in ids_of(g, "course") {
        for r in resources_of(g, c) {
            if rng.gen_bool(0.4) {
                record.finish(c, ResourceType::of_kind(&g.entity(r).unwrap().kind), r);
            }
        }
    }
    for x in ids_of(g, "exercise") {
        if rng.gen_bool(0.7) {
            let attempts = rng.gen_range(1..=20);
            record.error_rates.insert(x, ErrorRate::new(rng.gen_range(0..=attempts), attempts).unwrap());
        }
    }
    record
}

pub struct Situation {
    pub exercise: EntityId,
    pub finished: u64,
    pub total: u64,
    pub exact: Option<Ratio<u64>>,
    pub real: Option<f64>,
}

/// Completion rate over the distinct resources of the exercise's courses,
/// and LS = (1 / completion) * error rate.
pub fn situations(g: &Graph, record: &LearnerRecord) -> Vec<Situation> {
    let courses = ids_of(g, "course");
    let mut out = Vec::new();
    for (&x, rate) in &record.error_rates {
        let topic: Vec<EntityId> = courses.iter().copied().filter(|&c| accepted(g, x, "resource-of", c)).collect();
        if topic.is_empty() {
            continue;
        }
        let all: BTreeSet<EntityId> = topic.iter().flat_map(|&c| resources_of(g, c)).collect();
        let mut done: BTreeSet<EntityId> = BTreeSet::new();
        for c in &topic {
            for set in record.finished_resources.get(c).into_iter().flat_map(|m| m.values()) {
                done.extend(set.iter().filter(|r| all.contains(r)));
            }
        }
        let (f, t) = (done.len() as u64, all.len() as u64);
        let (i, a) = (u64::from(rate.incorrect), u64::from(rate.attempts));
        let (exact, real) = if f == 0 {
            (None, None)
        } else {
            (Some(Ratio::new(i * t, a * f)), Some((1.0 / (f as f64 / t as f64)) * (i as f64 / a as f64)))
        };
        out.push(Situation { exercise: x, finished: f, total: t, exact, real });
    }
    out
}

pub const INF: usize = usize::MAX / 4;

/// All-pairs hop counts over accepted course/KP `covers` and course/course
/// `prerequisite` links, both directions.
pub fn floyd_warshall(g: &Graph) -> (Vec<EntityId>, Vec<Vec<usize>>) {
    let nodes: Vec<EntityId> = g.entities().map(|e| e.id).collect();
    let index = |id: EntityId| nodes.iter().position(|n| *n == id).unwrap();
    let kind = |id: EntityId| g.entity(id).unwrap().kind.as_str();
    let n = nodes.len();
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for t in g.triples() {
        let Some(o) = t.object.entity() else { continue };
        if t.status != Status::Accepted || o == t.subject {
            continue;
        }
        let pair = (kind(t.subject), kind(o));
        let edge = (t.predicate == "covers"
            && (pair == ("course", "knowledgepoint") || pair == ("knowledgepoint", "course")))
            || (t.predicate == "prerequisite" && pair == ("course", "course"));
        if edge {
            let (a, b) = (index(t.subject), index(o));
            d[a][b] = 1;
            d[b][a] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    (nodes, d)
}

/// Nodes of the three kinds and the accepted triples between them.
pub fn subgraph(g: &Graph, first: &str) -> (BTreeSet<EntityId>, BTreeSet<kgcrowd::ids::TripleId>) {
    let tags = [first, "course", "category"];
    let nodes: BTreeSet<EntityId> = g.entities().filter(|e| tags.contains(&e.kind.as_str())).map(|e| e.id).collect();
    let triples = g
        .triples()
        .filter(|t| t.status == Status::Accepted)
        .filter(|t| nodes.contains(&t.subject) && t.object.entity().is_some_and(|o| nodes.contains(&o)))
        .map(|t| t.id)
        .collect();
    (nodes, triples)
}

/// Top-2 by count, ties to the smaller answer.
pub fn top2(counts: &BTreeMap<String, u64>) -> Vec<String> {
    let mut all: Vec<(&String, &u64)> = counts.iter().collect();
    all.sort_by(|x, y| y.1.cmp(x.1).then(x.0.cmp(y.0)));
    all.into_iter().take(2).map(|(k, _)| k.clone()).collect()
}

/// Least count, ties to the last answer; none when at most two remain.
pub fn loser(counts: &BTreeMap<String, u64>) -> Option<String> {
    if counts.len() <= 2 {
        return None;
    }
    let min = counts.values().min()?;
    counts.iter().filter(|(_, c)| *c == min).map(|(k, _)| k.clone()).next_back()
}
