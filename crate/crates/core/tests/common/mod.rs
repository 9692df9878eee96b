#![allow(dead_code)]

use std::collections::BTreeMap;

use kgcrowd::graph::{Graph, Object, Origin, Status};
use kgcrowd::ids::{EntityId, UserId};
use rand::seq::SliceRandom;
use rand::Rng;

pub const KINDS: [&str; 9] =
    ["teacher", "student", "course", "knowledgepoint", "category", "exercise", "video", "note", "handout"];

/// Predicate that usually links the two kinds, if any.
pub fn predicate_for(subject: &str, object: &str) -> &'static str {
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

/// A random graph over the education kinds with mixed triple statuses.
pub fn education_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> Graph {
    let mut g = Graph::new();
    let n = rng.gen_range(1..=max_nodes);
    let ids: Vec<EntityId> = (0..n)
        .map(|i| {
            let kind = KINDS.choose(rng).unwrap();
            g.add_entity(kind, &format!("{kind} {i}"), BTreeMap::new(), Origin::import()).unwrap()
        })
        .collect();
    let edges = rng.gen_range(0..=3 * n);
    for _ in 0..edges {
        let s = *ids.choose(rng).unwrap();
        let o = *ids.choose(rng).unwrap();
        let (sk, ok) = (g.entity(s).unwrap().kind.clone(), g.entity(o).unwrap().kind.clone());
        let predicate = if rng.gen_bool(0.8) { predicate_for(&sk, &ok) } else { "mentions" };
        let origin = if rng.gen_bool(0.6) { Origin::import() } else { Origin::crowd(UserId(1)) };
        let confidence = rng.gen_range(0.0..=1.0);
        let t = g.add_triple(s, predicate, Object::Entity(o), origin, confidence).unwrap();
        let status = g.triple(t).unwrap().status;
        if status == Status::Candidate {
            match rng.gen_range(0..3) {
                0 => {
                    g.set_status(t, Status::Accepted).unwrap();
                }
                1 => {
                    g.set_status(t, Status::Eliminated).unwrap();
                }
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
