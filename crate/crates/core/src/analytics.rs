//! Read-only views over accepted knowledge: typed subgraphs, teacher
//! profiles, student course coverage and course-to-course learning routes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::ids::{EntityId, TripleId};
use crate::schema::{self, predicate};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("no route between {0} and {1}")]
    NoRoute(EntityId, EntityId),
    #[error("{0} is not a course")]
    UnknownCourse(EntityId),
    #[error("{0} is not a student")]
    UnknownStudent(EntityId),
    #[error("unknown subgraph kind `{0}`")]
    UnknownSubgraphKind(String),
}

pub type Result<T> = std::result::Result<T, AnalyticsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SubgraphKind {
    TeacherCourseType,
    StudentCourseType,
    KnowledgeCourseType,
}

impl SubgraphKind {
    pub const ALL: [SubgraphKind; 3] =
        [SubgraphKind::TeacherCourseType, SubgraphKind::StudentCourseType, SubgraphKind::KnowledgeCourseType];

    pub fn tags(self) -> [&'static str; 3] {
        let first = match self {
            SubgraphKind::TeacherCourseType => schema::TEACHER,
            SubgraphKind::StudentCourseType => schema::STUDENT,
            SubgraphKind::KnowledgeCourseType => schema::KNOWLEDGE_POINT,
        };
        [first, schema::COURSE, schema::CATEGORY]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SubgraphKind::TeacherCourseType => "teacherCourseType",
            SubgraphKind::StudentCourseType => "studentCourseType",
            SubgraphKind::KnowledgeCourseType => "knowledgeCourseType",
        }
    }

    pub fn parse(raw: &str) -> Result<Self> {
        SubgraphKind::ALL
            .into_iter()
            .find(|k| k.as_str() == raw)
            .ok_or_else(|| AnalyticsError::UnknownSubgraphKind(raw.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Subgraph {
    pub kind: SubgraphKind,
    pub node_ids: BTreeSet<EntityId>,
    pub triple_ids: BTreeSet<TripleId>,
}

/// Nodes whose kind is one of the subgraph's tags, and the accepted triples
/// between them.
pub fn extract_subgraph(graph: &Graph, kind: SubgraphKind) -> Subgraph {
    let tags = kind.tags();
    let node_ids: BTreeSet<EntityId> =
        graph.entities().filter(|e| tags.contains(&e.kind.as_str())).map(|e| e.id).collect();
    let triple_ids = graph.accepted_within(&node_ids);
    Subgraph { kind, node_ids, triple_ids }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TeacherProfile {
    pub teacher_id: EntityId,
    pub course_ids: BTreeSet<EntityId>,
    /// Category label -> number of offered courses in it.
    pub category_counts: BTreeMap<String, u64>,
    /// Shares at least one course with another teacher.
    pub cooperative: bool,
}

fn accepted_objects<'a>(
    graph: &'a Graph,
    subject: EntityId,
    pred: &'a str,
    kind: &'a str,
) -> impl Iterator<Item = EntityId> + 'a {
    graph
        .triples()
        .filter(move |t| t.is_accepted() && t.subject == subject && t.predicate == pred)
        .filter_map(|t| t.object.entity())
        .filter(move |o| graph.entity(*o).is_some_and(|e| e.kind == kind))
}

pub fn classify_teachers(graph: &Graph) -> Vec<TeacherProfile> {
    let teachers: Vec<EntityId> = graph.entities_of_kind(schema::TEACHER).map(|e| e.id).collect();
    let courses: BTreeMap<EntityId, BTreeSet<EntityId>> = teachers
        .iter()
        .map(|&t| (t, accepted_objects(graph, t, predicate::OFFERS, schema::COURSE).collect()))
        .collect();
    let mut offered_by: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    for (&teacher, cs) in &courses {
        for &c in cs {
            offered_by.entry(c).or_default().insert(teacher);
        }
    }
    teachers
        .into_iter()
        .map(|teacher| {
            let course_ids = courses[&teacher].clone();
            let mut category_counts = BTreeMap::new();
            for &c in &course_ids {
                for cat in accepted_objects(graph, c, predicate::IN_CATEGORY, schema::CATEGORY) {
                    let label = graph.entity(cat).expect("filtered on existence").label.clone();
                    *category_counts.entry(label).or_insert(0) += 1;
                }
            }
            let cooperative = course_ids.iter().any(|c| offered_by[c].len() > 1);
            TeacherProfile { teacher_id: teacher, course_ids, category_counts, cooperative }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StudentOverview {
    pub learned: BTreeSet<EntityId>,
    pub unlearned: BTreeSet<EntityId>,
}

pub fn student_overview(graph: &Graph, student: EntityId) -> Result<StudentOverview> {
    if graph.entity(student).is_none_or(|e| e.kind != schema::STUDENT) {
        return Err(AnalyticsError::UnknownStudent(student));
    }
    let learned: BTreeSet<EntityId> = accepted_objects(graph, student, predicate::LEARNED, schema::COURSE).collect();
    let unlearned = graph.entities_of_kind(schema::COURSE).map(|e| e.id).filter(|c| !learned.contains(c)).collect();
    Ok(StudentOverview { learned, unlearned })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Route {
    pub from_course_id: EntityId,
    pub to_course_id: EntityId,
    pub path: Vec<EntityId>,
    pub length: usize,
}

/// Undirected course/knowledge-point incidence graph: course--KP via
/// `covers`, course--course via `prerequisite`. Neighbor lists are sorted.
pub fn route_adjacency(graph: &Graph) -> BTreeMap<EntityId, BTreeSet<EntityId>> {
    let kind_of = |id: EntityId| graph.entity(id).map(|e| e.kind.as_str());
    let mut adj: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    for c in graph.entities_of_kind(schema::COURSE) {
        adj.entry(c.id).or_default();
    }
    for t in graph.triples().filter(|t| t.is_accepted()) {
        let Some(o) = t.object.entity() else { continue };
        let kinds = (kind_of(t.subject), kind_of(o));
        let linked = match t.predicate.as_str() {
            predicate::COVERS => matches!(
                kinds,
                (Some(schema::COURSE), Some(schema::KNOWLEDGE_POINT))
                    | (Some(schema::KNOWLEDGE_POINT), Some(schema::COURSE))
            ),
            predicate::PREREQUISITE => kinds == (Some(schema::COURSE), Some(schema::COURSE)),
            _ => false,
        };
        if linked && t.subject != o {
            adj.entry(t.subject).or_default().insert(o);
            adj.entry(o).or_default().insert(t.subject);
        }
    }
    adj
}

/// Breadth-first shortest route; among equal-length routes the one found by
/// expanding smaller ids first wins.
pub fn learning_route(graph: &Graph, from: EntityId, to: EntityId) -> Result<Route> {
    for id in [from, to] {
        if graph.entity(id).is_none_or(|e| e.kind != schema::COURSE) {
            return Err(AnalyticsError::UnknownCourse(id));
        }
    }
    let adj = route_adjacency(graph);
    let mut parent: BTreeMap<EntityId, EntityId> = BTreeMap::new();
    let mut seen: BTreeSet<EntityId> = [from].into();
    let mut queue = VecDeque::from([from]);
    while let Some(node) = queue.pop_front() {
        if node == to {
            break;
        }
        for &next in adj.get(&node).into_iter().flatten() {
            if seen.insert(next) {
                parent.insert(next, node);
                queue.push_back(next);
            }
        }
    }
    if !seen.contains(&to) {
        return Err(AnalyticsError::NoRoute(from, to));
    }
    let mut path = vec![to];
    while let Some(&p) = parent.get(path.last().expect("non-empty")) {
        path.push(p);
    }
    path.reverse();
    Ok(Route { from_course_id: from, to_course_id: to, length: path.len() - 1, path })
}
