//! Personalized exercise recommendation.
//!
//! Past recommendation ranks attempted exercises by learning situation
//! `LS = (1 / R) * E`, where `R` is the share of the topic's resources the
//! learner has finished and `E` the learner's error rate on the exercise.
//! Exercises with `LS > P` are recommended. Incremental recommendation walks
//! the course structure outward from the courses a student has learned.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::analytics::{self, AnalyticsError};
use crate::graph::Graph;
use crate::ids::EntityId;
use crate::schema::{self, predicate};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecommendError {
    #[error("topic has no resources")]
    NoResources,
    #[error("nothing finished in this topic yet")]
    UnstartedTopic,
    #[error("value outside [0, 1]")]
    OutOfRange,
    #[error("unknown student {0}")]
    UnknownStudent(EntityId),
    #[error("invalid learner record: {0}")]
    InvalidRecord(String),
    #[error("threshold P must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
}

impl From<AnalyticsError> for RecommendError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::UnknownStudent(id) => RecommendError::UnknownStudent(id),
            other => RecommendError::InvalidRecord(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, RecommendError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ResourceType {
    Exercise,
    Video,
    Note,
    Other,
}

impl ResourceType {
    pub fn of_kind(kind: &str) -> Self {
        match kind {
            schema::EXERCISE => ResourceType::Exercise,
            schema::VIDEO => ResourceType::Video,
            schema::NOTE => ResourceType::Note,
            _ => ResourceType::Other,
        }
    }
}

/// Fraction of incorrect attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRate {
    pub incorrect: u32,
    pub attempts: u32,
}

impl ErrorRate {
    pub fn new(incorrect: u32, attempts: u32) -> Result<Self> {
        if attempts == 0 || incorrect > attempts {
            return Err(RecommendError::OutOfRange);
        }
        Ok(ErrorRate { incorrect, attempts })
    }

    pub fn ratio(self) -> Ratio<u64> {
        Ratio::new(u64::from(self.incorrect), u64::from(self.attempts))
    }

    pub fn value(self) -> f64 {
        f64::from(self.incorrect) / f64::from(self.attempts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnerRecord {
    pub student_id: EntityId,
    /// Course -> resource type -> finished resources.
    #[serde(default)]
    pub finished_resources: BTreeMap<EntityId, BTreeMap<ResourceType, BTreeSet<EntityId>>>,
    /// Exercise node -> error rate.
    #[serde(default)]
    pub error_rates: BTreeMap<EntityId, ErrorRate>,
}

impl LearnerRecord {
    pub fn new(student_id: EntityId) -> Self {
        LearnerRecord { student_id, finished_resources: BTreeMap::new(), error_rates: BTreeMap::new() }
    }

    pub fn finish(&mut self, course: EntityId, kind: ResourceType, resource: EntityId) {
        self.finished_resources.entry(course).or_default().entry(kind).or_default().insert(resource);
    }

    /// Every referenced resource exists, has the stated type and belongs to
    /// the stated course; every error rate is on an exercise node.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        if graph.entity(self.student_id).is_none_or(|e| e.kind != schema::STUDENT) {
            return Err(RecommendError::UnknownStudent(self.student_id));
        }
        for (course, by_type) in &self.finished_resources {
            let attached = course_resources(graph, *course);
            for (ty, resources) in by_type {
                for r in resources {
                    let entity = graph
                        .entity(*r)
                        .ok_or_else(|| RecommendError::InvalidRecord(format!("unknown resource {r}")))?;
                    if ResourceType::of_kind(&entity.kind) != *ty {
                        return Err(RecommendError::InvalidRecord(format!("{r} is not of type {ty:?}")));
                    }
                    if !attached.contains(r) {
                        return Err(RecommendError::InvalidRecord(format!("{r} does not belong to {course}")));
                    }
                }
            }
        }
        for exercise in self.error_rates.keys() {
            if graph.entity(*exercise).is_none_or(|e| e.kind != schema::EXERCISE) {
                return Err(RecommendError::InvalidRecord(format!("{exercise} is not an exercise")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecommendConfig {
    #[serde(rename = "P", alias = "p")]
    pub p: f64,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        RecommendConfig { p: 0.20 }
    }
}

impl RecommendConfig {
    pub fn new(p: f64) -> Result<Self> {
        let config = RecommendConfig { p };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p > 0.0 && self.p < 1.0 {
            Ok(())
        } else {
            Err(RecommendError::InvalidThreshold(self.p))
        }
    }
}

/// Resources attached to a course by accepted `resource-of` triples.
pub fn course_resources(graph: &Graph, course: EntityId) -> BTreeSet<EntityId> {
    graph
        .triples()
        .filter(|t| t.is_accepted() && t.predicate == predicate::RESOURCE_OF && t.object.entity() == Some(course))
        .map(|t| t.subject)
        .collect()
}

/// Courses an exercise (or any resource) belongs to.
pub fn resource_courses(graph: &Graph, resource: EntityId) -> BTreeSet<EntityId> {
    graph
        .triples()
        .filter(|t| t.is_accepted() && t.predicate == predicate::RESOURCE_OF && t.subject == resource)
        .filter_map(|t| t.object.entity())
        .filter(|c| graph.entity(*c).is_some_and(|e| e.kind == schema::COURSE))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRate {
    pub finished: u64,
    pub total: u64,
}

impl CompletionRate {
    pub fn ratio(self) -> Ratio<u64> {
        Ratio::new(self.finished, self.total)
    }

    pub fn value(self) -> f64 {
        self.finished as f64 / self.total as f64
    }
}

/// Finished resources over all resources of the topic's courses. A resource
/// shared by several topic courses counts once.
pub fn completion_rate(graph: &Graph, record: &LearnerRecord, topic: &BTreeSet<EntityId>) -> Result<CompletionRate> {
    let all: BTreeSet<EntityId> = topic.iter().flat_map(|&c| course_resources(graph, c)).collect();
    if all.is_empty() {
        return Err(RecommendError::NoResources);
    }
    let finished: BTreeSet<EntityId> = topic
        .iter()
        .filter_map(|c| record.finished_resources.get(c))
        .flat_map(|by_type| by_type.values().flatten().copied())
        .filter(|r| all.contains(r))
        .collect();
    Ok(CompletionRate { finished: finished.len() as u64, total: all.len() as u64 })
}

/// `LS = (1 / R) * E` over any exact or floating numeric type.
pub fn learning_situation<T>(rate: T, error: T) -> Result<T>
where
    T: Num + PartialOrd + Copy,
{
    let (zero, one) = (T::zero(), T::one());
    if rate < zero || rate > one || error < zero || error > one {
        return Err(RecommendError::OutOfRange);
    }
    if rate == zero {
        return Err(RecommendError::UnstartedTopic);
    }
    Ok(one / rate * error)
}

/// Learning situation of one exercise: finite, or unstarted (nothing in the
/// topic finished), which outranks every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type", content = "value")]
pub enum Situation {
    Unstarted,
    Score(f64),
}

impl Situation {
    pub fn exceeds(self, p: f64) -> bool {
        match self {
            Situation::Unstarted => true,
            Situation::Score(ls) => ls > p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PastEntry {
    pub exercise_id: EntityId,
    pub ls: Situation,
    pub error_rate: f64,
    pub completion: CompletionRate,
}

/// Exact learning situation of every attempted exercise that belongs to a
/// course, unfiltered and in record order.
pub fn exercise_situations(
    graph: &Graph,
    record: &LearnerRecord,
) -> Vec<(EntityId, Option<Ratio<u64>>, CompletionRate, ErrorRate)> {
    record
        .error_rates
        .iter()
        .filter_map(|(&exercise, &error)| {
            let topic = resource_courses(graph, exercise);
            let rate = completion_rate(graph, record, &topic).ok()?;
            let ls = match learning_situation(rate.ratio(), error.ratio()) {
                Ok(ls) => Some(ls),
                Err(RecommendError::UnstartedTopic) => None,
                Err(_) => return None,
            };
            Some((exercise, ls, rate, error))
        })
        .collect()
}

fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    r.to_f64().expect("u64 ratios convert")
}

/// Exercises with `LS > P`, unstarted first, then by LS descending, ties by id.
pub fn past_recommend(graph: &Graph, record: &LearnerRecord, config: &RecommendConfig) -> Vec<PastEntry> {
    let mut entries: Vec<(PastEntry, Option<Ratio<u64>>)> = exercise_situations(graph, record)
        .into_iter()
        .map(|(exercise_id, ls, completion, error)| {
            let situation = ls.map_or(Situation::Unstarted, |r| Situation::Score(ratio_to_f64(r)));
            (PastEntry { exercise_id, ls: situation, error_rate: error.value(), completion }, ls)
        })
        .filter(|(e, _)| e.ls.exceeds(config.p))
        .collect();
    entries.sort_by(|(a, ra), (b, rb)| match (ra, rb) {
        (None, None) => a.exercise_id.cmp(&b.exercise_id),
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => y.cmp(x).then(a.exercise_id.cmp(&b.exercise_id)),
    });
    entries.into_iter().map(|(e, _)| e).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IncrementalBuckets {
    pub characteristic_kp_specific_course: Vec<EntityId>,
    pub related_kp_specific_course: Vec<EntityId>,
    pub characteristic_kp_related_course: Vec<EntityId>,
    pub related_kp_related_course: Vec<EntityId>,
    /// No learned course to start from.
    pub unstarted_learner: bool,
}

impl IncrementalBuckets {
    pub fn as_lists(&self) -> [&Vec<EntityId>; 4] {
        [
            &self.characteristic_kp_specific_course,
            &self.related_kp_specific_course,
            &self.characteristic_kp_related_course,
            &self.related_kp_related_course,
        ]
    }
}

fn accepted_links<'a>(graph: &'a Graph, pred: &'a str) -> impl Iterator<Item = (EntityId, EntityId)> + 'a {
    graph
        .triples()
        .filter(move |t| t.is_accepted() && t.predicate == pred)
        .filter_map(|t| t.object.entity().map(|o| (t.subject, o)))
}

fn is_kind(graph: &Graph, id: EntityId, kind: &str) -> bool {
    graph.entity(id).is_some_and(|e| e.kind == kind)
}

/// Knowledge points a course set covers directly.
pub fn characteristic_kps(graph: &Graph, courses: &BTreeSet<EntityId>) -> BTreeSet<EntityId> {
    accepted_links(graph, predicate::COVERS)
        .filter_map(|(s, o)| {
            if courses.contains(&s) && is_kind(graph, o, schema::KNOWLEDGE_POINT) {
                Some(o)
            } else if courses.contains(&o) && is_kind(graph, s, schema::KNOWLEDGE_POINT) {
                Some(s)
            } else {
                None
            }
        })
        .collect()
}

/// Knowledge points one `related-to` hop from `kps`, excluding `kps`.
pub fn related_kps(graph: &Graph, kps: &BTreeSet<EntityId>) -> BTreeSet<EntityId> {
    accepted_links(graph, predicate::RELATED_TO)
        .filter_map(|(s, o)| {
            if kps.contains(&s) {
                Some(o)
            } else if kps.contains(&o) {
                Some(s)
            } else {
                None
            }
        })
        .filter(|k| !kps.contains(k) && is_kind(graph, *k, schema::KNOWLEDGE_POINT))
        .collect()
}

/// Exercises attached to any knowledge point in `kps`.
pub fn exercises_at(graph: &Graph, kps: &BTreeSet<EntityId>) -> BTreeSet<EntityId> {
    accepted_links(graph, predicate::EXERCISE_OF)
        .filter(|(s, o)| kps.contains(o) && is_kind(graph, *s, schema::EXERCISE))
        .map(|(s, _)| s)
        .collect()
}

pub fn incremental_recommend(graph: &Graph, student: EntityId) -> Result<IncrementalBuckets> {
    let overview = analytics::student_overview(graph, student)?;
    if overview.learned.is_empty() {
        return Ok(IncrementalBuckets { unstarted_learner: true, ..Default::default() });
    }
    let specific = overview.learned;
    let specific_char = characteristic_kps(graph, &specific);
    let related_courses: BTreeSet<EntityId> = overview
        .unlearned
        .into_iter()
        .filter(|c| !characteristic_kps(graph, &[*c].into()).is_disjoint(&specific_char))
        .collect();
    let related_char = characteristic_kps(graph, &related_courses);
    let kp_sets = [
        specific_char.clone(),
        related_kps(graph, &specific_char),
        related_char.clone(),
        related_kps(graph, &related_char),
    ];
    let mut claimed = BTreeSet::new();
    let mut lists: Vec<Vec<EntityId>> = Vec::with_capacity(4);
    for kps in &kp_sets {
        let bucket: Vec<EntityId> = exercises_at(graph, kps).into_iter().filter(|e| claimed.insert(*e)).collect();
        lists.push(bucket);
    }
    let mut lists = lists.into_iter();
    Ok(IncrementalBuckets {
        characteristic_kp_specific_course: lists.next().unwrap_or_default(),
        related_kp_specific_course: lists.next().unwrap_or_default(),
        characteristic_kp_related_course: lists.next().unwrap_or_default(),
        related_kp_related_course: lists.next().unwrap_or_default(),
        unstarted_learner: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecommendationReport {
    pub student_id: EntityId,
    #[serde(rename = "P")]
    pub p: f64,
    pub incremental: IncrementalBuckets,
    pub past: Vec<PastEntry>,
}

pub fn recommend(graph: &Graph, record: &LearnerRecord, config: &RecommendConfig) -> Result<RecommendationReport> {
    config.validate()?;
    let incremental = incremental_recommend(graph, record.student_id)?;
    Ok(RecommendationReport {
        student_id: record.student_id,
        p: config.p,
        incremental,
        past: past_recommend(graph, record, config),
    })
}
