//! Typed, confidence-weighted triple store.
//!
//! All mutations go through `&mut Graph` and bump the logical clock exactly
//! once, so the clock is a total order over edits. Callers that share a graph
//! across threads wrap it in a lock; a half-applied edit is never observable
//! because every operation validates before it writes.

mod format;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{Counter, EntityId, TripleId, UserId};

pub use format::{export, import, FORMAT_VERSION};

/// Initial confidence for crowd or system proposals.
pub const DEFAULT_CROWD_CONFIDENCE: f64 = 0.5;
/// Initial confidence for imported triples.
pub const DEFAULT_IMPORT_CONFIDENCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("invalid kind `{0}`: kinds are non-empty, lowercase and contain no whitespace")]
    InvalidKind(String),
    #[error("predicate must not be empty")]
    EmptyPredicate,
    #[error("dangling reference to {0}")]
    DanglingReference(String),
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("unknown triple {0}")]
    UnknownTriple(TripleId),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition { from: Status, to: Status },
    #[error("entity {0} still has live incident triples")]
    EntityInUse(EntityId),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Source {
    Import,
    Crowd,
    System,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Import => "import",
            Source::Crowd => "crowd",
            Source::System => "system",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "import" => Some(Source::Import),
            "crowd" => Some(Source::Crowd),
            "system" => Some(Source::System),
            _ => None,
        }
    }

    pub fn default_confidence(self) -> f64 {
        match self {
            Source::Import => DEFAULT_IMPORT_CONFIDENCE,
            Source::Crowd | Source::System => DEFAULT_CROWD_CONFIDENCE,
        }
    }
}

/// Who is making an edit, before the store stamps it with a logical time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub source: Source,
    pub user: Option<UserId>,
}

impl Origin {
    pub fn import() -> Self {
        Origin { source: Source::Import, user: None }
    }

    pub fn system() -> Self {
        Origin { source: Source::System, user: None }
    }

    pub fn crowd(user: UserId) -> Self {
        Origin { source: Source::Crowd, user: Some(user) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub source: Source,
    pub user: Option<UserId>,
    pub logical_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Status {
    Candidate,
    Accepted,
    Eliminated,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Candidate => "candidate",
            Status::Accepted => "accepted",
            Status::Eliminated => "eliminated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "candidate" => Some(Status::Candidate),
            "accepted" => Some(Status::Accepted),
            "eliminated" => Some(Status::Eliminated),
            _ => None,
        }
    }

    /// The lifecycle table. Eliminated -> candidate is recirculation and
    /// accepted -> candidate is re-verification.
    pub fn can_transition_to(self, to: Status) -> bool {
        use Status::*;
        matches!(
            (self, to),
            (Candidate, Accepted) | (Candidate, Eliminated) | (Eliminated, Candidate) | (Accepted, Candidate)
        )
    }

    pub fn is_live(self) -> bool {
        self != Status::Eliminated
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type", content = "value")]
pub enum Object {
    Entity(EntityId),
    Literal(String),
}

impl Object {
    pub fn entity(&self) -> Option<EntityId> {
        match self {
            Object::Entity(id) => Some(*id),
            Object::Literal(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Entity {
    pub id: EntityId,
    pub kind: String,
    pub label: String,
    pub attrs: BTreeMap<String, String>,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Triple {
    pub id: TripleId,
    pub subject: EntityId,
    pub predicate: String,
    pub object: Object,
    pub confidence: f64,
    pub status: Status,
    pub provenance: Vec<Provenance>,
}

impl Triple {
    pub fn is_live(&self) -> bool {
        self.status.is_live()
    }

    pub fn is_accepted(&self) -> bool {
        self.status == Status::Accepted
    }

    pub fn touches(&self, entity: EntityId) -> bool {
        self.subject == entity || self.object.entity() == Some(entity)
    }

    /// The other endpoint when `entity` is one end and the object is an entity.
    pub fn other_end(&self, entity: EntityId) -> Option<EntityId> {
        let object = self.object.entity()?;
        if self.subject == entity {
            Some(object)
        } else if object == entity {
            Some(self.subject)
        } else {
            None
        }
    }
}

/// Filter over entities and triples. Every supplied field must match.
///
/// `kind` selects entities of that kind and triples with an endpoint of that
/// kind. Entities are only returned when no triple-only field is set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Pattern {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<EntityId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object: Option<Object>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
}

impl Pattern {
    pub fn kind(kind: impl Into<String>) -> Self {
        Pattern { kind: Some(kind.into()), ..Default::default() }
    }

    pub fn predicate(predicate: impl Into<String>) -> Self {
        Pattern { predicate: Some(predicate.into()), ..Default::default() }
    }

    fn has_triple_fields(&self) -> bool {
        self.subject.is_some() || self.predicate.is_some() || self.object.is_some() || self.status.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryResult<'a> {
    pub entities: Vec<&'a Entity>,
    pub triples: Vec<&'a Triple>,
}

/// Partial update for an entity. `None` leaves the field alone; an attr value
/// of `None` removes the key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct EntityEdit {
    pub kind: Option<String>,
    pub label: Option<String>,
    pub attrs: BTreeMap<String, Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    entities: BTreeMap<EntityId, Entity>,
    triples: BTreeMap<TripleId, Triple>,
    clock: u64,
    next_entity: Counter,
    next_triple: Counter,
    by_spo: BTreeMap<(EntityId, String, Object), TripleId>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct GraphRepr {
    clock: u64,
    next_entity: Counter,
    next_triple: Counter,
    entities: Vec<Entity>,
    triples: Vec<Triple>,
}

impl From<GraphRepr> for Graph {
    fn from(repr: GraphRepr) -> Self {
        Graph::from_parts(repr.clock, repr.next_entity, repr.next_triple, repr.entities, repr.triples)
    }
}

impl From<Graph> for GraphRepr {
    fn from(graph: Graph) -> Self {
        GraphRepr {
            clock: graph.clock,
            next_entity: graph.next_entity,
            next_triple: graph.next_triple,
            entities: graph.entities.into_values().collect(),
            triples: graph.triples.into_values().collect(),
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

pub fn validate_kind(kind: &str) -> Result<()> {
    let ok = !kind.is_empty() && !kind.chars().any(|c| c.is_whitespace() || c.is_uppercase());
    if ok {
        Ok(())
    } else {
        Err(GraphError::InvalidKind(kind.to_string()))
    }
}

fn validate_label(label: &str) -> Result<()> {
    if label.trim().is_empty() {
        Err(GraphError::EmptyLabel)
    } else {
        Ok(())
    }
}

fn validate_confidence(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(GraphError::ConfidenceOutOfRange(c))
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            entities: BTreeMap::new(),
            triples: BTreeMap::new(),
            clock: 0,
            next_entity: Counter::default(),
            next_triple: Counter::default(),
            by_spo: BTreeMap::new(),
        }
    }

    /// Rebuilds a graph from stored parts. Integrity is the caller's concern;
    /// the importer checks it before calling this.
    pub(crate) fn from_parts(
        clock: u64,
        next_entity: Counter,
        next_triple: Counter,
        entities: Vec<Entity>,
        triples: Vec<Triple>,
    ) -> Self {
        let by_spo = triples.iter().map(|t| ((t.subject, t.predicate.clone(), t.object.clone()), t.id)).collect();
        Graph {
            entities: entities.into_iter().map(|e| (e.id, e)).collect(),
            triples: triples.into_iter().map(|t| (t.id, t)).collect(),
            clock,
            next_entity,
            next_triple,
            by_spo,
        }
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn next_entity_id(&self) -> u64 {
        self.next_entity.peek()
    }

    pub fn next_triple_id(&self) -> u64 {
        self.next_triple.peek()
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn stamp(&mut self, origin: Origin) -> Provenance {
        Provenance { source: origin.source, user: origin.user, logical_time: self.tick() }
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn triple(&self, id: TripleId) -> Option<&Triple> {
        self.triples.get(&id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.values()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.triples.is_empty()
    }

    pub fn entities_of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Entity> + 'a {
        self.entities.values().filter(move |e| e.kind == kind)
    }

    /// Entities with the given kind and label, in id order.
    pub fn find_entities(&self, kind: &str, label: &str) -> Vec<&Entity> {
        self.entities.values().filter(|e| e.kind == kind && e.label == label).collect()
    }

    pub fn find_triple(&self, subject: EntityId, predicate: &str, object: &Object) -> Option<&Triple> {
        self.by_spo.get(&(subject, predicate.to_string(), object.clone())).and_then(|id| self.triples.get(id))
    }

    /// Human-readable rendering of an object.
    pub fn object_label<'a>(&'a self, object: &'a Object) -> &'a str {
        match object {
            Object::Entity(id) => self.entities.get(id).map(|e| e.label.as_str()).unwrap_or(""),
            Object::Literal(s) => s,
        }
    }

    pub fn add_entity(
        &mut self,
        kind: &str,
        label: &str,
        attrs: BTreeMap<String, String>,
        origin: Origin,
    ) -> Result<EntityId> {
        validate_label(label)?;
        validate_kind(kind)?;
        let id = EntityId(self.next_entity.take());
        let provenance = vec![self.stamp(origin)];
        self.entities.insert(id, Entity { id, kind: kind.to_string(), label: label.to_string(), attrs, provenance });
        Ok(id)
    }

    /// Stores a triple, or merges provenance into the existing one with the
    /// same (subject, predicate, object). A merge leaves confidence alone and
    /// brings an eliminated triple back as a candidate.
    pub fn add_triple(
        &mut self,
        subject: EntityId,
        predicate: &str,
        object: Object,
        origin: Origin,
        confidence: f64,
    ) -> Result<TripleId> {
        if predicate.trim().is_empty() {
            return Err(GraphError::EmptyPredicate);
        }
        if !self.entities.contains_key(&subject) {
            return Err(GraphError::DanglingReference(subject.to_string()));
        }
        if let Object::Entity(o) = &object {
            if !self.entities.contains_key(o) {
                return Err(GraphError::DanglingReference(o.to_string()));
            }
        }
        validate_confidence(confidence)?;

        let key = (subject, predicate.to_string(), object);
        if let Some(&existing) = self.by_spo.get(&key) {
            let prov = self.stamp(origin);
            let triple = self.triples.get_mut(&existing).expect("index points at a stored triple");
            triple.provenance.push(prov);
            if triple.status == Status::Eliminated {
                triple.status = Status::Candidate;
            }
            return Ok(existing);
        }

        let id = TripleId(self.next_triple.take());
        let status = if origin.source == Source::Import { Status::Accepted } else { Status::Candidate };
        let prov = self.stamp(origin);
        let (subject, predicate, object) = key.clone();
        self.triples.insert(id, Triple { id, subject, predicate, object, confidence, status, provenance: vec![prov] });
        self.by_spo.insert(key, id);
        Ok(id)
    }

    pub fn adjust_confidence(&mut self, id: TripleId, delta: f64) -> Result<f64> {
        if delta.is_nan() {
            return Err(GraphError::ConfidenceOutOfRange(delta));
        }
        if !self.triples.contains_key(&id) {
            return Err(GraphError::UnknownTriple(id));
        }
        self.tick();
        let triple = self.triples.get_mut(&id).expect("checked above");
        triple.confidence = (triple.confidence + delta).clamp(0.0, 1.0);
        Ok(triple.confidence)
    }

    pub fn set_status(&mut self, id: TripleId, status: Status) -> Result<&Triple> {
        let from = self.triples.get(&id).ok_or(GraphError::UnknownTriple(id))?.status;
        if !from.can_transition_to(status) {
            return Err(GraphError::IllegalTransition { from, to: status });
        }
        self.tick();
        let triple = self.triples.get_mut(&id).expect("checked above");
        triple.status = status;
        Ok(triple)
    }

    pub fn edit_entity(&mut self, actor: Origin, id: EntityId, edit: EntityEdit) -> Result<&Entity> {
        if !self.entities.contains_key(&id) {
            return Err(GraphError::UnknownEntity(id));
        }
        if let Some(label) = &edit.label {
            validate_label(label)?;
        }
        if let Some(kind) = &edit.kind {
            validate_kind(kind)?;
        }
        let prov = self.stamp(actor);
        let entity = self.entities.get_mut(&id).expect("checked above");
        if let Some(label) = edit.label {
            entity.label = label;
        }
        if let Some(kind) = edit.kind {
            entity.kind = kind;
        }
        for (key, value) in edit.attrs {
            match value {
                Some(v) => {
                    entity.attrs.insert(key, v);
                }
                None => {
                    entity.attrs.remove(&key);
                }
            }
        }
        entity.provenance.push(prov);
        Ok(entity)
    }

    pub fn delete_triple(&mut self, id: TripleId) -> Result<Triple> {
        let triple = self.triples.remove(&id).ok_or(GraphError::UnknownTriple(id))?;
        self.by_spo.remove(&(triple.subject, triple.predicate.clone(), triple.object.clone()));
        self.tick();
        Ok(triple)
    }

    /// Removes an entity. Live incident triples block the delete; eliminated
    /// ones go with it so no reference dangles.
    pub fn delete_entity(&mut self, id: EntityId) -> Result<Entity> {
        if !self.entities.contains_key(&id) {
            return Err(GraphError::UnknownEntity(id));
        }
        let incident: Vec<&Triple> = self.triples.values().filter(|t| t.touches(id)).collect();
        if incident.iter().any(|t| t.is_live()) {
            return Err(GraphError::EntityInUse(id));
        }
        let doomed: Vec<TripleId> = incident.iter().map(|t| t.id).collect();
        for tid in doomed {
            let t = self.triples.remove(&tid).expect("collected above");
            self.by_spo.remove(&(t.subject, t.predicate, t.object));
        }
        self.tick();
        Ok(self.entities.remove(&id).expect("checked above"))
    }

    fn endpoint_kind_matches(&self, triple: &Triple, kind: &str) -> bool {
        let kind_of = |id: EntityId| self.entities.get(&id).map(|e| e.kind.as_str());
        kind_of(triple.subject) == Some(kind) || triple.object.entity().and_then(kind_of) == Some(kind)
    }

    pub fn triple_matches(&self, triple: &Triple, pattern: &Pattern) -> bool {
        pattern.subject.is_none_or(|s| triple.subject == s)
            && pattern.predicate.as_ref().is_none_or(|p| &triple.predicate == p)
            && pattern.object.as_ref().is_none_or(|o| &triple.object == o)
            && pattern.status.is_none_or(|s| triple.status == s)
            && pattern.kind.as_ref().is_none_or(|k| self.endpoint_kind_matches(triple, k))
    }

    pub fn entity_matches(&self, entity: &Entity, pattern: &Pattern) -> bool {
        !pattern.has_triple_fields() && pattern.kind.as_ref().is_none_or(|k| &entity.kind == k)
    }

    /// Everything matching the pattern, ordered by id.
    pub fn query(&self, pattern: &Pattern) -> QueryResult<'_> {
        QueryResult {
            entities: self.entities.values().filter(|e| self.entity_matches(e, pattern)).collect(),
            triples: self.triples.values().filter(|t| self.triple_matches(t, pattern)).collect(),
        }
    }

    /// The `n` highest- and `n` lowest-confidence live triples. The two lists
    /// overlap when fewer than `2n` live triples exist.
    pub fn top_and_bottom(&self, n: usize) -> (Vec<TripleId>, Vec<TripleId>) {
        let mut live: Vec<&Triple> = self.triples.values().filter(|t| t.is_live()).collect();
        live.sort_by(|a, b| a.confidence.total_cmp(&b.confidence).then(a.id.cmp(&b.id)));
        let bottom = live.iter().take(n).map(|t| t.id).collect();
        live.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.id.cmp(&b.id)));
        let top = live.iter().take(n).map(|t| t.id).collect();
        (top, bottom)
    }

    /// Accepted triples touching `entity`.
    pub fn accepted_incident(&self, entity: EntityId) -> impl Iterator<Item = &Triple> {
        self.triples.values().filter(move |t| t.is_accepted() && t.touches(entity))
    }

    pub fn live_degree(&self, entity: EntityId) -> usize {
        self.triples.values().filter(|t| t.is_live() && t.touches(entity)).count()
    }

    /// Every triple endpoint resolves.
    pub fn check_integrity(&self) -> bool {
        self.triples.values().all(|t| {
            self.entities.contains_key(&t.subject) && t.object.entity().is_none_or(|o| self.entities.contains_key(&o))
        }) && self.by_spo.len() == self.triples.len()
    }

    /// Ids of accepted triples whose endpoints both lie in `nodes`.
    pub fn accepted_within(&self, nodes: &BTreeSet<EntityId>) -> BTreeSet<TripleId> {
        self.triples
            .values()
            .filter(|t| {
                t.is_accepted() && nodes.contains(&t.subject) && t.object.entity().is_some_and(|o| nodes.contains(&o))
            })
            .map(|t| t.id)
            .collect()
    }
}
