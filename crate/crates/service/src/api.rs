//! Transport-independent request dispatch.
//!
//! [`Service::handle`] maps an [`ApiRequest`] to an [`ApiResponse`]. The HTTP
//! layer only translates to and from these types, so every endpoint and
//! permission rule can be exercised without a socket.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use kgcrowd::analytics::{self, SubgraphKind};
use kgcrowd::crowd::{Payload, Role};
use kgcrowd::engine::{Command, Effect, Engine, EngineConfig, EngineError};
use kgcrowd::graph::{self, EntityEdit, Object, Pattern, Status};
use kgcrowd::ids::{ChallengeId, EntityId, GroupId, LedgerId, SessionId, TaskId, TripleId, UserId};
use kgcrowd::recommend::LearnerRecord;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::ApiError;
use crate::log::{EventLog, LogError, Record};

#[derive(Debug, Clone, PartialEq)]
pub struct ApiRequest {
    pub method: String,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub token: Option<String>,
    pub body: Option<Value>,
}

impl ApiRequest {
    /// `target` is a path with an optional `?a=1&b=2` query.
    pub fn new(method: &str, target: &str) -> Self {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        ApiRequest {
            method: method.to_ascii_uppercase(),
            path: path.to_string(),
            query: parse_query(query),
            token: None,
            body: None,
        }
    }

    pub fn token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn json(mut self, body: Value) -> Self {
        self.body = Some(body);
        self
    }
}

pub fn parse_query(query: &str) -> BTreeMap<String, String> {
    query
        .split('&')
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
            (k.to_string(), v.to_string())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl From<ApiError> for ApiResponse {
    fn from(e: ApiError) -> Self {
        ApiResponse { status: e.status, body: serde_json::to_value(&e).expect("error bodies serialize") }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub engine: EngineConfig,
    /// Mixed into session tokens.
    pub secret: String,
    /// Commands between automatic snapshots.
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { engine: EngineConfig::default(), secret: "kgcrowd-dev-secret".into(), snapshot_every: 1000 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Engine plus sessions, tokens and the optional event log.
#[derive(Debug)]
pub struct Service {
    engine: Engine,
    secret: String,
    tokens: HashMap<String, SessionId>,
    log: Option<EventLog>,
    snapshot_every: u64,
    since_snapshot: u64,
    /// Set once a log write failed; later writes are refused.
    poisoned: bool,
}

type Reply = Result<(u16, Value), ApiError>;

fn ok<T: serde::Serialize>(status: u16, value: T) -> Reply {
    Ok((status, serde_json::to_value(value).expect("responses serialize")))
}

fn parse_id<T: std::str::FromStr>(raw: &str) -> Result<T, ApiError> {
    raw.parse().map_err(|_| ApiError::not_found(format!("no such resource `{raw}`")))
}

fn body<T: DeserializeOwned>(req: &ApiRequest) -> Result<T, ApiError> {
    let value = req.body.clone().unwrap_or_else(|| json!({}));
    serde_json::from_value(value).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewUser {
    name: String,
    #[serde(default = "common_role")]
    role: Role,
}

fn common_role() -> Role {
    Role::Common
}

#[derive(Deserialize)]
struct LoginBody {
    user: Option<UserId>,
    name: Option<String>,
}

#[derive(Deserialize)]
struct AnswerBody {
    answer: String,
}

#[derive(Deserialize)]
struct NewEntity {
    kind: String,
    label: String,
    #[serde(default)]
    attrs: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct NewTriple {
    subject: EntityId,
    predicate: String,
    object: Object,
    confidence: Option<f64>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct TripleChange {
    status: Option<Status>,
    confidence_delta: Option<f64>,
}

#[derive(Deserialize)]
struct NewGroup {
    #[serde(default)]
    topic: Pattern,
    admin: Option<UserId>,
}

#[derive(Deserialize)]
struct Membership {
    user: Option<UserId>,
}

#[derive(Deserialize)]
struct Assignment {
    task: TaskId,
    member: UserId,
}

#[derive(Deserialize)]
struct Batch {
    batch: u64,
}

#[derive(Deserialize)]
struct CompletionBody {
    payload: Payload,
}

#[derive(Deserialize)]
struct VoteBody {
    unequal: bool,
}

struct Caller {
    session: SessionId,
    user: UserId,
}

impl Service {
    pub fn in_memory(config: ServiceConfig) -> Result<Self, ServiceError> {
        let engine = Engine::new(config.engine.clone())?;
        Ok(Service::assemble(engine, &config, None))
    }

    /// Replays the log at `path`, or starts a fresh one there.
    pub fn open(path: &Path, config: ServiceConfig) -> Result<Self, ServiceError> {
        if path.exists() {
            let (log, engine) = EventLog::open(path)?;
            Ok(Service::assemble(engine, &config, Some(log)))
        } else {
            let engine = Engine::new(config.engine.clone())?;
            let log = EventLog::create(path, &engine)?;
            Ok(Service::assemble(engine, &config, Some(log)))
        }
    }

    /// Starts from a prepared engine, writing a new log if `path` is given.
    pub fn with_engine(engine: Engine, config: &ServiceConfig, path: Option<&Path>) -> Result<Self, ServiceError> {
        let log = path.map(|p| EventLog::create(p, &engine)).transpose()?;
        Ok(Service::assemble(engine, config, log))
    }

    fn assemble(engine: Engine, config: &ServiceConfig, log: Option<EventLog>) -> Self {
        let mut service = Service {
            engine,
            secret: config.secret.clone(),
            tokens: HashMap::new(),
            log,
            snapshot_every: config.snapshot_every.max(1),
            since_snapshot: 0,
            poisoned: false,
        };
        let sessions: Vec<SessionId> = service.engine.sessions().map(|s| s.id).collect();
        for id in sessions {
            let token = service.token_for(id);
            service.tokens.insert(token, id);
        }
        service
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Deterministic so tokens survive a replay.
    pub fn token_for(&self, session: SessionId) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.secret.as_bytes());
        hasher.update(b":");
        hasher.update(session.to_string().as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn snapshot(&mut self) -> Result<(), LogError> {
        if let Some(log) = &mut self.log {
            log.append(&Record::Snapshot(Box::new(self.engine.clone())))?;
            self.since_snapshot = 0;
        }
        Ok(())
    }

    /// Applies a command and logs it once it succeeded.
    pub fn execute(&mut self, command: Command) -> Result<Effect, ApiError> {
        if self.poisoned {
            return Err(ApiError::new(503, "LogUnavailable", "event log write failed earlier; restart to recover"));
        }
        let effect = self.engine.apply(command.clone())?;
        if let Some(log) = &mut self.log {
            let written = log.append(&Record::Command(command)).and_then(|_| {
                self.since_snapshot += 1;
                if self.since_snapshot >= self.snapshot_every {
                    log.append(&Record::Snapshot(Box::new(self.engine.clone())))?;
                    self.since_snapshot = 0;
                }
                Ok(())
            });
            if let Err(e) = written {
                tracing::error!(error = %e, "event log write failed");
                self.poisoned = true;
                return Err(ApiError::new(503, "LogUnavailable", e.to_string()));
            }
        }
        Ok(effect)
    }

    pub fn handle(&mut self, req: &ApiRequest) -> ApiResponse {
        match self.route(req) {
            Ok((status, body)) => ApiResponse { status, body },
            Err(e) => e.into(),
        }
    }

    fn caller(&self, req: &ApiRequest, allow_pending: bool) -> Result<Caller, ApiError> {
        let token = req.token.as_deref().ok_or_else(ApiError::unauthenticated)?;
        let session = *self.tokens.get(token).ok_or_else(ApiError::unauthenticated)?;
        let s = self.engine.session(session).ok_or_else(ApiError::unauthenticated)?;
        if s.pending_challenge.is_some() && !allow_pending {
            return Err(ApiError::challenge_pending());
        }
        Ok(Caller { session, user: s.user_id })
    }

    fn route(&mut self, req: &ApiRequest) -> Reply {
        let segments: Vec<&str> = req.path.trim_matches('/').split('/').filter(|s| !s.is_empty()).collect();
        let m = req.method.as_str();
        match (m, segments.as_slice()) {
            ("POST", ["users"]) => self.create_user(req),
            ("POST", ["login"]) => self.login(req),
            ("POST", ["logout"]) => {
                let c = self.caller(req, true)?;
                self.execute(Command::Logout { session: c.session })?;
                self.tokens.retain(|_, s| *s != c.session);
                ok(200, json!({}))
            }
            ("POST", ["captcha", id, "answer"]) => {
                let c = self.caller(req, true)?;
                let challenge: ChallengeId = parse_id(id)?;
                let AnswerBody { answer } = body(req)?;
                let effect = self.execute(Command::AnswerChallenge { session: c.session, challenge, answer })?;
                ok(200, effect)
            }
            ("GET", ["me"]) => {
                let c = self.caller(req, false)?;
                ok(200, self.engine.user(c.user)?)
            }
            ("GET", ["tasks"]) => {
                let c = self.caller(req, false)?;
                ok(200, self.engine.visible_tasks(c.user)?)
            }
            ("POST", ["tasks", "allocate"]) => {
                let c = self.caller(req, false)?;
                let Batch { batch } = body(req)?;
                ok(201, self.execute(Command::AllocateTasks { actor: c.user, batch })?)
            }
            ("POST", ["tasks", id, "complete"]) => {
                let c = self.caller(req, false)?;
                let task = parse_id(id)?;
                let CompletionBody { payload } = body(req)?;
                ok(200, self.execute(Command::CompleteTask { actor: c.user, task, payload })?)
            }
            ("POST", ["groups"]) => {
                let c = self.caller(req, false)?;
                let NewGroup { topic, admin } = body(req)?;
                ok(201, self.execute(Command::CreateGroup { actor: c.user, topic, admin })?)
            }
            ("POST", ["groups", id, "members"]) => {
                let c = self.caller(req, false)?;
                let group: GroupId = parse_id(id)?;
                let Membership { user } = body(req)?;
                let user = user.unwrap_or(c.user);
                ok(200, self.execute(Command::JoinGroup { actor: c.user, user, group })?)
            }
            ("POST", ["groups", id, "assign"]) => {
                let c = self.caller(req, false)?;
                let group: GroupId = parse_id(id)?;
                let Assignment { task, member } = body(req)?;
                if self.engine.crowd.task(task).is_some_and(|t| t.group_id != group) {
                    return Err(ApiError::not_found(format!("task {task} does not belong to {group}")));
                }
                ok(200, self.execute(Command::AssignTask { actor: c.user, task, member })?)
            }
            ("DELETE", ["groups", id]) => {
                let c = self.caller(req, false)?;
                let group = parse_id(id)?;
                ok(200, self.execute(Command::DissolveGroup { actor: c.user, group })?)
            }
            ("GET", ["graph"]) => {
                self.caller(req, false)?;
                let pattern = pattern_from_query(&req.query)?;
                let result = self.engine.graph.query(&pattern);
                ok(200, json!({ "entities": result.entities, "triples": result.triples }))
            }
            ("GET", ["graph", "export"]) => {
                self.caller(req, false)?;
                ok(200, json!({ "format": graph::FORMAT_VERSION, "text": graph::export(&self.engine.graph) }))
            }
            ("POST", ["graph", "entities"]) => {
                let c = self.caller(req, false)?;
                let NewEntity { kind, label, attrs } = body(req)?;
                ok(201, self.execute(Command::AddEntity { actor: c.user, kind, label, attrs })?)
            }
            ("PATCH", ["graph", "entities", id]) => {
                let c = self.caller(req, false)?;
                let id = parse_id(id)?;
                let edit: EntityEdit = body(req)?;
                ok(200, self.execute(Command::EditEntity { actor: c.user, id, edit })?)
            }
            ("DELETE", ["graph", "entities", id]) => {
                let c = self.caller(req, false)?;
                let id = parse_id(id)?;
                ok(200, self.execute(Command::DeleteEntity { actor: c.user, id })?)
            }
            ("POST", ["graph", "triples"]) => {
                let c = self.caller(req, false)?;
                let NewTriple { subject, predicate, object, confidence } = body(req)?;
                ok(201, self.execute(Command::AddTriple { actor: c.user, subject, predicate, object, confidence })?)
            }
            ("PATCH", ["graph", "triples", id]) => {
                let c = self.caller(req, false)?;
                let id: TripleId = parse_id(id)?;
                let TripleChange { status, confidence_delta } = body(req)?;
                ok(200, self.execute(Command::UpdateTriple { actor: c.user, id, status, confidence_delta })?)
            }
            ("DELETE", ["graph", "triples", id]) => {
                let c = self.caller(req, false)?;
                let id = parse_id(id)?;
                ok(200, self.execute(Command::DeleteTriple { actor: c.user, id })?)
            }
            ("POST", ["graph", "review"]) => {
                let c = self.caller(req, false)?;
                ok(200, self.execute(Command::Review { actor: c.user })?)
            }
            ("GET", ["subgraphs", kind]) => {
                self.caller(req, false)?;
                let kind = SubgraphKind::parse(kind)?;
                ok(200, analytics::extract_subgraph(&self.engine.graph, kind))
            }
            ("GET", ["routes"]) => {
                self.caller(req, false)?;
                let get = |k: &str| -> Result<EntityId, ApiError> {
                    let raw = req.query.get(k).ok_or_else(|| ApiError::bad_request(format!("missing `{k}`")))?;
                    raw.parse().map_err(|_| ApiError::bad_request(format!("bad `{k}`")))
                };
                let (from, to) = (get("from")?, get("to")?);
                ok(200, analytics::learning_route(&self.engine.graph, from, to)?)
            }
            ("GET", ["students", id, "recommendations"]) => {
                self.caller(req, false)?;
                let student = parse_id(id)?;
                let p = match req.query.get("p").or_else(|| req.query.get("P")) {
                    Some(raw) => Some(raw.parse::<f64>().map_err(|_| ApiError::bad_request("bad `p`"))?),
                    None => None,
                };
                ok(200, self.engine.recommendations(student, p)?)
            }
            ("PUT", ["students", id, "record"]) => {
                let c = self.caller(req, false)?;
                let student: EntityId = parse_id(id)?;
                let mut value = req.body.clone().unwrap_or_else(|| json!({}));
                let Some(obj) = value.as_object_mut() else { return Err(ApiError::bad_request("expected an object")) };
                obj.insert("studentId".into(), json!(student));
                let record: LearnerRecord =
                    serde_json::from_value(value).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))?;
                ok(200, self.execute(Command::PutLearnerRecord { actor: c.user, record })?)
            }
            ("GET", ["ambiguity", "open"]) => {
                self.caller(req, false)?;
                ok(200, self.engine.open_ambiguities())
            }
            ("POST", ["ambiguity", id, "vote"]) => {
                let c = self.caller(req, false)?;
                let ledger: LedgerId = parse_id(id)?;
                let VoteBody { unequal } = body(req)?;
                ok(200, self.execute(Command::CastVote { actor: c.user, ledger, unequal })?)
            }
            (_, segs) if is_known_path(segs) => Err(ApiError::method_not_allowed()),
            _ => Err(ApiError::not_found(format!("no route for {} {}", req.method, req.path))),
        }
    }

    fn create_user(&mut self, req: &ApiRequest) -> Reply {
        let actor = match req.token {
            Some(_) => Some(self.caller(req, false)?.user),
            None => None,
        };
        let NewUser { name, role } = body(req)?;
        ok(201, self.execute(Command::CreateUser { actor, role, name })?)
    }

    fn login(&mut self, req: &ApiRequest) -> Reply {
        let LoginBody { user, name } = body(req)?;
        let user = match (user, name) {
            (Some(id), _) => self.engine.crowd.user(id).map(|u| u.id),
            (None, Some(name)) => self.engine.crowd.find_user_by_name(name.trim()).map(|u| u.id),
            (None, None) => return Err(ApiError::bad_request("give `user` or `name`")),
        };
        let user = user.ok_or_else(|| ApiError::new(401, "Unauthenticated", "unknown user"))?;
        let Effect::Login(result) = self.execute(Command::Login { user })? else {
            unreachable!("login yields a login result")
        };
        let token = self.token_for(result.session.id);
        self.tokens.insert(token.clone(), result.session.id);
        ok(
            200,
            json!({
                "token": token,
                "userId": user,
                "sessionId": result.session.id,
                "challenge": result.challenge,
            }),
        )
    }
}

fn is_known_path(segs: &[&str]) -> bool {
    matches!(
        segs,
        ["users"]
            | ["login"]
            | ["logout"]
            | ["me"]
            | ["captcha", _, "answer"]
            | ["tasks"]
            | ["tasks", "allocate"]
            | ["tasks", _, "complete"]
            | ["groups"]
            | ["groups", _]
            | ["groups", _, "members" | "assign"]
            | ["graph"]
            | ["graph", "export" | "entities" | "triples" | "review"]
            | ["graph", "entities" | "triples", _]
            | ["subgraphs", _]
            | ["routes"]
            | ["students", _, "recommendations" | "record"]
            | ["ambiguity", "open"]
            | ["ambiguity", _, "vote"]
    )
}

fn pattern_from_query(query: &BTreeMap<String, String>) -> Result<Pattern, ApiError> {
    let bad = |k: &str| ApiError::bad_request(format!("bad `{k}`"));
    Ok(Pattern {
        kind: query.get("kind").cloned(),
        subject: query.get("subject").map(|s| s.parse().map_err(|_| bad("subject"))).transpose()?,
        predicate: query.get("predicate").cloned(),
        object: query.get("object").map(|o| o.parse().map(Object::Entity).map_err(|_| bad("object"))).transpose()?,
        status: query.get("status").map(|s| Status::parse(s).ok_or_else(|| bad("status"))).transpose()?,
    })
}
