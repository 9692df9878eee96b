#![allow(dead_code)]

pub mod matrix;

use std::collections::BTreeMap;

use kgcrowd::consensus::{Closing, Slot, SlotKey};
use kgcrowd::crowd::{Payload, Role, Task, TaskKind, TaskTarget};
use kgcrowd::engine::{Command, Effect, Engine, EngineConfig};
use kgcrowd::graph::{Object, Status};
use kgcrowd::ids::{EntityId, GroupId, LedgerId, TaskId, TripleId, UserId};
use kgcrowd_service::{ApiRequest, ApiResponse, Service, ServiceConfig};
use serde_json::{json, Value};

pub const ROLES: [&str; 4] = ["common", "groupAdmin", "systemAdmin", "anonymous"];

/// A small populated deployment with one logged-in user per role.
pub struct Fixture {
    pub service: Service,
    /// Tokens for common, group admin and system admin, in that order.
    pub tokens: [String; 3],
    pub root: UserId,
    pub gadmin: UserId,
    pub alice: UserId,
    pub bob: UserId,
    pub carol: UserId,
    pub course: EntityId,
    pub next_course: EntityId,
    pub kp: EntityId,
    pub exercise: EntityId,
    pub student: EntityId,
    pub loose: EntityId,
    pub admin_triple: TripleId,
    pub alice_triple: TripleId,
    pub group: GroupId,
    pub open_task: TaskId,
    pub alice_task: TaskId,
    pub alice_payload: Value,
    pub ledger: LedgerId,
}

fn user(e: &mut Engine, actor: Option<UserId>, role: Role, name: &str) -> UserId {
    match e.apply(Command::CreateUser { actor, role, name: name.into() }).unwrap() {
        Effect::User(u) => u.id,
        other => panic!("unexpected {other:?}"),
    }
}

fn entity(e: &mut Engine, actor: UserId, kind: &str, label: &str) -> EntityId {
    match e.apply(Command::AddEntity { actor, kind: kind.into(), label: label.into(), attrs: BTreeMap::new() }).unwrap()
    {
        Effect::Entity(x) => x.id,
        other => panic!("unexpected {other:?}"),
    }
}

fn triple(e: &mut Engine, actor: UserId, s: EntityId, p: &str, o: EntityId) -> TripleId {
    let cmd =
        Command::AddTriple { actor, subject: s, predicate: p.into(), object: Object::Entity(o), confidence: None };
    match e.apply(cmd).unwrap() {
        Effect::Triple(t) => t.id,
        other => panic!("unexpected {other:?}"),
    }
}

/// A payload that fits the task's kind.
pub fn payload_for(task: &Task, fallback_object: EntityId) -> Payload {
    match (task.kind, task.target) {
        (TaskKind::TripleVerification, _) => Payload::Vote { valid: true },
        (TaskKind::RelationExpansion, TaskTarget::Entity(subject)) => {
            Payload::Proposal { subject, predicate: "mentions".into(), object: Object::Entity(fallback_object) }
        }
        _ => Payload::Attributes { attrs: BTreeMap::from([("description".to_string(), "filled in".to_string())]) },
    }
}

pub fn engine_with_users() -> (Engine, [UserId; 5]) {
    let mut e = Engine::new(EngineConfig::default()).unwrap();
    let root = user(&mut e, None, Role::SystemAdmin, "root");
    let gadmin = user(&mut e, Some(root), Role::GroupAdmin, "gadmin");
    let alice = user(&mut e, None, Role::Common, "alice");
    let bob = user(&mut e, None, Role::Common, "bob");
    let carol = user(&mut e, None, Role::Common, "carol");
    (e, [root, gadmin, alice, bob, carol])
}

pub fn fixture() -> Fixture {
    let (mut e, [root, gadmin, alice, bob, carol]) = engine_with_users();
    // Logging in before the graph has content means no challenge is pending.
    let mut sessions = Vec::new();
    for u in [alice, gadmin, root] {
        match e.apply(Command::Login { user: u }).unwrap() {
            Effect::Login(l) => {
                assert!(l.challenge.is_none());
                sessions.push(l.session.id);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    let course = entity(&mut e, root, "course", "Algebra");
    let kp = entity(&mut e, root, "knowledgepoint", "Linear equations");
    let exercise = entity(&mut e, root, "exercise", "Exercise 1");
    let student = entity(&mut e, root, "student", "Student A");
    let loose = entity(&mut e, root, "note", "Loose note");
    let next_course = entity(&mut e, root, "course", "Calculus");
    let admin_triple = triple(&mut e, root, course, "covers", kp);
    let accepted = [
        admin_triple,
        triple(&mut e, root, exercise, "exercise-of", kp),
        triple(&mut e, root, exercise, "resource-of", course),
        triple(&mut e, root, next_course, "prerequisite", course),
    ];
    for id in accepted {
        e.apply(Command::UpdateTriple { actor: root, id, status: Some(Status::Accepted), confidence_delta: None })
            .unwrap();
    }
    let alice_triple = triple(&mut e, alice, student, "learned", course);

    let group = match e.apply(Command::CreateGroup { actor: gadmin, topic: Default::default(), admin: None }).unwrap() {
        Effect::Group(g) => g.id,
        other => panic!("unexpected {other:?}"),
    };
    e.apply(Command::JoinGroup { actor: alice, user: alice, group }).unwrap();
    e.apply(Command::JoinGroup { actor: gadmin, user: bob, group }).unwrap();
    let tasks = match e.apply(Command::AllocateTasks { actor: root, batch: 4 }).unwrap() {
        Effect::Tasks(t) => t,
        other => panic!("unexpected {other:?}"),
    };
    let alice_task = tasks[0].id;
    let open_task = tasks[1].id;
    e.apply(Command::AssignTask { actor: gadmin, task: alice_task, member: alice }).unwrap();
    let alice_payload = serde_json::to_value(payload_for(&tasks[0], course)).unwrap();

    let ledger = e.book.open_ledger(SlotKey { triple: admin_triple, slot: Slot::Object });
    for answer in ["linear equations", "linear equations", "linear equations", "equations"] {
        e.book.record(ledger, answer).unwrap();
    }
    assert!(matches!(e.book.close(ledger).unwrap(), Closing::Ambiguity(_)));

    let service = Service::with_engine(e, &ServiceConfig::default(), None).unwrap();
    let tokens = [0, 1, 2].map(|i| service.token_for(sessions[i]));
    Fixture {
        service,
        tokens,
        root,
        gadmin,
        alice,
        bob,
        carol,
        course,
        next_course,
        kp,
        exercise,
        student,
        loose,
        admin_triple,
        alice_triple,
        group,
        open_task,
        alice_task,
        alice_payload,
        ledger,
    }
}

impl Fixture {
    /// Sends `req` as role index `who` (3 is anonymous).
    pub fn send(&mut self, who: usize, req: ApiRequest) -> ApiResponse {
        let req = match self.tokens.get(who) {
            Some(t) => req.token(t.clone()),
            None => req,
        };
        self.service.handle(&req)
    }
}

pub fn post(path: &str, body: Value) -> ApiRequest {
    ApiRequest::new("POST", path).json(body)
}

pub fn empty() -> Value {
    json!({})
}
