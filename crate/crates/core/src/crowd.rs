//! Users, groups, tasks and the reward mechanism.
//!
//! Task batches are split across groups in proportion to `score + 1`. Each
//! completed task pays the assignee and the assignee's group the same reward,
//! so a group's score is always the sum of its completed-task rewards.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::{EntityEdit, Graph, GraphError, Object, Origin, Pattern, Status};
use crate::ids::{Counter, EntityId, GroupId, TaskId, TripleId, UserId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrowdError {
    #[error("not authorized")]
    Unauthorized,
    #[error("user {0} already belongs to a group")]
    AlreadyInGroup(UserId),
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("only common users can be group members")]
    NotCommonUser(UserId),
    #[error("user {0} is not a member of the task's group")]
    NotMember(UserId),
    #[error("no group has eligible work")]
    NoEligibleGroups,
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("task is not assigned to this user")]
    NotAssignee,
    #[error("task {task} is {status:?}")]
    WrongState { task: TaskId, status: TaskStatus },
    #[error("payload does not match task kind {0:?}")]
    WrongPayloadKind(TaskKind),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T> = std::result::Result<T, CrowdError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Role {
    Common,
    GroupAdmin,
    SystemAdmin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct User {
    pub id: UserId,
    pub name: String,
    pub role: Role,
    pub score: u64,
    pub group_id: Option<GroupId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Group {
    pub id: GroupId,
    pub admin_user_id: UserId,
    pub topic: Pattern,
    pub score: u64,
    pub member_ids: BTreeSet<UserId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TaskKind {
    TripleVerification,
    ConceptPerfection,
    AttributePerfection,
    RelationExpansion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type", content = "id")]
pub enum TaskTarget {
    Triple(TripleId),
    Entity(EntityId),
}

/// A kind of work and what it applies to.
pub type WorkItem = (TaskKind, TaskTarget);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TaskStatus {
    Open,
    Assigned,
    Completed,
}

impl TaskStatus {
    /// Only open -> assigned -> completed.
    pub fn can_advance_to(self, to: TaskStatus) -> bool {
        matches!((self, to), (TaskStatus::Open, TaskStatus::Assigned) | (TaskStatus::Assigned, TaskStatus::Completed))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type")]
pub enum Payload {
    Vote { valid: bool },
    Attributes { attrs: BTreeMap<String, String> },
    Proposal { subject: EntityId, predicate: String, object: Object },
}

impl Payload {
    fn fits(&self, kind: TaskKind) -> bool {
        matches!(
            (self, kind),
            (Payload::Vote { .. }, TaskKind::TripleVerification)
                | (Payload::Attributes { .. }, TaskKind::ConceptPerfection | TaskKind::AttributePerfection)
                | (Payload::Proposal { .. }, TaskKind::RelationExpansion)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Task {
    pub id: TaskId,
    pub kind: TaskKind,
    pub target: TaskTarget,
    pub group_id: GroupId,
    pub assignee_id: Option<UserId>,
    pub status: TaskStatus,
    pub result: Option<Payload>,
    /// Reward paid on completion; zero until then.
    pub reward: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CrowdConfig {
    pub reward: u64,
    pub task_delta: f64,
    /// Round-robin allocated tasks onto group members.
    pub auto_assign: bool,
    /// Live triples below this confidence still need verification.
    pub accept_threshold: f64,
    pub min_attrs: usize,
    pub min_links: usize,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        CrowdConfig {
            reward: 1,
            task_delta: 0.1,
            auto_assign: false,
            accept_threshold: 0.8,
            min_attrs: 2,
            min_links: 2,
        }
    }
}

/// Result of completing a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Completion {
    pub task: TaskId,
    pub reward: u64,
    pub user_score: u64,
    pub group_score: u64,
    pub confidence: Option<f64>,
    pub new_triple: Option<TripleId>,
}

/// Splits `total` across weights. Every share is the floor or ceiling of its
/// exact quota, and the shares sum to `total`. Leftover units go to the
/// largest remainder measured relative to the quota (ties: lower index), so
/// the smaller entitlement wins when absolute remainders are close.
pub fn apportion(weights: &[u64], total: u64) -> Vec<u64> {
    let sum: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if weights.is_empty() || sum == 0 {
        return vec![0; weights.len()];
    }
    let total128 = u128::from(total);
    // quota_i = numer_i / sum
    let numer: Vec<u128> = weights.iter().map(|&w| total128 * u128::from(w)).collect();
    let mut shares: Vec<u64> = numer.iter().map(|n| (n / sum) as u64).collect();
    let assigned: u64 = shares.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| !numer[i].is_multiple_of(sum)).collect();
    // remainder_i / quota_i = (numer_i mod sum) / numer_i
    order.sort_by(|&a, &b| {
        let lhs = (numer[a] % sum) * numer[b];
        let rhs = (numer[b] % sum) * numer[a];
        rhs.cmp(&lhs).then(a.cmp(&b))
    });
    for &i in order.iter().take((total - assigned) as usize) {
        shares[i] += 1;
    }
    shares
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Crowd {
    pub config: CrowdConfig,
    users: BTreeMap<UserId, User>,
    groups: BTreeMap<GroupId, Group>,
    tasks: BTreeMap<TaskId, Task>,
    next_user: Counter,
    next_group: Counter,
    next_task: Counter,
    round_robin: BTreeMap<GroupId, usize>,
}

impl Default for Crowd {
    fn default() -> Self {
        Crowd::new(CrowdConfig::default())
    }
}

impl Crowd {
    pub fn new(config: CrowdConfig) -> Self {
        Crowd {
            config,
            users: BTreeMap::new(),
            groups: BTreeMap::new(),
            tasks: BTreeMap::new(),
            next_user: Counter::default(),
            next_group: Counter::default(),
            next_task: Counter::default(),
            round_robin: BTreeMap::new(),
        }
    }

    pub fn user(&self, id: UserId) -> Option<&User> {
        self.users.get(&id)
    }

    pub fn users(&self) -> impl Iterator<Item = &User> {
        self.users.values()
    }

    pub fn group(&self, id: GroupId) -> Option<&Group> {
        self.groups.get(&id)
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.values()
    }

    pub fn task(&self, id: TaskId) -> Option<&Task> {
        self.tasks.get(&id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.values()
    }

    pub fn find_user_by_name(&self, name: &str) -> Option<&User> {
        self.users.values().find(|u| u.name == name)
    }

    fn user_ref(&self, id: UserId) -> Result<&User> {
        self.users.get(&id).ok_or(CrowdError::UnknownUser(id))
    }

    fn group_ref(&self, id: GroupId) -> Result<&Group> {
        self.groups.get(&id).ok_or(CrowdError::UnknownGroup(id))
    }

    /// System admins manage any group; group admins only their own.
    pub fn can_manage(&self, actor: UserId, group: GroupId) -> Result<bool> {
        let actor = self.user_ref(actor)?;
        let group = self.group_ref(group)?;
        Ok(match actor.role {
            Role::SystemAdmin => true,
            Role::GroupAdmin => group.admin_user_id == actor.id,
            Role::Common => false,
        })
    }

    pub fn register_user(&mut self, role: Role, name: impl Into<String>) -> UserId {
        let id = UserId(self.next_user.take());
        let mut name = name.into();
        if name.trim().is_empty() {
            name = id.to_string();
        }
        self.users.insert(id, User { id, name, role, score: 0, group_id: None });
        id
    }

    /// A group admin creates a group it administers; a system admin names
    /// the group admin explicitly.
    pub fn create_group(&mut self, actor: UserId, topic: Pattern, admin: Option<UserId>) -> Result<GroupId> {
        let actor_user = self.user_ref(actor)?;
        let admin = match actor_user.role {
            Role::Common => return Err(CrowdError::Unauthorized),
            Role::GroupAdmin => {
                if admin.is_some_and(|a| a != actor) {
                    return Err(CrowdError::Unauthorized);
                }
                actor
            }
            Role::SystemAdmin => {
                let admin = admin.ok_or(CrowdError::Unauthorized)?;
                if self.user_ref(admin)?.role != Role::GroupAdmin {
                    return Err(CrowdError::Unauthorized);
                }
                admin
            }
        };
        let id = GroupId(self.next_group.take());
        self.groups.insert(id, Group { id, admin_user_id: admin, topic, score: 0, member_ids: BTreeSet::new() });
        Ok(id)
    }

    /// A common user joins on its own behalf; admins of the group may enroll
    /// any common user.
    pub fn join_group(&mut self, actor: UserId, user: UserId, group: GroupId) -> Result<()> {
        self.group_ref(group)?;
        let member = self.user_ref(user)?;
        if actor != user && !self.can_manage(actor, group)? {
            return Err(CrowdError::Unauthorized);
        }
        if member.role != Role::Common {
            return Err(CrowdError::NotCommonUser(user));
        }
        if member.group_id.is_some() {
            return Err(CrowdError::AlreadyInGroup(user));
        }
        self.users.get_mut(&user).expect("checked").group_id = Some(group);
        self.groups.get_mut(&group).expect("checked").member_ids.insert(user);
        Ok(())
    }

    /// Removes the group and releases its members. Unfinished tasks are
    /// withdrawn so their targets return to the allocation pool; completed
    /// tasks stay for the score audit. Returns the withdrawn task ids.
    pub fn dissolve_group(&mut self, actor: UserId, group: GroupId) -> Result<Vec<TaskId>> {
        if !self.can_manage(actor, group)? {
            return Err(CrowdError::Unauthorized);
        }
        let removed = self.groups.remove(&group).expect("checked");
        for member in removed.member_ids {
            if let Some(u) = self.users.get_mut(&member) {
                u.group_id = None;
            }
        }
        let withdrawn: Vec<TaskId> = self
            .tasks
            .values()
            .filter(|t| t.group_id == group && t.status != TaskStatus::Completed)
            .map(|t| t.id)
            .collect();
        for id in &withdrawn {
            self.tasks.remove(id);
        }
        self.round_robin.remove(&group);
        Ok(withdrawn)
    }

    /// Work a group could receive, most urgent first: unsettled triples by
    /// ascending confidence, then entities needing perfection.
    pub fn eligible_items(&self, graph: &Graph, topic: &Pattern) -> Vec<WorkItem> {
        let result = graph.query(topic);
        let mut triples: Vec<_> = result
            .triples
            .iter()
            .filter(|t| t.status == Status::Candidate || (t.is_live() && t.confidence < self.config.accept_threshold))
            .collect();
        triples.sort_by(|a, b| a.confidence.total_cmp(&b.confidence).then(a.id.cmp(&b.id)));
        let mut items: Vec<WorkItem> =
            triples.iter().map(|t| (TaskKind::TripleVerification, TaskTarget::Triple(t.id))).collect();
        for e in result.entities {
            let kind = if e.attrs.is_empty() {
                Some(TaskKind::ConceptPerfection)
            } else if e.attrs.len() < self.config.min_attrs {
                Some(TaskKind::AttributePerfection)
            } else if graph.live_degree(e.id) < self.config.min_links {
                Some(TaskKind::RelationExpansion)
            } else {
                None
            };
            if let Some(kind) = kind {
                items.push((kind, TaskTarget::Entity(e.id)));
            }
        }
        items
    }

    /// Generates `batch` tasks and distributes them over groups with
    /// eligible work, in proportion to `score + 1`.
    pub fn generate_and_allocate(&mut self, graph: &Graph, batch: u64) -> Result<Vec<TaskId>> {
        if batch == 0 {
            return Err(CrowdError::EmptyBatch);
        }
        let eligible: Vec<(GroupId, u64, Vec<WorkItem>)> = self
            .groups
            .values()
            .map(|g| (g.id, g.score + 1, self.eligible_items(graph, &g.topic)))
            .filter(|(_, _, items)| !items.is_empty())
            .collect();
        if eligible.is_empty() {
            return Err(CrowdError::NoEligibleGroups);
        }
        let weights: Vec<u64> = eligible.iter().map(|(_, w, _)| *w).collect();
        let shares = apportion(&weights, batch);

        let mut created = Vec::with_capacity(batch as usize);
        for ((group, _, items), share) in eligible.into_iter().zip(shares) {
            for i in 0..share as usize {
                let (kind, target) = items[i % items.len()];
                let id = TaskId(self.next_task.take());
                self.tasks.insert(
                    id,
                    Task {
                        id,
                        kind,
                        target,
                        group_id: group,
                        assignee_id: None,
                        status: TaskStatus::Open,
                        result: None,
                        reward: 0,
                    },
                );
                if self.config.auto_assign {
                    self.auto_assign(group, id);
                }
                created.push(id);
            }
        }
        Ok(created)
    }

    fn auto_assign(&mut self, group: GroupId, task: TaskId) {
        let members: Vec<UserId> = self.groups[&group].member_ids.iter().copied().collect();
        if members.is_empty() {
            return;
        }
        let cursor = self.round_robin.entry(group).or_insert(0);
        let member = members[*cursor % members.len()];
        *cursor += 1;
        let t = self.tasks.get_mut(&task).expect("just inserted");
        t.assignee_id = Some(member);
        t.status = TaskStatus::Assigned;
    }

    pub fn assign_task(&mut self, actor: UserId, task: TaskId, member: UserId) -> Result<()> {
        let t = self.tasks.get(&task).ok_or(CrowdError::UnknownTask(task))?;
        if !self.can_manage(actor, t.group_id)? {
            return Err(CrowdError::Unauthorized);
        }
        if !t.status.can_advance_to(TaskStatus::Assigned) {
            return Err(CrowdError::WrongState { task, status: t.status });
        }
        if !self.groups[&t.group_id].member_ids.contains(&member) {
            return Err(CrowdError::NotMember(member));
        }
        let t = self.tasks.get_mut(&task).expect("checked");
        t.assignee_id = Some(member);
        t.status = TaskStatus::Assigned;
        Ok(())
    }

    /// Applies the payload to the graph, pays the reward and closes the task,
    /// all or nothing.
    pub fn complete_task(
        &mut self,
        graph: &mut Graph,
        user: UserId,
        task: TaskId,
        payload: Payload,
    ) -> Result<Completion> {
        let t = self.tasks.get(&task).ok_or(CrowdError::UnknownTask(task))?;
        if !t.status.can_advance_to(TaskStatus::Completed) {
            return Err(CrowdError::WrongState { task, status: t.status });
        }
        if t.assignee_id != Some(user) {
            return Err(CrowdError::NotAssignee);
        }
        if !payload.fits(t.kind) {
            return Err(CrowdError::WrongPayloadKind(t.kind));
        }
        let (group, target) = (t.group_id, t.target);

        let origin = Origin::crowd(user);
        let mut confidence = None;
        let mut new_triple = None;
        match (&payload, target) {
            (Payload::Vote { valid }, TaskTarget::Triple(tid)) => {
                let delta = if *valid { self.config.task_delta } else { -self.config.task_delta };
                confidence = Some(graph.adjust_confidence(tid, delta)?);
            }
            (Payload::Attributes { attrs }, TaskTarget::Entity(eid)) => {
                let edit = EntityEdit {
                    attrs: attrs.iter().map(|(k, v)| (k.clone(), Some(v.clone()))).collect(),
                    ..Default::default()
                };
                graph.edit_entity(origin, eid, edit)?;
            }
            (Payload::Proposal { subject, predicate, object }, _) => {
                new_triple = Some(graph.add_triple(
                    *subject,
                    predicate,
                    object.clone(),
                    origin,
                    origin.source.default_confidence(),
                )?);
            }
            _ => return Err(CrowdError::WrongPayloadKind(self.tasks[&task].kind)),
        }

        let reward = self.config.reward;
        let user_score = {
            let u = self.users.get_mut(&user).ok_or(CrowdError::UnknownUser(user))?;
            u.score += reward;
            u.score
        };
        let group_score = match self.groups.get_mut(&group) {
            Some(g) => {
                g.score += reward;
                g.score
            }
            None => 0,
        };
        let t = self.tasks.get_mut(&task).expect("checked");
        t.status = TaskStatus::Completed;
        t.result = Some(payload);
        t.reward = reward;
        Ok(Completion { task, reward, user_score, group_score, confidence, new_triple })
    }

    /// Micro-reward outside any group task (e.g. answering a captcha).
    pub fn reward_user(&mut self, user: UserId) -> Result<u64> {
        let reward = self.config.reward;
        let u = self.users.get_mut(&user).ok_or(CrowdError::UnknownUser(user))?;
        u.score += reward;
        Ok(u.score)
    }

    /// Group score recomputed from completed tasks.
    pub fn audited_group_score(&self, group: GroupId) -> u64 {
        self.tasks.values().filter(|t| t.group_id == group && t.status == TaskStatus::Completed).map(|t| t.reward).sum()
    }
}
