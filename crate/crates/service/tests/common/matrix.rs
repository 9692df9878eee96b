use super::{empty, post, Fixture};
use kgcrowd_service::ApiRequest;
use serde_json::json;

pub type Build = fn(&Fixture) -> ApiRequest;

/// Method, route template, request builder, expected status for
/// common / group admin / system admin / anonymous.
pub fn table() -> Vec<(&'static str, &'static str, Build, [u16; 4])> {
    vec![
        ("POST", "/users", |_| post("/users", json!({"name": "newcomer"})), [201, 201, 201, 201]),
        (
            "POST",
            "/users#privileged",
            |_| post("/users", json!({"name": "boss", "role": "groupAdmin"})),
            [403, 403, 201, 403],
        ),
        ("POST", "/login", |_| post("/login", json!({"name": "carol"})), [200, 200, 200, 200]),
        ("POST", "/logout", |_| post("/logout", empty()), [200, 200, 200, 401]),
        ("POST", "/captcha/{id}/answer", |_| post("/captcha/c1/answer", json!({"answer": "x"})), [409, 409, 409, 401]),
        ("GET", "/me", |_| ApiRequest::new("GET", "/me"), [200, 200, 200, 401]),
        ("GET", "/tasks", |_| ApiRequest::new("GET", "/tasks"), [200, 200, 200, 401]),
        ("POST", "/tasks/allocate", |_| post("/tasks/allocate", json!({"batch": 2})), [403, 403, 201, 401]),
        (
            "POST",
            "/tasks/{id}/complete",
            |f| post(&format!("/tasks/{}/complete", f.alice_task), json!({"payload": f.alice_payload})),
            [200, 403, 403, 401],
        ),
        ("POST", "/groups", |f| post("/groups", json!({"admin": f.gadmin})), [403, 201, 201, 401]),
        (
            "POST",
            "/groups/{id}/members",
            |f| post(&format!("/groups/{}/members", f.group), json!({"user": f.carol})),
            [403, 200, 200, 401],
        ),
        (
            "POST",
            "/groups/{id}/assign",
            |f| post(&format!("/groups/{}/assign", f.group), json!({"task": f.open_task, "member": f.bob})),
            [403, 200, 200, 401],
        ),
        (
            "DELETE",
            "/groups/{id}",
            |f| ApiRequest::new("DELETE", &format!("/groups/{}", f.group)),
            [403, 200, 200, 401],
        ),
        ("GET", "/graph", |_| ApiRequest::new("GET", "/graph?kind=course"), [200, 200, 200, 401]),
        ("GET", "/graph/export", |_| ApiRequest::new("GET", "/graph/export"), [200, 200, 200, 401]),
        (
            "POST",
            "/graph/entities",
            |_| post("/graph/entities", json!({"kind": "video", "label": "Intro"})),
            [201, 201, 201, 401],
        ),
        (
            "PATCH",
            "/graph/entities/{id}",
            |f| ApiRequest::new("PATCH", &format!("/graph/entities/{}", f.kp)).json(json!({"label": "Linear eq."})),
            [200, 200, 200, 401],
        ),
        (
            "DELETE",
            "/graph/entities/{id}",
            |f| ApiRequest::new("DELETE", &format!("/graph/entities/{}", f.loose)),
            [403, 200, 200, 401],
        ),
        (
            "POST",
            "/graph/triples",
            |f| {
                post(
                    "/graph/triples",
                    json!({"subject": f.kp, "predicate": "related-to", "object": {"type": "entity", "value": f.course}}),
                )
            },
            [201, 201, 201, 401],
        ),
        (
            "PATCH",
            "/graph/triples/{id}",
            |f| {
                ApiRequest::new("PATCH", &format!("/graph/triples/{}", f.admin_triple))
                    .json(json!({"confidenceDelta": 0.1}))
            },
            [403, 200, 200, 401],
        ),
        (
            "DELETE",
            "/graph/triples/{id}",
            |f| ApiRequest::new("DELETE", &format!("/graph/triples/{}", f.admin_triple)),
            [403, 200, 200, 401],
        ),
        (
            "DELETE",
            "/graph/triples/{id}#own",
            |f| ApiRequest::new("DELETE", &format!("/graph/triples/{}", f.alice_triple)),
            [200, 200, 200, 401],
        ),
        ("POST", "/graph/review", |_| post("/graph/review", empty()), [403, 403, 200, 401]),
        (
            "GET",
            "/subgraphs/{kind}",
            |_| ApiRequest::new("GET", "/subgraphs/knowledgeCourseType"),
            [200, 200, 200, 401],
        ),
        (
            "GET",
            "/routes",
            |f| ApiRequest::new("GET", &format!("/routes?from={}&to={}", f.course, f.next_course)),
            [200, 200, 200, 401],
        ),
        (
            "GET",
            "/students/{id}/recommendations",
            |f| ApiRequest::new("GET", &format!("/students/{}/recommendations?p=0.2", f.student)),
            [200, 200, 200, 401],
        ),
        (
            "PUT",
            "/students/{id}/record",
            |f| {
                ApiRequest::new("PUT", &format!("/students/{}/record", f.student)).json(json!({
                    "finishedResources": {f.course.to_string(): {"exercise": [f.exercise]}},
                    "errorRates": {f.exercise.to_string(): {"incorrect": 1, "attempts": 4}},
                }))
            },
            [403, 403, 200, 401],
        ),
        ("GET", "/ambiguity/open", |_| ApiRequest::new("GET", "/ambiguity/open"), [200, 200, 200, 401]),
        (
            "POST",
            "/ambiguity/{id}/vote",
            |f| post(&format!("/ambiguity/{}/vote", f.ledger), json!({"unequal": true})),
            [200, 200, 200, 401],
        ),
    ]
}

pub const ENDPOINTS: [&str; 27] = [
    "POST /users",
    "POST /login",
    "POST /logout",
    "POST /captcha/{id}/answer",
    "GET /me",
    "GET /tasks",
    "POST /tasks/allocate",
    "POST /tasks/{id}/complete",
    "POST /groups",
    "POST /groups/{id}/members",
    "POST /groups/{id}/assign",
    "DELETE /groups/{id}",
    "GET /graph",
    "GET /graph/export",
    "POST /graph/entities",
    "PATCH /graph/entities/{id}",
    "DELETE /graph/entities/{id}",
    "POST /graph/triples",
    "PATCH /graph/triples/{id}",
    "DELETE /graph/triples/{id}",
    "POST /graph/review",
    "GET /subgraphs/{kind}",
    "GET /routes",
    "GET /students/{id}/recommendations",
    "PUT /students/{id}/record",
    "GET /ambiguity/open",
    "POST /ambiguity/{id}/vote",
];
