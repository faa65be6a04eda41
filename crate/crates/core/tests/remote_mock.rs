//! Remote backends against a local HTTP stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

use storesim::agent::{
    assemble_context, run_session, AgentProfile, DecisionPolicy, GuardrailConfig, ObservationRecord, PolicyError,
    RemoteModelPolicy, SessionParams, TerminationReason, Variant,
};
use storesim::persona::{build_shop_personas, PersonaMode, PipelineConfig};
use storesim::remote::{ChatClient, EndpointConfig, RemoteTextBackend};
use storesim::storefront::{load_store_spec, render_ax_tree, ActionKind, BrowserState};
use storesim::synthetic::{oracle_dataset, OracleConfig};

#[derive(Debug, Clone)]
struct Request {
    auth: Option<String>,
    body: Value,
}

type Responder = Box<dyn Fn(usize, &Value) -> Value + Send>;

/// Serves one JSON reply per request, chosen by `respond(index, body)`.
fn serve(respond: Responder) -> (String, Arc<Mutex<Vec<Request>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&log);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let body: Value = serde_json::from_slice(&buf).unwrap();
            let idx = {
                let mut s = seen.lock().unwrap();
                s.push(Request { auth, body: body.clone() });
                s.len() - 1
            };
            let reply = respond(idx, &body).to_string();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.len(),
                reply
            )
            .unwrap();
        }
    });
    (url, log)
}

fn envelope(content: &Value) -> Value {
    json!({"choices": [{"message": {"role": "assistant", "content": content.to_string()}}]})
}

fn client(url: &str) -> ChatClient {
    ChatClient::new(EndpointConfig::new(url), Some("secret".into()))
}

fn fixture() -> (storesim::storefront::StoreSpec, AgentProfile) {
    let shop = &oracle_dataset(3, &OracleConfig { shops: 1, sessions_per_shop: 80, ..OracleConfig::default() })[0];
    let built = build_shop_personas(&shop.catalog, &shop.sessions, &PipelineConfig::default(), None).unwrap();
    let (control, _) = load_store_spec(&shop.store).unwrap();
    (control, AgentProfile::from_persona(&built.personas[0], PersonaMode::FullPersona))
}

#[test]
fn remote_policy_retries_with_feedback() {
    let (url, log) = serve(Box::new(|i, _| {
        if i == 0 {
            envelope(&json!({"reasoning": "hmm", "terminate": false}))
        } else {
            envelope(&json!({"reasoning": "enough", "terminate": true}))
        }
    }));
    let (spec, prof) = fixture();
    let state = BrowserState::start();
    let obs = ObservationRecord {
        url: "/".into(),
        ax_tree: render_ax_tree(&spec, &state).unwrap(),
        image_payload: None,
        step_index: 0,
    };
    let policy = RemoteModelPolicy::new(client(&url), 2);
    let d = policy.decide(&assemble_context(&prof, &[], &obs, true, 0)).unwrap();
    assert!(d.terminate);
    let reqs = log.lock().unwrap();
    assert_eq!(reqs.len(), 2);
    assert_eq!(reqs[0].auth.as_deref(), Some("Bearer secret"));
    let msgs = reqs[1].body["messages"].as_array().unwrap();
    assert!(msgs.last().unwrap()["content"].as_str().unwrap().contains("previous reply failed"));
    assert!(msgs[0]["content"].as_str().unwrap().contains(&prof.prompt));
    assert!(reqs[0].body["response_format"]["json_schema"]["schema"]["required"].is_array());
}

#[test]
fn remote_policy_gives_up_and_session_records_it() {
    let (url, log) = serve(Box::new(|_, _| envelope(&json!({"reasoning": "?", "terminate": true, "action": {"kind": "click", "target_ref": 1}}))));
    let (spec, prof) = fixture();
    let g = GuardrailConfig::default();
    let policy = RemoteModelPolicy::new(client(&url), 2);
    let out = run_session(
        &policy,
        &SessionParams {
            profile: &prof,
            spec: &spec,
            variant: Variant::Control,
            trial: 0,
            agent_index: 0,
            seed: 0,
            guardrails: &g,
            memory_enabled: true,
        },
    );
    assert_eq!(out.termination_reason, TerminationReason::RetryExhausted);
    assert_eq!(log.lock().unwrap().len(), 3);
    let state = BrowserState::start();
    let obs = ObservationRecord {
        url: "/".into(),
        ax_tree: render_ax_tree(&spec, &state).unwrap(),
        image_payload: None,
        step_index: 0,
    };
    let err = policy.decide(&assemble_context(&prof, &[], &obs, true, 0)).unwrap_err();
    assert!(matches!(err, PolicyError::Failure { attempts: 3, .. }));
}

#[test]
fn remote_policy_drives_a_session() {
    let (url, _) = serve(Box::new(|i, _| {
        if i == 0 {
            envelope(&json!({"reasoning": "see the cart", "terminate": false, "action": {"kind": "navigate", "args": "/cart"}}))
        } else {
            envelope(&json!({"reasoning": "done", "terminate": true}))
        }
    }));
    let (spec, prof) = fixture();
    let g = GuardrailConfig::default();
    let out = run_session(
        &RemoteModelPolicy::new(client(&url), 0),
        &SessionParams {
            profile: &prof,
            spec: &spec,
            variant: Variant::Treatment,
            trial: 1,
            agent_index: 4,
            seed: 9,
            guardrails: &g,
            memory_enabled: true,
        },
    );
    assert_eq!(out.steps.len(), 2);
    assert_eq!(out.steps[0].action.kind, ActionKind::Navigate);
    assert_eq!(out.steps[1].observation_digest.url, "/cart");
    assert_eq!(out.termination_reason, TerminationReason::PolicyTerminate);
}

#[test]
fn remote_text_backend_feeds_the_persona_pipeline() {
    let (url, log) = serve(Box::new(|_, body| {
        let schema = &body["response_format"]["json_schema"]["schema"];
        let input: Value = serde_json::from_str(body["messages"][1]["content"].as_str().unwrap()).unwrap();
        if schema["required"].as_array().unwrap().iter().any(|r| r == "categories") {
            let category = input["summary"][0]["category"].clone();
            envelope(&json!({"categories": [category], "individual_products": [], "reasoning": "stub"}))
        } else {
            envelope(&json!({"rationale": "stub rationale"}))
        }
    }));
    let shop = &oracle_dataset(3, &OracleConfig { shops: 1, sessions_per_shop: 80, ..OracleConfig::default() })[0];
    let backend = RemoteTextBackend::new(client(&url));
    let built = build_shop_personas(&shop.catalog, &shop.sessions, &PipelineConfig::default(), Some(&backend)).unwrap();
    assert!(!built.personas.is_empty());
    assert!(built.personas.iter().all(|p| p.archetype.rationale == "stub rationale"));
    assert!(built.personas.iter().all(|p| p.cluster_preferences.reasoning == "stub"));
    assert!(log.lock().unwrap().len() > built.personas.len() / 10);
}

#[test]
fn unreachable_backend_surfaces_the_stage_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    drop(listener);
    let shop = &oracle_dataset(3, &OracleConfig { shops: 1, sessions_per_shop: 80, ..OracleConfig::default() })[0];
    let backend = RemoteTextBackend::new(client(&url));
    // preference extraction has no fallback; the stage error surfaces
    assert!(build_shop_personas(&shop.catalog, &shop.sessions, &PipelineConfig::default(), Some(&backend)).is_err());
}
