use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use todsim_core::dialogue_systems::{Architecture, Monolithic};
use todsim_core::domain::{GenerationParams, Outcome};
use todsim_core::evaluation::evaluate;
use todsim_core::game_master::{run_dialogue_with_clock, LogicalClock};
use todsim_core::players::{
    build_system_prompts, build_user_sim_prompt, remote_chat, ChatClient, ChatMessage, EndpointConfig, Player,
    PlayerContext, PlayerError, RemotePlayer, SystemRole,
};
use todsim_core::scripted::{bundled_store, golden_goal, golden_script};
use todsim_core::GameConfig;

async fn serve(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1")
}

fn completion(text: &str) -> Value {
    json!({
        "choices": [{ "index": 0, "message": { "role": "assistant", "content": text } }],
        "usage": { "prompt_tokens": 11, "completion_tokens": 3 },
    })
}

fn context() -> PlayerContext {
    let mut ctx = PlayerContext::new(ChatMessage::system("be brief"), GenerationParams::default()).unwrap();
    ctx.push(ChatMessage::user("ping"));
    ctx
}

fn fast(base: &str) -> EndpointConfig {
    EndpointConfig { backoff_ms: 1, ..EndpointConfig::new(base, "mock-model") }
}

#[tokio::test]
async fn echo_round_trip_sends_greedy_decoding() {
    let seen: Arc<Mutex<Vec<Value>>> = Arc::default();
    let app = Router::new()
        .route(
            "/v1/chat/completions",
            post(|State(seen): State<Arc<Mutex<Vec<Value>>>>, Json(body): Json<Value>| async move {
                let last = body["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_string();
                seen.lock().unwrap().push(body);
                Json(completion(&format!("echo: {last}")))
            }),
        )
        .with_state(seen.clone());
    let base = serve(app).await;
    let client = ChatClient::new(fast(&base)).unwrap();
    let reply = remote_chat(&client, &context(), None).await.unwrap();
    assert_eq!(reply.text, "echo: ping");
    assert_eq!(reply.usage, Some((11, 3)));

    let body = seen.lock().unwrap()[0].clone();
    assert_eq!(body["temperature"], json!(0.0));
    assert_eq!(body["max_tokens"], json!(500));
    assert_eq!(body["model"], "mock-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert!(body.get("tools").is_none());
}

#[tokio::test]
async fn persistent_server_errors_exhaust_retries() {
    let hits = Arc::new(AtomicUsize::new(0));
    let app = Router::new()
        .route(
            "/v1/chat/completions",
            post(|State(hits): State<Arc<AtomicUsize>>| async move {
                hits.fetch_add(1, Ordering::SeqCst);
                (StatusCode::INTERNAL_SERVER_ERROR, "boom")
            }),
        )
        .with_state(hits.clone());
    let base = serve(app).await;
    let client = ChatClient::new(fast(&base)).unwrap();
    let err = remote_chat(&client, &context(), None).await.unwrap_err();
    assert!(matches!(err, PlayerError::Transport { attempts: 3, .. }), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn transient_errors_are_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let app = Router::new()
        .route(
            "/v1/chat/completions",
            post(|State(hits): State<Arc<AtomicUsize>>| async move {
                match hits.fetch_add(1, Ordering::SeqCst) {
                    0 => Err((StatusCode::TOO_MANY_REQUESTS, "slow down")),
                    _ => Ok(Json(completion("ok"))),
                }
            }),
        )
        .with_state(hits.clone());
    let client = ChatClient::new(fast(&serve(app).await)).unwrap();
    assert_eq!(remote_chat(&client, &context(), None).await.unwrap().text, "ok");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn client_errors_fail_without_retry() {
    let hits = Arc::new(AtomicUsize::new(0));
    let app = Router::new()
        .route(
            "/v1/chat/completions",
            post(|State(hits): State<Arc<AtomicUsize>>| async move {
                hits.fetch_add(1, Ordering::SeqCst);
                (StatusCode::BAD_REQUEST, "bad model")
            }),
        )
        .with_state(hits.clone());
    let client = ChatClient::new(fast(&serve(app).await)).unwrap();
    let err = remote_chat(&client, &context(), None).await.unwrap_err();
    assert!(matches!(err, PlayerError::HttpStatus { status: 400, .. }), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn unreachable_endpoint_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let client = ChatClient::new(fast(&base)).unwrap();
    let err = remote_chat(&client, &context(), None).await.unwrap_err();
    assert!(matches!(err, PlayerError::Transport { attempts: 3, .. }), "{err:?}");
}

#[tokio::test]
async fn native_tool_calls_become_envelopes() {
    let app = Router::new().route(
        "/v1/chat/completions",
        post(|| async {
            Json(json!({ "choices": [{ "message": { "role": "assistant", "content": null, "tool_calls": [
                { "id": "c1", "type": "function", "function": { "name": "followup", "arguments": "{\"message\":\"hi\"}" } }
            ] } }] }))
        }),
    );
    let client = ChatClient::new(fast(&serve(app).await)).unwrap();
    let reply = remote_chat(&client, &context(), None).await.unwrap();
    assert_eq!(reply.text, r#"{"name":"followup","arguments":{"message":"hi"}}"#);
    assert_eq!(reply.usage, None);
}

#[tokio::test]
async fn context_limit_is_enforced_before_sending() {
    let config = EndpointConfig { max_context_tokens: Some(2), ..fast("http://127.0.0.1:9/v1") };
    let client = ChatClient::new(config).unwrap();
    let err = remote_chat(&client, &context(), None).await.unwrap_err();
    assert!(matches!(err, PlayerError::ContextOverflow { limit: 2, .. }), "{err:?}");
}

type Replies = Arc<Mutex<VecDeque<String>>>;

async fn scripted_endpoint(lines: Vec<String>) -> String {
    let replies: Replies = Arc::new(Mutex::new(lines.into()));
    let app = Router::new()
        .route(
            "/v1/chat/completions",
            post(|State(r): State<Replies>| async move {
                let next = r.lock().unwrap().pop_front().unwrap_or_else(|| "DONE".into());
                Json(completion(&next))
            }),
        )
        .with_state(replies);
    serve(app).await
}

#[tokio::test]
async fn remote_players_complete_the_golden_dialogue() {
    let goal = golden_goal();
    let seed = 5;
    let script = golden_script(Architecture::Monolithic).expanded(seed, goal.id());
    let user_base = scripted_endpoint(script.user.clone()).await;
    let system_base = scripted_endpoint(script.system.clone()).await;

    let generation = GenerationParams::default();
    let user_ctx = PlayerContext::new(build_user_sim_prompt(&goal).unwrap(), generation).unwrap();
    let mut user = RemotePlayer::new(Arc::new(ChatClient::new(fast(&user_base)).unwrap()), user_ctx);
    let prompt = build_system_prompts(Architecture::Monolithic)[&SystemRole::Monolithic].clone();
    let system_ctx = PlayerContext::new(prompt, generation).unwrap();
    let system_player = RemotePlayer::new(Arc::new(ChatClient::new(fast(&system_base)).unwrap()), system_ctx)
        .with_tools(Architecture::Monolithic.tool_documents());
    let mut system = Monolithic::new(Box::new(system_player));

    let store = bundled_store();
    let t = run_dialogue_with_clock(
        &goal, &mut user, &mut system, &store, &GameConfig::default(), seed, &mut LogicalClock::default(),
    )
    .await
    .unwrap();
    assert_eq!(t.outcome, Outcome::Completed);
    let report = evaluate(&t, &goal, &store);
    assert_eq!((report.dialogue_inform, report.dialogue_booking), (1, Some(1)));
    assert_eq!(user.usage().calls, 3);
    assert_eq!(user.usage().prompt_tokens, 33);
}
