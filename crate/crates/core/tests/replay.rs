use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use llmgg::harness::{run_trials, HarnessOptions, TrialRecord};
use llmgg::llm::{build_provider, read_transcript, Provider, ProviderConfig, ProviderKind};
use llmgg::prompt::PresetId;

/// Answers every chat request with a numbered maze response and records the
/// Authorization header it saw.
fn serve(hits: Arc<AtomicUsize>, saw_auth: Arc<AtomicUsize>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization: bearer sk-test") {
                    saw_auth.fetch_add(1, Ordering::SeqCst);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert_eq!(req["messages"].as_array().unwrap().len(), 1);
            let n = hits.fetch_add(1, Ordering::SeqCst);
            let content = format!(
                "Trial {n}\n```\nBasicGame\n    SpriteSet\n        wall > Immovable\n        avatar > MovingAvatar\n        goal > Immovable\n    LevelMapping\n        W > wall\n        A > avatar\n        G > goal\n    InteractionSet\n        avatar wall > stepBack\n        avatar goal > removeSprite\n    TerminationSet\n        SpriteCounter stype=goal limit=0 win=True\n```\n```\nWWWWW\nWA GW\nWWWWW\n```\n"
            );
            let payload = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
            let resp = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    format!("http://{addr}/v1/chat/completions")
}

fn strip_time(mut recs: Vec<TrialRecord>) -> Vec<TrialRecord> {
    for r in &mut recs {
        r.wall_time = None;
    }
    recs
}

#[test]
fn record_then_replay_reproduces_the_session() {
    let hits = Arc::new(AtomicUsize::new(0));
    let saw_auth = Arc::new(AtomicUsize::new(0));
    let endpoint = serve(hits.clone(), saw_auth.clone());
    std::env::set_var("LLMGG_TEST_KEY", "sk-test-123");

    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("session.jsonl");
    let live = ProviderConfig {
        name: "local".into(),
        kind: ProviderKind::Live,
        endpoint: Some(endpoint),
        model: "test-model".into(),
        auth_env: Some("LLMGG_TEST_KEY".into()),
        transcript_path: Some(transcript.clone()),
        ..ProviderConfig::default()
    };
    let presets = [PresetId::P1, PresetId::P7];
    let opts = HarnessOptions { record_wall_time: true, ..HarnessOptions::default() };
    let providers: Vec<Box<dyn Provider>> = vec![build_provider(&live).unwrap()];
    let recorded = run_trials(&presets, &providers, 3, None, &opts).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 6);
    assert_eq!(saw_auth.load(Ordering::SeqCst), 6);
    assert!(recorded.iter().all(|r| r.wall_time.is_some() && r.report.as_ref().unwrap().correct));

    let raw = std::fs::read_to_string(&transcript).unwrap();
    assert!(!raw.contains("sk-test-123"), "credential leaked into transcript");
    assert_eq!(read_transcript(&transcript).unwrap().len(), 6);

    let replay = ProviderConfig {
        name: "local".into(),
        model: "test-model".into(),
        transcript_path: Some(transcript),
        ..ProviderConfig::default()
    };
    let providers: Vec<Box<dyn Provider>> = vec![build_provider(&replay).unwrap()];
    let replayed = run_trials(&presets, &providers, 3, None, &HarnessOptions::default()).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 6, "replay touched the network");
    assert_eq!(strip_time(replayed), strip_time(recorded));
}
