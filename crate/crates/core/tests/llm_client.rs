use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use semcom_core::domain::{CommContext, Modality, ModalityMask, TaskCategory, TaskContext};
use semcom_core::fidelity::FidelityModel;
use semcom_core::policies::{llm_response_render, ExternalLlmGate, GatePolicy, LlmGateConfig};
use semcom_core::rng::substream;
use semcom_core::simulator::{run_experiment, Method, SimConfig};
use semcom_core::Error;

#[derive(Clone, Copy)]
enum Reply {
    Choice(u8),
    Garbage,
    Stall,
}

fn read_request(stream: &mut TcpStream) -> String {
    let mut reader = BufReader::new(stream);
    let mut len = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        if line == "\r\n" {
            break;
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok();
    String::from_utf8_lossy(&body).into_owned()
}

/// Chat-completion stand-in. Returns its address and a request counter.
fn serve(reply: Reply) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let request = read_request(&mut stream);
            assert!(request.contains("\"messages\""));
            let content = match reply {
                Reply::Choice(bits) => llm_response_render(
                    &semcom_core::domain::GatingDecision::from_mask(ModalityMask::from_bits(bits).unwrap())
                        .with_rationale("stub"),
                ),
                Reply::Garbage => "the edges, probably".to_string(),
                Reply::Stall => {
                    thread::sleep(Duration::from_millis(400));
                    continue;
                }
            };
            let body = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
                .to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (format!("http://{addr}/v1/chat/completions"), hits)
}

fn config(url: String) -> LlmGateConfig {
    LlmGateConfig { endpoint_url: url, timeout_ms: 150, max_retries: 1, ..Default::default() }
}

fn contexts() -> (TaskContext, CommContext) {
    let task = TaskContext::new(TaskCategory::Scenery, 2, 250.0, 0.0, 0.6).unwrap();
    let comm = CommContext { bandwidth_hz: 1.4e6, mean_snr_db: 10.0, instantaneous_snr_db: 12.0, power_gain: 1.5 };
    (task, comm)
}

#[test]
fn well_formed_reply_becomes_decision() {
    let (url, hits) = serve(Reply::Choice(0b10001));
    let gate = ExternalLlmGate::new(config(url), FidelityModel::default(), 50.0).unwrap();
    let (task, comm) = contexts();
    let d = gate.decide(&task, &comm, &mut substream(0, "x", &[])).unwrap();
    assert!(d.selection_mask.contains(Modality::Edge) && d.selection_mask.contains(Modality::Text));
    assert_eq!(d.rationale.as_deref(), Some("stub"));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_reply_is_gate_unavailable_after_retry() {
    let (url, hits) = serve(Reply::Garbage);
    let gate = ExternalLlmGate::new(config(url), FidelityModel::default(), 50.0).unwrap();
    let (task, comm) = contexts();
    let err = gate.decide(&task, &comm, &mut substream(0, "x", &[])).unwrap_err();
    assert!(matches!(err, Error::GateUnavailable(_)), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn slow_endpoint_times_out() {
    let (url, _) = serve(Reply::Stall);
    let gate = ExternalLlmGate::new(config(url), FidelityModel::default(), 50.0).unwrap();
    let (task, comm) = contexts();
    let start = std::time::Instant::now();
    let err = gate.decide(&task, &comm, &mut substream(0, "x", &[])).unwrap_err();
    assert!(matches!(err, Error::GateUnavailable(_)));
    assert!(start.elapsed() < Duration::from_millis(1_500));
}

#[test]
fn unreachable_endpoint_falls_back_in_simulation() {
    let (url, _) = serve(Reply::Garbage);
    let base = SimConfig {
        n_users: 2,
        n_steps: 4,
        outage_prob: 0.0,
        methods: vec![Method::LlmGate, Method::DrlFallback],
        master_seed: 9,
        ..Default::default()
    };
    let offline = run_experiment(&base).unwrap();
    let online = run_experiment(&SimConfig { llm: Some(config(url)), ..base }).unwrap();

    let fb = online.result(Method::DrlFallback).unwrap();
    assert_eq!(fb.llm_queries, 8);
    assert_eq!(fb.llm_errors, 8);
    let gate = online.result(Method::LlmGate).unwrap();
    assert_eq!(gate.llm_errors, 8);
    // The gate degrades to the rule-based selection.
    let masks = |r: &semcom_core::simulator::ExperimentResult| -> Vec<u8> {
        r.records.iter().filter(|x| x.method == Method::LlmGate).map(|x| x.action_mask).collect()
    };
    assert_eq!(masks(&offline), masks(&online));
}

#[test]
fn working_endpoint_drives_the_gate() {
    let (url, _) = serve(Reply::Choice(0b10000));
    let cfg = SimConfig {
        n_users: 2,
        n_steps: 3,
        methods: vec![Method::LlmGate],
        llm: Some(config(url)),
        ..Default::default()
    };
    let res = run_experiment(&cfg).unwrap();
    assert!(res.records.iter().all(|r| r.action_mask == 0b10000));
    assert_eq!(res.result(Method::LlmGate).unwrap().llm_errors, 0);
}
