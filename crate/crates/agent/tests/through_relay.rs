use std::sync::Arc;
use std::time::Duration;

use ekg_agent::{run_pipeline, AgentError, AgentStats, PipelineOptions, WsConnector};
use ekg_core::encode_serial;
use ekg_core::message::encode_message;
use ekg_core::signal::{generate_signal, SignalSpec};
use ekg_relay::server::CLOSE_PATIENT_GONE;
use ekg_relay::{RelayConfig, RelayServer, SessionState};
use futures_util::StreamExt;
use tokio::io::AsyncWriteExt;
use tokio::time::{sleep, timeout};
use tokio_tungstenite::connect_async;
use tokio_tungstenite::tungstenite::Message;

async fn wait_for(server: &RelayServer, id: &str, want: SessionState) {
    let id = id.parse().unwrap();
    for _ in 0..400 {
        if server.registry().state(&id) == want {
            return;
        }
        sleep(Duration::from_millis(5)).await;
    }
    panic!("session never reached {want:?}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn samples_reach_the_doctor_unchanged() {
    let server = RelayServer::bind("127.0.0.1:0", RelayConfig::default()).await.unwrap();
    let id = "bed-7".parse().unwrap();
    let connector = WsConnector::new(&server.base_url(), &id).unwrap();

    let signal = generate_signal(&SignalSpec::default(), 300).unwrap();
    let (mut device, serial) = tokio::io::duplex(64 * 1024);
    let stats = Arc::new(AgentStats::default());
    let agent = tokio::spawn(run_pipeline(
        serial,
        connector.clone(),
        PipelineOptions::default(),
        Arc::clone(&stats),
    ));
    wait_for(&server, "bed-7", SessionState::PatientConnected).await;

    // A second agent on the same id is refused for good.
    let (_idle, other_serial) = tokio::io::duplex(64);
    let second = run_pipeline(
        other_serial,
        connector,
        PipelineOptions::default(),
        Arc::new(AgentStats::default()),
    );
    assert!(matches!(
        timeout(Duration::from_secs(5), second).await.unwrap(),
        Err(AgentError::DuplicateSession)
    ));

    let url = format!("ws://{}/out/bed-7", server.local_addr());
    let (mut doctor, _) = connect_async(url).await.unwrap();
    wait_for(&server, "bed-7", SessionState::Paired).await;

    for s in &signal.samples {
        device.write_all(&encode_serial(s)).await.unwrap();
    }
    let mut got = Vec::new();
    while got.len() < signal.samples.len() {
        match timeout(Duration::from_secs(5), doctor.next()).await.unwrap() {
            Some(Ok(Message::Text(t))) => got.push(t.to_string()),
            Some(Ok(_)) => {}
            other => panic!("doctor stream ended early: {other:?}"),
        }
    }
    let expected: Vec<String> = signal
        .samples
        .iter()
        .map(|s| encode_message(s, 0).unwrap().to_json())
        .collect();
    assert_eq!(got, expected);

    // Device goes away: the agent stops and the doctor is told.
    drop(device);
    let result = timeout(Duration::from_secs(5), agent).await.unwrap().unwrap();
    assert!(matches!(result, Err(AgentError::SerialSourceLost(_))));
    loop {
        match timeout(Duration::from_secs(5), doctor.next()).await.unwrap() {
            Some(Ok(Message::Close(Some(frame)))) => {
                assert_eq!(u16::from(frame.code), CLOSE_PATIENT_GONE);
                break;
            }
            Some(Ok(_)) => {}
            other => panic!("expected a close frame, got {other:?}"),
        }
    }
    assert_eq!(stats.snapshot().messages_sent, 300);
}
