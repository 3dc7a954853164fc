//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ekg_core::clock::MonotonicClock;
use ekg_core::device::{run_emulator, run_virtual, EmulatorOptions, EmulatorReport, Stall};
use ekg_core::dsp::{process_messages, MovingAverage5, PeakDetectorConfig};
use ekg_core::message::encode_message;
use ekg_core::serial::{overrun_line, BITS_PER_BYTE, MAX_BYTES_PER_SECOND, MAX_LINE_LEN, REQUIRED_BAUD, UART_BAUD};
use ekg_core::signal::{generate_signal, SignalSpec};
use ekg_core::{decode_serial, encode_serial, Channels, Sample, SerialLine, Timestamp, SAMPLE_PERIOD_MS};
use ekg_relay::server::CLOSE_PATIENT_GONE;
use ekg_relay::{RelayConfig, RelayServer, SessionState};
use ekg_tools::args::Topology;
use ekg_tools::bench::run_latency_bench;
use futures_util::{SinkExt, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::time::{sleep, timeout, MissedTickBehavior};
use tokio_tungstenite::tungstenite::{Error as WsError, Message};
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

// Pinned tolerances.
const CODEC_CASES: usize = 100_000;
const CODEC_MAX_SECONDS: f64 = 5.0;
const BANDWIDTH_WINDOW_S: f64 = 10.0;
const LINES_PER_SECOND: f64 = 250.0;
const LINES_PER_SECOND_TOLERANCE: f64 = 1.0;
const WINDOW_LINES_TOLERANCE: u64 = 1;
const STALL_MS: u64 = 100;
const FILTER_NULL_RELATIVE: f64 = 1e-9;
const HR_RATES_BPM: [f64; 5] = [40.0, 60.0, 100.0, 150.0, 180.0];
const HR_TRACE_S: usize = 60;
const HR_POWERLINE_COUNTS: f64 = 30.0;
const HR_TOLERANCE_BPM: f64 = 2.0;
/// Detected peaks are matched to generator beats within three samples.
const PEAK_MATCH_MS: u32 = 12;
const ISOLATION_SESSIONS: usize = 10;
const ISOLATION_SECONDS: u64 = 30;
const LOCALHOST_LATENCY_S: f64 = 60.0;
const LOCALHOST_P95_MS: u32 = 1000;
const INPROC_LATENCY_S: f64 = 30.0;
const INPROC_P99_MS: u32 = 100;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn codec_bound() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x00ec_0de5);
    let mut longest = 0;
    for _ in 0..CODEC_CASES {
        let ts = Timestamp::from_millis(rng.random_range(0..86_400_000)).unwrap();
        let channels = Channels::new(std::array::from_fn(|_| rng.random_range(0..=1023))).unwrap();
        let sample = Sample::new(ts, channels);
        let line = encode_serial(&sample);
        longest = longest.max(line.len());
        check(line.len() <= MAX_LINE_LEN, || {
            format!("{sample:?} encodes to {} bytes", line.len())
        })?;
        match decode_serial(&line) {
            Ok(SerialLine::Data(back)) if back == sample => {}
            other => return Err(format!("{sample:?} round-tripped to {other:?}")),
        }
    }
    let all_max = Sample::new(Timestamp::new(23, 59, 59, 999).unwrap(), Channels::splat(1023));
    let max_len = encode_serial(&all_max).len();
    check(max_len == 44, || format!("all-max sample encodes to {max_len} bytes"))?;
    let elapsed = started.elapsed().as_secs_f64();
    check(elapsed < CODEC_MAX_SECONDS, || format!("took {elapsed:.1} s"))?;
    Ok(format!(
        "{CODEC_CASES} round trips, longest {longest} B, all-max {max_len} B, {elapsed:.2} s"
    ))
}

/// Counts bytes and lines and checks each line's length as it goes.
#[derive(Default)]
struct CountingSink {
    bytes: u64,
    data_lines: u64,
    fail_lines: u64,
    longest: usize,
    partial: Vec<u8>,
}

impl Write for CountingSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.bytes += buf.len() as u64;
        for &b in buf {
            self.partial.push(b);
            if b == b'\n' {
                self.longest = self.longest.max(self.partial.len());
                if self.partial == overrun_line() {
                    self.fail_lines += 1;
                } else {
                    self.data_lines += 1;
                }
                self.partial.clear();
            }
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn bandwidth_budget() -> Outcome {
    check(MAX_BYTES_PER_SECOND * BITS_PER_BYTE == 99_000, || {
        format!("{MAX_BYTES_PER_SECOND} B/s x {BITS_PER_BYTE} bits != 99000")
    })?;
    check(REQUIRED_BAUD <= UART_BAUD, || {
        format!("{REQUIRED_BAUD} baud exceeds {UART_BAUD}")
    })?;

    let clock = MonotonicClock::new();
    let mut sink = CountingSink::default();
    let started = Instant::now();
    let report = run_emulator(
        &SignalSpec::default(),
        &mut sink,
        BANDWIDTH_WINDOW_S,
        &clock,
        &EmulatorOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();

    let expected = (BANDWIDTH_WINDOW_S * LINES_PER_SECOND) as u64;
    check(sink.data_lines.abs_diff(expected) <= WINDOW_LINES_TOLERANCE, || {
        format!(
            "{} lines in the window, expected {expected} ± {WINDOW_LINES_TOLERANCE}",
            sink.data_lines
        )
    })?;
    let rate = sink.data_lines as f64 / elapsed;
    check((rate - LINES_PER_SECOND).abs() <= LINES_PER_SECOND_TOLERANCE, || {
        format!("{rate:.2} lines/s over {elapsed:.3} s")
    })?;
    let bytes_per_s = sink.bytes as f64 / BANDWIDTH_WINDOW_S;
    check(bytes_per_s <= MAX_BYTES_PER_SECOND as f64, || {
        format!("{bytes_per_s:.0} B/s")
    })?;
    check(sink.longest <= MAX_LINE_LEN, || format!("a {} byte line", sink.longest))?;
    // Worst case: every line at the 44-byte maximum.
    let worst = MAX_LINE_LEN as f64 * LINES_PER_SECOND;
    check(worst <= MAX_BYTES_PER_SECOND as f64, || {
        format!("worst case {worst} B/s")
    })?;
    Ok(format!(
        "{} lines in {elapsed:.3} s ({rate:.2}/s), {} overruns, {bytes_per_s:.0} B/s, budget {REQUIRED_BAUD} <= {UART_BAUD} baud",
        sink.data_lines, report.overruns
    ))
}

fn conserved(report: &EmulatorReport, sink: &CountingSink) -> Result<(), String> {
    check(report.lines_emitted + report.overruns == report.ticks, || {
        format!(
            "lines {} + overruns {} != ticks {}",
            report.lines_emitted, report.overruns, report.ticks
        )
    })?;
    check(
        sink.data_lines == report.lines_emitted && sink.fail_lines == report.overruns,
        || {
            format!(
                "stream has {} data / {} fail lines, report {report:?}",
                sink.data_lines, sink.fail_lines
            )
        },
    )
}

fn overrun_semantics() -> Outcome {
    let stall = Stall {
        at: Duration::from_secs(1),
        length: Duration::from_millis(STALL_MS),
    };
    let options = EmulatorOptions {
        stalls: vec![stall],
        ..EmulatorOptions::default()
    };

    let mut sink = CountingSink::default();
    let virtual_run = run_virtual(&SignalSpec::default(), &mut sink, 3.0, &options).map_err(|e| e.to_string())?;
    check(sink.fail_lines >= 1, || "virtual stall produced no fail line".into())?;
    conserved(&virtual_run, &sink)?;

    let mut sink = CountingSink::default();
    let clock = MonotonicClock::new();
    let live_run = run_emulator(&SignalSpec::default(), &mut sink, 2.0, &clock, &options).map_err(|e| e.to_string())?;
    check(sink.fail_lines >= 1, || "real-time stall produced no fail line".into())?;
    conserved(&live_run, &sink)?;

    Ok(format!(
        "{STALL_MS} ms stall: virtual {} fail / {} ticks, real time {} fail / {} ticks",
        virtual_run.overruns, virtual_run.ticks, live_run.overruns, live_run.ticks
    ))
}

fn filter_null() -> Outcome {
    let fs = 250.0;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for amplitude in [1.0, 30.0, 500.0] {
        for k in 0..8 {
            let phase = k as f64 * PI / 4.0;
            let mut filter = MovingAverage5::new();
            for n in 0..1000 {
                let x = amplitude * (2.0 * PI * 50.0 * n as f64 / fs + phase).sin();
                if let Some(y) = filter.push(x) {
                    let relative = y.abs() / amplitude;
                    worst = worst.max(relative);
                    check(relative <= FILTER_NULL_RELATIVE, || {
                        format!("A={amplitude} phase={phase:.3}: residual {:.3e}", y.abs())
                    })?;
                }
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} cases, worst residual {worst:.2e} x amplitude"))
}

fn hr_accuracy() -> Outcome {
    let n = HR_TRACE_S * 1000 / SAMPLE_PERIOD_MS as usize;
    let mut summary = Vec::new();
    for bpm in HR_RATES_BPM {
        let spec = SignalSpec {
            heart_rate_bpm: bpm,
            powerline_amplitude_counts: HR_POWERLINE_COUNTS,
            ..SignalSpec::default()
        };
        let signal = generate_signal(&spec, n).map_err(|e| e.to_string())?;
        let messages: Vec<_> = signal.samples.iter().map(|s| encode_message(s, 0).unwrap()).collect();
        let trace = process_messages(&messages, &PeakDetectorConfig::default());

        let truth: Vec<u32> = signal.r_peaks.iter().map(|&i| i as u32 * SAMPLE_PERIOD_MS).collect();
        let found: Vec<u32> = trace.peaks.iter().map(|p| p.t_ms).collect();
        let missed = truth
            .iter()
            .filter(|&&t| !found.iter().any(|&f| f.abs_diff(t) <= PEAK_MATCH_MS))
            .count();
        let extra = found
            .iter()
            .filter(|&&f| !truth.iter().any(|&t| f.abs_diff(t) <= PEAK_MATCH_MS))
            .count();
        check(missed == 0 && extra == 0 && found.len() == truth.len(), || {
            format!(
                "{bpm} bpm: {} beats, {} peaks, {missed} missed, {extra} extra",
                truth.len(),
                found.len()
            )
        })?;

        let rates: Vec<f64> = trace.peaks.iter().filter_map(|p| p.heart_rate_bpm).collect();
        check(!rates.is_empty(), || format!("{bpm} bpm: no heart rate reported"))?;
        let worst = rates.iter().map(|r| (r - bpm).abs()).fold(0.0, f64::max);
        check(worst <= HR_TOLERANCE_BPM, || {
            format!("{bpm} bpm: heart rate off by {worst:.2}")
        })?;
        summary.push(format!("{bpm}: {} beats, worst {worst:.2}", truth.len()));
    }
    Ok(summary.join("; "))
}

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn ws_url(server: &RelayServer, path: &str) -> String {
    format!("ws://{}{}", server.local_addr(), path)
}

async fn ws_connect(server: &RelayServer, path: &str) -> Result<Client, String> {
    connect_async(ws_url(server, path))
        .await
        .map(|(ws, _)| ws)
        .map_err(|e| format!("{path}: {e}"))
}

async fn ws_status(server: &RelayServer, path: &str) -> Result<u16, String> {
    match connect_async(ws_url(server, path)).await {
        Ok(_) => Ok(101),
        Err(WsError::Http(resp)) => Ok(resp.status().as_u16()),
        Err(e) => Err(format!("{path}: {e}")),
    }
}

async fn page_status(server: &RelayServer, path: &str) -> Result<u16, String> {
    let mut stream = TcpStream::connect(server.local_addr())
        .await
        .map_err(|e| e.to_string())?;
    let req = format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    stream.write_all(req.as_bytes()).await.map_err(|e| e.to_string())?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).await.map_err(|e| e.to_string())?;
    raw.get(9..12)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("unparseable response to {path}"))
}

async fn reach_state(server: &RelayServer, id: &str, want: SessionState) -> Result<(), String> {
    let id = id.parse().unwrap();
    for _ in 0..1000 {
        if server.registry().state(&id) == want {
            return Ok(());
        }
        sleep(Duration::from_millis(2)).await;
    }
    Err(format!("session never reached {want:?}"))
}

async fn next_message(ws: &mut Client) -> Result<Message, String> {
    loop {
        match timeout(Duration::from_secs(2), ws.next()).await {
            Err(_) => return Err("timed out waiting for a frame".into()),
            Ok(Some(Ok(Message::Ping(_) | Message::Pong(_)))) => continue,
            Ok(Some(Ok(msg))) => return Ok(msg),
            Ok(other) => return Err(format!("stream ended: {other:?}")),
        }
    }
}

async fn pairing_state_machine() -> Outcome {
    let started = Instant::now();
    let server = RelayServer::bind("127.0.0.1:0", RelayConfig::default())
        .await
        .map_err(|e| e.to_string())?;
    let registry = Arc::clone(server.registry());
    let sid = "ward-3".parse().unwrap();

    // Doctor first: negative reply on both doctor routes.
    let page = page_status(&server, "/ward-3").await?;
    let ws = ws_status(&server, "/out/ward-3").await?;
    check(page == 404 && ws == 404, || {
        format!("doctor-first got page {page}, ws {ws}")
    })?;

    let mut patient = ws_connect(&server, "/in/ward-3").await?;
    reach_state(&server, "ward-3", SessionState::PatientConnected).await?;
    let dup = ws_status(&server, "/in/ward-3").await?;
    check(dup == 409, || format!("second patient got {dup}"))?;

    // Unpaired frames are lost and counted.
    for i in 0..100u32 {
        let frame = format!(r#"{{"t":{},"v":1}}"#, i * 4);
        patient.send(Message::text(frame)).await.map_err(|e| e.to_string())?;
    }
    for _ in 0..1000 {
        if registry.stats(&sid).is_some_and(|s| s.frames_in == 100) {
            break;
        }
        sleep(Duration::from_millis(2)).await;
    }
    let dropped = registry.stats(&sid).map(|s| s.frames_dropped_unpaired);
    check(dropped == Some(100), || format!("unpaired drop count {dropped:?}"))?;

    check(page_status(&server, "/ward-3").await? == 200, || {
        "viewer page refused".into()
    })?;
    let mut doctor = ws_connect(&server, "/out/ward-3").await?;
    reach_state(&server, "ward-3", SessionState::Paired).await?;
    let second = ws_status(&server, "/out/ward-3").await?;
    let second_page = page_status(&server, "/ward-3").await?;
    check(second == 409 && second_page == 409, || {
        format!("second doctor got ws {second}, page {second_page}")
    })?;

    let frame = r#"{"t":4,"v":512}"#;
    patient.send(Message::text(frame)).await.map_err(|e| e.to_string())?;
    match next_message(&mut doctor).await? {
        Message::Text(t) if t.as_str() == frame => {}
        other => {
            return Err(format!(
                "doctor's first frame was {other:?}, none of the unpaired ones expected"
            ))
        }
    }

    // Doctor leaves, another one re-attaches.
    drop(doctor);
    reach_state(&server, "ward-3", SessionState::PatientConnected).await?;
    let mut doctor = ws_connect(&server, "/out/ward-3").await?;
    reach_state(&server, "ward-3", SessionState::Paired).await?;

    // Patient leaves: doctor is closed with a reason, id becomes free.
    patient.close(None).await.map_err(|e| e.to_string())?;
    drop(patient);
    match next_message(&mut doctor).await? {
        Message::Close(Some(f)) if u16::from(f.code) == CLOSE_PATIENT_GONE && f.reason.as_str() == "patient gone" => {}
        other => return Err(format!("doctor got {other:?} when the patient left")),
    }
    reach_state(&server, "ward-3", SessionState::Idle).await?;
    let again = ws_connect(&server, "/in/ward-3").await;
    check(again.is_ok(), || "id not reusable after the patient left".into())?;
    drop(again);
    server.stop().await.map_err(|e| e.to_string())?;

    let elapsed = started.elapsed().as_secs_f64();
    check(elapsed < 10.0, || format!("took {elapsed:.1} s"))?;
    Ok(format!(
        "doctor-first 404, duplicate 409, 100 unpaired dropped, exclusivity 409, re-attach, close 4001, {elapsed:.2} s"
    ))
}

async fn isolation() -> Outcome {
    let server = RelayServer::bind("127.0.0.1:0", RelayConfig::default())
        .await
        .map_err(|e| e.to_string())?;
    let frames_per_session = ISOLATION_SECONDS * 250;

    let mut patients = Vec::new();
    let mut doctors = Vec::new();
    for s in 0..ISOLATION_SESSIONS {
        let id = format!("iso-{s}");
        let patient = ws_connect(&server, &format!("/in/{id}")).await?;
        reach_state(&server, &id, SessionState::PatientConnected).await?;
        let doctor = ws_connect(&server, &format!("/out/{id}")).await?;
        reach_state(&server, &id, SessionState::Paired).await?;
        patients.push(patient);
        doctors.push(doctor);
    }

    let mut senders = Vec::new();
    for (s, mut patient) in patients.into_iter().enumerate() {
        senders.push(tokio::spawn(async move {
            let mut ticker = tokio::time::interval(Duration::from_millis(4));
            ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
            for seq in 0..frames_per_session {
                ticker.tick().await;
                let v = s as u64 * 100 + seq % 100;
                let frame = format!(r#"{{"t":{},"v":{v}}}"#, seq * 4);
                if let Err(e) = patient.send(Message::text(frame)).await {
                    return Err(format!("session {s}: send failed: {e}"));
                }
            }
            let _ = patient.close(None).await;
            Ok(())
        }));
    }
    let mut receivers = Vec::new();
    for (s, mut doctor) in doctors.into_iter().enumerate() {
        receivers.push(tokio::spawn(async move {
            let mut received = 0u64;
            loop {
                let msg = match timeout(Duration::from_secs(10), doctor.next()).await {
                    Err(_) => return Err(format!("session {s}: doctor starved")),
                    Ok(Some(Ok(msg))) => msg,
                    Ok(Some(Err(e))) => return Err(format!("session {s}: {e}")),
                    Ok(None) => break,
                };
                match msg {
                    Message::Text(text) => {
                        let m = ekg_core::EkgMessage::from_json(text.as_str()).map_err(|e| e.to_string())?;
                        if u64::from(m.value) / 100 != s as u64 {
                            return Err(format!("session {s} received a frame from session {}", m.value / 100));
                        }
                        if u64::from(m.t_ms) != received * 4 {
                            return Err(format!("session {s}: frame t={} out of sequence at {received}", m.t_ms));
                        }
                        received += 1;
                    }
                    Message::Close(_) => break,
                    _ => {}
                }
            }
            Ok(received)
        }));
    }

    for sender in senders {
        sender.await.map_err(|e| e.to_string())??;
    }
    let mut total = 0;
    for (s, receiver) in receivers.into_iter().enumerate() {
        let received = receiver.await.map_err(|e| e.to_string())??;
        check(received == frames_per_session, || {
            format!("session {s}: received {received} of {frames_per_session}")
        })?;
        total += received;
    }

    let registry = Arc::clone(server.registry());
    for s in 0..ISOLATION_SESSIONS {
        let id = format!("iso-{s}");
        let mut stats = None;
        for _ in 0..1000 {
            stats = registry
                .finished_sessions()
                .into_iter()
                .find(|(sid, _)| sid.as_str() == id)
                .map(|(_, st)| st);
            if stats.is_some() {
                break;
            }
            sleep(Duration::from_millis(5)).await;
        }
        let stats = stats.ok_or_else(|| format!("{id} never finished"))?;
        check(stats.is_balanced(), || {
            format!("{id}: counters do not balance {stats:?}")
        })?;
        check(
            stats.frames_in == frames_per_session && stats.frames_out == frames_per_session,
            || format!("{id}: {stats:?}"),
        )?;
    }
    server.stop().await.map_err(|e| e.to_string())?;
    Ok(format!(
        "{ISOLATION_SESSIONS} sessions x {ISOLATION_SECONDS} s, {total} frames, none crossed, counters balanced"
    ))
}

async fn latency() -> Outcome {
    let local = run_latency_bench(LOCALHOST_LATENCY_S, Topology::Localhost)
        .await
        .map_err(|e| e.to_string())?;
    let local_report = local.report.ok_or("localhost run delivered nothing")?;
    local.conservation().map_err(|e| format!("localhost: {e}"))?;
    check(local_report.p95 < LOCALHOST_P95_MS, || {
        format!("localhost p95 {} ms", local_report.p95)
    })?;

    let inproc = run_latency_bench(INPROC_LATENCY_S, Topology::InProc)
        .await
        .map_err(|e| e.to_string())?;
    let inproc_report = inproc.report.ok_or("in-process run delivered nothing")?;
    inproc.conservation().map_err(|e| format!("inproc: {e}"))?;
    check(inproc_report.p99 < INPROC_P99_MS, || {
        format!("in-process p99 {} ms", inproc_report.p99)
    })?;

    Ok(format!(
        "localhost {} s: n={} p50={} p95={} max={} ms; inproc {} s: n={} p99={} max={} ms",
        LOCALHOST_LATENCY_S,
        local_report.n,
        local_report.p50,
        local_report.p95,
        local_report.max,
        INPROC_LATENCY_S,
        inproc_report.n,
        inproc_report.p99,
        inproc_report.max,
    ))
}

fn report(name: &str, outcome: Outcome, failures: &mut usize) {
    match outcome {
        Ok(detail) => println!("PASS  {name:<20} {detail}"),
        Err(reason) => {
            *failures += 1;
            println!("FAIL  {name:<20} {reason}");
        }
    }
    let _ = io::stdout().flush();
}

fn main() {
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let mut failures = 0;
    println!("acceptance suite");
    report("codec-bound", codec_bound(), &mut failures);
    report("bandwidth-budget", bandwidth_budget(), &mut failures);
    report("overrun-semantics", overrun_semantics(), &mut failures);
    report("filter-null", filter_null(), &mut failures);
    report("hr-accuracy", hr_accuracy(), &mut failures);
    report("pairing", runtime.block_on(pairing_state_machine()), &mut failures);
    report("isolation", runtime.block_on(isolation()), &mut failures);
    report("end-to-end-latency", runtime.block_on(latency()), &mut failures);
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
