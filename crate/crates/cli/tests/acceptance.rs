//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! Tolerances:
//! - alarm latency: at most immobility + baseline + trend windows after
//!   stillness onset
//! - escalation start: ack window after the alarm, plus or minus one tick
//! - 1000x replay of the 780 s scenario: under 1 s of wall time
//! - streaming features vs naive recomputation: booleans and raw values
//!   exact, energies and slopes within 1e-9 absolute

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use comaguard_core::event::to_jsonl;
use comaguard_core::gateway::{Behavior, GatewayScript, Rule};
use comaguard_core::oracle::{naive_frames, ordering_violations, verify_events, VALUE_TOLERANCE};
use comaguard_core::replay::{Pacer, Replay, WallClockPacer};
use comaguard_core::scenario::{generate_scenario, markers, random_trace, ScenarioKind, ScenarioSpec};
use comaguard_core::settings::Settings;
use comaguard_core::trace::{write_trace, Action};
use comaguard_core::{
    Contact, ContactList, DetectionConfig, EscalationPolicy, EventKind, OutputEvent, StateKind, StopCause,
    TraceRecord,
};
use comaguard_service::{serve, MockGateway, Registry, ServiceConfig};
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn example_settings() -> Settings {
    Settings::load(&root().join("config/comaguard.example.json")).expect("example config loads")
}

fn abe() -> ContactList {
    ContactList::new(vec![
        Contact::new("A", "+15550100"),
        Contact::new("B", "+15550101"),
        Contact::emergency("E", "112"),
    ])
    .unwrap()
}

fn compressed() -> DetectionConfig {
    DetectionConfig {
        immobility_duration_s: 30,
        baseline_window_s: 20,
        hr_trend_window_s: 30,
        min_baseline_samples: 5,
        ack_window_s: 20,
        alarm_cooldown_s: 60,
        reminder_interval_s: 120,
        escalation: EscalationPolicy {
            per_contact_timeout_s: 10,
            max_rounds: 2,
        },
        ..Default::default()
    }
}

fn scenario(kind: ScenarioKind, seed: u64) -> Vec<TraceRecord> {
    generate_scenario(&ScenarioSpec::new(kind, seed)).unwrap()
}

fn times(events: &[OutputEvent], pred: impl Fn(&EventKind) -> bool) -> Vec<u64> {
    events.iter().filter(|e| pred(&e.kind)).map(|e| e.t_ms).collect()
}

fn is_alarm(k: &EventKind) -> bool {
    matches!(k, EventKind::AlarmRaised { .. })
}

fn attempt_ids(events: &[OutputEvent]) -> Vec<&str> {
    events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::ContactAttempt { contact_id, .. } => Some(contact_id.as_str()),
            _ => None,
        })
        .collect()
}

/// Mixes a seed into a small pseudo-random number.
fn mix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn script_for(seed: u64) -> GatewayScript {
    match seed % 4 {
        0 => GatewayScript::uniform(Behavior::Fail),
        1 => GatewayScript::uniform(Behavior::Deliver),
        2 => GatewayScript::uniform(Behavior::Fail).with_number("+15550100", Rule::new(Behavior::NoAnswer)),
        _ => GatewayScript::uniform(Behavior::Fail).with_number("+15550101", Rule::new(Behavior::Deliver)),
    }
}

/// Every log produced along the way, for the corpus-wide safety check.
#[derive(Default)]
struct Corpus(Vec<Vec<OutputEvent>>);

impl Corpus {
    fn add(&mut self, log: &[OutputEvent]) {
        self.0.push(log.to_vec());
    }
}

fn criterion_1(corpus: &mut Corpus) -> Outcome {
    let settings = example_settings();
    let cfg = settings.detection.clone();
    let recs = scenario(ScenarioKind::HypoglycemicComa, 42);
    let start = Instant::now();
    let out = Replay::new(cfg.clone(), settings.contacts.clone())
        .gateway(settings.gateway.clone())
        .speed(1000.0)
        .run_paced(&recs, &mut WallClockPacer::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    corpus.add(&out.events);

    let alarms = times(&out.events, is_alarm);
    let [alarm] = alarms[..] else {
        return Err(format!("expected one alarm, got {alarms:?}"));
    };
    let onset = markers(ScenarioKind::HypoglycemicComa).stillness_onset_ms;
    let bound = (cfg.immobility_duration_s + cfg.baseline_window_s + cfg.hr_trend_window_s) * 1000;
    if alarm < onset || alarm - onset > bound {
        return Err(format!("alarm {} ms after onset, bound {bound}", alarm as i64 - onset as i64));
    }
    let esc = times(&out.events, |k| *k == EventKind::EscalationStarted);
    let tick = settings.tick_period_s * 1000;
    let want = alarm + cfg.ack_window_s * 1000;
    match esc.first() {
        Some(&t) if t.abs_diff(want) <= tick => {}
        other => return Err(format!("escalation at {other:?}, want {want} +/- {tick}")),
    }
    let first_contact = settings.contacts.as_slice()[0].id.as_str();
    let first = attempt_ids(&out.events).first().copied();
    if first != Some(first_contact) {
        return Err(format!("first attempt {first:?}, want {first_contact}"));
    }
    if elapsed.as_secs_f64() >= 1.0 {
        return Err(format!("1000x replay took {elapsed:?}"));
    }
    Ok(format!(
        "alarm {:.0} s after onset (bound {} s), escalation +{} s, first contact {first_contact}, wall {:.0} ms",
        (alarm - onset) as f64 / 1000.0,
        bound / 1000,
        (esc[0] - alarm) / 1000,
        elapsed.as_secs_f64() * 1000.0
    ))
}

fn criterion_2(corpus: &mut Corpus) -> Outcome {
    let cfg = DetectionConfig::default();
    let contacts = abe();
    let kinds = [
        ScenarioKind::HypoglycemicComa,
        ScenarioKind::HyperglycemicComa,
        ScenarioKind::NightmareFalsePositive,
    ];
    let mut variants = 0;
    for kind in kinds {
        for seed in 0..70u64 {
            let mut recs = scenario(kind, seed);
            for r in &mut recs {
                r.action = None;
            }
            let base = Replay::new(cfg.clone(), contacts.clone()).run(&recs).map_err(|e| e.to_string())?;
            let Some(&alarm) = times(&base.events, is_alarm).first() else {
                return Err(format!("{} seed {seed}: no alarm to acknowledge", kind.name()));
            };
            let offset_s = mix(seed ^ (kind as u64) << 32) % 60;
            let target = alarm + offset_s * 1000;
            let rec = recs
                .iter_mut()
                .find(|r| r.t_ms >= target && r.t_ms < alarm + 60_000)
                .ok_or_else(|| format!("{} seed {seed}: no record to carry the ack", kind.name()))?;
            rec.action = Some(Action::Ack);
            let ack_t = rec.t_ms;

            let log = Replay::new(cfg.clone(), contacts.clone())
                .run(&recs)
                .map_err(|e| e.to_string())?
                .events;
            corpus.add(&log);
            let alarm_idx = log
                .iter()
                .position(|e| is_alarm(&e.kind))
                .ok_or_else(|| format!("{} seed {seed}: alarm vanished", kind.name()))?;
            if log[alarm_idx].t_ms != alarm {
                return Err(format!("{} seed {seed}: alarm moved", kind.name()));
            }
            let next_alarm = log[alarm_idx + 1..]
                .iter()
                .position(|e| is_alarm(&e.kind))
                .map_or(log.len(), |p| alarm_idx + 1 + p);
            let leaked = log[alarm_idx..next_alarm].iter().find(|e| {
                matches!(e.kind, EventKind::EscalationStarted | EventKind::ContactAttempt { .. })
            });
            if let Some(e) = leaked {
                return Err(format!(
                    "{} seed {seed}: ack at +{} ms, yet {} at {}",
                    kind.name(),
                    ack_t - alarm,
                    e.kind.name(),
                    e.t_ms
                ));
            }
            variants += 1;
        }
    }
    if variants < 200 {
        return Err(format!("only {variants} variants"));
    }
    Ok(format!("{variants} variants acknowledged 0..59 s after the alarm, none escalated"))
}

fn criterion_3(corpus: &mut Corpus) -> Outcome {
    let m = markers(ScenarioKind::DeviceRemoved);
    let reentry = m.reentry_ms.expect("device_removed has a re-entry");
    let settings = example_settings();
    for seed in 0..50u64 {
        let recs = scenario(ScenarioKind::DeviceRemoved, seed);
        let log = Replay::new(settings.detection.clone(), settings.contacts.clone())
            .run(&recs)
            .map_err(|e| e.to_string())?
            .events;
        corpus.add(&log);
        if !times(&log, is_alarm).is_empty() {
            return Err(format!("seed {seed}: alarm raised"));
        }
        let to_idle = log.iter().position(|e| {
            e.kind
                == EventKind::StateChanged {
                    from: StateKind::Immobile,
                    to: StateKind::Idle,
                }
        });
        let Some(i) = to_idle else {
            return Err(format!("seed {seed}: no Immobile->Idle"));
        };
        let reactivated = log[i..].iter().any(|e| {
            e.t_ms >= reentry
                && e.kind
                    == EventKind::StateChanged {
                        from: StateKind::Idle,
                        to: StateKind::Active,
                    }
        });
        if !reactivated {
            return Err(format!("seed {seed}: burst at {reentry} ms did not re-enter Active"));
        }
    }
    Ok("50 seeds: Immobile->Idle, zero alarms, Idle->Active after the burst".into())
}

/// Honours the requested pace without sleeping.
#[derive(Default)]
struct VirtualPacer {
    deadlines_ms: Vec<f64>,
}

impl Pacer for VirtualPacer {
    fn wait_until(&mut self, t_ms: u64, speed: f64) {
        self.deadlines_ms.push(t_ms as f64 / speed);
    }
}

fn criterion_4(corpus: &mut Corpus) -> Outcome {
    let settings = example_settings();
    let mut traces: Vec<(DetectionConfig, GatewayScript, Vec<TraceRecord>)> = Vec::new();
    for kind in ScenarioKind::ALL {
        for seed in 0..5 {
            traces.push((settings.detection.clone(), settings.gateway.clone(), scenario(kind, seed)));
        }
    }
    for seed in 0..20 {
        traces.push((compressed(), script_for(seed), random_trace(seed, 1800)));
    }
    for (i, (cfg, script, recs)) in traces.iter().enumerate() {
        let base = Replay::new(cfg.clone(), abe()).gateway(script.clone());
        let slow = base.clone().speed(1.0).run_paced(recs, &mut VirtualPacer::default());
        let fast = base.clone().speed(1000.0).run_paced(recs, &mut VirtualPacer::default());
        let again = base.speed(1000.0).run_paced(recs, &mut VirtualPacer::default());
        let (slow, fast, again) = match (slow, fast, again) {
            (Ok(a), Ok(b), Ok(c)) => (to_jsonl(&a.events), to_jsonl(&b.events), to_jsonl(&c.events)),
            _ => return Err(format!("trace {i}: replay failed")),
        };
        if slow != fast || fast != again {
            return Err(format!("trace {i}: logs differ between runs"));
        }
        corpus.add(&comaguard_core::event::parse_jsonl(&slow).unwrap());
    }

    // Real pacing through the command line, against the committed golden log.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let trace = root().join("golden/hypoglycemic_coma_seed42.csv");
    let config = root().join("config/comaguard.example.json");
    let mut outputs = Vec::new();
    for speed in [None, Some("1000")] {
        let out = dir.path().join(format!("{}.jsonl", speed.unwrap_or("unpaced")));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_comaguard"));
        cmd.args(["run", "--trace"]).arg(&trace).arg("--config").arg(&config).arg("--out").arg(&out);
        if let Some(s) = speed {
            cmd.args(["--speed", s]);
        }
        let status = cmd.output().map_err(|e| e.to_string())?.status;
        if !status.success() {
            return Err(format!("comaguard run exited with {status}"));
        }
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    let golden = std::fs::read(root().join("golden/hypoglycemic_coma_seed42.events.jsonl")).map_err(|e| e.to_string())?;
    if outputs[0] != outputs[1] || outputs[0] != golden {
        return Err("command-line logs differ from each other or from the golden log".into());
    }
    Ok(format!(
        "{} traces byte-identical at 1x, 1000x and on rerun; CLI 1000x == unpaced == golden",
        traces.len()
    ))
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= VALUE_TOLERANCE,
        (None, None) => true,
        _ => false,
    }
}

fn criterion_5(corpus: &mut Corpus) -> Outcome {
    let (mut alarms, mut attempts, mut frames_checked) = (0, 0, 0);
    for seed in 0..1000u64 {
        let cfg = if seed % 2 == 0 { DetectionConfig::default() } else { compressed() };
        let recs = random_trace(seed, 3600);
        let out = Replay::new(cfg.clone(), abe())
            .gateway(script_for(seed))
            .capture_frames(true)
            .run(&recs)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let verdict = verify_events(&recs, &cfg, &abe(), 1, &out.events);
        if let Some(d) = verdict.divergences().first() {
            return Err(format!("seed {seed}: {d}"));
        }
        let naive = naive_frames(&recs, &cfg);
        if naive.len() != out.frames.len() {
            return Err(format!("seed {seed}: {} frames vs {}", out.frames.len(), naive.len()));
        }
        for (s, n) in out.frames.iter().zip(&naive) {
            let exact = s.t_ms == n.t_ms
                && s.moving == n.moving
                && s.worn == n.worn
                && s.hr_now == n.hr_now
                && s.rh_now == n.rh_now;
            let near = (s.motion_energy_g - n.motion_energy_g).abs() <= VALUE_TOLERANCE
                && close(s.hr_slope_bpm_per_min, n.hr_slope_bpm_per_min);
            if !(exact && near) {
                return Err(format!("seed {seed} t={}: streaming {s:?} vs naive {n:?}", s.t_ms));
            }
        }
        frames_checked += naive.len();
        alarms += times(&out.events, is_alarm).len();
        attempts += attempt_ids(&out.events).len();
        corpus.add(&out.events);
    }
    Ok(format!(
        "1000 traces pass; {frames_checked} frames match; {alarms} alarms, {attempts} attempts covered"
    ))
}

fn check_order(log: &[OutputEvent]) -> Result<(), String> {
    let ids = attempt_ids(log);
    if ids != ["A", "B", "E", "A", "B", "E"] {
        return Err(format!("attempt order {ids:?}"));
    }
    let last = log
        .iter()
        .rposition(|e| matches!(e.kind, EventKind::ContactAttempt { .. }))
        .unwrap();
    match log.get(last + 1).map(|e| &e.kind) {
        Some(EventKind::EscalationStopped {
            cause: StopCause::Exhausted,
        }) => Ok(()),
        other => Err(format!("after last attempt: {other:?}")),
    }
}

fn two_rounds() -> DetectionConfig {
    DetectionConfig {
        escalation: EscalationPolicy {
            max_rounds: 2,
            ..Default::default()
        },
        ..Default::default()
    }
}

async fn start_service(
    data_dir: &Path,
    gateway_url: &str,
) -> (String, Arc<Registry>, tokio::sync::oneshot::Sender<()>) {
    let mut config = ServiceConfig::default();
    config.options.data_dir = Some(data_dir.to_path_buf());
    config.options.gateway_url = Some(gateway_url.to_string());
    config.options.gateway_timeout_ms = 2_000;
    let registry = Registry::open(config).expect("registry");
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(serve(listener, registry.clone(), async {
        let _ = rx.await;
    }));
    (base, registry, tx)
}

async fn start_mock(script: GatewayScript) -> (String, Arc<MockGateway>) {
    let mock = MockGateway::new(script);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let app = mock.router();
    tokio::spawn(async move { axum::serve(listener, app).await });
    (url, mock)
}

async fn create_session(client: &reqwest::Client, base: &str, body: Value) -> Result<String, String> {
    let resp = client
        .post(format!("{base}/sessions"))
        .json(&body)
        .send()
        .await
        .map_err(|e| e.to_string())?;
    if resp.status() != reqwest::StatusCode::CREATED {
        return Err(format!("create: {}", resp.status()));
    }
    let v: Value = resp.json().await.map_err(|e| e.to_string())?;
    Ok(v["id"].as_str().unwrap_or_default().to_string())
}

/// Sends `recs` in batches of varying size, alternating JSON and CSV bodies.
async fn ingest_batched(client: &reqwest::Client, base: &str, id: &str, recs: &[TraceRecord]) -> Result<(), String> {
    let sizes = [1usize, 7, 50, 333, 2, 120];
    let mut at = 0;
    let mut n = 0;
    while at < recs.len() {
        let end = (at + sizes[n % sizes.len()]).min(recs.len());
        let batch = &recs[at..end];
        let req = client.post(format!("{base}/sessions/{id}/samples"));
        let req = if n % 2 == 0 {
            req.json(&json!({ "records": batch }))
        } else {
            req.header("content-type", "text/csv")
                .body(write_trace(batch).map_err(|e| e.to_string())?)
        };
        let resp = req.send().await.map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("batch {n}: {} {}", resp.status(), resp.text().await.unwrap_or_default()));
        }
        at = end;
        n += 1;
    }
    Ok(())
}

fn criterion_6(rt: &tokio::runtime::Runtime, corpus: &mut Corpus) -> Outcome {
    let recs = scenario(ScenarioKind::HypoglycemicComa, 42);
    let offline = Replay::new(two_rounds(), abe())
        .gateway(GatewayScript::uniform(Behavior::Fail))
        .run(&recs)
        .map_err(|e| e.to_string())?
        .events;
    check_order(&offline).map_err(|e| format!("offline: {e}"))?;
    corpus.add(&offline);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (live, numbers) = rt.block_on(async {
        let (gw, mock) = start_mock(GatewayScript::uniform(Behavior::Fail)).await;
        let (base, registry, stop) = start_service(dir.path(), &gw).await;
        let client = reqwest::Client::new();
        let id = create_session(&client, &base, json!({ "config": two_rounds(), "contacts": abe() })).await?;
        ingest_batched(&client, &base, &id, &recs).await?;
        let log = registry.get(&id).map_err(|e| e.to_string())?.lines_from(0);
        let _ = stop.send(());
        let numbers: Vec<String> = mock.requests().into_iter().map(|r| r.number).collect();
        Ok::<_, String>((log, numbers))
    })?;
    let live: Vec<OutputEvent> = live.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    check_order(&live).map_err(|e| format!("service: {e}"))?;
    corpus.add(&live);
    let want = ["+15550100", "+15550101", "112", "+15550100", "+15550101", "112"];
    if numbers != want {
        return Err(format!("mock gateway saw {numbers:?}"));
    }

    // The emergency contact never opens a run anywhere in the corpus.
    for log in &corpus.0 {
        for (i, e) in log.iter().enumerate() {
            if e.kind == EventKind::EscalationStarted {
                let first = log[i..].iter().find_map(|e| match &e.kind {
                    EventKind::ContactAttempt { contact_id, .. } => Some(contact_id.as_str()),
                    EventKind::EscalationStopped { .. } => Some(""),
                    _ => None,
                });
                if first == Some("E") {
                    return Err(format!("emergency contact first at {}", e.t_ms));
                }
            }
        }
    }
    Ok("offline and service+mock gateway: A,B,E,A,B,E then Exhausted; emergency never first".into())
}

/// Every attempt must sit inside a run that an alarm opened.
fn unsafe_attempt(log: &[OutputEvent]) -> Option<usize> {
    let mut alarmed = false;
    let mut escalating = false;
    for (i, e) in log.iter().enumerate() {
        match &e.kind {
            EventKind::AlarmRaised { .. } => alarmed = true,
            EventKind::EscalationStarted => escalating = alarmed,
            EventKind::EscalationStopped { .. } | EventKind::AlarmAcknowledged => {
                alarmed = false;
                escalating = false;
            }
            EventKind::ContactAttempt { .. } if !escalating => return Some(i),
            _ => {}
        }
    }
    None
}

fn criterion_7(corpus: &Corpus) -> Outcome {
    let golden = std::fs::read_to_string(root().join("golden/hypoglycemic_coma_seed42.events.jsonl"))
        .map_err(|e| e.to_string())?;
    let golden = comaguard_core::event::parse_jsonl(&golden).map_err(|e| e.to_string())?;
    let mut logs = 0;
    let mut attempts = 0;
    for log in corpus.0.iter().chain(std::iter::once(&golden)) {
        if let Some(i) = unsafe_attempt(log) {
            return Err(format!("attempt without alarm and escalation: {:?}", log[i]));
        }
        if let Some(d) = ordering_violations(log).first() {
            return Err(d.to_string());
        }
        logs += 1;
        attempts += attempt_ids(log).len();
    }
    Ok(format!("{logs} logs, {attempts} attempts, all preceded by AlarmRaised and EscalationStarted"))
}

fn criterion_8(rt: &tokio::runtime::Runtime, corpus: &mut Corpus) -> Outcome {
    let script = GatewayScript::uniform(Behavior::Fail).with_number("+15550101", Rule::new(Behavior::Deliver));
    let settings = example_settings();
    let mut cases: Vec<(String, DetectionConfig, Vec<TraceRecord>)> = Vec::new();
    for kind in ScenarioKind::ALL {
        for seed in 0..2 {
            cases.push((format!("{} seed {seed}", kind.name()), settings.detection.clone(), scenario(kind, seed)));
        }
    }
    for seed in 0..10 {
        cases.push((format!("random seed {seed}"), compressed(), random_trace(1000 + seed, 1800)));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let total = cases.len();
    rt.block_on(async {
        let (gw, _mock) = start_mock(script.clone()).await;
        let (base, _registry, stop) = start_service(dir.path(), &gw).await;
        let client = reqwest::Client::new();
        for (name, cfg, recs) in &cases {
            let offline = Replay::new(cfg.clone(), abe())
                .gateway(script.clone())
                .run(recs)
                .map_err(|e| e.to_string())?
                .events;
            let id = create_session(&client, &base, json!({ "config": cfg, "contacts": abe() })).await?;
            ingest_batched(&client, &base, &id, recs).await?;
            let persisted = std::fs::read_to_string(dir.path().join(&id).join("events.jsonl"))
                .map_err(|e| e.to_string())?;
            if persisted != to_jsonl(&offline) {
                return Err(format!("{name}: persisted log differs from offline replay"));
            }
            corpus.add(&offline);
        }
        let _ = stop.send(());
        Ok::<_, String>(())
    })?;
    Ok(format!("{total} traces ingested over HTTP in mixed JSON/CSV batches; persisted logs == offline"))
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    let mut corpus = Corpus::default();
    let mut results = vec![
        (1, "hypoglycemic replay alarms then escalates", criterion_1(&mut corpus)),
        (2, "acknowledgement suppresses escalation", criterion_2(&mut corpus)),
        (3, "device removal ends the episode", criterion_3(&mut corpus)),
        (4, "replay is deterministic across speeds", criterion_4(&mut corpus)),
        (5, "oracle equivalence on random traces", criterion_5(&mut corpus)),
        (6, "escalation order with an all-fail gateway", criterion_6(&rt, &mut corpus)),
        (8, "HTTP ingestion equals offline replay", criterion_8(&rt, &mut corpus)),
    ];
    // Runs last so it sees every log above.
    results.push((7, "two-layer safety across the corpus", criterion_7(&corpus)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, outcome) in results {
        match outcome {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
