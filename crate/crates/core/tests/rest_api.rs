mod common;

use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use slicenet_core::control::{
    router, ApiState, ConfigMessage, Envelope, Gateway, Origin, SliceRegistry, SlicingMode, TelemetryFrame, UeInfo,
};
use slicenet_core::radio::{Rnti, SliceId};
use slicenet_core::StatsReport;
use tokio::sync::broadcast;
use tower::ServiceExt;

use common::{descriptor, synthetic_report};

struct Fixture {
    app: Router,
    agent_rx: Receiver<Envelope>,
    stats_tx: Sender<StatsReport>,
    frames: broadcast::Sender<TelemetryFrame>,
}

fn fixture(mode: SlicingMode) -> Fixture {
    let (tx, agent_rx) = mpsc::channel();
    let (stats_tx, stats_rx) = mpsc::channel();
    let registry = match mode {
        SlicingMode::Sliced => SliceRegistry::from_slices(&[descriptor(1, 0.05), descriptor(2, 0.95)]).unwrap(),
        SlicingMode::Baseline => SliceRegistry::from_slices(&[]).unwrap(),
    };
    let ues = vec![
        UeInfo {
            rnti: Rnti(1025),
            imsi: "208950000000001".into(),
            slice_id: Some(SliceId(1)),
            cqi_dl: 15,
            cqi_ul: 15,
            control_priority_flag: true,
        },
        UeInfo {
            rnti: Rnti(2838),
            imsi: "208950000000003".into(),
            slice_id: Some(SliceId(2)),
            cqi_dl: 15,
            cqi_ul: 15,
            control_priority_flag: false,
        },
    ];
    let gateway = Gateway::new(mode, registry, ues, tx, stats_rx);
    let (frames, _) = broadcast::channel(16);
    let app = router(ApiState {
        gateway: Arc::new(Mutex::new(gateway)),
        frames: frames.clone(),
        scenario: None,
    });
    Fixture {
        app,
        agent_rx,
        stats_tx,
        frames,
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn slice_json(id: u32, share: f64) -> Value {
    json!({
        "slice_id": id,
        "label": format!("s{id}"),
        "dl_share": share,
        "ul_share": share,
        "priority": 0,
        "rb_availability": "low"
    })
}

#[tokio::test]
async fn lists_slices_and_ues() {
    let f = fixture(SlicingMode::Sliced);
    let (status, body) = call(&f.app, Method::GET, "/slices", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body.as_array().unwrap().len(), 2);
    assert_eq!(body[0]["slice_id"], 1);

    let (status, body) = call(&f.app, Method::GET, "/ues", None).await;
    assert_eq!(status, StatusCode::OK);
    let ues = body.as_array().unwrap();
    assert_eq!(ues.len(), 2);
    assert_eq!(ues[0]["rnti"], 1025);
    assert_eq!(ues[0]["imsi"], "208950000000001");
    assert_eq!(ues[0]["control_priority_flag"], true);
    assert_eq!(ues[1]["dl_queue_bytes"], 0);
}

#[tokio::test]
async fn relocation_is_forwarded_to_the_agent() {
    let f = fixture(SlicingMode::Sliced);
    let (status, body) = call(&f.app, Method::POST, "/ues/2838/slice", Some(json!({"slice_id": 1}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "queued");
    let env = f.agent_rx.try_recv().unwrap();
    assert_eq!(env.origin, Origin::Northbound);
    assert_eq!(
        env.message,
        ConfigMessage::RelocateUe {
            rnti: Rnti(2838),
            slice_id: SliceId(1)
        }
    );

    // Already there: acknowledged without a message.
    let (status, body) = call(&f.app, Method::POST, "/ues/2838/slice", Some(json!({"slice_id": 1}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "unchanged");
    assert!(f.agent_rx.try_recv().is_err());
}

#[tokio::test]
async fn relocation_errors() {
    let f = fixture(SlicingMode::Sliced);
    let (status, body) = call(&f.app, Method::POST, "/ues/9/slice", Some(json!({"slice_id": 1}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "UnknownRnti");
    assert_eq!(body["error"]["field"], "rnti");

    let (status, body) = call(&f.app, Method::POST, "/ues/2838/slice", Some(json!({"slice_id": 7}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "UnknownSliceId");

    let (status, body) = call(&f.app, Method::POST, "/ues/abc/slice", Some(json!({"slice_id": 1}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "UnknownRnti");

    let (status, body) = call(&f.app, Method::POST, "/ues/2838/slice", Some(json!({"slice": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "InvalidBody");
    assert!(f.agent_rx.try_recv().is_err());
}

#[tokio::test]
async fn create_update_delete_slices() {
    let f = fixture(SlicingMode::Sliced);
    // No room left: 0.05 + 0.95 already.
    let (status, body) = call(&f.app, Method::POST, "/slices", Some(slice_json(3, 0.1))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "ShareSumExceeded");
    assert_eq!(body["error"]["field"], "dl_share");
    assert_eq!(body["error"]["direction"], "dl");

    let (status, _) = call(&f.app, Method::PATCH, "/slices/2", Some(json!({"dl_share": 0.85, "ul_share": 0.85}))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&f.app, Method::POST, "/slices", Some(slice_json(3, 0.1))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["slice_id"], 3);

    let (status, body) = call(&f.app, Method::POST, "/slices", Some(slice_json(3, 0.0))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "DuplicateSliceId");

    let (status, body) = call(&f.app, Method::PATCH, "/slices/9", Some(json!({"dl_share": 0.0}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "UnknownSliceId");

    let (status, body) = call(&f.app, Method::PATCH, "/slices/3", Some(json!({"slice_id": 4}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "slice_id");

    let (status, body) = call(&f.app, Method::DELETE, "/slices/2", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "SliceNonEmpty");

    let (status, body) = call(&f.app, Method::DELETE, "/slices/3", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "queued");

    let sent: Vec<ConfigMessage> = f.agent_rx.try_iter().map(|e| e.message).collect();
    assert_eq!(sent.len(), 3);
    assert!(matches!(sent[0], ConfigMessage::UpdateSlice(_)));
    assert!(matches!(sent[1], ConfigMessage::CreateSlice(_)));
    assert!(matches!(sent[2], ConfigMessage::DeleteSlice { slice_id: SliceId(3) }));

    let (_, body) = call(&f.app, Method::GET, "/slices", None).await;
    assert_eq!(body.as_array().unwrap().len(), 2);
    assert_eq!(body[1]["dl_share"], 0.85);
}

#[tokio::test]
async fn invalid_descriptor_is_rejected() {
    let f = fixture(SlicingMode::Sliced);
    let (status, body) = call(&f.app, Method::PATCH, "/slices/1", Some(json!({"dl_share": -0.1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "InvalidDescriptor");
    let (status, body) = call(&f.app, Method::PATCH, "/slices/1", Some(json!({"colour": "red"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "InvalidBody");
}

#[tokio::test]
async fn baseline_mode_refuses_slice_management() {
    let f = fixture(SlicingMode::Baseline);
    let (status, body) = call(&f.app, Method::POST, "/slices", Some(slice_json(1, 0.1))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "SlicingDisabled");
    let (status, _) = call(&f.app, Method::POST, "/ues/2838/slice", Some(json!({"slice_id": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn stats_windows() {
    let f = fixture(SlicingMode::Sliced);
    let (status, body) = call(&f.app, Method::GET, "/stats", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "NoStats");

    for k in 0..20 {
        f.stats_tx
            .send(synthetic_report(k as f64 * 0.1, 0.1, &[(1, 0.2), (2, 0.6)]))
            .unwrap();
    }
    let (status, body) = call(&f.app, Method::GET, "/stats?window=1s", None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert!((body["window_start"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((body["window_end"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((body["slices"][1]["dl"]["utilization"].as_f64().unwrap() - 0.6).abs() < 1e-9);

    let (status, body) = call(&f.app, Method::GET, "/stats?window=500ms", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!((body["window_start"].as_f64().unwrap() - 1.5).abs() < 1e-9);

    let (status, body) = call(&f.app, Method::GET, "/stats?window=5s", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "WindowOutOfRange");

    let (status, body) = call(&f.app, Method::GET, "/stats?window=soon", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "InvalidWindow");
}

#[tokio::test]
async fn telemetry_streams_frames_as_sse() {
    let f = fixture(SlicingMode::Sliced);
    let req = Request::builder().uri("/telemetry").body(Body::empty()).unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()[header::CONTENT_TYPE]
        .to_str()
        .unwrap()
        .starts_with("text/event-stream"));

    let report = synthetic_report(0.0, 0.1, &[(1, 0.5)]);
    f.frames.send(TelemetryFrame::from(&report)).unwrap();
    let mut body = resp.into_body();
    let chunk = body.frame().await.unwrap().unwrap().into_data().unwrap();
    let text = String::from_utf8(chunk.to_vec()).unwrap();
    assert!(text.starts_with("event: telemetry\n"), "{text}");
    let data = text.lines().find_map(|l| l.strip_prefix("data: ")).unwrap();
    let frame: Value = serde_json::from_str(data).unwrap();
    assert!((frame["t"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(frame["per_slice"][0]["id"], 1);
    assert!((frame["per_slice"][0]["util_dl"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[tokio::test]
async fn scenario_control_needs_a_live_session() {
    let f = fixture(SlicingMode::Sliced);
    let (status, body) = call(&f.app, Method::POST, "/scenario/start", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "NotLive");
}
