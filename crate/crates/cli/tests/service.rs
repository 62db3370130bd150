//! HTTP API exercised over a real socket.

use std::path::Path;

use serde_json::{json, Value};

use score_core::detection::{self, MANIFEST_FILE};
use score_core::network::build_patchnet;
use score_core::synth::{generate_split, preset, Preset, Split};
use score_lab::service::router;
use score_lab::store::RunStore;

const RUN: &str = "demo-run";

fn seed_store(root: &Path) -> Vec<usize> {
    let mut spec = preset(Preset::Wb95, 1);
    spec.train.size = 40;
    let train = generate_split(&spec, Split::Train).unwrap();
    let model = build_patchnet::<f32>(2, 1).unwrap();
    let run = detection::detect(&model, &train, 0, 6, 0.1, RUN).unwrap();
    let dir = RunStore::new(root).run_path(RUN).unwrap();
    detection::save_run(&run, &dir).unwrap();
    detection::export_review_bundle(&run, &train, &dir).unwrap();
    run.entries.iter().map(|e| e.sample_id).collect()
}

async fn spawn(root: &Path) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(RunStore::new(root));
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

#[tokio::test]
async fn lists_runs_and_serves_bundle_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let ids = seed_store(dir.path());
    let base = spawn(dir.path()).await;
    let client = reqwest::Client::new();

    let runs: Value = client
        .get(format!("{base}/api/runs"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(runs["runs"][0]["run_id"], RUN);
    assert_eq!(runs["runs"][0]["entries"], ids.len());

    let resp = client
        .get(format!("{base}/api/runs/{RUN}/manifest"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.headers()["content-type"], "application/json");
    let on_disk = std::fs::read(dir.path().join("runs").join(RUN).join(MANIFEST_FILE)).unwrap();
    assert_eq!(resp.bytes().await.unwrap().as_ref(), on_disk.as_slice());

    let manifest: Value = serde_json::from_slice(&on_disk).unwrap();
    let entry = &manifest["entries"][0];
    for (field, ctype, magic) in [
        ("original", "image/x-portable-pixmap", "P6"),
        ("heatmap", "image/x-portable-graymap", "P5"),
        ("overlay", "image/x-portable-pixmap", "P6"),
    ] {
        let file = entry[field].as_str().unwrap();
        let name = file.rsplit('/').next().unwrap();
        let resp = client
            .get(format!("{base}/api/runs/{RUN}/images/{name}"))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 200, "{file}");
        assert_eq!(resp.headers()["content-type"], ctype);
        assert!(resp.bytes().await.unwrap().starts_with(magic.as_bytes()));
    }

    let missing = client
        .get(format!("{base}/api/runs/{RUN}/images/nope.ppm"))
        .send()
        .await
        .unwrap();
    assert_eq!(missing.status(), 404);
    let unknown = client
        .get(format!("{base}/api/runs/other/manifest"))
        .send()
        .await
        .unwrap();
    assert_eq!(unknown.status(), 404);
}

#[tokio::test]
async fn selections_validate_persist_and_bump_revisions() {
    let dir = tempfile::tempdir().unwrap();
    let ids = seed_store(dir.path());
    let base = spawn(dir.path()).await;
    let client = reqwest::Client::new();
    let url = format!("{base}/api/runs/{RUN}/selections");

    let empty: Value = client.get(&url).send().await.unwrap().json().await.unwrap();
    assert_eq!(empty["revision"], 0);
    assert_eq!(empty["sample_ids"], json!([]));

    let resp = client
        .post(&url)
        .json(&json!({ "sample_ids": [] }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 422);

    let resp = client
        .post(&url)
        .json(&json!({ "sample_ids": [ids[0], 999_999] }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 422);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["offending_ids"], json!([999_999]));

    let resp = client
        .post(&url)
        .header("content-type", "application/json")
        .body("{\"sample_ids\": \"x\"}")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 422);

    let chosen = vec![ids[1], ids[3]];
    let resp = client
        .post(&url)
        .json(&json!({ "run_id": RUN, "class_id": 0, "sample_ids": chosen, "source": "human" }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 201);
    let first: Value = resp.json().await.unwrap();
    assert_eq!(first["revision"], 1);

    let back: Value = client.get(&url).send().await.unwrap().json().await.unwrap();
    assert_eq!(back["sample_ids"], json!(chosen));
    assert_eq!(back["revision"], 1);

    let resp = client
        .post(&url)
        .json(&json!({ "sample_ids": [ids[2]] }))
        .send()
        .await
        .unwrap();
    let second: Value = resp.json().await.unwrap();
    assert_eq!(second["revision"], 2);
    assert_eq!(second["sample_ids"], json!([ids[2]]));

    let wrong_class = client
        .post(&url)
        .json(&json!({ "class_id": 1, "sample_ids": [ids[2]] }))
        .send()
        .await
        .unwrap();
    assert_eq!(wrong_class.status(), 422);

    let unknown = client
        .post(format!("{base}/api/runs/other/selections"))
        .json(&json!({ "sample_ids": [ids[0]] }))
        .send()
        .await
        .unwrap();
    assert_eq!(unknown.status(), 404);
}

#[tokio::test]
async fn concurrent_posts_get_distinct_increasing_revisions() {
    let dir = tempfile::tempdir().unwrap();
    let ids = seed_store(dir.path());
    let base = spawn(dir.path()).await;
    let client = reqwest::Client::new();
    let url = format!("{base}/api/runs/{RUN}/selections");
    let posts = (0..8).map(|i| {
        let client = client.clone();
        let url = url.clone();
        let id = ids[i % ids.len()];
        async move {
            let v: Value = client
                .post(&url)
                .json(&json!({ "sample_ids": [id] }))
                .send()
                .await
                .unwrap()
                .json()
                .await
                .unwrap();
            v["revision"].as_u64().unwrap()
        }
    });
    let mut revisions: Vec<u64> = futures_join(posts).await;
    revisions.sort_unstable();
    assert_eq!(revisions, (1..=8).collect::<Vec<_>>());
    let last: Value = client.get(&url).send().await.unwrap().json().await.unwrap();
    assert_eq!(last["revision"], 8);
    // detection artifacts stay untouched
    let run = detection::load_run(&dir.path().join("runs").join(RUN)).unwrap();
    assert_eq!(run.entries.len(), ids.len());
}

async fn futures_join<F: std::future::Future<Output = u64> + Send + 'static>(
    futures: impl Iterator<Item = F>,
) -> Vec<u64> {
    let handles: Vec<_> = futures.map(tokio::spawn).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}
