use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use vlmtrack::error::{BackendError, TrackError};
use vlmtrack::prompt::DEFAULT_THINK_INSTRUCTION;
use vlmtrack::rewards::ResponseMode;
use vlmtrack::sampler::load_got10k;
use vlmtrack::stub::{StubReply, StubServer};
use vlmtrack::synthetic::{write_dataset, SyntheticSpec};
use vlmtrack::tracker::{run_sequence, HttpBackend, HttpConfig, Init, TrackerConfig};

fn backend(stub: &StubServer) -> HttpBackend {
    HttpBackend::new(HttpConfig {
        endpoint: stub.url(),
        retries: 1,
        backoff_ms: 1,
        ..HttpConfig::default()
    })
}

fn sequence(frames: usize) -> (tempfile::TempDir, vlmtrack::sampler::SequenceAnnotation) {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { sequences: 1, frames, ..SyntheticSpec::default() };
    write_dataset(dir.path(), &spec).unwrap();
    let seq = load_got10k(dir.path()).unwrap().remove(0);
    (dir, seq)
}

fn decode(uri: &str) -> image::DynamicImage {
    let b64 = uri.strip_prefix("data:image/png;base64,").expect("png data uri");
    image::load_from_memory(&STANDARD.decode(b64).unwrap()).unwrap()
}

#[test]
fn requests_carry_template_search_and_prompt() {
    let (_dir, seq) = sequence(4);
    let stub = StubServer::fixed("[126, 126, 210, 210]").unwrap();
    let cfg = TrackerConfig { resolution: 224, ..TrackerConfig::default() };
    let run = run_sequence(&seq.frames, &Init::Box(seq.boxes[0]), &backend(&stub), &cfg).unwrap();
    assert_eq!(run.boxes.len(), 4);
    assert_eq!(run.latencies.len(), 4);

    let reqs = stub.requests();
    assert_eq!(reqs.len(), 3);
    let first = &reqs[0].prompt();
    for r in &reqs {
        let urls = r.image_urls();
        assert_eq!(urls.len(), 2);
        for u in urls {
            let img = decode(u);
            assert_eq!((img.width(), img.height()), (224, 224));
        }
        // the template never changes
        assert_eq!(r.image_urls()[0], reqs[0].image_urls()[0]);
        assert_eq!(&r.prompt(), first);
        assert_eq!(r.body["temperature"], 0.0);
    }
    assert!(first.starts_with("Given two images, you need to:\n1. Analyze and identify the target object marked by bounding box ["));
}

#[test]
fn think_mode_prompt_and_answers() {
    let (_dir, seq) = sequence(3);
    let stub = StubServer::fixed("<think>It is the same box.</think><answer>[84, 84, 252, 252]</answer>").unwrap();
    let cfg = TrackerConfig { mode: ResponseMode::Think, ..TrackerConfig::default() };
    let run = run_sequence(&seq.frames, &Init::Box(seq.boxes[0]), &backend(&stub), &cfg).unwrap();
    assert_eq!(run.failures, 0);
    let prompt = stub.requests()[0].prompt();
    assert!(prompt.starts_with("Given two images"));
    assert!(prompt.ends_with(&format!("\n{DEFAULT_THINK_INSTRUCTION}")));
}

#[test]
fn permanent_failure_names_the_frame() {
    let (_dir, seq) = sequence(5);
    let stub = StubServer::start(|_, i| {
        if i == 0 {
            StubReply::Text("[126, 126, 210, 210]".into())
        } else {
            StubReply::Status(503, "overloaded".into())
        }
    })
    .unwrap();
    let err = run_sequence(&seq.frames, &Init::Box(seq.boxes[0]), &backend(&stub), &TrackerConfig::default()).unwrap_err();
    match err {
        TrackError::Backend { frame, source: BackendError::Status { status, body } } => {
            assert_eq!(frame, 3);
            assert_eq!(status, 503);
            assert_eq!(body, "overloaded");
        }
        e => panic!("{e}"),
    }
    // one success, then the first attempt and one retry for frame 3
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn text_initialization_over_http() {
    let (_dir, seq) = sequence(3);
    let [x0, y0, x1, y1] = seq.boxes[0].rounded();
    let stub = StubServer::scripted(vec![
        format!("```json\n[{{\"bbox_2d\": [{x0}, {y0}, {x1}, {y1}], \"label\": \"box\"}}]\n```"),
        "[126, 126, 210, 210]".into(),
    ])
    .unwrap();
    let run = run_sequence(&seq.frames, &Init::Text("the red box".into()), &backend(&stub), &TrackerConfig::default()).unwrap();
    assert_eq!(run.boxes[0].rounded(), [x0, y0, x1, y1]);
    let reqs = stub.requests();
    assert_eq!(reqs.len(), 3);
    assert_eq!(reqs[0].image_urls().len(), 1);
    assert_eq!(reqs[0].prompt(), "Please return the coordinates of the red box in JSON format.");
    let full = decode(reqs[0].image_urls()[0]);
    assert_eq!((full.width(), full.height()), (320, 240));
    assert_eq!(reqs[1].image_urls().len(), 2);
}

#[test]
fn unparseable_grounding_fails_with_raw_text() {
    let (_dir, seq) = sequence(2);
    let stub = StubServer::fixed("I cannot see it.").unwrap();
    let err = run_sequence(&seq.frames, &Init::Text("cat".into()), &backend(&stub), &TrackerConfig::default()).unwrap_err();
    match err {
        TrackError::GroundingFailed { raw } => assert_eq!(raw, "I cannot see it."),
        e => panic!("{e}"),
    }
}
