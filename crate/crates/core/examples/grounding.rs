//! Initializes a track from a text description.
//!
//! The stub server plays the grounding model and returns a fenced JSON answer.

use image::RgbImage;

use vlmtrack::stub::StubServer;
use vlmtrack::synthetic::{render_frame, trajectory, SyntheticSpec};
use vlmtrack::tracker::{parse_grounding, HttpBackend, HttpConfig, TrackerConfig, TrackerState};

fn main() -> anyhow::Result<()> {
    let spec = SyntheticSpec::default();
    let target = trajectory(&spec, 0)[0];
    let frame: RgbImage = render_frame(&spec, 0, &target);
    let [x0, y0, x1, y1] = target.rounded();

    let answer = format!("```json\n[{{\"bbox_2d\": [{x0}, {y0}, {x1}, {y1}], \"label\": \"red box\"}}]\n```");
    println!("parsed directly: {:?}", parse_grounding(&answer));

    let stub = StubServer::fixed(answer)?;
    let backend = HttpBackend::new(HttpConfig { endpoint: stub.url(), ..HttpConfig::default() });
    let state = TrackerState::init_with_text(&frame, "the red box", &backend, &TrackerConfig::default())?;
    println!("prompt sent: {:?}", stub.requests()[0].prompt());
    println!("initial box {:?}", state.previous().rounded());
    println!("template prompt:\n{}", state.prompt());
    Ok(())
}
