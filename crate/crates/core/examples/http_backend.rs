//! Drives the tracker through the chat-completions client.
//!
//! Without arguments a local stub server answers every query with the middle
//! of the search crop. Pass an endpoint and model name to use a real server:
//!
//! cargo run --example http_backend -- http://localhost:8000/v1 my-model

use std::env;

use vlmtrack::stub::{StubReply, StubServer};
use vlmtrack::synthetic::{write_dataset, SyntheticSpec};
use vlmtrack::sampler::load_got10k;
use vlmtrack::tracker::{run_sequence, HttpBackend, HttpConfig, Init, TrackerConfig};

fn main() -> anyhow::Result<()> {
    let mut args = env::args().skip(1);
    let cfg = TrackerConfig::default();
    let side = cfg.resolution;

    let stub;
    let http = match args.next() {
        Some(endpoint) => HttpConfig {
            endpoint,
            model: args.next().unwrap_or_else(|| "default".into()),
            api_key: env::var("TRACKER_API_KEY").ok(),
            ..HttpConfig::default()
        },
        None => {
            // a box a quarter of the crop wide keeps the target size steady
            let (a, b) = (3 * side / 8, 5 * side / 8);
            stub = StubServer::start(move |_, _| StubReply::Text(format!("[{a}, {a}, {b}, {b}]")))?;
            HttpConfig {
                endpoint: stub.url(),
                ..HttpConfig::default()
            }
        }
    };
    println!("endpoint {}", http.url());

    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec { sequences: 1, frames: 5, ..SyntheticSpec::default() };
    write_dataset(dir.path(), &spec)?;
    let seq = &load_got10k(dir.path())?[0];
    let backend = HttpBackend::new(http);
    let run = run_sequence(&seq.frames, &Init::Box(seq.boxes[0]), &backend, &cfg)?;
    for (i, (b, t)) in run.boxes.iter().zip(&run.latencies).enumerate() {
        println!("frame {:>2}  {:?}  {:.3}s", i + 1, b.rounded(), t);
    }
    Ok(())
}
