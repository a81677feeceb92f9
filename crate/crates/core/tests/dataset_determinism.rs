use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use vlmtrack::sampler::{generate_dataset, read_records, DatasetOptions, SampleConfig};
use vlmtrack::synthetic::{write_dataset, SyntheticSpec};

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn generate(root: &Path, out: &Path, seed: u64, threads: usize) {
    let cfg = SampleConfig { seed, ..SampleConfig::default() };
    let opts = DatasetOptions { sft: true, skip_images: false };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| generate_dataset(root, 100, &cfg, out, &opts).unwrap());
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("split");
    write_dataset(&root, &SyntheticSpec { sequences: 4, frames: 20, ..SyntheticSpec::default() }).unwrap();

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    generate(&root, &a, 42, 1);
    generate(&root, &b, 42, 4);
    generate(&root, &c, 43, 4);

    let sa = snapshot(&a);
    assert_eq!(sa.len(), 3 + 2 * 100);
    assert_eq!(sa, snapshot(&b));
    assert_ne!(sa["records.jsonl"], snapshot(&c)["records.jsonl"]);
}

#[test]
fn records_describe_their_images() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("split");
    write_dataset(&root, &SyntheticSpec { sequences: 2, frames: 12, ..SyntheticSpec::default() }).unwrap();
    let out = dir.path().join("ds");
    generate(&root, &out, 5, 2);
    for r in read_records(out.join("records.jsonl")).unwrap() {
        for rel in [&r.template_image, &r.search_image] {
            let img = image::open(out.join(rel)).unwrap();
            assert_eq!((img.width(), img.height()), (r.resolution, r.resolution));
        }
        let res = r.resolution as f64;
        let g = r.gt();
        assert!(g.x_min >= 0.0 && g.y_min >= 0.0 && g.x_max <= res && g.y_max <= res);
        assert!(g.area() > 0.0);
        assert_ne!(r.frame_t, r.frame_s);
        assert!(r.prompt.contains("<image_1>") && r.prompt.contains("<image_2>"));
    }
}
