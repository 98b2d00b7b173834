use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use timbreclip::audio::{load_wav, save_wav, AudioBuffer, WavFormat};
use timbreclip::embedding::Embedding;
use timbreclip::encoders::{AudioEncoder, EmbeddingStore, MelStatEncoder};
use timbreclip::prompt::PromptMatrixStore;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_timbreclip"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn timbreclip")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tone(freq: f64, secs: f64, rate: u32) -> Vec<f64> {
    let n = (secs * rate as f64) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            (1..6)
                .map(|h| (2.0 * std::f64::consts::PI * freq * h as f64 * t).sin() * 0.3 / h as f64)
                .sum()
        })
        .collect()
}

fn write_tone(path: &Path, freq: f64, stereo: bool) {
    let x = tone(freq, 0.5, 22050);
    let buf = if stereo {
        let r: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
        AudioBuffer::stereo(x, r, 22050).unwrap()
    } else {
        AudioBuffer::mono(x, 22050).unwrap()
    };
    save_wav(path, &buf, WavFormat::Int16).unwrap();
}

fn notes_dir(root: &Path, n: usize) -> PathBuf {
    let dir = root.join("notes");
    fs::create_dir_all(&dir).unwrap();
    for i in 0..n {
        write_tone(&dir.join(format!("synth_{i:02}-0{}-100.wav", 48 + i)), 200.0 + 50.0 * i as f64, i % 2 == 1);
    }
    dir
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn preprocess_counts_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let input = notes_dir(tmp.path(), 3);
    let out = tmp.path().join("out");
    ok(&["preprocess", "--in", s(&input), "--out", s(&out), "--style", "nsynth"]);
    let files = dir_bytes(&out);
    let wavs: Vec<_> = files.iter().filter(|(n, _)| n.ends_with(".wav")).collect();
    assert_eq!(wavs.len(), 6);
    assert_eq!(wavs.iter().filter(|(n, _)| n.ends_with("_aug1.wav")).count(), 3);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let entries = manifest.as_array().unwrap();
    assert_eq!(entries.len(), 6);
    assert_eq!(entries[0]["style"], "nsynth");
    assert_eq!(entries[0]["pitch_midi"], 48);
    for (name, _) in &wavs {
        let buf = load_wav(out.join(name)).unwrap();
        assert_eq!(buf.sample_rate(), 16000);
        assert_eq!(buf.num_channels(), 1);
        assert!((buf.peak() - 1.0).abs() < 1e-6);
    }

    let alv = tmp.path().join("alv");
    ok(&["preprocess", "--in", s(&input), "--out", s(&alv), "--style", "alv"]);
    assert_eq!(dir_bytes(&alv).iter().filter(|(n, _)| n.ends_with(".wav")).count(), 9);
}

#[test]
fn preprocess_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let input = notes_dir(tmp.path(), 3);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for out in [&a, &b] {
        ok(&["--seed", "7", "preprocess", "--in", s(&input), "--out", s(out), "--style", "alv"]);
    }
    ok(&["--seed", "8", "preprocess", "--in", s(&input), "--out", s(&c), "--style", "alv"]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_ne!(dir_bytes(&a), dir_bytes(&c));
}

#[test]
fn empty_input_directory_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let out = run(&["preprocess", "--in", s(&empty), "--out", s(&tmp.path().join("o")), "--style", "nsynth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input files"));
    let out = run(&["embed", "--in", s(&empty), "--out", s(&tmp.path().join("x.tclp"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["preprocess"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn embed_skips_corrupt_files_and_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let input = notes_dir(tmp.path(), 5);
    let a = tmp.path().join("a.tclp");
    let b = tmp.path().join("b.tclp");
    ok(&["embed", "--in", s(&input), "--out", s(&a)]);
    ok(&["embed", "--in", s(&input), "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let store = EmbeddingStore::load(&a).unwrap();
    assert_eq!(store.len(), 5);
    assert_eq!(store.dim(), 512);
    assert!(store.contains("synth_00-048-100"));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(meta["model"], "melstat");

    fs::write(input.join("broken.wav"), b"RIFF\x10\x00\x00\x00WAVEfmt ").unwrap();
    let c = tmp.path().join("c.tclp");
    let out = ok(&["embed", "--in", s(&input), "--out", s(&c)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken"));
    assert_eq!(EmbeddingStore::load(&c).unwrap().len(), 5);
    fs::remove_file(input.join("synth_04-052-100.wav")).unwrap();
    ok(&["embed", "--in", s(&input), "--out", s(&c)]);
    assert_eq!(EmbeddingStore::load(&c).unwrap().len(), 4);
}

fn unit(v: &[f64]) -> Embedding {
    Embedding::unit(v.to_vec()).unwrap()
}

/// Four patches at two pitches, texts in a matching store.
fn retrieval_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let mut audio = EmbeddingStore::new(3).unwrap();
    let notes = [
        ("p0_36", [1.0, 0.1, 0.0]),
        ("p0_60", [0.0, 1.0, 0.0]),
        ("p1_36", [0.5, 0.5, 0.0]),
        ("p1_60", [0.2, 0.0, 1.0]),
        ("p2_36", [0.0, 1.0, 0.2]),
        ("p2_60", [0.0, 0.9, 0.1]),
        ("p3_36", [0.9, 0.0, 0.1]),
        ("p3_60", [0.0, 0.0, 1.0]),
    ];
    for (id, v) in notes {
        audio.insert(id, &unit(&v)).unwrap();
    }
    let mut text = EmbeddingStore::new(3).unwrap();
    for (id, v) in [("Lead", [1.0, 0.0, 0.0]), ("Pad", [0.0, 1.0, 0.0]), ("Bass", [0.0, 0.0, 1.0])] {
        text.insert(id, &unit(&v)).unwrap();
    }
    let manifest = serde_json::json!([
        {"patch_id": "p0", "title": "Lead 1", "category": "Leads", "notes": [{"midi_pitch": 36, "embedding_id": "p0_36"}, {"midi_pitch": 60, "embedding_id": "p0_60"}]},
        {"patch_id": "p1", "title": "Lead 2", "category": "Leads", "notes": [{"midi_pitch": 36, "embedding_id": "p1_36"}, {"midi_pitch": 60, "embedding_id": "p1_60"}]},
        {"patch_id": "p2", "title": "Pad", "category": "Pads", "notes": [{"midi_pitch": 36, "embedding_id": "p2_36"}, {"midi_pitch": 60, "embedding_id": "p2_60"}]},
        {"patch_id": "p3", "title": "Bass", "category": "Basses", "notes": [{"midi_pitch": 36, "embedding_id": "p3_36"}, {"midi_pitch": 60, "embedding_id": "p3_60"}]}
    ]);
    let (a, t, m) = (dir.join("audio.tclp"), dir.join("text.tclp"), dir.join("patches.json"));
    audio.save(&a).unwrap();
    text.save(&t).unwrap();
    fs::write(&m, serde_json::to_vec(&manifest).unwrap()).unwrap();
    (a, t, m)
}

#[test]
fn eval_reports_hand_computed_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, t, m) = retrieval_fixture(tmp.path());
    let report = tmp.path().join("r.csv");
    let args = ["eval", "--patches", s(&m), "--audio-store", s(&a), "--text-store", s(&t), "--mode", "title"];
    let mut t2p = args.to_vec();
    t2p.extend(["--direction", "t2p", "--baselines", "--model", "toy", "--out", s(&report)]);
    ok(&t2p);
    let text = fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "mode,direction,model,R@1,R@5,R@10,R@50,RANK");
    // Lead -> rank 1, Pad -> rank 2, Bass -> rank 1.
    assert_eq!(lines[1], "title,t2p,toy,66.667,100.000,100.000,100.000,1.333");
    assert_eq!(lines[2], "title,t2p,perfect,100.000,100.000,100.000,100.000,1.000");
    assert!(lines[3].starts_with("title,t2p,random,"));
    assert_eq!(lines.len(), 4);

    let mut a2t = args.to_vec();
    let report2 = tmp.path().join("r2.csv");
    a2t.extend(["--direction", "a2t", "--model", "toy", "--out", s(&report2)]);
    ok(&a2t);
    let text = fs::read_to_string(&report2).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("title,a2t,toy,62.500,"), "{row}");
}

#[test]
fn eval_unresolved_ids_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, t, _) = retrieval_fixture(tmp.path());
    let m = tmp.path().join("bad.json");
    let manifest = serde_json::json!([
        {"patch_id": "p0", "title": "Lead", "category": "Leads", "notes": [{"midi_pitch": 36, "embedding_id": "ghost_a"}, {"midi_pitch": 60, "embedding_id": "p0_60"}]},
        {"patch_id": "p9", "title": "Keys", "category": "Keys", "notes": [{"midi_pitch": 36, "embedding_id": "ghost_b"}]}
    ]);
    fs::write(&m, serde_json::to_vec(&manifest).unwrap()).unwrap();
    let out = run(&[
        "eval", "--patches", s(&m), "--audio-store", s(&a), "--text-store", s(&t),
        "--mode", "title", "--direction", "t2p", "--out", s(&tmp.path().join("r.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ghost_a") && err.contains("ghost_b"), "{err}");

    // Query text with no embedding in the text store.
    let (_, _, good) = retrieval_fixture(tmp.path());
    let out = run(&[
        "eval", "--patches", s(&good), "--audio-store", s(&a), "--text-store", s(&t),
        "--mode", "category", "--direction", "t2p", "--out", s(&tmp.path().join("r.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Leads"));
}

#[test]
fn eval_with_hashed_text() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, _, m) = retrieval_fixture(tmp.path());
    let mut audio = EmbeddingStore::new(16).unwrap();
    for p in 0..4 {
        for pitch in [36, 60] {
            let v: Vec<f64> = (0..16).map(|j| ((p * 16 + j + pitch) as f64).sin()).collect();
            audio.insert(format!("p{p}_{pitch}"), &unit(&v)).unwrap();
        }
    }
    let a = tmp.path().join("audio16.tclp");
    audio.save(&a).unwrap();
    let r = tmp.path().join("r.csv");
    ok(&["eval", "--patches", s(&m), "--audio-store", s(&a), "--hash-text", "--mode", "title_category", "--direction", "t2p", "--out", s(&r)]);
    let text = fs::read_to_string(&r).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("title_category,t2p,model,"));
}

fn source_wav(dir: &Path) -> PathBuf {
    let p = dir.join("src.wav");
    let buf = AudioBuffer::mono(tone(220.0, 0.4, 16000), 16000).unwrap();
    save_wav(&p, &buf, WavFormat::Float32).unwrap();
    p
}

fn read_trace(p: &Path) -> Vec<f64> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn eq_single_iteration_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let src = source_wav(tmp.path());
    let (out, trace, params) = (tmp.path().join("o.wav"), tmp.path().join("t.csv"), tmp.path().join("p.json"));
    ok(&[
        "eq", "--in", s(&src), "--prompt", "bright metallic", "--hash-prompts", "--iters", "1",
        "--out", s(&out), "--trace", s(&trace), "--params", s(&params),
    ]);
    assert_eq!(read_trace(&trace).len(), 1);
    let p: serde_json::Value = serde_json::from_slice(&fs::read(&params).unwrap()).unwrap();
    assert_eq!(p["log_gains"].as_array().unwrap().len(), 32);
    assert_eq!(p["band_centers_hz"].as_array().unwrap().len(), 32);
    let processed = load_wav(&out).unwrap();
    assert_eq!(processed.len(), 6400);
}

#[test]
fn eq_self_target_does_not_increase_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let src = source_wav(tmp.path());
    let trace = tmp.path().join("t.csv");
    ok(&[
        "eq", "--in", s(&src), "--prompt", "<source>", "--hash-prompts", "--iters", "30",
        "--out", s(&tmp.path().join("o.wav")), "--trace", s(&trace), "--params", s(&tmp.path().join("p.json")),
    ]);
    let losses = read_trace(&trace);
    assert_eq!(losses.len(), 30);
    assert!(losses.iter().all(|&l| l <= 1e-9), "{losses:?}");
}

#[test]
fn eq_multi_prompt_with_store_and_alphas() {
    let tmp = tempfile::tempdir().unwrap();
    let src = source_wav(tmp.path());
    let enc = MelStatEncoder::with_seed(0).unwrap();
    let bright = {
        let x: Vec<f64> = tone(1800.0, 0.4, 16000);
        enc.encode_audio(&AudioBuffer::mono(x, 16000).unwrap()).unwrap()
    };
    let dark = enc.encode_audio(&AudioBuffer::mono(tone(90.0, 0.4, 16000), 16000).unwrap()).unwrap();
    let mut store = EmbeddingStore::new(512).unwrap();
    store.insert("bright", &bright).unwrap();
    store.insert("dark", &dark).unwrap();
    let sp = tmp.path().join("prompts.tclp");
    store.save(&sp).unwrap();
    let (trace, o, pj) = (tmp.path().join("t.csv"), tmp.path().join("o.wav"), tmp.path().join("p.json"));
    let common = [
        "eq", "--in", s(&src), "--prompt-store", s(&sp), "--prompt", "bright", "--prompt", "dark",
        "--iters", "60", "--lr", "0.05",
        "--out", s(&o), "--trace", s(&trace), "--params", s(&pj),
    ];
    let mut with_alpha = common.to_vec();
    with_alpha.extend(["--alpha", "0.2", "--alpha", "0.6", "--alpha", "0.2"]);
    ok(&with_alpha);
    let losses = read_trace(&trace);
    assert_eq!(losses.len(), 60);

    let mut bad_alpha = common.to_vec();
    bad_alpha.extend(["--alpha", "0.5", "--alpha", "0.5"]);
    assert_eq!(run(&bad_alpha).status.code(), Some(1));

    let mut missing = common.to_vec();
    missing[6] = "shiny";
    let out = run(&missing);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shiny"));
}

fn t2i_bank(dir: &Path, keywords: &[&str], extra_prompt: Option<&str>) -> (PathBuf, PathBuf) {
    let enc = MelStatEncoder::with_seed(0).unwrap();
    let mut bank = EmbeddingStore::new(512).unwrap();
    let mut prompts = PromptMatrixStore::new(4, 3).unwrap();
    for (i, k) in keywords.iter().enumerate() {
        let z = enc.encode_audio(&AudioBuffer::mono(tone(150.0 * (i + 1) as f64, 0.3, 16000), 16000).unwrap()).unwrap();
        bank.insert(*k, &z).unwrap();
        prompts.insert_raw(*k, (0..12).map(|j| (i * 12 + j) as f32 / 10.0).collect()).unwrap();
    }
    if let Some(k) = extra_prompt {
        prompts.insert_raw(k, vec![0.0; 12]).unwrap();
    }
    let (b, p) = (dir.join("bank.tclp"), dir.join("prompts.tcpm"));
    bank.save(&b).unwrap();
    prompts.save(&p).unwrap();
    (b, p)
}

fn read_weight_rows(p: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn t2i_shapes_and_softmax_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let (bank, prompts) = t2i_bank(tmp.path(), &["warm", "bright", "hollow"], None);
    let input = tmp.path().join("note.wav");
    write_tone(&input, 300.0, false);
    let (out, weights) = (tmp.path().join("cond.tcpm"), tmp.path().join("w.csv"));
    ok(&[
        "t2i", "--in", s(&input), "--bank", s(&bank), "--prompts", s(&prompts),
        "--out", s(&out), "--weights", s(&weights),
    ]);
    let cond = PromptMatrixStore::load(&out).unwrap();
    assert_eq!(cond.len(), 1);
    assert_eq!(cond.ids(), &["note"]);
    assert_eq!((cond.rows(), cond.cols()), (4, 3));
    let header = fs::read_to_string(&weights).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "input,warm,bright,hollow");
    let rows = read_weight_rows(&weights);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].len(), 3);
    assert!((rows[0].iter().sum::<f64>() - 1.0).abs() <= 1e-9);
}

#[test]
fn t2i_effect_mode_and_literal_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let (bank, prompts) = t2i_bank(tmp.path(), &["a", "b"], None);
    let dry = tmp.path().join("dry.wav");
    let wet1 = tmp.path().join("wet1.wav");
    let wet2 = tmp.path().join("wet2.wav");
    write_tone(&dry, 300.0, false);
    write_tone(&wet1, 330.0, false);
    write_tone(&wet2, 360.0, true);
    let (out, weights) = (tmp.path().join("cond.tcpm"), tmp.path().join("w.csv"));
    ok(&[
        "t2i", "--in", s(&wet1), "--in", s(&wet2), "--dry", s(&dry), "--bank", s(&bank),
        "--prompts", s(&prompts), "--mode", "literal", "--out", s(&out), "--weights", s(&weights),
    ]);
    assert_eq!(PromptMatrixStore::load(&out).unwrap().ids(), &["wet1", "wet2"]);
    let rows = read_weight_rows(&weights);
    assert!(rows.iter().flatten().all(|&w| (0.0..=2.0).contains(&w)));
}

#[test]
fn t2i_mismatched_bank_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (bank, prompts) = t2i_bank(tmp.path(), &["a", "b"], Some("orphan"));
    let input = tmp.path().join("note.wav");
    write_tone(&input, 300.0, false);
    let (c, w) = (tmp.path().join("c.tcpm"), tmp.path().join("w.csv"));
    let out = run(&[
        "t2i", "--in", s(&input), "--bank", s(&bank), "--prompts", s(&prompts),
        "--out", s(&c), "--weights", s(&w),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("orphan"));
}
