use std::ffi::{c_char, CStr, CString};
use std::ptr;

use digmol::encoder::EncoderConfig;
use digmol::split::Split;
use digmol::trainer::{finetune, FinetuneConfig, LabeledData, PretrainConfig, Pretrainer, TaskKind, TaskSpec};
use digmol_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; digmol_last_error_length() + 1];
    assert_eq!(unsafe { digmol_last_error_message(buf.as_mut_ptr(), buf.len()) }, DigmolStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()
}

fn parse(smiles: &str) -> *mut DigmolGraph {
    let s = CString::new(smiles).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { digmol_graph_parse(s.as_ptr(), &mut g) }, DigmolStatus::Ok);
    g
}

fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        layers: 2,
        hidden: 8,
        proj_hidden: 8,
        proj_dim: 4,
        ..EncoderConfig::default()
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(digmol_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn graph_queries() {
    let g = parse("COc1ccccc1C");
    let mut n = 0;
    unsafe {
        assert_eq!(digmol_graph_num_atoms(g, &mut n), DigmolStatus::Ok);
        assert_eq!(n, 9);
        assert_eq!(digmol_graph_num_directed_edges(g, &mut n), DigmolStatus::Ok);
        assert_eq!(n, 18);

        let mut needed = 0;
        assert_eq!(digmol_graph_features(g, ptr::null_mut(), 0, &mut needed), DigmolStatus::BufferTooSmall);
        assert_eq!(needed, 9 * 24);
        let mut x = vec![0.0; needed];
        assert_eq!(digmol_graph_features(g, x.as_mut_ptr(), x.len(), &mut needed), DigmolStatus::Ok);
        assert_eq!(x.iter().filter(|&&v| v == 1.0).count() >= 9, true);

        assert_eq!(digmol_graph_scaffold(g, ptr::null_mut(), 0, &mut needed), DigmolStatus::BufferTooSmall);
        let mut key = vec![0 as c_char; needed];
        assert_eq!(digmol_graph_scaffold(g, key.as_mut_ptr(), key.len(), &mut needed), DigmolStatus::Ok);
        let key = CStr::from_ptr(key.as_ptr()).to_str().unwrap().to_string();
        assert!(!key.is_empty());
        digmol_graph_free(g);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(digmol_graph_parse(ptr::null(), &mut g), DigmolStatus::NullPointer);
        assert!(g.is_null());
        assert!(last_error().contains("smiles"));

        let bad = CString::new("C1CC").unwrap();
        assert_eq!(digmol_graph_parse(bad.as_ptr(), &mut g), DigmolStatus::ParseError);
        assert!(g.is_null());
        assert!(!last_error().is_empty());

        let invalid = [0xffu8 as c_char, 0];
        assert_eq!(digmol_graph_parse(invalid.as_ptr(), &mut g), DigmolStatus::InvalidUtf8);

        let mut n = 0;
        assert_eq!(digmol_graph_num_atoms(ptr::null(), &mut n), DigmolStatus::NullPointer);

        let ok = parse("CC");
        assert_eq!(digmol_last_error_length(), 0);
        let mut tiny = [0 as c_char; 1];
        assert_eq!(digmol_graph_parse(bad.as_ptr(), &mut g), DigmolStatus::ParseError);
        assert_eq!(digmol_last_error_message(tiny.as_mut_ptr(), 1), DigmolStatus::BufferTooSmall);
        digmol_graph_free(ok);
        digmol_graph_free(ptr::null_mut());
    }
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
    let junk_path = dir.path().join("junk");
    std::fs::write(&junk_path, b"not a checkpoint").unwrap();
    let junk = CString::new(junk_path.to_str().unwrap()).unwrap();
    let mut c = ptr::null_mut();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(digmol_checkpoint_load(missing.as_ptr(), &mut c), DigmolStatus::IoError);
        assert_eq!(digmol_checkpoint_load(junk.as_ptr(), &mut c), DigmolStatus::FormatError);
        assert_eq!(digmol_model_load(junk.as_ptr(), &mut m), DigmolStatus::FormatError);
        assert!(c.is_null() && m.is_null());
    }
}

#[test]
fn checkpoint_and_model_match_the_library() {
    let smiles = ["CCO", "c1ccccc1", "CCN", "c1ccccc1O", "CC(=O)O", "CCCl"];
    let graphs: Vec<_> = smiles.iter().map(|s| digmol::parse_smiles(s).unwrap()).collect();
    let config = PretrainConfig {
        epochs: 1,
        batch_size: 3,
        encoder: small_encoder(),
        ..PretrainConfig::default()
    };
    let mut trainer = Pretrainer::new(config).unwrap();
    trainer.run(&graphs).unwrap();
    let ckpt = trainer.checkpoint();

    let labels: Vec<Vec<Option<f64>>> = smiles.iter().map(|s| vec![Some(s.contains('O') as u8 as f64)]).collect();
    let tasks = TaskSpec {
        kind: TaskKind::Classification,
        names: vec!["oxygen".into()],
    };
    let split = Split {
        train: vec![0, 1, 2, 3],
        valid: vec![4, 5],
        test: vec![],
    };
    let model = finetune(
        &ckpt.online,
        LabeledData {
            graphs: &graphs,
            labels: &labels,
        },
        &tasks,
        &split,
        &FinetuneConfig {
            epochs: 3,
            ..FinetuneConfig::default()
        },
    )
    .unwrap()
    .model;

    let dir = tempfile::tempdir().unwrap();
    let ckpt_path = dir.path().join("c.digm");
    let model_path = dir.path().join("m.digf");
    ckpt.save(&ckpt_path).unwrap();
    model.save(&model_path).unwrap();

    let g = parse("c1ccccc1O");
    unsafe {
        let mut c = ptr::null_mut();
        let p = CString::new(ckpt_path.to_str().unwrap()).unwrap();
        assert_eq!(digmol_checkpoint_load(p.as_ptr(), &mut c), DigmolStatus::Ok);
        let mut dim = 0;
        assert_eq!(digmol_checkpoint_embedding_dim(c, &mut dim), DigmolStatus::Ok);
        assert_eq!(dim, 8);
        let mut h = vec![0.0; dim];
        let mut needed = 0;
        assert_eq!(digmol_checkpoint_embed(c, g, h.as_mut_ptr(), h.len(), &mut needed), DigmolStatus::Ok);
        let (want, _) = digmol::encoder::encode(&graphs[3], &ckpt.online).unwrap();
        assert_eq!(h, want.data());
        digmol_checkpoint_free(c);

        let mut m = ptr::null_mut();
        let p = CString::new(model_path.to_str().unwrap()).unwrap();
        assert_eq!(digmol_model_load(p.as_ptr(), &mut m), DigmolStatus::Ok);
        let (mut tasks, mut cls) = (0, 0);
        assert_eq!(digmol_model_num_tasks(m, &mut tasks), DigmolStatus::Ok);
        assert_eq!(digmol_model_is_classifier(m, &mut cls), DigmolStatus::Ok);
        assert_eq!((tasks, cls), (1, 1));
        let mut out = [0.0; 1];
        assert_eq!(digmol_model_predict(m, g, out.as_mut_ptr(), 1, &mut needed), DigmolStatus::Ok);
        let want = digmol::trainer::predict(&model, &graphs[3..4]).unwrap();
        assert_eq!(out[0], want[0][0]);
        assert!(out[0] > 0.0 && out[0] < 1.0);
        digmol_model_free(m);
        digmol_graph_free(g);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/digmol.h")).unwrap();
    for name in [
        "DIGMOL_STATUS_OK",
        "DIGMOL_STATUS_BUFFER_TOO_SMALL",
        "typedef struct DigmolGraph DigmolGraph",
        "digmol_graph_parse",
        "digmol_checkpoint_embed",
        "digmol_model_predict",
        "digmol_last_error_message",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// The generated header must be valid C on its own.
#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::env::var("CC").or_else(|_| which("cc")) else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"digmol.h\"\nint main(void) { size_t n = 0; return digmol_graph_num_atoms(0, &n) == DIGMOL_STATUS_OK; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which(name: &str) -> Result<String, ()> {
    std::env::var_os("PATH")
        .and_then(|paths| std::env::split_paths(&paths).map(|p| p.join(name)).find(|p| p.is_file()))
        .map(|p| p.to_string_lossy().into_owned())
        .ok_or(())
}
