//! C interface to `digmol`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`DigmolStatus`]; on failure a message is stored per thread and can be
//! read with [`digmol_last_error_message`]. Panics never unwind into C.
//!
//! Array outputs follow one convention: the caller passes a buffer and its
//! capacity, the callee always writes the required length to `*needed`, and
//! returns `BufferTooSmall` without touching the buffer if it does not fit.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use digmol::encoder::encode;
use digmol::smiles::extract_scaffold;
use digmol::trainer::{predict, Checkpoint, FineTunedModel, TaskKind};
use digmol::MolGraph;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigmolStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    IoError = 4,
    FormatError = 5,
    BufferTooSmall = 6,
    InvalidArgument = 7,
    Panic = 8,
}

/// A parsed molecule.
pub struct DigmolGraph(MolGraph);

/// A pretraining checkpoint; exposes the online encoder.
pub struct DigmolCheckpoint(Checkpoint);

/// A fine-tuned model: frozen encoder plus prediction head.
pub struct DigmolModel(FineTunedModel);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

struct Failure(DigmolStatus, String);

impl Failure {
    fn new(status: DigmolStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

/// Runs `f`, records any failure and converts panics into `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DigmolStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DigmolStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(&format!("panic: {msg}"));
            DigmolStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(DigmolStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(s, what)?;
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::new(DigmolStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `buf` must be null or valid for `capacity` writes; `needed` must be
/// null or writable.
unsafe fn write_out<T: Copy>(src: &[T], buf: *mut T, capacity: usize, needed: *mut usize) -> Result<(), Failure> {
    non_null(needed, "needed")?;
    *needed = src.len();
    if src.len() > capacity {
        return Err(Failure::new(
            DigmolStatus::BufferTooSmall,
            format!("buffer holds {capacity}, {} required", src.len()),
        ));
    }
    if !src.is_empty() {
        non_null(buf, "buffer")?;
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn digmol_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the calling thread's last error message, without
/// the terminating NUL. Zero after a successful call.
#[no_mangle]
pub extern "C" fn digmol_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message, NUL-terminated, into `buf`. Needs
/// `digmol_last_error_length() + 1` bytes.
///
/// # Safety
/// `buf` must be valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn digmol_last_error_message(buf: *mut c_char, capacity: usize) -> DigmolStatus {
    if buf.is_null() {
        return DigmolStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if e.len() + 1 > capacity {
            return DigmolStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(e.as_ptr().cast(), buf, e.len());
        *buf.add(e.len()) = 0;
        DigmolStatus::Ok
    })
}

/// Parses a SMILES string into a new graph handle.
///
/// # Safety
/// `smiles` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_graph_parse(smiles: *const c_char, out: *mut *mut DigmolGraph) -> DigmolStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let s = read_str(smiles, "smiles")?;
        let g = digmol::parse_smiles(s).map_err(|e| Failure::new(DigmolStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(DigmolGraph(g)));
        Ok(())
    })
}

/// Releases a graph. Null is ignored.
///
/// # Safety
/// `graph` must be null or a handle from [`digmol_graph_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn digmol_graph_free(graph: *mut DigmolGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of heavy atoms.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_graph_num_atoms(graph: *const DigmolGraph, out: *mut usize) -> DigmolStatus {
    guard(|| {
        non_null(graph, "graph")?;
        non_null(out, "out")?;
        *out = (*graph).0.n_nodes();
        Ok(())
    })
}

/// Number of directed edges (two per bond).
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_graph_num_directed_edges(graph: *const DigmolGraph, out: *mut usize) -> DigmolStatus {
    guard(|| {
        non_null(graph, "graph")?;
        non_null(out, "out")?;
        *out = (*graph).0.directed_edge_count();
        Ok(())
    })
}

/// Row-major node feature matrix, `num_atoms × 24` values.
///
/// # Safety
/// `graph` must be a live handle; `buf` valid for `capacity` doubles;
/// `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_graph_features(
    graph: *const DigmolGraph,
    buf: *mut f64,
    capacity: usize,
    needed: *mut usize,
) -> DigmolStatus {
    guard(|| {
        non_null(graph, "graph")?;
        write_out((*graph).0.features().data(), buf, capacity, needed)
    })
}

/// Scaffold key as NUL-terminated text; `*needed` includes the NUL.
/// Acyclic molecules give the empty string.
///
/// # Safety
/// `graph` must be a live handle; `buf` valid for `capacity` bytes;
/// `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_graph_scaffold(
    graph: *const DigmolGraph,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> DigmolStatus {
    guard(|| {
        non_null(graph, "graph")?;
        let key = extract_scaffold(&(*graph).0);
        let mut bytes: Vec<c_char> = key.as_str().bytes().map(|b| b as c_char).collect();
        bytes.push(0);
        write_out(&bytes, buf, capacity, needed)
    })
}

/// Loads a pretraining checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_checkpoint_load(path: *const c_char, out: *mut *mut DigmolCheckpoint) -> DigmolStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let p = read_str(path, "path")?;
        let bytes = std::fs::read(Path::new(p)).map_err(|e| Failure::new(DigmolStatus::IoError, format!("{p}: {e}")))?;
        let ckpt = Checkpoint::from_bytes(&bytes).map_err(|e| Failure::new(DigmolStatus::FormatError, e.to_string()))?;
        *out = Box::into_raw(Box::new(DigmolCheckpoint(ckpt)));
        Ok(())
    })
}

/// Releases a checkpoint. Null is ignored.
///
/// # Safety
/// `ckpt` must be null or a handle from [`digmol_checkpoint_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn digmol_checkpoint_free(ckpt: *mut DigmolCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

/// Width of the graph embedding produced by [`digmol_checkpoint_embed`].
///
/// # Safety
/// `ckpt` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_checkpoint_embedding_dim(ckpt: *const DigmolCheckpoint, out: *mut usize) -> DigmolStatus {
    guard(|| {
        non_null(ckpt, "checkpoint")?;
        non_null(out, "out")?;
        *out = (*ckpt).0.online.embedding_dim();
        Ok(())
    })
}

/// Graph embedding `h` of `graph` under the checkpoint's online encoder.
///
/// # Safety
/// Handles must be live; `buf` valid for `capacity` doubles; `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_checkpoint_embed(
    ckpt: *const DigmolCheckpoint,
    graph: *const DigmolGraph,
    buf: *mut f64,
    capacity: usize,
    needed: *mut usize,
) -> DigmolStatus {
    guard(|| {
        non_null(ckpt, "checkpoint")?;
        non_null(graph, "graph")?;
        let (h, _) = encode(&(*graph).0, &(*ckpt).0.online)
            .map_err(|e| Failure::new(DigmolStatus::InvalidArgument, e.to_string()))?;
        write_out(h.data(), buf, capacity, needed)
    })
}

/// Loads a fine-tuned model.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_model_load(path: *const c_char, out: *mut *mut DigmolModel) -> DigmolStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let p = read_str(path, "path")?;
        let bytes = std::fs::read(Path::new(p)).map_err(|e| Failure::new(DigmolStatus::IoError, format!("{p}: {e}")))?;
        let model = FineTunedModel::from_bytes(&bytes).map_err(|e| Failure::new(DigmolStatus::FormatError, e.to_string()))?;
        *out = Box::into_raw(Box::new(DigmolModel(model)));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`digmol_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn digmol_model_free(model: *mut DigmolModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of predicted tasks.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_model_num_tasks(model: *const DigmolModel, out: *mut usize) -> DigmolStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).0.tasks.names.len();
        Ok(())
    })
}

/// 1 for classification models (outputs are probabilities), 0 for regression.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_model_is_classifier(model: *const DigmolModel, out: *mut i32) -> DigmolStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = ((*model).0.tasks.kind == TaskKind::Classification) as i32;
        Ok(())
    })
}

/// Per-task predictions for one graph.
///
/// # Safety
/// Handles must be live; `buf` valid for `capacity` doubles; `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn digmol_model_predict(
    model: *const DigmolModel,
    graph: *const DigmolGraph,
    buf: *mut f64,
    capacity: usize,
    needed: *mut usize,
) -> DigmolStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(graph, "graph")?;
        let preds = predict(&(*model).0, std::slice::from_ref(&(*graph).0))
            .map_err(|e| Failure::new(DigmolStatus::InvalidArgument, e.to_string()))?;
        write_out(&preds[0], buf, capacity, needed)
    })
}
