#ifndef DIGMOL_H
#define DIGMOL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum DigmolStatus {
  DIGMOL_STATUS_OK = 0,
  DIGMOL_STATUS_NULL_POINTER = 1,
  DIGMOL_STATUS_INVALID_UTF8 = 2,
  DIGMOL_STATUS_PARSE_ERROR = 3,
  DIGMOL_STATUS_IO_ERROR = 4,
  DIGMOL_STATUS_FORMAT_ERROR = 5,
  DIGMOL_STATUS_BUFFER_TOO_SMALL = 6,
  DIGMOL_STATUS_INVALID_ARGUMENT = 7,
  DIGMOL_STATUS_PANIC = 8,
} DigmolStatus;

// A pretraining checkpoint; exposes the online encoder.
typedef struct DigmolCheckpoint DigmolCheckpoint;

// A parsed molecule.
typedef struct DigmolGraph DigmolGraph;

// A fine-tuned model: frozen encoder plus prediction head.
typedef struct DigmolModel DigmolModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *digmol_version(void);

// Length in bytes of the calling thread's last error message, without
// the terminating NUL. Zero after a successful call.
size_t digmol_last_error_length(void);

// Copies the last error message, NUL-terminated, into `buf`. Needs
// `digmol_last_error_length() + 1` bytes.
//
// # Safety
// `buf` must be valid for `capacity` writes.
enum DigmolStatus digmol_last_error_message(char *buf, size_t capacity);

// Parses a SMILES string into a new graph handle.
//
// # Safety
// `smiles` must be a NUL-terminated string; `out` must be writable.
enum DigmolStatus digmol_graph_parse(const char *smiles, struct DigmolGraph **out);

// Releases a graph. Null is ignored.
//
// # Safety
// `graph` must be null or a handle from [`digmol_graph_parse`] not yet freed.
void digmol_graph_free(struct DigmolGraph *graph);

// Number of heavy atoms.
//
// # Safety
// `graph` must be a live handle; `out` must be writable.
enum DigmolStatus digmol_graph_num_atoms(const struct DigmolGraph *graph, size_t *out);

// Number of directed edges (two per bond).
//
// # Safety
// `graph` must be a live handle; `out` must be writable.
enum DigmolStatus digmol_graph_num_directed_edges(const struct DigmolGraph *graph, size_t *out);

// Row-major node feature matrix, `num_atoms × 24` values.
//
// # Safety
// `graph` must be a live handle; `buf` valid for `capacity` doubles;
// `needed` writable.
enum DigmolStatus digmol_graph_features(const struct DigmolGraph *graph,
                                        double *buf,
                                        size_t capacity,
                                        size_t *needed);

// Scaffold key as NUL-terminated text; `*needed` includes the NUL.
// Acyclic molecules give the empty string.
//
// # Safety
// `graph` must be a live handle; `buf` valid for `capacity` bytes;
// `needed` writable.
enum DigmolStatus digmol_graph_scaffold(const struct DigmolGraph *graph,
                                        char *buf,
                                        size_t capacity,
                                        size_t *needed);

// Loads a pretraining checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DigmolStatus digmol_checkpoint_load(const char *path, struct DigmolCheckpoint **out);

// Releases a checkpoint. Null is ignored.
//
// # Safety
// `ckpt` must be null or a handle from [`digmol_checkpoint_load`] not yet freed.
void digmol_checkpoint_free(struct DigmolCheckpoint *ckpt);

// Width of the graph embedding produced by [`digmol_checkpoint_embed`].
//
// # Safety
// `ckpt` must be a live handle; `out` must be writable.
enum DigmolStatus digmol_checkpoint_embedding_dim(const struct DigmolCheckpoint *ckpt, size_t *out);

// Graph embedding `h` of `graph` under the checkpoint's online encoder.
//
// # Safety
// Handles must be live; `buf` valid for `capacity` doubles; `needed` writable.
enum DigmolStatus digmol_checkpoint_embed(const struct DigmolCheckpoint *ckpt,
                                          const struct DigmolGraph *graph,
                                          double *buf,
                                          size_t capacity,
                                          size_t *needed);

// Loads a fine-tuned model.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DigmolStatus digmol_model_load(const char *path, struct DigmolModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must be null or a handle from [`digmol_model_load`] not yet freed.
void digmol_model_free(struct DigmolModel *model);

// Number of predicted tasks.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum DigmolStatus digmol_model_num_tasks(const struct DigmolModel *model, size_t *out);

// 1 for classification models (outputs are probabilities), 0 for regression.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum DigmolStatus digmol_model_is_classifier(const struct DigmolModel *model, int32_t *out);

// Per-task predictions for one graph.
//
// # Safety
// Handles must be live; `buf` valid for `capacity` doubles; `needed` writable.
enum DigmolStatus digmol_model_predict(const struct DigmolModel *model,
                                       const struct DigmolGraph *graph,
                                       double *buf,
                                       size_t capacity,
                                       size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIGMOL_H */
