#ifndef OCCUSURF_H
#define OCCUSURF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OccStatus {
  OCC_STATUS_OK = 0,
  OCC_STATUS_NULL_POINTER = 1,
  OCC_STATUS_INVALID_ARGUMENT = 2,
  OCC_STATUS_IO = 3,
  OCC_STATUS_CONFIG = 4,
  OCC_STATUS_CHECKPOINT = 5,
  OCC_STATUS_DIMENSION_MISMATCH = 6,
  OCC_STATUS_NON_FINITE = 7,
  OCC_STATUS_EMPTY_MESH = 8,
  OCC_STATUS_BUFFER_TOO_SMALL = 9,
  OCC_STATUS_PANIC = 10,
} OccStatus;

typedef struct OccMesh OccMesh;

typedef struct OccModel OccModel;

typedef struct OccTrainer OccTrainer;

// Summary of one training step.
typedef struct OccStepReport {
  uint64_t iteration;
  double loss;
  double laplacian;
  double batch_psnr;
  double flagged_fraction;
  bool relaxed;
} OccStepReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *occ_last_error(void);

// Library version as a static NUL-terminated string.
const char *occ_version(void);

// Loads the model stored in a training checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum OccStatus occ_model_load(const char *path, struct OccModel **out);

// # Safety
// `model` must come from this library and not be used afterwards. Null is ignored.
void occ_model_free(struct OccModel *model);

// Grid cells per axis.
//
// # Safety
// `model` must be a live handle and `out` a pointer to three values.
enum OccStatus occ_model_resolution(const struct OccModel *model, size_t *out);

// Occupancy at a world-space point; 0 outside the bounds.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum OccStatus occ_model_alpha(const struct OccModel *model,
                               double x,
                               double y,
                               double z,
                               double *out);

// Extracts the mesh of the `level` set.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum OccStatus occ_mesh_extract(const struct OccModel *model, double level, struct OccMesh **out);

// # Safety
// `mesh` must come from this library and not be used afterwards. Null is ignored.
void occ_mesh_free(struct OccMesh *mesh);

// # Safety
// `mesh` must be a live handle; the out pointers must be valid.
enum OccStatus occ_mesh_counts(const struct OccMesh *mesh, size_t *vertices, size_t *triangles);

// Copies vertex positions as `x, y, z` triples into `buf` of `len` doubles.
//
// # Safety
// `mesh` must be a live handle and `buf` valid for `len` writes.
enum OccStatus occ_mesh_vertices(const struct OccMesh *mesh, double *buf, size_t len);

// Copies triangle vertex indices into `buf` of `len` entries.
//
// # Safety
// `mesh` must be a live handle and `buf` valid for `len` writes.
enum OccStatus occ_mesh_triangles(const struct OccMesh *mesh, uint32_t *buf, size_t len);

// Writes the mesh as OBJ or PLY depending on the extension.
//
// # Safety
// `mesh` must be a live handle and `path` a NUL-terminated string.
enum OccStatus occ_mesh_save(const struct OccMesh *mesh, const char *path);

// Creates a trainer from an experiment config; the dataset is rendered from
// the configured scene.
//
// # Safety
// `config_path` must be a NUL-terminated string and `out` a valid pointer.
enum OccStatus occ_trainer_new(const char *config_path, struct OccTrainer **out);

// # Safety
// `trainer` must come from this library and not be used afterwards. Null is ignored.
void occ_trainer_free(struct OccTrainer *trainer);

// Runs one optimization step. `report` may be null.
//
// # Safety
// `trainer` must be a live handle; `report` null or valid.
enum OccStatus occ_trainer_step(struct OccTrainer *trainer, struct OccStepReport *report);

// Completed steps.
//
// # Safety
// `trainer` must be a live handle and `out` a valid pointer.
enum OccStatus occ_trainer_iteration(const struct OccTrainer *trainer, uint64_t *out);

// Writes a checkpoint that [`occ_model_load`] can read.
//
// # Safety
// `trainer` must be a live handle and `path` a NUL-terminated string.
enum OccStatus occ_trainer_save(const struct OccTrainer *trainer, const char *path);

// Independent copy of the current model.
//
// # Safety
// `trainer` must be a live handle and `out` a valid pointer.
enum OccStatus occ_trainer_model(const struct OccTrainer *trainer, struct OccModel **out);

// Runs the gradient and sampling self-checks; `failed` receives the number
// of failing checks.
//
// # Safety
// `failed` must be a valid pointer.
enum OccStatus occ_verify(uint64_t seed, uint32_t *failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OCCUSURF_H */
