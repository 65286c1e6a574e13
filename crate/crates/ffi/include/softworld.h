#ifndef SOFTWORLD_H
#define SOFTWORLD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. Regenerate with SOFTWORLD_BLESS=1 cargo test -p softworld-ffi --test header. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Width of every latent vector crossing the boundary.
#define SW_EMBED_DIM 32

#define SW_TASK_ROLLING 0

#define SW_TASK_CUTTING 1

#define SW_TASK_GATHERING 2

#define SW_TASK_SHAPING 3

#define SW_SHAPE_BALL 0

#define SW_SHAPE_TWO_BALLS 1

#define SW_SHAPE_CUBOID 2

#define SW_SHAPE_RANDOM 3

#define SW_TOOL_ROLLING_PIN 0

#define SW_TOOL_KNIFE 1

#define SW_TOOL_DUAL_FLATS 2

#define SW_TOOL_ROLLING_BALL 3

typedef enum SwStatus {
  SW_STATUS_OK = 0,
  SW_STATUS_NULL_POINTER = 1,
  // Wrong enum value, buffer length or pose width.
  SW_STATUS_INVALID_ARGUMENT = 2,
  SW_STATUS_CONFIG = 3,
  SW_STATUS_INSUFFICIENT_DATA = 4,
  SW_STATUS_SIMULATION = 5,
  SW_STATUS_IO = 6,
  SW_STATUS_CHECKPOINT = 7,
  SW_STATUS_INTERNAL = 8,
  // A panic was caught at the boundary; the handle may be inconsistent.
  SW_STATUS_PANIC = 9,
} SwStatus;

typedef struct SwAgent SwAgent;

typedef struct SwEncoder SwEncoder;

typedef struct SwEnv SwEnv;

typedef struct SwSkeleton SwSkeleton;

typedef struct SwSoftGpt SwSoftGpt;

// Simulator resolution; pass NULL for the library defaults.
typedef struct SwSimParams {
  double lattice_spacing;
  uint32_t substeps;
} SwSimParams;

typedef struct SwMetrics {
  double iou;
  double density_score;
  double sdf_score;
  double reward;
} SwMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sw_version(void);

// Message of the last failed call on this thread, or NULL. Valid until
// the next `sw_*` call on the same thread.
const char *sw_last_error(void);

// Resets a dough environment. `params` may be NULL.
//
// # Safety
// `params` must be NULL or valid; `out` must be writable.
enum SwStatus sw_env_new(uint32_t task,
                         uint32_t shape,
                         uint64_t seed,
                         const struct SwSimParams *params,
                         struct SwEnv **out);

// # Safety
// `env` must come from [`sw_env_new`] and not be used afterwards.
void sw_env_free(struct SwEnv *env);

// Number of particles; 0 for a NULL handle.
//
// # Safety
// `env` must be NULL or a live handle.
size_t sw_env_particle_count(const struct SwEnv *env);

// Pose width of the environment's tool; 0 for a NULL handle.
//
// # Safety
// `env` must be NULL or a live handle.
uint32_t sw_env_action_dim(const struct SwEnv *env);

// Copies particle positions as `x, y, z` triples into `out[0..len]`.
//
// # Safety
// `out` must hold `len` doubles.
enum SwStatus sw_env_positions(const struct SwEnv *env, double *out, size_t len);

// Copies the current tool pose (`action_dim` values).
//
// # Safety
// `out` must hold `len` doubles.
enum SwStatus sw_env_tool_pose(const struct SwEnv *env, double *out, size_t len);

// Moves the tool through `count` waypoints of `action_dim` values each.
// `contact` (nullable) reports whether the tool touched the dough.
//
// # Safety
// `waypoints` must hold `count * action_dim` doubles.
enum SwStatus sw_env_step(struct SwEnv *env, const double *waypoints, size_t count, bool *contact);

// # Safety
// `out` must be writable.
enum SwStatus sw_env_metrics(const struct SwEnv *env, struct SwMetrics *out);

// Skeleton of the current dough surface with `k` nodes.
//
// # Safety
// `out` must be writable.
enum SwStatus sw_env_skeleton(const struct SwEnv *env, size_t k, struct SwSkeleton **out);

// Skeleton of `n` points given as `x, y, z` triples.
//
// # Safety
// `points` must hold `3 * n` doubles; `out` must be writable.
enum SwStatus sw_skeleton_extract(const double *points,
                                  size_t n,
                                  size_t k,
                                  struct SwSkeleton **out);

// # Safety
// `skeleton` must be a live handle and not be used afterwards.
void sw_skeleton_free(struct SwSkeleton *skeleton);

// # Safety
// `skeleton` must be NULL or a live handle.
size_t sw_skeleton_node_count(const struct SwSkeleton *skeleton);

// # Safety
// `skeleton` must be NULL or a live handle.
size_t sw_skeleton_edge_count(const struct SwSkeleton *skeleton);

// Node features as `x, y, z, radius` rows.
//
// # Safety
// `out` must hold `len` doubles.
enum SwStatus sw_skeleton_nodes(const struct SwSkeleton *skeleton, double *out, size_t len);

// Undirected links as `low, high` index pairs.
//
// # Safety
// `out` must hold `len` values.
enum SwStatus sw_skeleton_edges(const struct SwSkeleton *skeleton, uint32_t *out, size_t len);

// Loads an encoder checkpoint (`encoder.ckpt`).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SwStatus sw_encoder_load(const char *path_, struct SwEncoder **out);

// Encoder with fresh weights drawn from `seed`.
//
// # Safety
// `out` must be writable.
enum SwStatus sw_encoder_new(uint64_t seed, struct SwEncoder **out);

// # Safety
// `encoder` must be a live handle and not be used afterwards.
void sw_encoder_free(struct SwEncoder *encoder);

// Object and scene embeddings of a skeleton acted on by a `tool` pose.
// Either output may be NULL; non-NULL outputs hold [`SW_EMBED_DIM`] doubles.
//
// # Safety
// `pose` must hold `pose_len` doubles.
enum SwStatus sw_encoder_encode(const struct SwEncoder *encoder,
                                const struct SwSkeleton *skeleton,
                                uint32_t tool,
                                const double *pose,
                                size_t pose_len,
                                double *object_out,
                                double *scene_out);

// Loads a SoftGPT checkpoint; its `.json` sidecar must sit next to it.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SwStatus sw_softgpt_load(const char *path_, struct SwSoftGpt **out);

// # Safety
// `model` must be a live handle and not be used afterwards.
void sw_softgpt_free(struct SwSoftGpt *model);

// Next object embedding after `n` tokens. Token `i` is the scene
// embedding `scenes[32i..32i+32]` and the object embedding it was built
// from, `objects[32i..32i+32]`.
//
// # Safety
// `scenes` and `objects` must hold `32 * n` doubles, `out` 32.
enum SwStatus sw_softgpt_predict_next(const struct SwSoftGpt *model,
                                      const double *scenes,
                                      const double *objects,
                                      size_t n,
                                      double *out);

// Loads an agent directory written by training (`<run>/agent`).
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be writable.
enum SwStatus sw_agent_load(const char *dir, struct SwAgent **out);

// # Safety
// `agent` must be a live handle and not be used afterwards.
void sw_agent_free(struct SwAgent *agent);

// # Safety
// `agent` must be NULL or a live handle.
uint32_t sw_agent_action_dim(const struct SwAgent *agent);

// Greedy target pose for an object embedding and a goal embedding.
//
// # Safety
// `eps` and `goal` must hold 32 doubles, `pose_out` `len`.
enum SwStatus sw_agent_act(const struct SwAgent *agent,
                           const double *eps,
                           const double *goal,
                           double *pose_out,
                           size_t len);

// Intersection over union of two occupancy grids of `len` cells (nonzero
// bytes are occupied).
//
// # Safety
// `a` and `b` must hold `len` bytes; `out` must be writable.
enum SwStatus sw_iou(const uint8_t *a, const uint8_t *b, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOFTWORLD_H */
