#ifndef SLIM_H
#define SLIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SlimStatus {
  SLIM_STATUS_OK = 0,
  SLIM_STATUS_NULL_POINTER = 1,
  SLIM_STATUS_INVALID_ARGUMENT = 2,
  SLIM_STATUS_CONFIG = 3,
  SLIM_STATUS_CONTRACT = 4,
  SLIM_STATUS_NUMERICAL = 5,
  SLIM_STATUS_CAPACITY = 6,
  SLIM_STATUS_BUDGET = 7,
  SLIM_STATUS_DIVERGED = 8,
  SLIM_STATUS_CHECKPOINT = 9,
  SLIM_STATUS_IO = 10,
  SLIM_STATUS_PANIC = 11,
} SlimStatus;

// Opaque communication budget.
typedef struct SlimBudget SlimBudget;

// Opaque environment instance.
typedef struct SlimEnv SlimEnv;

// Opaque trainer with its config.
typedef struct SlimTrainer SlimTrainer;

typedef struct SlimEnvSpec {
  size_t n_agents;
  size_t episode_cap;
  size_t action_arity;
  size_t obs_dim;
  double gamma;
} SlimEnvSpec;

typedef struct SlimEpochMetrics {
  size_t epoch;
  double mean_return;
  double mean_steps;
  double success_rate;
  double policy_loss;
  double value_loss;
  double entropy;
  double grad_norm;
  double budget_violations;
} SlimEpochMetrics;

typedef struct SlimEvalMetrics {
  size_t episodes;
  double mean_return;
  double mean_steps;
  double success_rate;
} SlimEvalMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `len > 0`) and returns the full message length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t slim_last_error(char *buf, size_t len);

// Largest feasible message dimension, or 0 when none is.
//
// # Safety
// `dim` must be a valid pointer.
enum SlimStatus slim_max_message_dim(double beta, double sigma, uint32_t rounds, size_t *dim);

// # Safety
// `handle` must be a valid pointer; the result is freed with
// [`slim_budget_free`].
enum SlimStatus slim_budget_new(double sigma,
                                uint32_t rounds,
                                size_t dim,
                                double beta,
                                struct SlimBudget **handle);

// Writes 1 if `sigma * rounds * dim <= beta`, else 0.
//
// # Safety
// Pointers must be valid.
enum SlimStatus slim_budget_feasible(const struct SlimBudget *budget, uint8_t *feasible);

// Like [`slim_budget_feasible`] but reports infeasibility as
// `SLIM_STATUS_CONFIG` with the violated inequality as the message.
//
// # Safety
// `budget` must be valid.
enum SlimStatus slim_budget_require(const struct SlimBudget *budget);

// # Safety
// Pointers must be valid.
enum SlimStatus slim_budget_load(const struct SlimBudget *budget, double *load);

// # Safety
// `budget` must be null or come from [`slim_budget_new`], freed once.
void slim_budget_free(struct SlimBudget *budget);

// Builds the `[environment]` of a TOML run config.
//
// # Safety
// `config_toml` must be a NUL-terminated string and `handle` valid.
enum SlimStatus slim_env_new(const char *config_toml, struct SlimEnv **handle);

// # Safety
// Pointers must be valid.
enum SlimStatus slim_env_spec(const struct SlimEnv *env, struct SlimEnvSpec *spec);

// Resets and writes the `n_agents x obs_dim` observations row-major.
//
// # Safety
// `obs` must point to `obs_len` writable doubles.
enum SlimStatus slim_env_reset(struct SlimEnv *env, uint64_t seed, double *obs, size_t obs_len);

// Applies one joint action. `rewards` and `dones` take one entry per
// agent, `obs` the next observations.
//
// # Safety
// `actions` must hold `n_agents` entries; output buffers must be valid
// for their stated lengths.
enum SlimStatus slim_env_step(struct SlimEnv *env,
                              const size_t *actions,
                              size_t n_actions,
                              double *obs,
                              size_t obs_len,
                              double *rewards,
                              uint8_t *dones,
                              uint8_t *episode_done);

// # Safety
// `env` must be null or come from [`slim_env_new`], freed once.
void slim_env_free(struct SlimEnv *env);

// Builds a trainer from a full TOML run config; an infeasible bandwidth
// budget is refused here.
//
// # Safety
// `config_toml` must be a NUL-terminated string and `handle` valid.
enum SlimStatus slim_trainer_new(const char *config_toml, struct SlimTrainer **handle);

// # Safety
// Pointers must be valid.
enum SlimStatus slim_trainer_train_epoch(struct SlimTrainer *trainer,
                                         struct SlimEpochMetrics *metrics);

// Rolls out the current policy; `greedy` nonzero takes the most likely
// action.
//
// # Safety
// Pointers must be valid.
enum SlimStatus slim_trainer_evaluate(const struct SlimTrainer *trainer,
                                      size_t episodes,
                                      uint64_t seed,
                                      uint8_t greedy,
                                      struct SlimEvalMetrics *metrics);

// # Safety
// `trainer` must be valid and `path` NUL-terminated.
enum SlimStatus slim_trainer_save(const struct SlimTrainer *trainer, const char *path);

// Replaces the parameters with a checkpoint written under the same
// config.
//
// # Safety
// `trainer` must be valid and `path` NUL-terminated.
enum SlimStatus slim_trainer_load(struct SlimTrainer *trainer, const char *path);

// # Safety
// `trainer` must be null or come from [`slim_trainer_new`], freed once.
void slim_trainer_free(struct SlimTrainer *trainer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLIM_H */
