#ifndef LUMINA_H
#define LUMINA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Resource that bounds a phase.
 */
typedef enum LuminaResource {
  LUMINA_RESOURCE_TENSOR_COMPUTE = 0,
  LUMINA_RESOURCE_VECTOR_COMPUTE = 1,
  LUMINA_RESOURCE_MEMORY_BW = 2,
  LUMINA_RESOURCE_INTERCONNECT = 3,
} LuminaResource;

/*
 Result code of every fallible call.
 */
typedef enum LuminaStatus {
  LUMINA_STATUS_OK = 0,
  LUMINA_STATUS_NULL_POINTER = 1,
  LUMINA_STATUS_INVALID_ARGUMENT = 2,
  /*
   The design has a value outside its parameter's allowed list.
   */
  LUMINA_STATUS_INVALID_DESIGN = 3,
  LUMINA_STATUS_CONFIG = 4,
  LUMINA_STATUS_INTERNAL = 5,
} LuminaStatus;

/*
 Opaque evaluator handle.
 */
typedef struct LuminaEvaluator LuminaEvaluator;

/*
 One node configuration.
 */
typedef struct LuminaDesign {
  uint32_t link_count;
  uint32_t core_count;
  uint32_t sublane_count;
  uint32_t systolic_dim;
  uint32_t vector_width;
  uint32_t sram_kb;
  uint32_t global_buffer_mb;
  uint32_t mem_channels;
} LuminaDesign;

/*
 Evaluated latencies and area, raw and normalized to the reference.
 */
typedef struct LuminaMetrics {
  double ttft_s;
  double tpot_s;
  double area_mm2;
  double ttft_n;
  double tpot_n;
  double area_n;
  enum LuminaResource prefill_bottleneck;
  enum LuminaResource decode_bottleneck;
} LuminaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next call on this thread; do not free.
 */
const char *lumina_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *lumina_version(void);

/*
 Creates an evaluator for the default workload and design space.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum LuminaStatus lumina_evaluator_new_default(struct LuminaEvaluator **out);

/*
 Creates an evaluator from a JSON run-config file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LuminaStatus lumina_evaluator_from_config(const char *path, struct LuminaEvaluator **out);

/*
 Releases an evaluator. NULL is ignored.

 # Safety
 `ev` must come from a constructor above and not be used afterwards.
 */
void lumina_evaluator_free(struct LuminaEvaluator *ev);

/*
 The evaluator's reference design.

 # Safety
 Both pointers must be valid.
 */
enum LuminaStatus lumina_reference_design(const struct LuminaEvaluator *ev,
                                          struct LuminaDesign *out);

/*
 Number of designs in the evaluator's lattice.

 # Safety
 Both pointers must be valid.
 */
enum LuminaStatus lumina_space_cardinality(const struct LuminaEvaluator *ev, uint64_t *out);

/*
 Evaluates one design. Designs off the parameter lists are rejected with
 `InvalidDesign`.

 # Safety
 All pointers must be valid.
 */
enum LuminaStatus lumina_evaluate(const struct LuminaEvaluator *ev,
                                  const struct LuminaDesign *design,
                                  struct LuminaMetrics *out);

/*
 Exact hypervolume of `n` points (row-major, 3 objectives each, all
 minimized) against `reference` (3 values).

 # Safety
 `points` must hold `3 * n` doubles (may be NULL when `n == 0`);
 `reference` must hold 3; `out` must be writable.
 */
enum LuminaStatus lumina_hypervolume(const double *points,
                                     size_t n,
                                     const double *reference,
                                     double *out);

/*
 1 when `a` Pareto-dominates `b` (no worse everywhere, better somewhere),
 0 otherwise or when either pointer is NULL.

 # Safety
 Non-NULL pointers must each hold 3 doubles.
 */
int32_t lumina_dominates(const double *a, const double *b);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LUMINA_H */
