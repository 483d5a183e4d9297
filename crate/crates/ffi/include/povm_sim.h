#ifndef POVM_SIM_H
#define POVM_SIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result codes. The first four match the command-line exit codes.
typedef enum PovmSimStatus {
  POVM_SIM_STATUS_OK = 0,
  POVM_SIM_STATUS_MATH_ERROR = 1,
  POVM_SIM_STATUS_PARSE_ERROR = 2,
  POVM_SIM_STATUS_IO_ERROR = 3,
  POVM_SIM_STATUS_NULL_POINTER = 4,
  POVM_SIM_STATUS_INVALID_ARGUMENT = 5,
  POVM_SIM_STATUS_BUFFER_TOO_SMALL = 6,
  POVM_SIM_STATUS_PANIC = 7,
} PovmSimStatus;

// A compiled gate circuit.
typedef struct PovmSimCircuit PovmSimCircuit;

// A measurement `{M_j}` on a `d`-level system.
typedef struct PovmSimPovm PovmSimPovm;

// Overrides for [`povm_sim_run_job_json`]. Zero-initialize for job defaults.
typedef struct PovmSimRunOptions {
  // 0 keeps the job's shot count.
  uint64_t shots;
  uint64_t seed;
  // When false, `seed` is ignored.
  bool has_seed;
  bool exact;
  bool tomography;
  // Zero-based outcome to condition on, or a negative value for none.
  int64_t post_select;
} PovmSimRunOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call into this library.
const char *povm_sim_last_error(void);

// Library version as a static NUL-terminated string.
const char *povm_sim_version(void);

// # Safety
// `s` must be null or a string returned by this library.
void povm_sim_string_free(char *s);

// Builds a measurement from `count` row-major `dim × dim` operators stored
// back to back in `re` and `im` (`im` may be null for real operators).
//
// # Safety
// `re` (and `im` if non-null) must hold `count·dim·dim` values; `out` must be writable.
enum PovmSimStatus povm_sim_povm_new(size_t dim,
                                     size_t count,
                                     const double *re,
                                     const double *im,
                                     struct PovmSimPovm **out);

// # Safety
// `p` must be null or a handle from [`povm_sim_povm_new`] not yet freed.
void povm_sim_povm_free(struct PovmSimPovm *p);

// Checks `∑ M_j†M_j = I` within `tolerance` and positivity of every effect.
// Returns `Ok` when valid and `MathError` otherwise; the largest entrywise
// deviation is written to `max_deviation` when it is non-null.
//
// # Safety
// `p` must be a live handle; `max_deviation` must be null or writable.
enum PovmSimStatus povm_sim_povm_validate(const struct PovmSimPovm *p,
                                          double tolerance,
                                          double *max_deviation);

// Born-rule outcome probabilities for the pure state `re + i·im` (length `dim`).
//
// # Safety
// `state_re` (and `state_im` if non-null) must hold `dim` values; `out` must
// hold `capacity` values; `out_len` must be writable.
enum PovmSimStatus povm_sim_povm_probabilities(const struct PovmSimPovm *p,
                                               const double *state_re,
                                               const double *state_im,
                                               double *out,
                                               size_t capacity,
                                               size_t *out_len);

// Compiles the dilated joint state of `p` on the given input into a circuit.
// The system occupies the leading qubits and the outcome register the rest.
//
// # Safety
// As for [`povm_sim_povm_probabilities`]; `out` must be writable.
enum PovmSimStatus povm_sim_compile(const struct PovmSimPovm *p,
                                    const double *state_re,
                                    const double *state_im,
                                    struct PovmSimCircuit **out);

// Parses an OpenQASM 3.0 program in the subset written by [`povm_sim_circuit_to_qasm`].
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum PovmSimStatus povm_sim_circuit_from_qasm(const char *text, struct PovmSimCircuit **out);

// # Safety
// `c` must be null or a live circuit handle.
void povm_sim_circuit_free(struct PovmSimCircuit *c);

// Number of qubits, or 0 for a null handle.
//
// # Safety
// `c` must be null or a live circuit handle.
size_t povm_sim_circuit_width(const struct PovmSimCircuit *c);

// Number of CNOT gates, or 0 for a null handle.
//
// # Safety
// `c` must be null or a live circuit handle.
size_t povm_sim_circuit_cnot_count(const struct PovmSimCircuit *c);

// # Safety
// `c` must be a live handle; `out` must be writable. Free the result with
// [`povm_sim_string_free`].
enum PovmSimStatus povm_sim_circuit_to_qasm(const struct PovmSimCircuit *c, char **out);

// Exact outcome distribution of `qubits` after running the circuit on
// `|0…0⟩`, indexed with `qubits[0]` most significant.
//
// # Safety
// `qubits` must hold `qubit_count` values; `out` must hold `capacity` values;
// `out_len` must be writable.
enum PovmSimStatus povm_sim_circuit_marginals(const struct PovmSimCircuit *c,
                                              const size_t *qubits,
                                              size_t qubit_count,
                                              double *out,
                                              size_t capacity,
                                              size_t *out_len);

// Samples `shots` readouts of `qubits` with the given seed and writes the
// count of each outcome value to `out` (length `2^qubit_count`).
//
// # Safety
// As for [`povm_sim_circuit_marginals`], with `out` holding `u64` counts.
enum PovmSimStatus povm_sim_circuit_sample(const struct PovmSimCircuit *c,
                                           const size_t *qubits,
                                           size_t qubit_count,
                                           uint64_t shots,
                                           uint64_t seed,
                                           uint64_t *out,
                                           size_t capacity,
                                           size_t *out_len);

// Runs a job given as JSON text (the command-line job format) and returns
// the result document as JSON. A relative `noise` path is resolved against
// the working directory. `options` may be null.
//
// # Safety
// `spec_json` must be a NUL-terminated string; `options` must be null or
// valid; `out` must be writable. Free the result with [`povm_sim_string_free`].
enum PovmSimStatus povm_sim_run_job_json(const char *spec_json,
                                         const struct PovmSimRunOptions *options,
                                         char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POVM_SIM_H */
