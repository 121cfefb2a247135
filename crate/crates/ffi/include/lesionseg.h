#ifndef LESIONSEG_H
#define LESIONSEG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum {
  LSEG_STATUS_OK = 0,
  LSEG_STATUS_NULL_POINTER = 1,
  LSEG_STATUS_INVALID_ARGUMENT = 2,
  LSEG_STATUS_IO = 3,
  LSEG_STATUS_CHECKPOINT = 4,
  LSEG_STATUS_CONFIG = 5,
  LSEG_STATUS_CONTRACT = 6,
  LSEG_STATUS_INFERENCE = 7,
  LSEG_STATUS_UNDEFINED_AUC = 8,
  LSEG_STATUS_PANIC = 9,
  LSEG_STATUS_OTHER = 10,
} LsegStatus;

// A loaded or freshly built model together with its preprocessing.
typedef struct LsegModel LsegModel;

// Pixel metrics of one prediction/truth pair.
typedef struct {
  uint64_t tp;
  uint64_t tn;
  uint64_t fp;
  uint64_t fn_;
  double accuracy;
  double specificity;
  double sensitivity;
  double precision;
  double f1;
  double iou;
  // Non-zero when any ratio had a zero denominator.
  uint8_t degenerate;
} LsegMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next call into this library on the same thread.
const char *lseg_last_error(void);

// Library version as a static NUL-terminated string.
const char *lseg_version(void);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
LsegStatus lseg_model_load(const char *path, LsegModel **out);

// Builds a randomly initialised model from a JSON model configuration
// (keys as in the training config's `[model]` table plus `input_side`);
// an empty object gives the defaults.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
LsegStatus lseg_model_build(const char *config_json, LsegModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and must not be used afterwards.
void lseg_model_free(LsegModel *model);

// Side length of the square probability map produced by [`lseg_model_predict`].
//
// # Safety
// `model` must be a live handle or null (which yields 0).
size_t lseg_model_input_side(const LsegModel *model);

// Number of scalar parameters, or 0 for a null handle.
//
// # Safety
// `model` must be a live handle or null.
size_t lseg_model_parameter_count(const LsegModel *model);

// Preprocesses an RGB image (contrast enhancement and resize to the model
// side) and writes per-pixel lesion probabilities into `probs`, which must
// hold `side * side` values.
//
// # Safety
// `rgb` must point to `height * width * 3` bytes and `probs` to `probs_len` doubles.
LsegStatus lseg_model_predict(const LsegModel *model,
                              const uint8_t *rgb,
                              size_t height,
                              size_t width,
                              double *probs,
                              size_t probs_len);

// Writes 1 where `probs >= threshold`, else 0.
//
// # Safety
// `probs` must point to `len` doubles and `mask` to `len` bytes.
LsegStatus lseg_binarize(const double *probs, size_t len, double threshold, uint8_t *mask);

// Fuses up to four binary masks (EX, HE, MA, SE order; null entries are
// absent classes) into a bitmask label image: bit 0 EX, bit 1 HE, bit 2 MA,
// bit 3 SE.
//
// # Safety
// `masks` must point to four pointers, each null or to `height * width`
// bytes; `labels` must point to `height * width` bytes.
LsegStatus lseg_fuse(const uint8_t *const *masks, size_t height, size_t width, uint8_t *labels);

// Confusion counts and ratio metrics of a binary prediction against the truth.
//
// # Safety
// `pred` and `truth` must point to `len` bytes and `out` to one [`LsegMetrics`].
LsegStatus lseg_metrics(const uint8_t *pred, const uint8_t *truth, size_t len, LsegMetrics *out);

// Area under the ROC curve of `scores` against 0/1 `labels`.
//
// # Safety
// `scores` must point to `len` doubles, `labels` to `len` bytes and `auc` to one double.
LsegStatus lseg_roc_auc(const double *scores, const uint8_t *labels, size_t len, double *auc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LESIONSEG_H */
