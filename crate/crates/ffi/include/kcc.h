#ifndef KCC_H
#define KCC_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum KccStatus {
  KCC_STATUS_OK = 0,
  // A required pointer was null or an index was out of range.
  KCC_STATUS_INVALID_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  KCC_STATUS_UTF8 = 2,
  KCC_STATUS_IO = 3,
  // Bad magic, unsupported version, truncation or a malformed manifest.
  KCC_STATUS_FORMAT = 4,
  KCC_STATUS_CHECKSUM = 5,
  // Content failed validation (shapes, non-finite values, empty inputs).
  KCC_STATUS_INVALID = 6,
  // The gallery was built with a different configuration.
  KCC_STATUS_CONFIG_DRIFT = 7,
  KCC_STATUS_NOT_FOUND = 8,
  KCC_STATUS_PANIC = 9,
} KccStatus;

typedef struct KccConfig KccConfig;

typedef struct KccDataset KccDataset;

typedef struct KccGallery KccGallery;

typedef struct KccPrediction KccPrediction;

// One mutual match. The prototype image id is available through
// `kcc_prediction_match_prototype`.
typedef struct KccMatch {
  uint32_t query_segment_id;
  uint32_t prototype_segment_id;
  uint32_t class_label;
  double similarity;
} KccMatch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *kcc_last_error(void);

// Library version as a static string.
const char *kcc_version(void);

// # Safety
// `s` must come from this library and not have been freed.
void kcc_string_free(char *s);

// Default configuration.
struct KccConfig *kcc_config_new(void);

// Parses a TOML configuration string.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum KccStatus kcc_config_parse(const char *toml, struct KccConfig **out);

// Sets the segment count, prototypes per class, pruning size and seed.
// The configuration is validated before it is changed.
//
// # Safety
// `cfg` must be a live config handle.
enum KccStatus kcc_config_set(struct KccConfig *cfg,
                              size_t n_segments,
                              size_t per_class,
                              size_t j,
                              uint64_t seed);

// # Safety
// `cfg` must be null or a live config handle.
void kcc_config_free(struct KccConfig *cfg);

// Reads a token container.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum KccStatus kcc_dataset_open(const char *path, struct KccDataset **out);

// # Safety
// `ds` must be a live dataset handle.
size_t kcc_dataset_len(const struct KccDataset *ds);

// Image id at `index` in file order, or null when out of range.
//
// # Safety
// `ds` must be a live dataset handle.
const char *kcc_dataset_image_id(const struct KccDataset *ds, size_t index);

// Class label of an image.
//
// # Safety
// `ds` must be a live dataset handle, `image_id` a NUL-terminated string and
// `out` writable.
enum KccStatus kcc_dataset_label(const struct KccDataset *ds, const char *image_id, uint32_t *out);

// # Safety
// `ds` must be null or a live dataset handle.
void kcc_dataset_free(struct KccDataset *ds);

// Builds a prototype gallery from a labelled dataset.
//
// # Safety
// `ds` and `cfg` must be live handles; `out` must be writable.
enum KccStatus kcc_gallery_build(const struct KccDataset *ds,
                                 const struct KccConfig *cfg,
                                 struct KccGallery **out);

// Loads a gallery file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum KccStatus kcc_gallery_open(const char *path, struct KccGallery **out);

// # Safety
// `g` must be a live gallery handle; `path` a NUL-terminated string.
enum KccStatus kcc_gallery_save(const struct KccGallery *g, const char *path);

// Number of prototype images.
//
// # Safety
// `g` must be a live gallery handle.
size_t kcc_gallery_len(const struct KccGallery *g);

// Hex fingerprint of the configuration the gallery was built with.
//
// # Safety
// `g` must be a live gallery handle.
const char *kcc_gallery_fingerprint(const struct KccGallery *g);

// Copy of the configuration stored in the gallery.
//
// # Safety
// `g` must be a live gallery handle.
struct KccConfig *kcc_gallery_config(const struct KccGallery *g);

// # Safety
// `g` must be null or a live gallery handle.
void kcc_gallery_free(struct KccGallery *g);

// Classifies one image of `ds`. `cfg` may be null to use the gallery's own
// configuration. An abstention is a successful call; check
// `kcc_prediction_abstained`.
//
// # Safety
// `g` and `ds` must be live handles, `cfg` null or live, `image_id` a
// NUL-terminated string and `out` writable.
enum KccStatus kcc_classify(const struct KccGallery *g,
                            const struct KccDataset *ds,
                            const char *image_id,
                            const struct KccConfig *cfg,
                            struct KccPrediction **out);

// # Safety
// `p` must be a live prediction handle.
bool kcc_prediction_abstained(const struct KccPrediction *p);

// Predicted class, or -1 when abstained.
//
// # Safety
// `p` must be a live prediction handle.
int64_t kcc_prediction_class(const struct KccPrediction *p);

// Score of `class` (fraction of matches), 0 for unknown classes.
//
// # Safety
// `p` must be a live prediction handle.
double kcc_prediction_score(const struct KccPrediction *p, uint32_t class_);

// Distinct prototype images behind the predicted class.
//
// # Safety
// `p` must be a live prediction handle.
size_t kcc_prediction_complexity(const struct KccPrediction *p);

// # Safety
// `p` must be a live prediction handle.
size_t kcc_prediction_num_matches(const struct KccPrediction *p);

// # Safety
// `p` must be a live prediction handle and `out` writable.
enum KccStatus kcc_prediction_match(const struct KccPrediction *p,
                                    size_t index,
                                    struct KccMatch *out);

// Prototype image id of match `index`, or null when out of range.
//
// # Safety
// `p` must be a live prediction handle.
const char *kcc_prediction_match_prototype(const struct KccPrediction *p, size_t index);

// # Safety
// `p` must be null or a live prediction handle.
void kcc_prediction_free(struct KccPrediction *p);

// Renders the explanation figure as SVG into a caller-owned string.
// Image paths come from `ds` for the query and from the gallery for
// prototypes, resolved against `image_root` (null means the current
// directory).
//
// # Safety
// `p`, `g` and `ds` must be live handles, `image_root` null or a
// NUL-terminated string, and `out` writable.
enum KccStatus kcc_render_svg(const struct KccPrediction *p,
                              const struct KccGallery *g,
                              const struct KccDataset *ds,
                              const char *image_root,
                              bool embed_images,
                              char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KCC_H */
