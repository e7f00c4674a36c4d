#ifndef TNP_H
#define TNP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum TnpStatus {
  TNP_STATUS_OK = 0,
  // A required pointer argument was null.
  TNP_STATUS_NULL_ARGUMENT = 1,
  // Shapes, lengths or values that the call cannot accept.
  TNP_STATUS_INVALID_ARGUMENT = 2,
  // Configuration text that does not parse or validate.
  TNP_STATUS_CONFIG = 3,
  // File or image codec failure.
  TNP_STATUS_IO = 4,
  // Divergence or a non-finite value during optimization.
  TNP_STATUS_NUMERIC = 5,
  // A Rust panic was caught at the boundary.
  TNP_STATUS_PANIC = 6,
} TnpStatus;

// Run configuration handle: the `fit` and `purify` sections of a `tnp`
// TOML file, with the master seed applied.
typedef struct TnpConfig TnpConfig;

// Image handle.
typedef struct TnpImage TnpImage;

// Quality of an image against a reference. `psnr` is `INFINITY` for
// identical images.
typedef struct TnpMetrics {
  double nrmse;
  double ssim;
  double psnr;
} TnpMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *tnp_version(void);

// Message of the last failed call on this thread, empty after a success.
// The pointer stays valid until the next call into the library on the
// same thread.
const char *tnp_last_error(void);

// Copies `len` planar values into a new image.
//
// # Safety
// `data` must point to `len` readable doubles and `out` to a writable
// handle slot.
enum TnpStatus tnp_image_new(size_t height,
                             size_t width,
                             size_t channels,
                             const double *data,
                             size_t len,
                             struct TnpImage **out);

// Reads an 8-bit PNG.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable handle slot.
enum TnpStatus tnp_image_read_png(const char *path, struct TnpImage **out);

// Writes an image as an 8-bit PNG, replacing the file atomically.
//
// # Safety
// `img` must be a live handle and `path` a NUL-terminated string.
enum TnpStatus tnp_image_write_png(const struct TnpImage *img, const char *path);

// Image dimensions. Any of the output pointers may be null.
//
// # Safety
// `img` must be a live handle; non-null outputs must be writable.
enum TnpStatus tnp_image_shape(const struct TnpImage *img,
                               size_t *height,
                               size_t *width,
                               size_t *channels);

// Copies the planar pixel values out; `len` must equal
// `height * width * channels`.
//
// # Safety
// `img` must be a live handle and `out` must point to `len` writable doubles.
enum TnpStatus tnp_image_copy_data(const struct TnpImage *img, double *out, size_t len);

// Releases an image; null is ignored.
//
// # Safety
// `img` must be null or a handle not yet freed.
void tnp_image_free(struct TnpImage *img);

// Default configuration.
//
// # Safety
// `out` must be a writable handle slot.
enum TnpStatus tnp_config_new(struct TnpConfig **out);

// Configuration from the text of a `tnp` TOML file. Unknown keys and
// invalid values are rejected.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a writable handle slot.
enum TnpStatus tnp_config_from_toml(const char *text, struct TnpConfig **out);

// Replaces the master seed of every section.
//
// # Safety
// `cfg` must be a live handle.
enum TnpStatus tnp_config_set_seed(struct TnpConfig *cfg, uint64_t seed);

// Releases a configuration; null is ignored.
//
// # Safety
// `cfg` must be null or a handle not yet freed.
void tnp_config_free(struct TnpConfig *cfg);

// Coarse-to-fine reconstruction under the `fit` section, at the input's
// size and clamped to `[0, 1]`.
//
// # Safety
// `img` and `cfg` must be live handles and `out` a writable handle slot.
enum TnpStatus tnp_fit(const struct TnpImage *img,
                       const struct TnpConfig *cfg,
                       struct TnpImage **out);

// Purification under the `purify` section, at the input's size and
// clamped to `[0, 1]`.
//
// # Safety
// `img` and `cfg` must be live handles and `out` a writable handle slot.
enum TnpStatus tnp_purify(const struct TnpImage *img,
                          const struct TnpConfig *cfg,
                          struct TnpImage **out);

// NRMSE, SSIM and PSNR of `other` against `reference`.
//
// # Safety
// Both images must be live handles and `out` must be writable.
enum TnpStatus tnp_metrics(const struct TnpImage *reference,
                           const struct TnpImage *other,
                           struct TnpMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TNP_H */
