#ifndef RICEKERN_H
#define RICEKERN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define RK_OK 0

// Invalid argument (null pointer, bad UTF-8, bad config key).
#define RK_EINVAL 1

// I/O failure (missing or unreadable file).
#define RK_EIO 2

// Input failed schema or semantic validation.
#define RK_ESCHEMA 3

// Any other pipeline failure.
#define RK_EFAIL 4

// Opaque calibrated density table.
typedef struct RkDensityTable RkDensityTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the library version as a static string; never freed.
const char *rk_version(void);

// Returns the message for the most recent error on this thread, or null.
// The pointer stays valid until the next failing call on the thread.
const char *rk_last_error(void);

// Loads a density table from a calibration JSON file.
//
// On success writes the new handle to `out` and returns `RK_OK`. The
// handle must be released with [`rk_density_table_free`].
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
int32_t rk_density_table_load(const char *path, struct RkDensityTable **out);

// Releases a density table handle. Null is a no-op.
//
// # Safety
// `table` must be null or a pointer from [`rk_density_table_load`],
// released at most once.
void rk_density_table_free(struct RkDensityTable *table);

// Analyzes a PNG scene image with the built-in detectors and returns the
// report as a JSON string in `out_json`.
//
// `config_json` may be null for defaults, or a pipeline config document.
// The returned string must be released with [`rk_string_free`].
//
// # Safety
// Pointers must be valid; `table` must be a live density-table handle.
int32_t rk_analyze_image(const char *image_path,
                         const struct RkDensityTable *table,
                         const char *config_json,
                         char **out_json);

// Releases a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must be null or a pointer returned by this library, released at
// most once.
void rk_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RICEKERN_H */
