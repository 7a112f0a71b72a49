#ifndef SDB_H
#define SDB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every function.
 */
typedef enum SdbStatus {
  SDB_STATUS_OK = 0,
  /**
   * A pointer was null or a string was not UTF-8.
   */
  SDB_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Input failed validation (bad template, bad name, malformed packet).
   */
  SDB_STATUS_INVALID = 2,
  SDB_STATUS_NOT_FOUND = 3,
  SDB_STATUS_CONFLICT = 4,
  /**
   * Credentials were rejected. The attempt is still logged.
   */
  SDB_STATUS_UNAUTHORIZED = 5,
  /**
   * Storage or simulation failure.
   */
  SDB_STATUS_RUNTIME = 6,
  SDB_STATUS_PANIC = 7,
} SdbStatus;

/**
 * Packet kinds accepted by [`sdb_packet_check`].
 */
typedef enum SdbPacketKind {
  SDB_PACKET_KIND_DHCP = 0,
  SDB_PACKET_KIND_TFTP = 1,
  SDB_PACKET_KIND_DNS_QUERY = 2,
} SdbPacketKind;

/**
 * Opaque control-plane handle.
 */
typedef struct SdbPlane SdbPlane;

/**
 * Opaque simulation report.
 */
typedef struct SdbReport SdbReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *sdb_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sdb_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *sdb_version(void);

/**
 * Opens (or creates) a store at `store_dir`. `base_url` may be null for
 * the default. `fast_kdf` nonzero selects cheap password hashing, meant
 * for tests only.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum SdbStatus sdb_plane_open(const char *store_dir,
                              const char *base_url,
                              int32_t fast_kdf,
                              struct SdbPlane **out);

/**
 * Closes a control plane. Null is ignored.
 *
 * # Safety
 * `plane` must come from [`sdb_plane_open`] and not have been freed.
 */
void sdb_plane_free(struct SdbPlane *plane);

/**
 * Defines an OS from a boot template using `{{base_url}}` and `{{os_id}}`.
 * `kernel_params` may be null. The new OS id is written to `out_id`.
 *
 * # Safety
 * Pointers must be valid as described for [`sdb_plane_open`].
 */
enum SdbStatus sdb_plane_create_os(const struct SdbPlane *plane,
                                   const char *name,
                                   const char *template_,
                                   const char *kernel_params,
                                   char **out_id);

/**
 * Stores a boot artifact for an OS.
 *
 * # Safety
 * `data` must point to `len` readable bytes.
 */
enum SdbStatus sdb_plane_upload_file(const struct SdbPlane *plane,
                                     const char *os_id,
                                     const char *filename,
                                     const uint8_t *data,
                                     size_t len);

/**
 * Creates a user assigned to `os_id`.
 *
 * # Safety
 * String arguments must be NUL-terminated.
 */
enum SdbStatus sdb_plane_create_user(const struct SdbPlane *plane,
                                     const char *username,
                                     const char *password,
                                     const char *os_id);

/**
 * Revokes a user's access. Existing log entries are kept.
 *
 * # Safety
 * String arguments must be NUL-terminated.
 */
enum SdbStatus sdb_plane_deactivate_user(const struct SdbPlane *plane, const char *username);

/**
 * Authenticates one boot attempt and writes the issued script to
 * `out_script`. The script is written on rejection as well, and the call
 * then returns [`SdbStatus::Unauthorized`].
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_script` must be writable.
 */
enum SdbStatus sdb_plane_authenticate(const struct SdbPlane *plane,
                                      const char *username,
                                      const char *password,
                                      const char *mac,
                                      const char *client_ip,
                                      char **out_script);

/**
 * Number of entries in the authentication log.
 *
 * # Safety
 * `plane` must be a live handle; `out` must be writable.
 */
enum SdbStatus sdb_plane_auth_log_len(const struct SdbPlane *plane, uint64_t *out);

/**
 * Runs a scenario. `scenario` is either a bundled scenario name or a JSON
 * scenario document. A nonzero `seed_override` replaces the scenario seed.
 *
 * # Safety
 * `scenario` must be NUL-terminated; `out` must be writable.
 */
enum SdbStatus sdb_simulate(const char *scenario, uint64_t seed_override, struct SdbReport **out);

/**
 * 1 when every expectation held, 0 otherwise or for a null report.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
int32_t sdb_report_passed(const struct SdbReport *report);

/**
 * Serializes the report as JSON into `out_json`.
 *
 * # Safety
 * `report` must be a live handle; `out_json` must be writable.
 */
enum SdbStatus sdb_report_json(const struct SdbReport *report, char **out_json);

/**
 * Releases a report. Null is ignored.
 *
 * # Safety
 * `report` must come from [`sdb_simulate`] and not have been freed.
 */
void sdb_report_free(struct SdbReport *report);

/**
 * Parses a boot script and writes its canonical rendering.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be writable.
 */
enum SdbStatus sdb_script_normalize(const char *text, char **out);

/**
 * Decodes a packet and reports whether it is well-formed. Returns
 * [`SdbStatus::Invalid`] with a description otherwise.
 *
 * # Safety
 * `data` must point to `len` readable bytes.
 */
enum SdbStatus sdb_packet_check(enum SdbPacketKind kind, const uint8_t *data, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDB_H */
