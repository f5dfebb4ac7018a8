#ifndef AGG_AGG_H
#define AGG_AGG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define AGG_API __declspec(dllexport)
#else
#define AGG_API __attribute__((visibility("default")))
#endif

typedef enum agg_status {
    AGG_OK = 0,
    AGG_ERR_NON_FINITE_INPUT = 1,
    AGG_ERR_DEGENERATE_QUATERNION = 2,
    AGG_ERR_SINGULAR_COVARIANCE = 3,
    AGG_ERR_IO = 4,
    AGG_ERR_MALFORMED_HEADER = 5,
    AGG_ERR_COUNT_MISMATCH = 6,
    AGG_ERR_SHAPE_MISMATCH = 7,
    AGG_ERR_GRAPH_CONSUMED = 8,
    AGG_ERR_MISSING_GRADIENT = 9,
    AGG_ERR_INDIVISIBLE_WIDTH = 10,
    AGG_ERR_EMPTY_SET = 11,
    AGG_ERR_INVALID_RANGE = 12,
    AGG_ERR_CONFIG = 13,
    AGG_ERR_CHECKPOINT_MISMATCH = 14,
    AGG_ERR_INVALID_ARGUMENT = 15,
    AGG_ERR_INTERNAL = 100
} agg_status;

/* Message of the last failed call on this thread; empty after success. */
AGG_API const char* agg_last_error(void);
AGG_API const char* agg_status_name(agg_status status);
AGG_API const char* agg_version(void);

/* Receives one progress line per call. */
typedef void (*agg_log_fn)(const char* line, void* user);

/* ---- configuration ---- */

typedef struct agg_config agg_config;

/* preset: "desk" (default when NULL) or "paper". */
AGG_API agg_status agg_config_create(const char* preset, agg_config** out);
AGG_API void agg_config_destroy(agg_config* config);
/* Flat `key = value` text file; `#` starts a comment. */
AGG_API agg_status agg_config_load(agg_config* config, const char* path);
AGG_API agg_status agg_config_set(agg_config* config, const char* key, const char* value);
AGG_API agg_status agg_config_validate(const agg_config* config);
AGG_API size_t agg_config_key_count(const agg_config* config);
/* Key name by index, NULL when out of range. */
AGG_API const char* agg_config_key(const agg_config* config, size_t index);
/* Writes the whole configuration as key = value lines. Copies at most
   `capacity` bytes including the terminator; `needed` gets the full size. */
AGG_API agg_status agg_config_to_text(const agg_config* config, char* buffer, size_t capacity, size_t* needed);

/* ---- gaussian sets and images ---- */

typedef struct agg_gaussians agg_gaussians;
typedef struct agg_image agg_image;

AGG_API agg_status agg_gaussians_load_ply(const char* path, agg_gaussians** out);
AGG_API agg_status agg_gaussians_save_ply(const agg_gaussians* set, const char* path);
AGG_API size_t agg_gaussians_count(const agg_gaussians* set);
/* Copies attributes; each pointer may be NULL. means/colors hold 3 doubles
   per Gaussian, opacities one. */
AGG_API agg_status agg_gaussians_get(const agg_gaussians* set, double* means, double* colors, double* opacities,
                                     double* scale);
AGG_API void agg_gaussians_destroy(agg_gaussians* set);

AGG_API agg_status agg_image_load_png(const char* path, agg_image** out);
AGG_API agg_status agg_image_save_png(const agg_image* image, const char* path);
AGG_API agg_status agg_image_size(const agg_image* image, int* width, int* height);
/* Copies width*height*4 straight-alpha RGBA doubles. */
AGG_API agg_status agg_image_get(const agg_image* image, double* rgba);
AGG_API void agg_image_destroy(agg_image* image);

/* Orbit camera around the origin; angles in degrees. */
AGG_API agg_status agg_render(const agg_gaussians* set, double azimuth, double elevation, double radius, double fov,
                              int size, agg_image** out);
/* Writes `frames` PNGs named <prefix>_<k>.png into `directory`. */
AGG_API agg_status agg_render_turntable(const agg_gaussians* set, int frames, double elevation, double radius,
                                        double fov, int size, const char* directory, const char* prefix);

/* ---- dataset and training ---- */

AGG_API agg_status agg_generate_dataset(const agg_config* config, const char* root, agg_log_fn log, void* user);
AGG_API agg_status agg_fit_labels(const agg_config* config, const char* root, int force, agg_log_fn log,
                                  void* user);

typedef struct agg_train_report {
    double initial_full_loss;
    double final_full_loss;
    double initial_coarse_loss;
    double final_coarse_loss;
    double initial_full_psnr;
    double final_full_psnr;
    int64_t iterations;
    int coarse_frozen_in_stage2;
    int resumed;
    double seconds;
} agg_train_report;

/* Builds the dataset and labels on demand, then runs the three stages. */
AGG_API agg_status agg_train(const agg_config* config, const char* data_root, const char* out_dir, agg_log_fn log,
                             void* user, agg_train_report* report);

/* ---- inference and evaluation ---- */

typedef struct agg_model agg_model;

/* `expected` may be NULL; otherwise the checkpoint must match its model
   settings (AGG_ERR_CHECKPOINT_MISMATCH). */
AGG_API agg_status agg_model_load(const char* checkpoint, const agg_config* expected, agg_model** out);
AGG_API void agg_model_destroy(agg_model* model);
AGG_API int agg_model_stage(const agg_model* model);

typedef struct agg_infer_report {
    double coarse_seconds;
    double sr_seconds;
    double total_seconds;
    int64_t forward_passes;
    int64_t optimizer_steps;
    size_t count;
} agg_infer_report;

/* coarse_only skips the super-resolution pass. */
AGG_API agg_status agg_model_infer(agg_model* model, const agg_image* image, int coarse_only, agg_gaussians** out,
                                   agg_infer_report* report);

typedef struct agg_eval_metrics {
    double psnr;
    double ssim;
    double l1;
    double perceptual_proxy;
    double iou;
    int objects;
    int views;
} agg_eval_metrics;

/* Scores the held-out split of the dataset at `data_root`. */
AGG_API agg_status agg_model_evaluate(agg_model* model, const char* data_root, int coarse_only,
                                      agg_eval_metrics* metrics);

/* ---- gradient checks ---- */

typedef struct agg_gradcheck_report {
    int scenes;
    int passed;
    double max_rel_err;
    int entries_checked;
    double seconds;
} agg_gradcheck_report;

/* Renderer gradients on `scenes` random scenes with seeds seed..seed+scenes-1. */
AGG_API agg_status agg_gradcheck(uint64_t seed, int scenes, int gaussians, int size, agg_log_fn log, void* user,
                                 agg_gradcheck_report* report);
/* Finite-difference checks of every network operation and layer. */
AGG_API agg_status agg_fd_suite(uint64_t seed, agg_log_fn log, void* user, agg_gradcheck_report* report);

#ifdef __cplusplus
}
#endif

#endif
