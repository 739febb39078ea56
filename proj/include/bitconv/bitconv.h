/* bitconv C API.
 *
 * Every fallible call returns a bc_status; on failure bc_last_error() holds a
 * message for the calling thread until its next failing call. Strings handed
 * out through char** parameters are owned by the caller and released with
 * bc_string_free(). Handles are released with their *_free function; passing
 * NULL to any *_free is a no-op.
 */
#ifndef BITCONV_BITCONV_H
#define BITCONV_BITCONV_H

#include <stddef.h>
#include <stdint.h>

#if defined(BITCONV_BUILDING_LIBRARY)
#define BC_API __attribute__((visibility("default")))
#else
#define BC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bc_status {
  BC_OK = 0,
  BC_ERR_SHAPE = 1,
  BC_ERR_INDEX = 2,
  BC_ERR_ARGUMENT = 3,
  BC_ERR_PARSE = 4,
  BC_ERR_FORMAT = 5,
  BC_ERR_IO = 6,
  BC_ERR_NUMERIC = 7,
  BC_ERR_INTERNAL = 99
} bc_status;

typedef struct bc_network bc_network;
typedef struct bc_weights bc_weights;
typedef struct bc_dataset bc_dataset;

BC_API const char* bc_last_error(void);
BC_API const char* bc_version(void);
BC_API const char* bc_status_name(bc_status status);
BC_API void bc_string_free(char* s);

/* Network descriptions */

typedef struct bc_network_info {
  int input_c, input_h, input_w;
  int classes;
  int layers;
  int64_t params;
  int64_t macs;
} bc_network_info;

BC_API bc_status bc_network_parse(const char* text, bc_network** out);
BC_API bc_status bc_network_load(const char* path, bc_network** out);
BC_API void bc_network_free(bc_network* net);
/* Canonical text form. */
BC_API bc_status bc_network_to_text(const bc_network* net, char** out);
BC_API bc_status bc_network_info_get(const bc_network* net, bc_network_info* out);
/* Binarization warnings, one per line; empty when there are none. */
BC_API bc_status bc_network_warnings(const bc_network* net, char** out);

/* Weights */

BC_API bc_status bc_weights_init(const bc_network* net, uint64_t seed, bc_weights** out);
BC_API bc_status bc_weights_load(const bc_network* net, const char* path, bc_weights** out);
BC_API bc_status bc_weights_save(const bc_network* net, const bc_weights* weights, const char* path);
BC_API void bc_weights_free(bc_weights* weights);

/* Runs one [C,H,W] input. `output` receives up to output_len values;
 * `written` (optional) receives the full output length. */
BC_API bc_status bc_forward(const bc_network* net, const bc_weights* weights, const float* input,
                            size_t input_len, int use_binary, float* output, size_t output_len,
                            size_t* written);

/* Datasets: one subdirectory per class holding P5/P6 images. */

typedef struct bc_dataset_info {
  size_t count;
  int classes;
  int c, h, w;
} bc_dataset_info;

BC_API bc_status bc_dataset_load(const char* root, bc_dataset** out);
BC_API bc_status bc_dataset_info_get(const bc_dataset* ds, bc_dataset_info* out);
BC_API void bc_dataset_free(bc_dataset* ds);

/* Training and evaluation */

typedef struct bc_train_config {
  float learning_rate;
  float momentum;
  int epochs;
  int batch_size;
  uint64_t seed;
  double validation_fraction; /* 0 trains on everything */
} bc_train_config;

BC_API void bc_train_config_default(bc_train_config* cfg);
/* Trains from a seeded init. `log_csv` (optional) receives the per-epoch log. */
BC_API bc_status bc_train(const bc_network* net, const bc_dataset* ds, const bc_train_config* cfg,
                          bc_weights** out, char** log_csv);
/* Accuracy in [0,1]; `confusion_csv` (optional) is true-by-predicted counts. */
BC_API bc_status bc_evaluate(const bc_network* net, const bc_weights* weights, const bc_dataset* ds,
                             int use_binary, double* accuracy, char** confusion_csv);

/* Per-layer median forward times as CSV (layer,kind,median_ms plus a total
 * row). With `compare`, one row per binary layer instead:
 * layer,kind,float_ms,binary_ms,ratio. */
BC_API bc_status bc_bench(const bc_network* net, const bc_weights* weights, int reps, int use_binary,
                          int compare, char** csv);

/* Per convolution of every conv-bearing layer: alpha statistics and the
 * packed-to-float memory ratio, as CSV. */
BC_API bc_status bc_binarize_report(const bc_network* net, const bc_weights* weights, char** csv);

/* Architecture search */

typedef struct bc_search_config {
  double threshold_ms;
  int budget;
  uint64_t seed;
  int jobs;
  int patience;
  int remedies;
  double accuracy_drop;
  double noise_band;
  double validation_fraction;
  int epochs;
  float learning_rate;
  float momentum;
  int batch_size;
  int timing_reps;
  int mac_timing;    /* nonzero: time_ms = ns_per_mac * MACs, deterministic */
  double ns_per_mac;
  int use_binary;
} bc_search_config;

BC_API void bc_search_config_default(bc_search_config* cfg);
/* Writes ledger.csv, front.csv and one netspec per front member to out_dir. */
BC_API bc_status bc_search(const bc_network* base, const bc_dataset* ds, const bc_search_config* cfg,
                           const char* out_dir, size_t* front_size, size_t* evaluated);

/* Detection */

typedef struct bc_detect_config {
  int spacing;
  int min_run;
  int margin_px;
  int min_box;
  int green_margin;
  int min_brightness;
  int side;
  float threshold;
  int positive_label;
  int use_binary;
} bc_detect_config;

BC_API void bc_detect_config_default(bc_detect_config* cfg);
/* Reads a P6 image and runs proposals plus classification. `detections`
 * gets one "x0 y0 x1 y1 label confidence" line per hit; `timing_json` one
 * JSON object. */
BC_API bc_status bc_detect_file(const bc_network* net, const bc_weights* weights, const char* image_path,
                                const bc_detect_config* cfg, char** detections, char** timing_json);

/* Expected per-frame cost: t_prop + avg_proposals * t_inf. */
BC_API double bc_total_time(double t_prop_ms, double t_inf_ms, double avg_proposals);

/* Synthetic data */

/* Two-class disk/square patch dataset written in the dataset layout. */
BC_API bc_status bc_synth_patches(const char* root, size_t count, uint64_t seed, int side);
/* Green-field scenes as scene_NNNN.ppm; `truth_csv` (optional) lists the
 * planted objects as image,shape,x0,y0,x1,y1. */
BC_API bc_status bc_synth_scenes(const char* dir, size_t count, uint64_t seed, char** truth_csv);

#ifdef __cplusplus
}
#endif

#endif
