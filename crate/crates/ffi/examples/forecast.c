/* Minimal consumer of the C API: load a checkpoint and forecast one
 * project from a flat feature buffer.
 *
 *   cargo build -p sustain-ffi
 *   cc -I crates/ffi/include crates/ffi/examples/forecast.c \
 *      target/debug/libsustain_ffi.a -lm -o forecast
 *   ./forecast path/to/model.json
 */
#include <stdio.h>
#include <stdlib.h>
#include "sustain.h"

static void die(const char *what) {
    char msg[256];
    sustain_last_error(msg, sizeof msg);
    fprintf(stderr, "%s: %s\n", what, msg);
    exit(1);
}

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s MODEL.json\n", argv[0]);
        return 2;
    }

    SustainModel *model = NULL;
    if (sustain_model_load(argv[1], &model) != SUSTAIN_STATUS_OK)
        die("load");

    const size_t months = 3;
    const size_t width = sustain_feature_count();
    double *features = calloc(months * width, sizeof *features);
    for (size_t i = 0; i < months * width; i++)
        features[i] = 0.25;

    double p = 0.0;
    if (sustain_model_predict(model, features, months, &p) != SUSTAIN_STATUS_OK)
        die("predict");
    printf("p(graduate) = %.6f\n", p);

    double *trajectory = calloc(months, sizeof *trajectory);
    if (sustain_model_forecast_series(model, features, months, trajectory) != SUSTAIN_STATUS_OK)
        die("forecast");
    for (size_t t = 0; t < months; t++)
        printf("month %zu: %.6f\n", t, trajectory[t]);

    free(trajectory);
    free(features);
    sustain_model_free(model);
    return 0;
}
