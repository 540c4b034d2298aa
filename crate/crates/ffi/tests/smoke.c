#include <math.h>
#include <stdio.h>
#include <string.h>

#include "spde_gp.h"

#define CHECK(call)                                                      \
    do {                                                                 \
        SpdeStatus st_ = (call);                                         \
        if (st_ != SPDE_STATUS_OK) {                                     \
            fprintf(stderr, "%s -> %d: %s\n", #call, st_, spde_last_error()); \
            return 1;                                                    \
        }                                                                \
    } while (0)

int main(void) {
    SpdeGraph *graph = NULL;
    SpdeKernel *kernel = NULL;
    SpdeGp *gp = NULL;
    CHECK(spde_graph_path(3, &graph));
    CHECK(spde_kernel_new("shek", &kernel));
    CHECK(spde_kernel_set(kernel, "c", 0.5));

    size_t vertices[6] = {0, 1, 2, 0, 1, 2};
    double times[6] = {1.0, 1.0, 1.0, 2.0, 2.0, 2.0};
    double y[6] = {0.0, 0.0, 1.0, 0.1, 0.2, 0.7};
    double gram[36];
    CHECK(spde_kernel_gram(kernel, graph, vertices, times, 6, gram));
    for (int i = 0; i < 6; i++) {
        for (int j = 0; j < 6; j++) {
            if (fabs(gram[i * 6 + j] - gram[j * 6 + i]) > 1e-12) return 2;
        }
    }

    CHECK(spde_gp_train(kernel, graph, 1e-6, vertices, times, y, 6, &gp));
    double lml = 0.0, mean[6], var[6];
    CHECK(spde_gp_log_marginal_likelihood(gp, &lml));
    CHECK(spde_gp_predict(gp, vertices, times, 6, mean, var));
    for (int i = 0; i < 6; i++) {
        if (fabs(mean[i] - y[i]) > 1e-3) return 3;
    }

    SpdeKernel *bad = NULL;
    if (spde_kernel_new("nope", &bad) != SPDE_STATUS_INVALID_ARGUMENT) return 4;
    if (strstr(spde_last_error(), "valid names") == NULL) return 5;

    printf("ok %s lml=%.6f\n", spde_version(), lml);
    spde_gp_free(gp);
    spde_kernel_free(kernel);
    spde_graph_free(graph);
    return 0;
}
