/* Drives the C API end to end; exits nonzero on the first failure. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "softworld.h"

#define CHECK(call)                                                              \
    do {                                                                         \
        SwStatus s_ = (call);                                                    \
        if (s_ != SW_STATUS_OK) {                                                \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, sw_last_error());  \
            return 1;                                                            \
        }                                                                        \
    } while (0)

int main(void) {
    printf("softworld %s\n", sw_version());

    SwEnv *env = NULL;
    if (sw_env_new(SW_TASK_ROLLING, SW_SHAPE_TWO_BALLS, 0, NULL, &env) != SW_STATUS_CONFIG || env != NULL ||
        sw_last_error() == NULL) {
        fprintf(stderr, "bad pairing was accepted\n");
        return 1;
    }

    SwSimParams params = {0.035, 4};
    CHECK(sw_env_new(SW_TASK_ROLLING, SW_SHAPE_BALL, 7, &params, &env));
    size_t n = sw_env_particle_count(env);
    if (n == 0 || sw_env_action_dim(env) != 3) return 1;

    double path[3 * 20];
    for (int k = 0; k < 20; k++) {
        path[3 * k] = 0.5;
        path[3 * k + 1] = 0.5;
        path[3 * k + 2] = 0.3 - 0.25 * (k + 1) / 20.0;
    }
    bool contact = false;
    CHECK(sw_env_step(env, path, 20, &contact));
    if (!contact) return 1;

    double *positions = malloc(3 * n * sizeof(double));
    CHECK(sw_env_positions(env, positions, 3 * n));
    free(positions);

    SwMetrics m;
    CHECK(sw_env_metrics(env, &m));
    printf("iou %.4f reward %.4f\n", m.iou, m.reward);

    SwSkeleton *sk = NULL;
    CHECK(sw_env_skeleton(env, 30, &sk));
    size_t edges = sw_skeleton_edge_count(sk);
    uint32_t *pairs = malloc(2 * edges * sizeof(uint32_t));
    CHECK(sw_skeleton_edges(sk, pairs, 2 * edges));
    free(pairs);

    SwEncoder *enc = NULL;
    CHECK(sw_encoder_new(3, &enc));
    double pose[3] = {0.5, 0.5, 0.2}, object[SW_EMBED_DIM], scene[SW_EMBED_DIM];
    CHECK(sw_encoder_encode(enc, sk, SW_TOOL_ROLLING_PIN, pose, 3, object, scene));

    unsigned char a[4] = {1, 1, 0, 0}, b[4] = {0, 1, 1, 0};
    double overlap = 0.0;
    CHECK(sw_iou(a, b, 4, &overlap));
    if (overlap * 3.0 != 1.0) return 1;

    sw_encoder_free(enc);
    sw_skeleton_free(sk);
    sw_env_free(env);
    puts("ok");
    return 0;
}
