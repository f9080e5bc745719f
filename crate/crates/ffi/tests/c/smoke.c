/* SPDX-License-Identifier: MIT OR Apache-2.0 */

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "tokentrail.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        TtStatus st_ = (call);                                             \
        if (st_ != TT_STATUS_OK) {                                         \
            const char *msg_ = tt_last_error();                            \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)st_,             \
                    msg_ ? msg_ : "(none)");                               \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    TtTokenizer *tok = NULL;
    TtModel *model = NULL;
    TtTrace *trace = NULL;
    TtBasis *basis = NULL;
    TtStore *store = NULL;

    CHECK(tt_tokenizer_new_gpt2(&tok));
    size_t n = 0;
    CHECK(tt_tokenizer_encode(tok, "Hello world", NULL, 0, &n));
    uint32_t ids[8];
    CHECK(tt_tokenizer_encode(tok, "Hello world", ids, 8, &n));
    printf("ids %zu %u %u\n", n, ids[0], ids[1]);

    CHECK(tt_model_load("synthetic:micro", &model));
    TtModelConfig cfg;
    CHECK(tt_model_config(model, &cfg));
    uint32_t small_ids[3] = {64, 0, 65};
    CHECK(tt_model_trace(model, small_ids, 3, &trace));
    TtTraceShape shape;
    CHECK(tt_trace_shape(trace, &shape));
    printf("shape %zu %zu %zu\n", shape.n_tokens, shape.n_layers, shape.d_model);

    CHECK(tt_basis_fit_session(trace, &basis));
    double xy[64];
    CHECK(tt_basis_project_trajectory(basis, trace, 2, xy, 64, &n));
    printf("points %zu\n", n / 2);

    float too_small[1];
    TtStatus st = tt_trace_residual(trace, 0, 0, too_small, 1, &n);
    printf("short buffer %d needs %zu\n", (int)st, n);
    st = tt_trace_residual(trace, 9, 0, NULL, 0, &n);
    printf("out of range %d %s\n", (int)st, tt_last_error() ? "message" : "none");

    CHECK(tt_store_in_memory(&store));
    char *session = NULL;
    CHECK(tt_store_create_session(store, "a!b", small_ids, 3, "synthetic-micro", cfg.n_layers, &session));
    printf("session %s\n", strstr(session, "\"prompt\":\"a!b\"") ? "ok" : session);
    tt_string_free(session);

    tt_basis_free(basis);
    tt_trace_free(trace);
    tt_model_free(model);
    tt_tokenizer_free(tok);
    tt_store_free(store);
    printf("version %s\n", tt_version());
    return 0;
}
