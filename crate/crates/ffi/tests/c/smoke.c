#include <stdio.h>
#include <string.h>

#include "ghostlock.h"

#define EXPECT(cond)                                                    \
    do {                                                                \
        if (!(cond)) {                                                  \
            const char *e = ghl_last_error();                           \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,     \
                    #cond, e ? e : "no error");                         \
            return 1;                                                   \
        }                                                               \
    } while (0)

int main(int argc, char **argv) {
    const char *trace = argc > 1 ? argv[1] : "smoke-trace.jsonl";
    GhlRunConfig cfg = ghl_run_config_default();
    cfg.seed = 3;
    cfg.steps = 500;
    cfg.loss = 0.2;

    GhlRun *run = NULL;
    EXPECT(ghl_run("example", NULL, &cfg, &run) == GHL_STATUS_OK);
    EXPECT(ghl_run_passed(run) == 1);
    EXPECT(ghl_run_trace_len(run) > 0);
    EXPECT(ghl_run_write_trace(run, trace) == GHL_STATUS_OK);
    ghl_run_free(run);

    uint64_t bad = 0;
    EXPECT(ghl_replay("example", trace, &bad) == GHL_STATUS_OK);

    run = NULL;
    EXPECT(ghl_run("example", "b-wrong-number", &cfg, &run) == GHL_STATUS_CHECK_FAILED);
    EXPECT(ghl_run_violation_count(run) >= 1);
    char *kind = NULL;
    EXPECT(ghl_run_violation_kind(run, 0, &kind) == GHL_STATUS_OK);
    EXPECT(strcmp(kind, "RefinementViolation") == 0);
    ghl_string_free(kind);
    ghl_run_free(run);

    cfg.loss = 2.0;
    EXPECT(ghl_run("example", NULL, &cfg, &run) == GHL_STATUS_INVALID_ARGUMENT);
    EXPECT(ghl_last_error() != NULL);

    size_t len = 0;
    EXPECT(ghl_check_invariant("example-asend-plus-one", "max_value=3,max_channel=2", "step2", &len) ==
           GHL_STATUS_CHECK_FAILED);
    EXPECT(len >= 1 && len <= 3);
    EXPECT(ghl_check_ltl("example", "max_value=1,max_channel=1", "(always (eventually (action ARecv)))",
                         "example-channels", NULL) == GHL_STATUS_OK);

    char *tla = NULL;
    EXPECT(ghl_export_tla("example", 0, &tla) == GHL_STATUS_OK);
    EXPECT(strstr(tla, "MODULE Example") != NULL);
    ghl_string_free(tla);
    EXPECT(ghl_export_tla("toy", 0, &tla) == GHL_STATUS_UNSUPPORTED);

    printf("ghostlock %s: C smoke test passed\n", ghl_version());
    return 0;
}
