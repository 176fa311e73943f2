/* Minimal C consumer: accounting queries and nearest-reference matching. */
#include <stdio.h>

#include "bnvp.h"

int main(void) {
    double kib = 0.0;
    if (bnvp_preset_size_kib("floppynet", 1, &kib) != BNVP_OK) {
        fprintf(stderr, "size query failed: %s\n", bnvp_last_error());
        return 1;
    }

    double total = 0.0, binary = 0.0, full = 0.0;
    if (bnvp_preset_macs("floppynet", 227, 227, 3, &total, &binary, &full) != BNVP_OK) {
        fprintf(stderr, "mac query failed: %s\n", bnvp_last_error());
        return 1;
    }

    double speedup = bnvp_projected_speedup(711.0, 547.0, 105.5, 5.3);

    BnvpIndex *index = NULL;
    if (bnvp_index_new(3, &index) != BNVP_OK) {
        fprintf(stderr, "index failed: %s\n", bnvp_last_error());
        return 1;
    }
    const float a[3] = {1.0f, 0.0f, 0.0f};
    const float b[3] = {0.0f, 1.0f, 0.0f};
    bnvp_index_add(index, 10, a, 3);
    bnvp_index_add(index, 20, b, 3);
    const float q[3] = {0.1f, 0.9f, 0.0f};
    int64_t best = -1;
    double dist = 0.0;
    if (bnvp_index_match(index, q, 3, &best, &dist) != BNVP_OK) {
        fprintf(stderr, "match failed: %s\n", bnvp_last_error());
        return 1;
    }
    bnvp_index_free(index);

    printf("version=%s size_kib=%.0f macs_total=%.1fM speedup=%.1f best=%lld\n",
           bnvp_version(), kib, total / 1e6, speedup, (long long)best);
    return 0;
}
