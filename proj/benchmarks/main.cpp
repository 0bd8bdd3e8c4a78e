#include <benchmark/benchmark.h>

// The packaged benchmark_main archive is not link-compatible with every
// toolchain, so the entry point lives here.
BENCHMARK_MAIN();
