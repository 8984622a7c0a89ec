#pragma once
namespace dept {
inline int run_cli(int, char**) { return 0; }
}
