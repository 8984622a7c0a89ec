#include "dept/cli.hpp"

int main(int argc, char** argv) {
    return dept::run_cli(argc, argv);
}
