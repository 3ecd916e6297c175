#include "xda/cli.hpp"

#include <cstdio>
#include <exception>

int main(int argc, char** argv) {
    CLI::App app{"xda"};
    xda::CliCtx ctx;
    xda::build_app(app, ctx);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        return xda::run_cli(app, ctx);
    } catch (const xda::Error& e) {
        std::fprintf(stderr, "%s\n", e.line().c_str());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
