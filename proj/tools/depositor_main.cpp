// Depositor: pseudonymises a JSON-lines stream against a running PVault.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "peepll/depositor.hpp"
#include "peepll/errors.hpp"

using namespace peepll;

int main(int argc, char** argv) {
  CLI::App app{"Pseudonymise JSON-lines event records"};
  std::string config_path;
  std::string in_path = "-";
  std::string out_path = "-";
  std::size_t max_attempts = 0;
  app.add_option("--config", config_path, "Depositor config (JSON)")->required();
  app.add_option("--in", in_path, "Input records, - for stdin");
  app.add_option("--out", out_path, "Output records, - for stdout");
  app.add_option("--max-attempts", max_attempts, "Reconnect attempts per record; 0 retries forever");
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = DepositorConfig::load(config_path);
    auto secret = MasterSecret::load(cfg.master_secret);

    std::ifstream in_file;
    std::ofstream out_file;
    std::istream* in = &std::cin;
    std::ostream* out = &std::cout;
    if (in_path != "-") {
      in_file.open(in_path);
      if (!in_file) throw ConfigError("cannot open " + in_path);
      in = &in_file;
    }
    if (out_path != "-") {
      out_file.open(out_path);
      if (!out_file) throw ConfigError("cannot open " + out_path);
      out = &out_file;
    }

    auto endpoint = Endpoint::parse(cfg.pvault);
    DepositorFactory connect = [&]() {
      auto d = std::make_unique<Depositor>(secret, depositor_options(cfg), tcp_connect(endpoint));
      d->handshake();
      return d;
    };
    StreamOptions opts;
    opts.max_attempts = max_attempts;
    auto stats = pseudonymise_stream(*in, *out, std::cerr, connect, cfg.qid_paths, opts);
    std::cerr << "depositor: " << stats.records_in << " in, " << stats.records_out << " out, "
              << stats.records_dropped << " dropped, " << stats.reconnects << " reconnects\n";
    return stats.records_dropped == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "depositor: " << e.what() << "\n";
    return 1;
  }
}
