// peepll-sim: simulation, matching-set curve and the insider dictionary attack.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "peepll/harness.hpp"
#include "peepll/random.hpp"

using namespace peepll;

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PEEPLL simulation harness"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Replay a synthetic event stream against an in-process vault");
  std::string run_config, run_out;
  run->add_option("--config", run_config, "Simulation config (JSON)")->required();
  run->add_option("--out", run_out, "Report path, - for stdout");

  auto* fig4 = app.add_subcommand("fig4", "Average matching filters per lookup against a prefilled vault");
  Fig4Config f4;
  std::string fig4_config, fig4_out;
  std::vector<double> fps;
  std::uint32_t fig4_blind = 0;
  fig4->add_option("--config", fig4_config, "Take fp_list, prefill_count, trials and seed from a sim config");
  fig4->add_option("--trials", f4.trials, "Trials per point");
  fig4->add_option("--prefill", f4.prefill, "Records in the vault before each lookup");
  fig4->add_option("--seed", f4.seed, "Seed");
  fig4->add_option("--c", f4.c, "Identifiers per event (filter sizing)");
  fig4->add_option("--fp-prime", fps, "fp' values (default: the published curve)");
  fig4->add_flag("--query-prefilled", f4.query_prefilled, "Look up a prefilled QID instead of a fresh one");
  auto* fig4_bb = fig4->add_option("--blind-bits", fig4_blind, "Fixed blinding instead of calibration");
  fig4->add_option("--out", fig4_out, "CSV path, - for stdout");

  auto* attack = app.add_subcommand("attack", "Insider dictionary attack on foreign deposits");
  AttackConfig ac;
  std::string attack_mode = "C", attack_group = "production", attack_out;
  attack->add_option("--mode", attack_mode, "C or D")->check(CLI::IsMember({"C", "D"}));
  attack->add_option("--universe", ac.universe, "QID universe deposited by the victim");
  attack->add_option("--lookups", ac.attacker_lookups, "Lookups issued by the attacker");
  attack->add_option("--fp", ac.fp, "Target false-positive rate");
  attack->add_option("--seed", ac.seed, "Seed");
  attack->add_option("--group", attack_group, "OT group")->check(CLI::IsMember({"production", "test"}));
  attack->add_option("--out", attack_out, "Report path, - for stdout");

  auto* keygen = app.add_subcommand("keygen", "Write a fresh master secret as hex");
  std::string key_out;
  keygen->add_option("--out", key_out, "Output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto report = run_sim(SimConfig::load(run_config));
      write_text(run_out, report.to_json().dump(2) + "\n");
    } else if (*fig4) {
      if (!fig4_config.empty()) {
        auto from_file = SimConfig::load(fig4_config).fig4();
        // Explicit flags win over the file.
        if (fig4->count("--trials") == 0) f4.trials = from_file.trials;
        if (fig4->count("--prefill") == 0) f4.prefill = from_file.prefill;
        if (fig4->count("--seed") == 0) f4.seed = from_file.seed;
        f4.fp_primes = from_file.fp_primes;
      }
      if (!fps.empty()) f4.fp_primes = fps;
      if (fig4_bb->count() > 0) f4.blind_bits = fig4_blind;
      write_text(fig4_out, fig4_csv(reproduce_fig4(f4)));
    } else if (*attack) {
      ac.mode = parse_mode(attack_mode);
      ac.group = parse_group_profile(attack_group);
      write_text(attack_out, dictionary_attack(ac).to_json().dump(2) + "\n");
    } else if (*keygen) {
      SystemRandom rng;
      MasterSecret::generate(rng).save_hex(key_out);
    }
  } catch (const InvariantViolation& e) {
    std::cerr << "peepll-sim: invariant " << e.name() << " violated: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "peepll-sim: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
