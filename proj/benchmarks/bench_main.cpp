#include <benchmark/benchmark.h>

#include <atomic>

#include "peepll/harness.hpp"
#include "peepll/ot.hpp"

using namespace peepll;

namespace {

// End-to-end lookup through an in-process vault holding `state.range(0)` entries.
void lookup_bench(benchmark::State& state, Mode mode, GroupProfile group) {
  VaultConfig vc;
  vc.mode = mode;
  vc.capacity = static_cast<std::uint64_t>(state.range(0)) * 4 + 10000;
  vc.group = group;
  auto vault = std::make_shared<Vault>(vc, std::make_shared<SeededRandom>(1, 0));
  VaultServer server(vault);
  SeededRandom key_rng(1, 1);
  auto secret = MasterSecret::generate(key_rng);
  auto d = connect_in_process(server, secret,
                              depositor_options(*vault, [] { return std::uint64_t{0}; },
                                                std::make_shared<SeededRandom>(1, 2)));
  for (std::int64_t i = 0; i < state.range(0); ++i) d->lookup(as_bytes(ipv4_qid(static_cast<std::uint64_t>(i))));
  std::uint64_t i = 0;
  for (auto _ : state) {
    auto out = d->lookup(as_bytes(ipv4_qid(i++ % static_cast<std::uint64_t>(state.range(0)))));
    benchmark::DoNotOptimize(out);
  }
  state.counters["entries"] = static_cast<double>(vault->size());
  state.SetItemsProcessed(state.iterations());
  server.stop();
}

void BM_LookupA(benchmark::State& s) { lookup_bench(s, Mode::A, GroupProfile::production); }
void BM_LookupB(benchmark::State& s) { lookup_bench(s, Mode::B, GroupProfile::production); }
void BM_LookupC(benchmark::State& s) { lookup_bench(s, Mode::C, GroupProfile::production); }
void BM_LookupD(benchmark::State& s) { lookup_bench(s, Mode::D, GroupProfile::production); }
void BM_LookupD_TestGroup(benchmark::State& s) { lookup_bench(s, Mode::D, GroupProfile::test); }

BENCHMARK(BM_LookupA)->Arg(100)->Arg(1000);
BENCHMARK(BM_LookupB)->Arg(100)->Arg(1000);
BENCHMARK(BM_LookupC)->Arg(100)->Arg(1000);
BENCHMARK(BM_LookupD)->Arg(100)->Arg(1000);
BENCHMARK(BM_LookupD_TestGroup)->Arg(100)->Arg(1000);

void BM_PartialTrapdoor(benchmark::State& state) {
  SeededRandom rng(2);
  auto params = index_params(0.01, static_cast<std::uint64_t>(state.range(0)), std::nullopt);
  IndexKeySet keys(MasterSecret::generate(rng), params.k_star);
  for (auto _ : state) benchmark::DoNotOptimize(partial_trapdoor(keys, as_bytes("10.0.0.1"), params.m, rng));
}
BENCHMARK(BM_PartialTrapdoor)->Arg(1000)->Arg(100000);

void BM_BuildStoredFilter(benchmark::State& state) {
  SeededRandom rng(3);
  auto params = index_params(0.01, static_cast<std::uint64_t>(state.range(0)), std::nullopt);
  IndexKeySet keys(MasterSecret::generate(rng), params.k_star);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_stored_filter(keys, as_bytes("10.0.0.1"), params.m, params.b, rng));
  }
  state.counters["b"] = params.b;
}
BENCHMARK(BM_BuildStoredFilter)->Arg(1000)->Arg(100000);

void BM_SearchMapping(benchmark::State& state) {
  VaultConfig vc;
  vc.mode = Mode::C;
  vc.capacity = static_cast<std::uint64_t>(state.range(0));
  Vault vault(vc, std::make_shared<SeededRandom>(4, 0));
  SeededRandom rng(4, 1);
  IndexKeySet keys(MasterSecret::generate(rng), vault.params().k_star);
  const auto& p = vault.params();
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    Key32 h{};
    rng.fill(h);
    vault.update_mapping(h, build_stored_filter(keys, h, p.m, p.b, rng));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(vault.search_mapping(partial_trapdoor(keys, as_bytes("probe"), p.m, rng)));
  }
}
BENCHMARK(BM_SearchMapping)->Arg(100)->Arg(1000)->Arg(10000);

void ot_bench(benchmark::State& state, GroupProfile profile) {
  auto g = make_group(profile);
  SeededRandom rng(5);
  auto sender = ot::sender_init(*g, rng);
  auto n = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) {
    auto rec = ot::receiver_derive(*g, sender.s, n / 2, n, rng);
    benchmark::DoNotOptimize(ot::sender_derive_keys(*g, sender, rec.r, n));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_OtTransferP256(benchmark::State& s) { ot_bench(s, GroupProfile::production); }
void BM_OtTransferTestGroup(benchmark::State& s) { ot_bench(s, GroupProfile::test); }
BENCHMARK(BM_OtTransferP256)->Arg(8)->Arg(64);
BENCHMARK(BM_OtTransferTestGroup)->Arg(8)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
