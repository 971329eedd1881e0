// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// `dompar` command line: verify, bench, memory. Exit codes: 0 success,
// 1 verification failure, 2 usage error.

#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dompar/bench.hpp"
#include "dompar/memory_model.hpp"
#include "dompar/verification.hpp"

namespace dompar::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct VerifyArgs {
  std::string filter;
  std::uint64_t seed = 42;
  std::size_t instances = 60;
  std::string inject_fault;
};

struct MemoryArgs {
  bool csv = false;
  std::vector<std::size_t> spatial;
  std::size_t features = 0;
  std::size_t layers = 0;
  std::size_t ranks = 1;
  std::size_t batch = 1;
  std::size_t bytes = 4;
  double optimizer_multiplier = 3.0;
};

inline int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  VerifyOptions opt;
  opt.seed = a.seed;
  opt.instances_per_op = a.instances;
  opt.inject_fault = a.inject_fault;
  if (!a.filter.empty()) opt.filter = a.filter;
  const VerifyReport report = run_verification(opt);
  out << "seed=" << report.seed << '\n' << report.table();
  for (const auto& op : report.ops) {
    if (op.first_failure) out << "first failure: " << op.first_failure->describe() << '\n';
  }
  out << (report.passed() ? "verify: PASS" : "verify: FAIL") << '\n';
  return report.passed() ? kExitOk : kExitFailure;
}

inline int cmd_bench(const BenchConfig& cfg, std::ostream& out, std::ostream& err) {
  err << "seed=" << cfg.seed << '\n';
  const std::string csv = bench_csv(run_bench(cfg));
  if (cfg.out.empty()) {
    out << csv;
  } else {
    std::ofstream f(cfg.out);
    if (!f) {
      err << "error: cannot write " << cfg.out << '\n';
      return kExitUsage;
    }
    f << csv;
  }
  return kExitOk;
}

inline void print_estimate(const MemoryArgs& a, std::ostream& out) {
  LayerStackSpec s;
  s.spatial = a.spatial;
  s.features = a.features;
  s.layers = a.layers;
  s.batch = a.batch;
  s.byte_width = a.bytes;
  s.optimizer_multiplier = a.optimizer_multiplier;
  const MemoryReport r = memory_report(s, a.ranks);
  out << "spatial " << format_spatial(s.spatial) << " layers " << s.layers << " features "
      << s.features << " batch " << s.batch << " bytes " << s.byte_width << '\n';
  out << "params " << r.n_params << " (" << format_param_count(r.n_params) << ")\n";
  out << "weights " << format_mib(r.weights_mib()) << " MiB\n";
  out << "optimizer " << format_mib(r.optimizer_mib()) << " MiB (multiplier "
      << s.optimizer_multiplier << ")\n";
  out << "activations " << format_mib(r.activations_mib()) << " MiB\n";
  if (a.ranks > 1) {
    std::uint64_t worst = 0;
    out << "activations per rank (ranks " << a.ranks << ") MiB:";
    for (auto b : r.activation_bytes_per_rank) {
      out << ' ' << format_mib(to_mib(static_cast<double>(b)));
      worst = std::max(worst, b);
    }
    out << "\nper-rank activations " << format_mib(to_mib(static_cast<double>(worst)))
        << " MiB\n";
  }
}

// Parses argv and runs the selected command.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"dompar: domain-parallel tensors on an in-process mesh", "dompar"};
  app.require_subcommand(1);

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify", "run the randomized oracle-equivalence suite");
  v->add_option("--filter", verify.filter, "run one op only")
      ->check(CLI::IsMember(verification_ops()));
  v->add_option("--seed", verify.seed, "base seed")->capture_default_str();
  v->add_option("--instances", verify.instances, "instances per op")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  v->add_option("--inject-fault", verify.inject_fault, "perturb one op's outputs (test mode)")
      ->check(CLI::IsMember(verification_ops()));

  BenchConfig bench;
  bench.ranks = {1, 2, 4};
  auto* b = app.add_subcommand("bench", "strong-scaling benchmark, CSV output");
  b->add_option("--op", bench.op, "operation")->required()->check(CLI::IsMember(bench_ops()));
  b->add_option("--sizes", bench.sizes, "global sizes")->required()->delimiter(',');
  b->add_option("--ranks", bench.ranks, "rank counts")->delimiter(',')->capture_default_str();
  b->add_option("--repeats", bench.repeats, "timed repeats")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  b->add_option("--warmup", bench.warmup, "untimed repeats")->capture_default_str();
  b->add_option("--seed", bench.seed, "input seed")->capture_default_str();
  b->add_option("--out", bench.out, "CSV path (default stdout)");

  MemoryArgs mem;
  auto* m = app.add_subcommand("memory", "linear-stack memory model");
  m->require_subcommand(1);
  auto* table = m->add_subcommand("table", "reference table for 20-layer float32 stacks");
  table->add_flag("--csv", mem.csv, "CSV instead of aligned text");
  auto* est = m->add_subcommand("estimate", "memory report for one configuration");
  est->add_option("--spatial", mem.spatial, "spatial extents, e.g. 256,256")
      ->required()
      ->delimiter(',');
  est->add_option("--features", mem.features, "features per layer")->required();
  est->add_option("--layers", mem.layers, "layer count")->required();
  est->add_option("--ranks", mem.ranks, "domain ranks")->capture_default_str();
  est->add_option("--batch", mem.batch, "batch size")->capture_default_str();
  est->add_option("--bytes", mem.bytes, "bytes per element")->capture_default_str();
  est->add_option("--optimizer-multiplier", mem.optimizer_multiplier, "optimizer state factor")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (*v) return cmd_verify(verify, out);
    if (*b) return cmd_bench(bench, out, err);
    if (*table) {
      out << (mem.csv ? table1_csv() : table1_text());
      return kExitOk;
    }
    if (*est) {
      print_estimate(mem, out);
      return kExitOk;
    }
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UnsupportedError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MetadataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace dompar::cli
