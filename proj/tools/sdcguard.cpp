#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdcguard/injection.hpp"

using namespace sdcguard;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string now_utc() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct RunManifest {
  std::string command;
  std::string specPath, tablePath, lutPath;
  json goal = json::object();
  std::uint64_t seed = 0;
  std::string started = now_utc();

  json to_json() const {
    return {{"command", command}, {"spec_path", specPath},  {"table_path", tablePath},
            {"lut_path", lutPath}, {"goal", goal},          {"seed", seed},
            {"started", started},  {"finished", now_utc()}, {"version", kVersion}};
  }
};

unsigned thread_count(int flag) {
  if (flag > 0) return static_cast<unsigned>(flag);
  if (const char* e = std::getenv("FPDETECT_THREADS")) {
    int v = std::atoi(e);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

// Coverage may be given as a fraction or a percentage.
double as_fraction(double cov) { return cov > 1.0 ? cov / 100.0 : cov; }

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  return f;
}

void write_json(const std::string& path, const json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedInput, path + ": " + e.what());
  }
}

ConfigLUT load_lut(const std::string& path) { return lut_from_json(read_json(path)); }

std::vector<int> range_inclusive(int lo, int hi, int step) {
  std::vector<int> v;
  for (int x = lo; x <= hi; x += step) v.push_back(x);
  return v;
}

// bitflip:T:ARRAY:I,J:BIT
SoftFaultPlan parse_inject(const std::string& text, const StencilSpec& s) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 5 || parts[0] != "bitflip")
    throw Error(ErrorCode::InvalidArgument, "expected bitflip:T:ARRAY:I,J:BIT");
  SoftFaultPlan plan;
  plan.mode = FaultMode::SingleBit;
  try {
    plan.timeStep = std::stol(parts[1]);
    plan.array = std::stoi(parts[2]);
    Index pos;
    std::stringstream is(parts[3]);
    for (std::string c; std::getline(is, c, ',');) pos.push_back(std::stol(c));
    if (static_cast<int>(pos.size()) != s.dims) throw Error(ErrorCode::InvalidArgument, "index rank");
    const Index ext = s.extent();
    for (int d = 0; d < s.dims; ++d)
      if (pos[d] < 0 || pos[d] >= ext[d]) throw Error(ErrorCode::LocationOutOfRange, parts[3]);
    plan.index = Layout(s).linear(pos);
    plan.bit = std::stoi(parts[4]);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidArgument, "bad --inject value " + text);
  }
  return plan;
}

int cmd_synth(const std::string& specPath, const std::string& benchId, long grid, int tmax, const std::string& outTable,
              const std::string& outLut, int expMax, int udpMax, int covStep) {
  RunManifest man;
  man.command = "synth";
  man.specPath = specPath;
  man.tablePath = outTable;
  man.lutPath = outLut;
  StencilSpec spec;
  if (!specPath.empty()) spec = spec_from_json(read_json(specPath));
  else spec = build_benchmark(benchId, grid).spec;
  man.goal = {{"bench", benchId}, {"grid", grid}, {"tmax", tmax}, {"exp_max", expMax}, {"udp_max", udpMax},
              {"cov_step", covStep}};

  CoeffTable table = unroll_coefficients(spec, tmax);
  if (!outTable.empty()) {
    save_table(table, outTable);
    write_json(outTable + ".manifest.json", man.to_json());
  }
  ProfileOptions opt;
  opt.exp_max = expMax;
  ConfigLUT lut = offline_profile(spec, &table, tmax, range_inclusive(0, expMax - 1, 1), range_inclusive(1, udpMax, 1),
                                  range_inclusive(0, 100, covStep), opt);
  long feasible = 0;
  for (const auto& [k, v] : lut.entries) feasible += v.has_value();
  std::cout << "cells " << lut.exps.size() << "x" << lut.udps.size() << "x" << lut.covs.size() << " feasible "
            << feasible << "/" << lut.entries.size() << " coverage_model "
            << (lut.latticeCoverage ? "lattice" : "box") << "\n";
  for (int e : lut.exps) std::cout << "maxdp[" << tmax << "] exp " << e << " = " << lut.maxdp.at(e).back() << "\n";
  for (int u : lut.udps) {
    std::cout << "udp " << std::setw(2) << u << " ";
    for (int c : lut.covs) {
      long ok = 0;
      for (int e : lut.exps) ok += lut.find(e, u, c) && *lut.find(e, u, c);
      std::cout << (ok == static_cast<long>(lut.exps.size()) ? '#' : ok ? '+' : '.');
    }
    std::cout << "\n";
  }
  if (!outLut.empty()) {
    json j = lut_to_json(lut);
    j["manifest"] = man.to_json();
    write_json(outLut, j);
  }
  if (feasible == 0) {
    std::cerr << "no feasible configuration for this spec\n";
    return 1;
  }
  return 0;
}

int cmd_run(const std::string& benchId, long grid, const std::string& lutPath, int udp, double cov, long steps,
            int tmax, const std::string& inject, const std::string& out) {
  RunManifest man;
  man.command = "run";
  man.lutPath = lutPath;
  man.goal = {{"bench", benchId}, {"grid", grid}, {"udp", udp}, {"cov", cov}, {"steps", steps}, {"inject", inject}};
  const BenchmarkDef bench = build_benchmark(benchId, grid);
  const ConfigLUT lut = lutPath.empty() ? profile_for(bench, tmax, {udp}) : load_lut(lutPath);
  RunHooks hooks;
  if (!inject.empty()) {
    SoftFaultPlan plan = parse_inject(inject, bench.spec);
    hooks.inject_time = plan.timeStep;
    hooks.inject = [plan](GridState& g) { inject_soft_fault(g, plan); };
  }
  ProtectedRun run = run_protected(bench, lut, udp, cov, steps, hooks);
  if (!out.empty()) {
    auto f = open_out(out);
    f << "# " << man.to_json().dump() << '\n';
    write_outcomes_csv(f, run.outcomes);
  }
  const json cfg = config_to_json(run.config);
  std::cout << "config " << cfg.dump() << "\nchecks " << run.outcomes.size() << " detected " << run.detected() << "\n";
  return run.detected() ? 2 : 0;
}

int cmd_inject(CampaignConfig cfg, const std::string& lutPath, const std::string& out) {
  RunManifest man;
  man.command = "inject";
  man.lutPath = lutPath;
  man.seed = cfg.seed;
  man.goal = {{"bench", cfg.bench}, {"grid", cfg.grid},   {"udp", cfg.udp},   {"cov", cfg.cov},
              {"mode", cfg.mode},   {"trials", cfg.trials}, {"steps", cfg.steps}, {"protected_only", cfg.protectedOnly}};
  std::optional<ConfigLUT> lut;
  if (!lutPath.empty()) lut = load_lut(lutPath);
  CampaignReport rep = run_campaign(cfg, lut ? &*lut : nullptr);
  json sum = campaign_summary(rep);
  sum["cov"] = cfg.cov;
  sum["udp"] = cfg.udp;
  sum["manifest"] = man.to_json();
  if (!out.empty()) {
    auto f = open_out(out);
    f << "# " << man.to_json().dump() << '\n';
    write_campaign_csv(f, rep);
    write_json(out + ".summary.json", sum);
  }
  sum.erase("manifest");
  std::cout << sum.dump(2) << "\n";
  return 0;
}

struct ReportRow {
  std::string source, bench, mode;
  double cov = 0;
  int udp = 0;
  long trials = 0, reached = 0, manifested = 0, detected = 0, falsePositives = 0;
  std::optional<double> rateProtected;
  double rateManifested = 0;
};

ReportRow read_summary(const std::string& path, const json& j) {
  ReportRow r;
  r.source = path;
  try {
    r.bench = j.at("bench");
    r.mode = j.at("mode");
    r.cov = j.value("cov", 0.0);
    r.udp = j.value("udp", 0);
    r.trials = j.at("trials");
    r.reached = j.at("reached");
    r.manifested = j.at("manifested");
    r.detected = j.at("detected");
    r.falsePositives = j.at("false_positives");
    r.rateProtected = j.at("detection_rate_protected").get<double>();
    r.rateManifested = j.at("detection_rate_manifested");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedInput, path + ": " + e.what());
  }
  return r;
}

ReportRow read_campaign_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  ReportRow r;
  r.source = path;
  std::string line;
  bool header = false;
  long md = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      try {
        json m = json::parse(line.substr(1));
        const json& g = m.at("goal");
        r.bench = g.value("bench", "");
        r.mode = g.value("mode", "");
        r.cov = g.value("cov", 0.0);
        r.udp = g.value("udp", 0);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedInput, path + ": bad manifest line");
      }
      continue;
    }
    if (!header) {
      if (line.rfind("trial,mode,site_or_bit", 0) != 0) throw Error(ErrorCode::MalformedInput, path + ": not a campaign CSV");
      header = true;
      continue;
    }
    std::vector<std::string> c;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) c.push_back(x);
    if (c.size() != 8) throw Error(ErrorCode::MalformedInput, path + ": bad row " + line);
    const bool reached = c[4] == "1", man = c[5] == "1", det = c[6] == "1";
    ++r.trials;
    r.reached += reached;
    r.manifested += man;
    r.detected += det;
    r.falsePositives += det && !man;
    md += det && man;
    if (r.mode.empty()) r.mode = c[1];
  }
  if (!header) throw Error(ErrorCode::MalformedInput, path + ": empty input");
  r.rateManifested = r.manifested ? static_cast<double>(md) / static_cast<double>(r.manifested) : 0.0;
  return r;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& format, const std::string& out) {
  std::vector<ReportRow> rows;
  for (const auto& p : inputs) {
    std::ifstream f(p);
    if (!f) throw Error(ErrorCode::IoError, "cannot open " + p);
    int c = f.peek();
    while (c != EOF && std::isspace(c)) {
      f.get();
      c = f.peek();
    }
    if (c == EOF) throw Error(ErrorCode::MalformedInput, p + ": empty input");
    rows.push_back(c == '{' ? read_summary(p, read_json(p)) : read_campaign_csv(p));
  }
  std::ostringstream os;
  if (format == "json") {
    json arr = json::array();
    for (const auto& r : rows) {
      json j = {{"source", r.source},         {"bench", r.bench},
                {"mode", r.mode},             {"udp", r.udp},
                {"cov", r.cov},               {"trials", r.trials},
                {"reached", r.reached},       {"manifested", r.manifested},
                {"detected", r.detected},     {"false_positives", r.falsePositives},
                {"detection_rate_manifested", r.rateManifested}};
      j["detection_rate_protected"] = r.rateProtected ? json(*r.rateProtected) : json(nullptr);
      arr.push_back(j);
    }
    os << arr.dump(2) << '\n';
  } else {
    os << "source,bench,mode,udp,cov,trials,reached,manifested,detected,false_positives,"
          "detection_rate_manifested,detection_rate_protected\n";
    for (const auto& r : rows) {
      os << r.source << ',' << r.bench << ',' << r.mode << ',' << r.udp << ',' << r.cov << ',' << r.trials << ','
         << r.reached << ',' << r.manifested << ',' << r.detected << ',' << r.falsePositives << ','
         << r.rateManifested << ',';
      if (r.rateProtected) os << *r.rateProtected;
      os << '\n';
    }
  }
  if (out.empty()) std::cout << os.str();
  else open_out(out) << os.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floating-point stencil error detector synthesis and runtime"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  int threadsFlag = 0;
  app.add_option("--threads", threadsFlag, "worker threads (FPDETECT_THREADS fallback)")->check(CLI::NonNegativeNumber);

  std::string specPath, benchId = "h1", outTable, outLut, lutPath, inject, out, format = "csv";
  long grid = 128, steps = 64;
  int tmax = 64, expMax = 20, udpMax = 40, covStep = 5, udp = 15, trials = 100, runTmax = 16;
  double cov = 0.9;
  std::uint64_t seed = 20240601;
  bool protectedOnly = false;
  std::vector<std::string> inputs;

  auto* synth = app.add_subcommand("synth", "build coefficient table and configuration LUT");
  auto* src = synth->add_option_group("source");
  src->add_option("--spec", specPath, "stencil spec JSON")->check(CLI::ExistingFile);
  src->add_option("--bench", benchId, "benchmark id");
  src->require_option(1);
  synth->add_option("--grid", grid, "grid points per dimension")->check(CLI::Range(8L, 1L << 20));
  synth->add_option("--tmax", tmax, "largest T profiled")->required()->check(CLI::PositiveNumber);
  synth->add_option("--out-table", outTable);
  synth->add_option("--out-lut", outLut);
  synth->add_option("--exp-max", expMax)->check(CLI::Range(1, 64));
  synth->add_option("--udp-max", udpMax)->check(CLI::Range(1, 53));
  synth->add_option("--cov-step", covStep)->check(CLI::Range(1, 100));

  auto* run = app.add_subcommand("run", "protected execution of a benchmark");
  run->add_option("--bench", benchId)->required();
  run->add_option("--grid", grid)->check(CLI::Range(8L, 1L << 20));
  run->add_option("--lut", lutPath, "LUT from synth; profiled on the fly when omitted");
  run->add_option("--udp", udp)->check(CLI::Range(1, 53));
  run->add_option("--cov", cov, "fraction or percent")->check(CLI::Range(0.0, 100.0));
  run->add_option("--steps", steps)->check(CLI::NonNegativeNumber);
  run->add_option("--tmax", runTmax, "Tmax for on-the-fly profiling")->check(CLI::PositiveNumber);
  run->add_option("--inject", inject, "bitflip:T:ARRAY:I,J:BIT");
  run->add_option("--out", out, "outcome CSV");

  auto* inj = app.add_subcommand("inject", "fault-injection campaign");
  std::string mode = "bitflip";
  inj->add_option("--bench", benchId);
  inj->add_option("--mode", mode)->check(CLI::IsMember({"bitflip", "bitflip2", "bound", "access", "reorder"}));
  inj->add_option("--trials", trials)->check(CLI::PositiveNumber);
  inj->add_option("--seed", seed);
  inj->add_option("--udp", udp)->check(CLI::Range(1, 53));
  inj->add_option("--cov", cov, "fraction or percent")->check(CLI::Range(0.0, 100.0));
  inj->add_option("--grid", grid)->check(CLI::Range(8L, 1L << 20));
  inj->add_option("--steps", steps)->check(CLI::PositiveNumber);
  inj->add_option("--tmax", runTmax)->check(CLI::PositiveNumber);
  inj->add_option("--lut", lutPath);
  inj->add_flag("--protected-only", protectedOnly, "flip only protected bits of interior points");
  inj->add_option("--out", out, "campaign CSV; summary goes to <out>.summary.json");

  auto* rep = app.add_subcommand("report", "aggregate campaign outputs");
  rep->add_option("--in", inputs, "campaign CSV or summary JSON")->required()->check(CLI::ExistingFile);
  rep->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  rep->add_option("--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(specPath, benchId, grid, tmax, outTable, outLut, expMax, udpMax, covStep);
    if (*run) return cmd_run(benchId, grid, lutPath, udp, as_fraction(cov), steps, runTmax, inject, out);
    if (*inj) {
      CampaignConfig cfg;
      cfg.bench = benchId;
      cfg.grid = grid;
      cfg.udp = udp;
      cfg.cov = as_fraction(cov);
      cfg.trials = trials;
      cfg.mode = mode;
      cfg.seed = seed;
      cfg.steps = steps;
      cfg.protectedOnly = protectedOnly;
      cfg.tmax = runTmax;
      cfg.threads = thread_count(threadsFlag);
      return cmd_inject(cfg, lutPath, out);
    }
    if (*rep) return cmd_report(inputs, format, out);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnsupportedCoverage) std::cerr << "unsupported coverage\n";
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
