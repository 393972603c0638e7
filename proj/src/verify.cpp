#include "stochmap/commands.hpp"

#include <algorithm>
#include <filesystem>

namespace stochmap {

RunReport run_verify(const ScenarioConfig& cfg, const RunOptions& opts, const std::string& out_dir) {
  namespace fs = std::filesystem;
  RunReport total;
  total.command = "verify";
  total.scenario = cfg.name;
  std::vector<std::string> steps = {"noise-sample", "cumulants", "map-build", "unravel"};
  if (cfg.quadratic) steps.push_back("quadratic");
  steps.push_back("expand");
  fs::create_directories(out_dir);
  for (const auto& step : steps) {
    std::string dir = (fs::path(out_dir) / step).string();
    RunReport r = run_command(step, cfg, opts, dir);
    write_summary((fs::path(dir) / "summary.json").string(), r);
    for (auto c : r.checks) {
      c.name = step + "." + c.name;
      total.checks.push_back(c);
    }
    for (const auto& a : r.artifacts) total.artifacts.push_back(step + "/" + a);
    if (r.exit_code != kExitOk) {
      total.exit_code = std::max(total.exit_code, r.exit_code);
      total.message += (total.message.empty() ? "" : "; ") + step + ": " + r.message;
    }
  }
  // slope and other non-physics checks still count against verify
  if (total.exit_code == kExitOk && !total.all_pass()) total.exit_code = kExitPhysics;
  total.settle();
  if (total.message.empty()) total.message = total.all_pass() ? "all checks pass" : "checks failed";
  return total;
}

}  // namespace stochmap
