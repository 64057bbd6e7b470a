#pragma once

#include "fitrank/bipartite.hpp"
#include "fitrank/econometrics.hpp"
#include "fitrank/panel.hpp"
#include "fitrank/remote.hpp"
#include "fitrank/synth.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fitrank {

struct PeriodDef {
    std::string name;
    int start = 0;
    int end = 0;
};

struct EventStudyDef {
    std::string interact;
    int base_year = 2011;
};

/// One regression request from the config: the spec plus optional
/// event-study and magnitude outputs.
struct ModelRequest {
    ModelSpec spec;
    std::optional<EventStudyDef> event;
    std::optional<std::string> magnitude_var;
};

struct RunConfig {
    std::uint64_t seed = 42;
    std::string output_dir = "out";

    std::string grants_path;
    std::optional<RemoteConfig> remote;
    std::string deflator_path;
    std::optional<std::set<std::string>> allowed_funders;

    std::vector<PeriodDef> periods; // non-overlapping, ordered

    int overall_min_subject_grants = 9;
    CouncilFilterParams council_filter;

    double fitness_tol = 1e-10;
    int fitness_max_iter = 10000;
    int verify_inits = 10;
    bool tau_a = false; // Kendall variant for dynamics tables

    PanelConfig panel;
    synth::GrantFixtureSpec fixture;
    std::vector<ModelRequest> models;
    std::string baseline_period; // report normalization window; default middle period
};

/// Load and validate a JSON run configuration.
RunConfig load_config(const std::string& path);

/// Content-addressed artifact store under the run's output directory.
/// Logical names map to `<name>-<hash12>.<ext>` files through
/// manifest.json; writes are atomic (temp + rename) and re-writing
/// identical content is a no-op, so reruns yield byte-identical trees.
class ArtifactStore {
  public:
    explicit ArtifactStore(std::string out_dir);

    std::string write(const std::string& logical, const std::string& ext,
                      const std::string& content); // returns the file name
    std::string read(const std::string& logical) const; // DataError when missing
    bool has(const std::string& logical) const;
    std::string path_of(const std::string& logical) const;
    const std::string& dir() const { return out_dir_; }

  private:
    std::string out_dir_;
};

// Subcommand drivers; errors surface as Data/Convergence/Config exceptions
// which the CLI maps to exit codes 1/2/3.
void cmd_ingest(const RunConfig& config);
void cmd_rank(const RunConfig& config, const std::string& period = "",
              const std::string& level = "", const std::string& funder = "");
void cmd_dynamics(const RunConfig& config);
void cmd_panel(const RunConfig& config);
void cmd_regress(const RunConfig& config);
void cmd_report(const RunConfig& config);
void cmd_synth(const RunConfig& config);

} // namespace fitrank
