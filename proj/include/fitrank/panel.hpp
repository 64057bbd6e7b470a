#pragma once

#include "fitrank/bipartite.hpp"
#include "fitrank/grants.hpp"
#include "fitrank/table.hpp"

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace fitrank {

enum class RollingLevel { pooled, per_funder };

struct RollingParams {
    CouncilFilterParams filter;
    double tol = 1e-10;
    int max_iter = 10000;
};

/// Competitiveness series from rolling windows: for each focal year t the
/// matrix is built from years [t - window_len + 1, t], council-level
/// filtered, and iterated from the even start. Keys are (university,
/// funder, focal year); funder is empty at the pooled level. Universities
/// filtered out of a window simply have no entry (downstream reads 0).
/// A window that fails to converge is fatal and names the window; a window
/// that filters to empty contributes no entries.
using RollingSeries = std::map<std::tuple<std::string, std::string, int>, double>;

RollingSeries rolling_uc(const std::vector<Allocation>& allocs, int window_len,
                         RollingLevel level, int first_year, int last_year,
                         const RollingParams& params = {});

struct PanelConfig {
    int start_year = 2011;
    int end_year = 2020;
    std::set<std::string> exclude_funders = {"BBSRC"};
    std::set<std::string> treated_funders = {"NERC", "AHRC", "ESRC", "EPSRC"};
    int post_year = 2016; // d_post = 1 for year >= post_year
    int window_short = 3;
    int window_long = 5;
    RollingParams rolling;
    // active pair = >= 1 grant inside the estimation years; true widens the
    // activity test to the full data range
    bool activity_full_range = false;
};

/// Balanced (active university-funder pair) x (estimation year) panel.
/// Money columns are GBP millions except sumv_l1 (GBP hundreds of
/// millions); hhi is unscaled. Lagged columns carry the _l1 suffix and hold
/// the year t-1 value attached to row t.
PanelTable build_panel(const std::vector<Allocation>& allocs, const PanelConfig& config);

/// The 13 panel variables in canonical (export/reporting) order.
const std::vector<std::string>& panel_variables();

struct DescribeRow {
    std::string variable;
    double mean = 0.0, sd = 0.0, median = 0.0, min = 0.0, max = 0.0;
};

struct Describe {
    std::vector<DescribeRow> rows;           // one per panel variable, in order
    std::vector<std::string> variables;
    Eigen::MatrixXd corr; // Pearson; NaN where undefined (reported blank)
};

/// Descriptive statistics in reporting units (hhi is scaled by 1000 here).
Describe describe(const PanelTable& panel);

void write_describe_csv(std::ostream& out, const Describe& d);

} // namespace fitrank
