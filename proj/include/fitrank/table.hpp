#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <vector>

namespace fitrank {

/// Rectangular (university, funder, year)-keyed table with named numeric
/// columns in a stable order. Shared by the panel builder, the synthetic
/// data generators and the regression layer.
struct PanelTable {
    std::vector<std::string> university;
    std::vector<std::string> funder;
    std::vector<int> year;
    std::vector<std::string> column_names;
    std::vector<Eigen::VectorXd> column_data;

    Eigen::Index rows() const { return static_cast<Eigen::Index>(year.size()); }

    bool has_column(const std::string& name) const;
    const Eigen::VectorXd& column(const std::string& name) const; // throws DataError
    void add_column(const std::string& name, Eigen::VectorXd data);
};

void write_panel_csv(std::ostream& out, const PanelTable& panel);
PanelTable read_panel_csv(std::istream& in);

} // namespace fitrank
