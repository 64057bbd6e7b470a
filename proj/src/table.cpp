#include "fitrank/table.hpp"

#include "fitrank/csv.hpp"
#include "fitrank/errors.hpp"

#include <charconv>
#include <ostream>

namespace fitrank {

bool PanelTable::has_column(const std::string& name) const {
    for (const auto& n : column_names)
        if (n == name) return true;
    return false;
}

const Eigen::VectorXd& PanelTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < column_names.size(); ++i)
        if (column_names[i] == name) return column_data[i];
    throw DataError("panel: no column '" + name + "'");
}

void PanelTable::add_column(const std::string& name, Eigen::VectorXd data) {
    if (has_column(name)) throw DataError("panel: duplicate column '" + name + "'");
    if (data.size() != rows()) throw DataError("panel: column length mismatch for '" + name + "'");
    column_names.push_back(name);
    column_data.push_back(std::move(data));
}

void write_panel_csv(std::ostream& out, const PanelTable& panel) {
    out << "university,funder,year";
    for (const auto& n : panel.column_names) out << ',' << csv::escape(n);
    out << '\n';
    for (Eigen::Index i = 0; i < panel.rows(); ++i) {
        out << csv::escape(panel.university[i]) << ',' << csv::escape(panel.funder[i]) << ','
            << panel.year[i];
        for (const auto& col : panel.column_data) out << ',' << csv::format_double(col(i));
        out << '\n';
    }
}

PanelTable read_panel_csv(std::istream& in) {
    csv::Table table = csv::parse(in);
    if (table.header.size() < 3 || table.header[0] != "university" ||
        table.header[1] != "funder" || table.header[2] != "year")
        throw DataError("panel csv: malformed header");
    PanelTable panel;
    const std::size_t n_cols = table.header.size() - 3;
    std::vector<std::vector<double>> cols(n_cols);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        if (row.size() != table.header.size())
            throw DataError("panel csv: ragged row at line " + std::to_string(table.line[i]));
        panel.university.push_back(row[0]);
        panel.funder.push_back(row[1]);
        auto parse_num = [&](const std::string& s) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || p != s.data() + s.size())
                throw DataError("panel csv: bad numeric '" + s + "' at line " +
                                std::to_string(table.line[i]));
            return v;
        };
        panel.year.push_back(static_cast<int>(parse_num(row[2])));
        for (std::size_t j = 0; j < n_cols; ++j) cols[j].push_back(parse_num(row[3 + j]));
    }
    for (std::size_t j = 0; j < n_cols; ++j) {
        Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(cols[j].data(),
                                                        static_cast<Eigen::Index>(cols[j].size()));
        panel.add_column(table.header[3 + j], std::move(v));
    }
    return panel;
}

} // namespace fitrank
