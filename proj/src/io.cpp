#include <charconv>
#include <cstdio>
#include <sstream>

#include "chemotax/grid.hpp"
#include "json.hpp"

namespace chemotax {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string field_to_csv(const Field& f) {
    std::ostringstream out;
    const GridSpec& g = f.grid;
    out << "# chemotax-field\n";
    out << "# dim," << g.dim << "\n";
    out << "# cells," << g.cells[0] << "," << g.cells[1] << "\n";
    out << "# lengths," << fmt_double(g.lengths[0]) << "," << fmt_double(g.lengths[1]) << "\n";
    out << "i,j,value\n";
    for (int j = 0; j < g.cells[1]; ++j)
        for (int i = 0; i < g.cells[0]; ++i)
            out << i << "," << j << "," << fmt_double(f.at(i, j)) << "\n";
    return out.str();
}

Field field_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    GridSpec g;
    bool have_dim = false, have_cells = false, have_lengths = false;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string key;
            std::getline(ls, key, ',');
            while (!key.empty() && key.front() == ' ') key.erase(key.begin());
            if (key == "dim") {
                ls >> g.dim;
                have_dim = true;
            } else if (key == "cells") {
                char comma;
                ls >> g.cells[0] >> comma >> g.cells[1];
                have_cells = true;
            } else if (key == "lengths") {
                char comma;
                ls >> g.lengths[0] >> comma >> g.lengths[1];
                have_lengths = true;
            }
            continue;
        }
        if (line.rfind("i,j,", 0) == 0) continue;  // column header
        std::istringstream ls(line);
        int i, j;
        char comma;
        double v;
        if (ls >> i >> comma >> j >> comma >> v) values.push_back(v);
    }
    if (!have_dim || !have_cells || !have_lengths)
        throw std::invalid_argument("field_from_csv: missing grid metadata header");
    Field f(g);
    if (static_cast<int>(values.size()) != g.cell_count())
        throw std::invalid_argument("field_from_csv: cell count mismatch");
    f.values = std::move(values);
    return f;
}

std::string field_to_json(const Field& f) {
    nlohmann::json j = {
        {"dim", f.grid.dim},
        {"cells", {f.grid.cells[0], f.grid.cells[1]}},
        {"lengths", {f.grid.lengths[0], f.grid.lengths[1]}},
        {"values", f.values},
    };
    return j.dump();
}

Field field_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    GridSpec g;
    g.dim = j.at("dim").get<int>();
    g.cells = {j.at("cells")[0].get<int>(), j.at("cells")[1].get<int>()};
    g.lengths = {j.at("lengths")[0].get<double>(), j.at("lengths")[1].get<double>()};
    Field f(g);
    f.values = j.at("values").get<std::vector<double>>();
    if (static_cast<int>(f.values.size()) != g.cell_count())
        throw std::invalid_argument("field_from_json: cell count mismatch");
    return f;
}

}  // namespace chemotax
