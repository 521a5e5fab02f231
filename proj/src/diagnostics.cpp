#include "qslab/diagnostics.hpp"

#include "qslab/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qslab {

AccuracyMatrix cross_accuracy_matrix(
    const std::vector<QuestionSource>& sources,
    const std::vector<std::pair<std::string, SolverProfile>>& solvers, int per_cell_questions,
    int n_eval, int num_options, RngStream& rng) {
    if (sources.empty() || solvers.empty()) {
        throw std::invalid_argument("cross_accuracy_matrix: need at least one source and solver");
    }
    if (per_cell_questions < 1 || n_eval < 1) {
        throw std::invalid_argument("cross_accuracy_matrix: need per_cell_questions, n_eval >= 1");
    }

    AccuracyMatrix matrix;
    matrix.samples_per_cell = per_cell_questions * n_eval;
    for (const auto& [label, profile] : solvers) {
        matrix.col_labels.push_back(label);
    }

    for (size_t r = 0; r < sources.size(); ++r) {
        const auto& source = sources[r];
        matrix.row_labels.push_back(source.label);
        auto row_stream = rng.child("row").child(uint64_t(r));

        // Questions and their answer draws are fixed per row; every solver
        // column reuses the same uniforms.
        std::vector<SyntheticQuestion> questions;
        std::vector<std::vector<double>> draws;
        questions.reserve(size_t(per_cell_questions));
        for (int q = 0; q < per_cell_questions; ++q) {
            auto q_stream = row_stream.child("question").child(uint64_t(q));
            questions.push_back(generate_question(source.policy, neutral_doc(), source.tier,
                                                  num_options, q_stream));
            auto a_stream = row_stream.child("answers").child(uint64_t(q));
            std::vector<double> u;
            u.reserve(size_t(n_eval));
            for (int d = 0; d < n_eval; ++d) {
                u.push_back(a_stream.uniform());
            }
            draws.push_back(std::move(u));
        }

        std::vector<double> row;
        row.reserve(solvers.size());
        for (const auto& [label, profile] : solvers) {
            long correct = 0;
            for (int q = 0; q < per_cell_questions; ++q) {
                double p = success_probability(profile, questions[size_t(q)], false);
                for (int d = 0; d < n_eval; ++d) {
                    if (answer_from_uniform(draws[size_t(q)][size_t(d)], p, num_options).correct) {
                        ++correct;
                    }
                }
            }
            row.push_back(double(correct) / double(matrix.samples_per_cell));
        }
        matrix.values.push_back(std::move(row));
    }
    return matrix;
}

double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("kendall_tau_b: need two sequences of equal length >= 2");
    }
    long concordant = 0;
    long discordant = 0;
    long ties_x = 0;
    long ties_y = 0;
    size_t n = x.size();
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            double dx = x[j] - x[i];
            double dy = y[j] - y[i];
            if (dx == 0.0 && dy == 0.0) {
                continue;
            }
            if (dx == 0.0) {
                ++ties_x;
            } else if (dy == 0.0) {
                ++ties_y;
            } else if (dx * dy > 0.0) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    double denom = std::sqrt(double(concordant + discordant + ties_x)) *
                   std::sqrt(double(concordant + discordant + ties_y));
    if (denom == 0.0) {
        return 0.0;
    }
    return double(concordant - discordant) / denom;
}

MonotonicityReport monotonicity_report(const AccuracyMatrix& matrix, int diag_col_offset) {
    size_t rows = matrix.rows();
    size_t cols = matrix.cols();
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("monotonicity_report: empty matrix");
    }

    MonotonicityReport report;
    bool tau_defined = rows >= 2 && cols >= 2;

    std::vector<double> col_index(cols);
    for (size_t c = 0; c < cols; ++c) {
        col_index[c] = double(c);
    }
    std::vector<double> row_index(rows);
    for (size_t r = 0; r < rows; ++r) {
        row_index[r] = double(r);
    }

    long monotone_rows = 0;
    long pairs_rows = 0;
    for (size_t r = 0; r < rows; ++r) {
        const auto& row = matrix.values[r];
        if (tau_defined) {
            report.row_kendall_tau.push_back(kendall_tau_b(row, col_index));
        }
        double mean = 0.0;
        for (size_t c = 0; c < cols; ++c) {
            mean += row[c];
            if (c + 1 < cols) {
                ++pairs_rows;
                if (row[c + 1] >= row[c]) {
                    ++monotone_rows;
                }
            }
        }
        report.row_means.push_back(mean / double(cols));
    }

    long monotone_cols = 0;
    long pairs_cols = 0;
    for (size_t c = 0; c < cols; ++c) {
        std::vector<double> col(rows);
        double mean = 0.0;
        for (size_t r = 0; r < rows; ++r) {
            col[r] = matrix.values[r][c];
            mean += col[r];
            if (r + 1 < rows) {
                ++pairs_cols;
                if (matrix.values[r + 1][c] <= matrix.values[r][c]) {
                    ++monotone_cols;
                }
            }
        }
        if (tau_defined) {
            report.col_kendall_tau.push_back(kendall_tau_b(col, row_index));
        }
        report.col_means.push_back(mean / double(rows));
    }

    report.adjacent_monotone_fraction_rows =
        pairs_rows > 0 ? double(monotone_rows) / double(pairs_rows) : 1.0;
    report.adjacent_monotone_fraction_cols =
        pairs_cols > 0 ? double(monotone_cols) / double(pairs_cols) : 1.0;

    if (diag_col_offset < 0 || size_t(diag_col_offset) >= cols) {
        throw std::invalid_argument("monotonicity_report: diag_col_offset out of range");
    }
    size_t diag_n = std::min(rows, cols - size_t(diag_col_offset));
    double diag_sum = 0.0;
    for (size_t i = 0; i < diag_n; ++i) {
        diag_sum += matrix.values[i][i + size_t(diag_col_offset)];
    }
    report.diagonal_mean = diag_sum / double(diag_n);
    return report;
}

std::string matrix_to_csv(const AccuracyMatrix& matrix) {
    std::string out = "row";
    for (const auto& label : matrix.col_labels) {
        out += ',';
        out += label;
    }
    out += '\n';
    for (size_t r = 0; r < matrix.rows(); ++r) {
        out += matrix.row_labels[r];
        for (size_t c = 0; c < matrix.cols(); ++c) {
            out += ',';
            out += format_fixed(matrix.values[r][c], 6);
        }
        out += '\n';
    }
    return out;
}

namespace {

// Five-stop ramp, anchored to [0,1] so separate exports share a scale.
struct Rgb {
    int r, g, b;
};

Rgb color_for(double v) {
    static const Rgb stops[5] = {
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    v = std::clamp(v, 0.0, 1.0);
    double t = v * 4.0;
    int lo = std::min(3, int(t));
    double f = t - lo;
    auto lerp = [f](int a, int b) { return int(std::lround(a + f * (b - a))); };
    return {lerp(stops[lo].r, stops[lo + 1].r), lerp(stops[lo].g, stops[lo + 1].g),
            lerp(stops[lo].b, stops[lo + 1].b)};
}

std::string hex_color(const Rgb& c) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
    return buf;
}

}  // namespace

std::string heatmap_svg(const AccuracyMatrix& matrix) {
    const int cell = 56;
    const int left = 96;
    const int top = 48;
    const int bar_w = 18;
    const int gap = 24;
    size_t rows = matrix.rows();
    size_t cols = matrix.cols();
    int width = left + int(cols) * cell + gap + bar_w + 48;
    int height = top + int(rows) * cell + 24;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" font-family=\"monospace\" font-size=\"12\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (size_t c = 0; c < cols; ++c) {
        svg += "<text x=\"" + std::to_string(left + int(c) * cell + cell / 2) + "\" y=\"" +
               std::to_string(top - 10) + "\" text-anchor=\"middle\">" + matrix.col_labels[c] +
               "</text>\n";
    }
    for (size_t r = 0; r < rows; ++r) {
        svg += "<text x=\"" + std::to_string(left - 8) + "\" y=\"" +
               std::to_string(top + int(r) * cell + cell / 2 + 4) +
               "\" text-anchor=\"end\">" + matrix.row_labels[r] + "</text>\n";
        for (size_t c = 0; c < cols; ++c) {
            double v = matrix.values[r][c];
            Rgb color = color_for(v);
            int x = left + int(c) * cell;
            int y = top + int(r) * cell;
            svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) +
                   "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) +
                   "\" fill=\"" + hex_color(color) + "\" stroke=\"white\"/>\n";
            bool dark = v < 0.6;
            svg += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
                   std::to_string(y + cell / 2 + 4) + "\" text-anchor=\"middle\" fill=\"" +
                   (dark ? "white" : "black") + "\">" + format_fixed(v, 3) + "</text>\n";
        }
    }

    // scale bar, 0 at the bottom, 1 at the top
    int bar_x = left + int(cols) * cell + gap;
    int bar_h = int(rows) * cell;
    const int steps = 32;
    for (int i = 0; i < steps; ++i) {
        double v = 1.0 - (i + 0.5) / steps;
        int y = top + i * bar_h / steps;
        int h = (i + 1) * bar_h / steps - i * bar_h / steps;
        svg += "<rect x=\"" + std::to_string(bar_x) + "\" y=\"" + std::to_string(y) +
               "\" width=\"" + std::to_string(bar_w) + "\" height=\"" + std::to_string(h) +
               "\" fill=\"" + hex_color(color_for(v)) + "\"/>\n";
    }
    svg += "<text x=\"" + std::to_string(bar_x + bar_w + 6) + "\" y=\"" + std::to_string(top + 6) +
           "\">1.0</text>\n";
    svg += "<text x=\"" + std::to_string(bar_x + bar_w + 6) + "\" y=\"" +
           std::to_string(top + bar_h) + "\">0.0</text>\n";
    svg += "</svg>\n";
    return svg;
}

std::vector<std::string> export_heatmap(const AccuracyMatrix& matrix,
                                        const MonotonicityReport& report,
                                        const std::string& path_prefix) {
    std::vector<std::string> paths;

    std::string csv_path = path_prefix + "_matrix.csv";
    write_text_file(csv_path, matrix_to_csv(matrix));
    paths.push_back(csv_path);

    nlohmann::json j;
    j["row_kendall_tau"] = report.row_kendall_tau;
    j["col_kendall_tau"] = report.col_kendall_tau;
    j["diagonal_mean"] = report.diagonal_mean;
    j["adjacent_monotone_fraction_rows"] = report.adjacent_monotone_fraction_rows;
    j["adjacent_monotone_fraction_cols"] = report.adjacent_monotone_fraction_cols;
    j["row_means"] = report.row_means;
    j["col_means"] = report.col_means;
    j["samples_per_cell"] = matrix.samples_per_cell;
    std::string report_path = path_prefix + "_report.json";
    write_text_file(report_path, j.dump(2) + "\n");
    paths.push_back(report_path);

    std::string svg_path = path_prefix + "_heatmap.svg";
    write_text_file(svg_path, heatmap_svg(matrix));
    paths.push_back(svg_path);
    return paths;
}

}  // namespace qslab
