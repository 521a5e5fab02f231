#pragma once

#include "qslab/core.hpp"
#include "qslab/questioner.hpp"
#include "qslab/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace qslab {

/// One row of a cross-accuracy grid: a frozen question emitter conditioned
/// on a single tier.
struct QuestionSource {
    QuestionerPolicy policy;
    double tier = 0.5;
    std::string label;
};

struct AccuracyMatrix {
    std::vector<std::vector<double>> values;  // rows x cols, entries in [0,1]
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    int samples_per_cell = 0;

    size_t rows() const { return values.size(); }
    size_t cols() const { return values.empty() ? 0 : values[0].size(); }
};

/// A[i][t] = mean oracle-truth correctness of solver t over
/// per_cell_questions fresh questions from source i, n_eval answers each.
/// Questions and answer draws are keyed per row and question, never per
/// column, so equal-ability solvers produce bit-identical columns.
AccuracyMatrix cross_accuracy_matrix(const std::vector<QuestionSource>& sources,
                                     const std::vector<std::pair<std::string, SolverProfile>>& solvers,
                                     int per_cell_questions, int n_eval, int num_options,
                                     RngStream&);

/// Kendall tau-b; 0 when either sequence is constant.
double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y);

struct MonotonicityReport {
    // Per row, accuracy against column index: +1 when later solvers improve.
    std::vector<double> row_kendall_tau;
    // Per column, accuracy against row index: -1 when later questioners harden.
    std::vector<double> col_kendall_tau;
    double diagonal_mean = 0.0;
    double adjacent_monotone_fraction_rows = 0.0;  // ties count as monotone
    double adjacent_monotone_fraction_cols = 0.0;
    std::vector<double> row_means;
    std::vector<double> col_means;
};

/// diag_col_offset aligns the diagonal when the matrix carries an extra
/// leading solver column (pairing row i with column i + offset).
MonotonicityReport monotonicity_report(const AccuracyMatrix&, int diag_col_offset = 0);

/// Writes <prefix>_matrix.csv (fixed 6-decimal, header row of column
/// labels), <prefix>_report.json, and <prefix>_heatmap.svg with the color
/// scale anchored to [0,1]. Returns the written paths.
std::vector<std::string> export_heatmap(const AccuracyMatrix&, const MonotonicityReport&,
                                        const std::string& path_prefix);

/// The CSV body used by export_heatmap, exposed for byte-level checks.
std::string matrix_to_csv(const AccuracyMatrix&);

std::string heatmap_svg(const AccuracyMatrix&);

}  // namespace qslab
