#include "qslab/diagnostics.hpp"

#include "qslab/io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>

using namespace qslab;

namespace {

QuestionSource source_at(double mean, double tier, const std::string& label) {
    auto policy = make_questioner_policy({tier}, mean, std::log(0.3), 8.0);
    return {policy, tier, label};
}

AccuracyMatrix literal_matrix(std::vector<std::vector<double>> values) {
    AccuracyMatrix m;
    m.values = std::move(values);
    for (size_t r = 0; r < m.values.size(); ++r) {
        m.row_labels.push_back("R" + std::to_string(r));
    }
    for (size_t c = 0; c < m.values[0].size(); ++c) {
        m.col_labels.push_back("C" + std::to_string(c));
    }
    m.samples_per_cell = 100;
    return m;
}

}  // namespace

TEST_CASE("kendall tau-b") {
    std::vector<double> idx{0, 1, 2, 3};
    CHECK(kendall_tau_b({1, 2, 3, 4}, idx) == doctest::Approx(1.0));
    CHECK(kendall_tau_b({4, 3, 2, 1}, idx) == doctest::Approx(-1.0));
    CHECK(kendall_tau_b({2, 2, 2, 2}, idx) == doctest::Approx(0.0));
    // 5 concordant, 1 discordant pairs out of 6
    CHECK(kendall_tau_b({1, 3, 2, 4}, idx) == doctest::Approx(4.0 / 6.0));
    // one tie in x: 5 untied pairs, tau-b = 5 / sqrt(5 * 6)
    CHECK(kendall_tau_b({1, 2, 2, 3}, idx) == doctest::Approx(5.0 / std::sqrt(30.0)));
    CHECK_THROWS(kendall_tau_b({1.0}, {0.0}));
}

TEST_CASE("cross accuracy matrix basics") {
    std::vector<QuestionSource> sources{source_at(0.0, 0.5, "Q1"), source_at(0.6, 0.5, "Q2")};
    std::vector<std::pair<std::string, SolverProfile>> solvers{
        {"S0", {0.0, 0.0}}, {"S1", {0.0, 0.0}}, {"S2", {50.0, 0.0}}};
    RngStream rng(42);
    auto matrix = cross_accuracy_matrix(sources, solvers, 200, 8, 4, rng);
    CHECK(matrix.rows() == 2);
    CHECK(matrix.cols() == 3);
    CHECK(matrix.samples_per_cell == 1600);
    CHECK(matrix.row_labels[1] == "Q2");

    // equal-ability solvers give bit-identical columns
    for (size_t r = 0; r < matrix.rows(); ++r) {
        CHECK(matrix.values[r][0] == matrix.values[r][1]);
        // a saturated solver answers everything correctly
        CHECK(matrix.values[r][2] == doctest::Approx(1.0));
        for (size_t c = 0; c < matrix.cols(); ++c) {
            CHECK(matrix.values[r][c] >= 0.0);
            CHECK(matrix.values[r][c] <= 1.0);
        }
    }

    // same seed, same cells
    RngStream rng2(42);
    auto repeat = cross_accuracy_matrix(sources, solvers, 200, 8, 4, rng2);
    for (size_t r = 0; r < matrix.rows(); ++r) {
        for (size_t c = 0; c < matrix.cols(); ++c) {
            CHECK(repeat.values[r][c] == matrix.values[r][c]);
        }
    }
}

TEST_CASE("monotonicity report on a clean grid") {
    auto matrix = literal_matrix({{0.2, 0.4, 0.6}, {0.1, 0.3, 0.5}, {0.05, 0.2, 0.4}});
    auto report = monotonicity_report(matrix);
    REQUIRE(report.row_kendall_tau.size() == 3);
    REQUIRE(report.col_kendall_tau.size() == 3);
    for (double tau : report.row_kendall_tau) {
        CHECK(tau == doctest::Approx(1.0));
    }
    for (double tau : report.col_kendall_tau) {
        CHECK(tau == doctest::Approx(-1.0));
    }
    CHECK(report.adjacent_monotone_fraction_rows == doctest::Approx(1.0));
    CHECK(report.adjacent_monotone_fraction_cols == doctest::Approx(1.0));
    CHECK(report.diagonal_mean == doctest::Approx((0.2 + 0.3 + 0.4) / 3.0));
    CHECK(report.row_means[0] == doctest::Approx(0.4));

    auto offset_report = monotonicity_report(matrix, 1);
    CHECK(offset_report.diagonal_mean == doctest::Approx((0.4 + 0.5) / 2.0));
}

TEST_CASE("monotonicity report on a constant grid") {
    auto matrix = literal_matrix({{0.5, 0.5}, {0.5, 0.5}});
    auto report = monotonicity_report(matrix);
    for (double tau : report.row_kendall_tau) {
        CHECK(tau == doctest::Approx(0.0));
    }
    for (double tau : report.col_kendall_tau) {
        CHECK(tau == doctest::Approx(0.0));
    }
    // ties count as monotone
    CHECK(report.adjacent_monotone_fraction_rows == doctest::Approx(1.0));
    CHECK(report.adjacent_monotone_fraction_cols == doctest::Approx(1.0));
}

TEST_CASE("single-row matrices skip tau but keep the diagonal") {
    AccuracyMatrix m;
    m.values = {{0.3, 0.6, 0.9}};
    m.row_labels = {"only"};
    m.col_labels = {"a", "b", "c"};
    auto report = monotonicity_report(m);
    CHECK(report.row_kendall_tau.empty());
    CHECK(report.col_kendall_tau.empty());
    CHECK(report.diagonal_mean == doctest::Approx(0.3));
}

TEST_CASE("csv export format") {
    auto matrix = literal_matrix({{0.1234564, 0.5}, {0.25, 1.0}});
    std::string csv = matrix_to_csv(matrix);
    CHECK(csv ==
          "row,C0,C1\n"
          "R0,0.123456,0.500000\n"
          "R1,0.250000,1.000000\n");
    int lines = 0;
    for (char ch : csv) {
        if (ch == '\n') {
            ++lines;
        }
    }
    CHECK(lines == 3);
}

TEST_CASE("export heatmap writes byte-identical artifacts") {
    auto matrix = literal_matrix({{0.0, 0.5}, {0.75, 1.0}});
    auto report = monotonicity_report(matrix);
    auto dir = std::filesystem::temp_directory_path() / "qslab-test-heatmap";
    std::filesystem::create_directories(dir);
    auto prefix = (dir / "grid").string();

    auto paths = export_heatmap(matrix, report, prefix);
    REQUIRE(paths.size() == 3);
    auto first_csv = read_text_file(paths[0]);
    auto first_svg = read_text_file(paths[2]);

    export_heatmap(matrix, report, prefix);
    CHECK(read_text_file(paths[0]) == first_csv);
    CHECK(read_text_file(paths[2]) == first_svg);

    // the color scale is anchored: 0 and 1 map to the ramp endpoints
    CHECK(first_svg.find("#440154") != std::string::npos);
    CHECK(first_svg.find("#fde725") != std::string::npos);
    std::filesystem::remove_all(dir);
}
