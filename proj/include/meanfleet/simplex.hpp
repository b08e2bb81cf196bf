#pragma once

#include <utility>
#include <vector>

namespace mf {

// General LP in the form  min c^T x  s.t.  A x {=,<=,>=} b,  x >= 0,
// with sparse columns. Solved by two-phase revised simplex with a dense
// basis inverse; suitable up to a few thousand rows.
class LpProblem {
  public:
    explicit LpProblem(int n_rows) : senses_(static_cast<size_t>(n_rows), '='),
                                     rhs_(static_cast<size_t>(n_rows), 0.0) {}

    int n_rows() const { return static_cast<int>(rhs_.size()); }
    int n_vars() const { return static_cast<int>(obj_.size()); }

    // coeffs: (row, value) pairs. Returns the variable index.
    int add_var(double cost, std::vector<std::pair<int, double>> coeffs);

    // sense one of '=', '<', '>'.
    void set_row(int row, char sense, double rhs);

    const std::vector<double>& objective() const { return obj_; }
    const std::vector<std::pair<int, double>>& column(int var) const {
        return cols_[static_cast<size_t>(var)];
    }
    char sense(int row) const { return senses_[static_cast<size_t>(row)]; }
    double rhs(int row) const { return rhs_[static_cast<size_t>(row)]; }

  private:
    std::vector<std::vector<std::pair<int, double>>> cols_;
    std::vector<double> obj_;
    std::vector<char> senses_;
    std::vector<double> rhs_;
};

struct LpSolution {
    enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };
    Status status = Status::Optimal;
    std::vector<double> x;
    double objective = 0.0;
    int iterations = 0;
};

LpSolution solve_lp(const LpProblem& problem, int max_iterations = 200000);

}  // namespace mf
