#include "meanfleet/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace mf {

int LpProblem::add_var(double cost, std::vector<std::pair<int, double>> coeffs) {
    for (const auto& [row, val] : coeffs) {
        if (row < 0 || row >= n_rows()) throw std::out_of_range("LpProblem::add_var: bad row");
        (void)val;
    }
    obj_.push_back(cost);
    cols_.push_back(std::move(coeffs));
    return n_vars() - 1;
}

void LpProblem::set_row(int row, char sense, double rhs) {
    if (row < 0 || row >= n_rows()) throw std::out_of_range("LpProblem::set_row: bad row");
    if (sense != '=' && sense != '<' && sense != '>')
        throw std::invalid_argument("LpProblem::set_row: sense must be =, < or >");
    senses_[static_cast<size_t>(row)] = sense;
    rhs_[static_cast<size_t>(row)] = rhs;
}

namespace {

constexpr double kRcTol = 1e-9;
constexpr double kPivotTol = 1e-10;
constexpr double kPhase1Tol = 1e-7;

// Standard-form working copy: structural then slack/surplus columns, the
// artificial identity appended last.
struct Standard {
    int m = 0;
    int n_total = 0;  // without artificials
    std::vector<std::vector<std::pair<int, double>>> cols;
    std::vector<double> cost;
    std::vector<double> b;  // >= 0
    int first_artificial = 0;
};

Standard to_standard(const LpProblem& p) {
    Standard s;
    s.m = p.n_rows();
    std::vector<double> row_sign(static_cast<size_t>(s.m), 1.0);
    std::vector<char> sense(static_cast<size_t>(s.m));
    s.b.resize(static_cast<size_t>(s.m));
    for (int r = 0; r < s.m; ++r) {
        double rhs = p.rhs(r);
        char sn = p.sense(r);
        if (rhs < 0.0) {
            rhs = -rhs;
            row_sign[static_cast<size_t>(r)] = -1.0;
            sn = sn == '<' ? '>' : (sn == '>' ? '<' : '=');
        }
        s.b[static_cast<size_t>(r)] = rhs;
        sense[static_cast<size_t>(r)] = sn;
    }
    for (int j = 0; j < p.n_vars(); ++j) {
        std::vector<std::pair<int, double>> col;
        for (const auto& [row, val] : p.column(j))
            col.emplace_back(row, val * row_sign[static_cast<size_t>(row)]);
        s.cols.push_back(std::move(col));
        s.cost.push_back(p.objective()[static_cast<size_t>(j)]);
    }
    for (int r = 0; r < s.m; ++r) {
        if (sense[static_cast<size_t>(r)] == '<')
            s.cols.push_back({{r, 1.0}});
        else if (sense[static_cast<size_t>(r)] == '>')
            s.cols.push_back({{r, -1.0}});
        else
            continue;
        s.cost.push_back(0.0);
    }
    s.n_total = static_cast<int>(s.cols.size());
    s.first_artificial = s.n_total;
    for (int r = 0; r < s.m; ++r) {
        s.cols.push_back({{r, 1.0}});
        s.cost.push_back(0.0);
    }
    return s;
}

class RevisedSimplex {
  public:
    explicit RevisedSimplex(const Standard& s) : s_(s), m_(s.m) {
        basis_.resize(static_cast<size_t>(m_));
        for (int r = 0; r < m_; ++r) basis_[static_cast<size_t>(r)] = s_.first_artificial + r;
        binv_.assign(static_cast<size_t>(m_) * m_, 0.0);
        for (int r = 0; r < m_; ++r) binv_[static_cast<size_t>(r) * m_ + r] = 1.0;
        xb_ = s_.b;
        in_basis_.assign(s_.cols.size(), 0);
        for (int idx : basis_) in_basis_[static_cast<size_t>(idx)] = 1;
    }

    // Minimizes `cost` over columns [0, max_entering). False on iteration
    // limit; *unbounded set when no leaving row exists.
    bool run(const std::vector<double>& cost, int max_entering, int& iterations,
             int iteration_limit, bool* unbounded) {
        *unbounded = false;
        std::vector<double> y(static_cast<size_t>(m_));
        std::vector<double> d(static_cast<size_t>(m_));
        int stall = 0;
        double last_obj = objective(cost);

        while (iterations < iteration_limit) {
            for (int c = 0; c < m_; ++c) {
                double acc = 0.0;
                for (int r = 0; r < m_; ++r)
                    acc += cost[static_cast<size_t>(basis_[static_cast<size_t>(r)])] *
                           binv_[static_cast<size_t>(r) * m_ + c];
                y[static_cast<size_t>(c)] = acc;
            }
            const bool bland = stall > 2 * m_ + 50;  // anti-cycling fallback
            int enter = -1;
            double best_rc = -kRcTol;
            for (int j = 0; j < max_entering; ++j) {
                if (in_basis_[static_cast<size_t>(j)]) continue;
                double rc = cost[static_cast<size_t>(j)];
                for (const auto& [row, val] : s_.cols[static_cast<size_t>(j)])
                    rc -= y[static_cast<size_t>(row)] * val;
                if (rc < (bland ? -kRcTol : best_rc)) {
                    enter = j;
                    best_rc = rc;
                    if (bland) break;
                }
            }
            if (enter < 0) return true;  // optimal

            std::fill(d.begin(), d.end(), 0.0);
            for (const auto& [row, val] : s_.cols[static_cast<size_t>(enter)])
                for (int r = 0; r < m_; ++r)
                    d[static_cast<size_t>(r)] += binv_[static_cast<size_t>(r) * m_ + row] * val;

            int leave = -1;
            double theta = std::numeric_limits<double>::infinity();
            for (int r = 0; r < m_; ++r) {
                if (d[static_cast<size_t>(r)] > kPivotTol) {
                    const double ratio = xb_[static_cast<size_t>(r)] / d[static_cast<size_t>(r)];
                    if (ratio < theta - 1e-12 ||
                        (ratio < theta + 1e-12 && leave >= 0 &&
                         basis_[static_cast<size_t>(r)] < basis_[static_cast<size_t>(leave)])) {
                        theta = ratio;
                        leave = r;
                    }
                }
            }
            if (leave < 0) {
                *unbounded = true;
                return true;
            }

            const double pivot = d[static_cast<size_t>(leave)];
            for (int c = 0; c < m_; ++c) binv_[static_cast<size_t>(leave) * m_ + c] /= pivot;
            for (int r = 0; r < m_; ++r) {
                if (r == leave || std::abs(d[static_cast<size_t>(r)]) < 1e-14) continue;
                const double f = d[static_cast<size_t>(r)];
                const double* src = &binv_[static_cast<size_t>(leave) * m_];
                double* dst = &binv_[static_cast<size_t>(r) * m_];
                for (int c = 0; c < m_; ++c) dst[c] -= f * src[c];
            }
            for (int r = 0; r < m_; ++r)
                if (r != leave) xb_[static_cast<size_t>(r)] -= theta * d[static_cast<size_t>(r)];
            in_basis_[static_cast<size_t>(basis_[static_cast<size_t>(leave)])] = 0;
            basis_[static_cast<size_t>(leave)] = enter;
            in_basis_[static_cast<size_t>(enter)] = 1;
            xb_[static_cast<size_t>(leave)] = theta;
            ++iterations;

            if (iterations % 128 == 0) refactor();
            const double obj = objective(cost);
            if (obj < last_obj - 1e-12) {
                stall = 0;
                last_obj = obj;
            } else {
                ++stall;
            }
        }
        return false;
    }

    double objective(const std::vector<double>& cost) const {
        double acc = 0.0;
        for (int r = 0; r < m_; ++r)
            acc += cost[static_cast<size_t>(basis_[static_cast<size_t>(r)])] *
                   xb_[static_cast<size_t>(r)];
        return acc;
    }

    std::vector<double> extract(int n_structural) const {
        std::vector<double> x(static_cast<size_t>(n_structural), 0.0);
        for (int r = 0; r < m_; ++r) {
            const int j = basis_[static_cast<size_t>(r)];
            if (j < n_structural)
                x[static_cast<size_t>(j)] = std::max(0.0, xb_[static_cast<size_t>(r)]);
        }
        return x;
    }

  private:
    // Rebuild B^-1 by Gauss-Jordan to shed accumulated drift.
    void refactor() {
        std::vector<double> bmat(static_cast<size_t>(m_) * m_, 0.0);
        for (int r = 0; r < m_; ++r)
            for (const auto& [row, val] : s_.cols[static_cast<size_t>(basis_[static_cast<size_t>(r)])])
                bmat[static_cast<size_t>(row) * m_ + r] = val;
        std::vector<double> inv(static_cast<size_t>(m_) * m_, 0.0);
        for (int r = 0; r < m_; ++r) inv[static_cast<size_t>(r) * m_ + r] = 1.0;
        for (int col = 0; col < m_; ++col) {
            int piv = -1;
            double best = kPivotTol;
            for (int r = col; r < m_; ++r) {
                const double v = std::abs(bmat[static_cast<size_t>(r) * m_ + col]);
                if (v > best) {
                    best = v;
                    piv = r;
                }
            }
            if (piv < 0) return;  // keep the incremental inverse
            if (piv != col) {
                for (int c = 0; c < m_; ++c) {
                    std::swap(bmat[static_cast<size_t>(piv) * m_ + c],
                              bmat[static_cast<size_t>(col) * m_ + c]);
                    std::swap(inv[static_cast<size_t>(piv) * m_ + c],
                              inv[static_cast<size_t>(col) * m_ + c]);
                }
            }
            const double pv = bmat[static_cast<size_t>(col) * m_ + col];
            for (int c = 0; c < m_; ++c) {
                bmat[static_cast<size_t>(col) * m_ + c] /= pv;
                inv[static_cast<size_t>(col) * m_ + c] /= pv;
            }
            for (int r = 0; r < m_; ++r) {
                if (r == col) continue;
                const double f = bmat[static_cast<size_t>(r) * m_ + col];
                if (std::abs(f) < 1e-14) continue;
                for (int c = 0; c < m_; ++c) {
                    bmat[static_cast<size_t>(r) * m_ + c] -= f * bmat[static_cast<size_t>(col) * m_ + c];
                    inv[static_cast<size_t>(r) * m_ + c] -= f * inv[static_cast<size_t>(col) * m_ + c];
                }
            }
        }
        binv_ = std::move(inv);
        for (int r = 0; r < m_; ++r) {
            double acc = 0.0;
            for (int c = 0; c < m_; ++c)
                acc += binv_[static_cast<size_t>(r) * m_ + c] * s_.b[static_cast<size_t>(c)];
            xb_[static_cast<size_t>(r)] = std::max(0.0, acc);
        }
    }

    const Standard& s_;
    int m_;
    std::vector<int> basis_;
    std::vector<double> binv_;
    std::vector<double> xb_;
    std::vector<char> in_basis_;
};

}  // namespace

LpSolution solve_lp(const LpProblem& problem, int max_iterations) {
    const Standard s = to_standard(problem);
    RevisedSimplex simplex(s);
    LpSolution sol;

    std::vector<double> phase1(s.cols.size(), 0.0);
    for (size_t j = static_cast<size_t>(s.first_artificial); j < s.cols.size(); ++j) phase1[j] = 1.0;
    bool unbounded = false;
    // Phase 1 prices all non-artificial columns; artificials never re-enter.
    if (!simplex.run(phase1, s.first_artificial, sol.iterations, max_iterations, &unbounded)) {
        sol.status = LpSolution::Status::IterationLimit;
        return sol;
    }
    if (simplex.objective(phase1) > kPhase1Tol) {
        sol.status = LpSolution::Status::Infeasible;
        return sol;
    }

    std::vector<double> phase2(s.cols.size(), 0.0);
    for (int j = 0; j < s.n_total; ++j) phase2[static_cast<size_t>(j)] = s.cost[static_cast<size_t>(j)];
    if (!simplex.run(phase2, s.first_artificial, sol.iterations, max_iterations, &unbounded)) {
        sol.status = LpSolution::Status::IterationLimit;
        return sol;
    }
    if (unbounded) {
        sol.status = LpSolution::Status::Unbounded;
        return sol;
    }
    sol.status = LpSolution::Status::Optimal;
    sol.x = simplex.extract(problem.n_vars());
    sol.objective = 0.0;
    for (int j = 0; j < problem.n_vars(); ++j)
        sol.objective += problem.objective()[static_cast<size_t>(j)] * sol.x[static_cast<size_t>(j)];
    return sol;
}

}  // namespace mf
