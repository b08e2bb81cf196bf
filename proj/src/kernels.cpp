#include "meanfleet/kernels.hpp"

#include <cstring>

namespace mf::kernels {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate,
               bool parallel) {
    if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
#pragma omp parallel for schedule(static) if (parallel && static_cast<long long>(m) * k * n > 65536)
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<size_t>(i) * n;
        const double* ai = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            if (av == 0.0) continue;
            const double* bk = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate,
               bool parallel) {
    if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
#pragma omp parallel for schedule(static) if (parallel && static_cast<long long>(m) * k * n > 65536)
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<size_t>(i) * n;
        const double* ai = a + static_cast<size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            ci[j] += acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate,
               bool parallel) {
    if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(k) * n);
#pragma omp parallel for schedule(static) if (parallel && static_cast<long long>(m) * k * n > 65536)
    for (int kk = 0; kk < k; ++kk) {
        double* ck = c + static_cast<size_t>(kk) * n;
        for (int i = 0; i < m; ++i) {
            const double av = a[static_cast<size_t>(i) * k + kk];
            if (av == 0.0) continue;
            const double* bi = b + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) ck[j] += av * bi[j];
        }
    }
}

}  // namespace mf::kernels
