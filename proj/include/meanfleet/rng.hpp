#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace mf {

// Splittable deterministic random stream. Every consumer receives its own
// stream derived from the root seed via fork(), so replacing or reordering
// one consumer never perturbs the draws of another. State advances with
// SplitMix64; forks mix the child salt into the parent seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Child stream independent of further draws from this one.
    Rng fork(std::uint64_t salt) const {
        std::uint64_t z = state_ ^ (0x9e3779b97f4a7c15ull * (salt + 0x632be59bd9b4e019ull));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return Rng(z ^ (z >> 31));
    }

    // Uniform on [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one spare cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        if (n <= 1) return 0;
        return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
    }

    // Knuth's product method; per-zone means stay small in this model.
    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        int count = 0;
        double threshold = std::exp(-mean);
        // Split large means so the running product stays away from underflow.
        while (mean > 500.0) {
            count += poisson(500.0);
            mean -= 500.0;
            threshold = std::exp(-mean);
        }
        double prod = uniform();
        while (prod > threshold) {
            ++count;
            prod *= uniform();
        }
        return count;
    }

    // Index distributed proportionally to nonnegative weights (need not be
    // normalized). Returns last positive-weight index on accumulated-rounding
    // fallthrough.
    int sample_discrete(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) return 0;
        double u = uniform() * total;
        int last_pos = 0;
        for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
            if (weights[i] > 0.0) last_pos = i;
            u -= weights[i];
            if (u < 0.0 && weights[i] > 0.0) return i;
        }
        return last_pos;
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace mf
