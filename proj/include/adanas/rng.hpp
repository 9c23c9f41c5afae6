#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace adanas {

// FNV-1a, used for deriving independent RNG streams and content-addressed caches.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
    // splitmix64 finalizer over the combined words
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= (h >> 30);
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= (h >> 27);
    h *= 0x94d049bb133111ebull;
    h ^= (h >> 31);
    return h;
}

// Deterministic RNG. The distributions are hand-rolled on top of the raw
// mt19937_64 output so that sequences are identical across standard-library
// implementations (std::uniform_real_distribution et al. are not portable).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0,1) with 53 bits of entropy.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0,n)
    int uniform_int(int n) {
        return static_cast<int>(static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(eng_()) * static_cast<std::uint64_t>(n)) >> 64));
    }

    // Box-Muller; draws two uniforms per call, no cached spare.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

    // k distinct indices from [0,n), uniform without replacement, sorted ascending.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < k; ++i) {
            int j = i + uniform_int(n - i);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(k));
        std::sort(idx.begin(), idx.end());
        return idx;
    }

    std::mt19937_64 state() const { return eng_; }
    void set_state(const std::mt19937_64& s) { eng_ = s; }

private:
    std::mt19937_64 eng_;
};

// A named substream of a master seed; independent streams never share draws.
inline Rng derive_rng(std::uint64_t master, std::string_view tag) {
    return Rng(hash_mix(master, fnv1a(tag)));
}

inline Rng derive_rng(std::uint64_t master, std::string_view tag, std::uint64_t salt) {
    return Rng(hash_mix(hash_mix(master, fnv1a(tag)), salt));
}

}  // namespace adanas
