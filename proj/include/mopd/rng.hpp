// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded generator with portable transforms (std distributions differ
// between standard libraries, which breaks bit-identical replays).

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mopd {

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // [0, 1)
    double uniform();
    double normal();
    // [0, n)
    std::size_t uniform_index(std::size_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // T distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t t);

    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derive independent stream seeds from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

} // namespace mopd
