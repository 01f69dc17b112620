#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "rfamp/bench.hpp"
#include "rfamp/evaluator.hpp"

namespace fixtures {

inline const rfamp::DeviceKb& kb()
{
    static const rfamp::DeviceKb instance(7);
    return instance;
}

inline std::filesystem::path data_dir() { return RFAMP_DATA_DIR; }

inline double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v)
{
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline rfamp::MCRPhysical random_mcr(std::mt19937_64& rng)
{
    rfamp::MCRPhysical m;
    m.k = uniform(rng, 0.1, 0.6);
    m.l1 = uniform(rng, 100, 800);
    m.l2 = uniform(rng, 100, 800);
    m.r1 = uniform(rng, 100, 2000);
    m.r2 = uniform(rng, 100, 2000);
    m.c1 = uniform(rng, 10, 150);
    m.c2 = uniform(rng, 10, 150);
    return m;
}

/// A random chain of any composition: optional match, active and MCR blocks, optional load.
inline rfamp::Chain random_chain(std::mt19937_64& rng, bool passive_only = false)
{
    rfamp::Chain c;
    if (std::bernoulli_distribution(0.6)(rng))
        c.push_back(rfamp::InputMatchBlock{std::bernoulli_distribution(0.3)(rng) ? 0.0 : uniform(rng, 50, 1500),
                                           uniform(rng, 0, 1200)});
    const int n = std::uniform_int_distribution<int>(1, 6)(rng);
    for (int i = 0; i < n; ++i) {
        if (!passive_only && std::bernoulli_distribution(0.5)(rng)) {
            const auto kind = std::bernoulli_distribution(0.5)(rng) ? rfamp::DeviceKind::CascodeSingleEnded
                                                                    : rfamp::DeviceKind::DiffCommonSource;
            const double ls = std::bernoulli_distribution(0.5)(rng) ? 0.0 : uniform(rng, 20, 400);
            c.push_back(rfamp::ActiveBlock{pick(rng, kb().table(kind)), ls});
        } else {
            c.push_back(rfamp::McrBlock{random_mcr(rng)});
        }
    }
    if (!passive_only && std::bernoulli_distribution(0.5)(rng))
        c.push_back(rfamp::LoadBlock{uniform(rng, 200, 3000), uniform(rng, 5, 100)});
    return c;
}

/// Grid candidate built from random table records and random passives.
inline rfamp::CandidateDesign random_candidate(std::mt19937_64& rng)
{
    rfamp::CandidateDesign d;
    const auto kinds = rfamp::default_stage_kinds(3);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& r = pick(rng, kb().table(kinds[i]));
        d.width[i] = r.width;
        d.vgs[i] = r.vbias;
        d.mcr[i] = random_mcr(rng);
    }
    d.l_par = std::bernoulli_distribution(0.3)(rng) ? 0.0 : uniform(rng, 50, 1500);
    d.l_g = uniform(rng, 0, 1200);
    d.l_s = uniform(rng, 0, 300);
    return d;
}

inline rfamp::DesignSpec unconstrained_spec()
{
    rfamp::DesignSpec s;
    s.id = "open";
    s.gain = rfamp::kInf;
    s.nf_max = rfamp::kInf;
    s.ip1db_min = -rfamp::kInf;
    s.s11_max = rfamp::kInf;
    return s;
}

inline double rel_err(std::complex<double> a, std::complex<double> b)
{
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

/// Fresh directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("rfamp_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace fixtures
