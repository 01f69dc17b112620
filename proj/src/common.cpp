#include "rfamp/common.hpp"

#include <cstring>
#include <fmt/format.h>

namespace rfamp {

std::vector<double> log_grid(double lo, double hi, int n)
{
    std::vector<double> g(static_cast<std::size_t>(n));
    if (n == 1) {
        g[0] = lo;
        return g;
    }
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (int i = 0; i < n; ++i)
        g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (n - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_doubles(const std::vector<double>& v)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double d : v) {
        if (d == 0.0)
            d = 0.0; // fold -0.0
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &d, sizeof(double));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string hex64(std::uint64_t h)
{
    return fmt::format("{:016x}", h);
}

} // namespace rfamp
