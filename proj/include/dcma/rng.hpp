#ifndef DCMA_RNG_HPP
#define DCMA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dcma
{

// Counter-based generator: draw i is a pure function of (seed, name, i), so
// every check gets the same stream no matter how work is scheduled.
class counter_rng
{
public:
    counter_rng(std::uint64_t seed, std::string_view name) : m_key(mix(seed ^ fnv1a(name))) {}

    std::uint64_t operator()()
    {
        return mix(m_key + 0x9e3779b97f4a7c15ull * ++m_counter);
    }
    // [0, 1)
    double uniform()
    {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }
    double uniform(double a, double b)
    {
        return a + (b - a) * uniform();
    }
    double normal()
    {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    std::uint64_t counter() const
    {
        return m_counter;
    }

    static std::uint64_t fnv1a(std::string_view s)
    {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z)
    {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t m_key;
    std::uint64_t m_counter = 0;
};

} // namespace dcma

#endif
