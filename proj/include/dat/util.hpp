#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace dat {

using Rng = std::mt19937_64;

// FNV-1a over raw bytes; stable across platforms with the same endianness.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text);
std::uint64_t fnv1a(std::span<const double> values);

std::string hex64(std::uint64_t v);

// SplitMix64 mixing; used to derive independent stream seeds from one base seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

// Shortest round-trippable decimal form.
std::string format_double(double v);

}  // namespace dat
