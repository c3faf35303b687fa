#include <fmt/format.h>

#include <algorithm>

#include "rtb/attacks/attacks.hpp"
#include "rtb/common/errors.hpp"
#include "rtb/protocol/modbus.hpp"

namespace rtb::attacks {

const char* to_string(Mutator m) {
  switch (m) {
    case Mutator::bit_flip: return "bit_flip";
    case Mutator::byte_overwrite: return "byte_overwrite";
    case Mutator::truncate: return "truncate";
    case Mutator::extend_random: return "extend_random";
    case Mutator::length_field_corrupt: return "length_field_corrupt";
    case Mutator::function_code_sweep: return "function_code_sweep";
  }
  return "?";
}

std::vector<Mutator> all_mutators() {
  return {Mutator::bit_flip,      Mutator::byte_overwrite,       Mutator::truncate,
          Mutator::extend_random, Mutator::length_field_corrupt, Mutator::function_code_sweep};
}

Mutator mutator_from_string(const std::string& name) {
  for (auto m : all_mutators())
    if (name == to_string(m)) return m;
  throw ConfigError(fmt::format("unknown mutator '{}'", name));
}

std::vector<Bytes> corpus(const std::string& id) {
  if (id == "default") return protocol::default_seed_corpus();
  throw ConfigError(fmt::format("unknown base_frames corpus '{}'", id));
}

namespace {

constexpr std::size_t kLengthField = 4;
constexpr std::size_t kFunctionCode = 7;

// Flips 1..8 distinct bits, so the result always differs from the input.
void flip_bits(Bytes& b, Rng& rng) {
  const std::uint64_t bits = b.size() * 8;
  const auto k = std::min<std::uint64_t>(rng.between(1, 8), bits);
  std::vector<std::uint64_t> chosen;
  while (chosen.size() < k) {
    const auto bit = rng.between(0, bits - 1);
    if (std::find(chosen.begin(), chosen.end(), bit) != chosen.end()) continue;
    chosen.push_back(bit);
    b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
  }
}

}  // namespace

Bytes mutate(ByteView frame, Rng& rng, const std::vector<Mutator>& enabled) {
  if (frame.empty()) throw ConfigError("cannot mutate an empty frame");
  if (enabled.empty()) throw ConfigError("no mutators enabled");
  Bytes out(frame.begin(), frame.end());
  const std::size_t n = out.size();
  Mutator op = enabled[rng.between(0, enabled.size() - 1)];
  // Operators that need bytes the frame does not have fall back to bit flips.
  if ((op == Mutator::length_field_corrupt && n < kLengthField + 2) ||
      (op == Mutator::function_code_sweep && n <= kFunctionCode) || (op == Mutator::truncate && n < 2))
    op = Mutator::bit_flip;

  switch (op) {
    case Mutator::bit_flip:
      flip_bits(out, rng);
      break;
    case Mutator::byte_overwrite:
      out[rng.between(0, n - 1)] = rng.byte();
      break;
    case Mutator::truncate:
      out.resize(rng.between(1, n - 1));
      break;
    case Mutator::extend_random: {
      const auto extra = rng.between(1, n + 16);
      for (std::uint64_t i = 0; i < extra; ++i) out.push_back(rng.byte());
      break;
    }
    case Mutator::length_field_corrupt: {
      const std::uint16_t old = get_u16be(&out[kLengthField]);
      std::uint16_t v = old;
      while (v == old) v = static_cast<std::uint16_t>(rng.next() & 0xFFFF);
      out[kLengthField] = static_cast<std::uint8_t>(v >> 8);
      out[kLengthField + 1] = static_cast<std::uint8_t>(v & 0xFF);
      break;
    }
    case Mutator::function_code_sweep: {
      const std::uint8_t old = out[kFunctionCode];
      std::uint8_t v = old;
      while (v == old) v = rng.byte();
      out[kFunctionCode] = v;
      break;
    }
  }
  return out;
}

}  // namespace rtb::attacks
