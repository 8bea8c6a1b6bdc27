#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace tsc {

// 64-bit FNV-1a. Used for config and checkpoint content hashes.
class Fnv1a {
 public:
  void update(const void* data, std::size_t size);
  void update(std::string_view text) { update(text.data(), text.size()); }
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string fnv1a_hex(std::string_view text);

}  // namespace tsc
