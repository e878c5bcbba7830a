// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/common.h"

namespace usdr {

namespace {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t DeriveSeed(uint64_t base, const std::string& stream, uint64_t index) {
  // FNV-1a over the stream tag; std::hash is not stable across platforms.
  uint64_t tag = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    tag ^= c;
    tag *= 0x100000001b3ULL;
  }
  return SplitMix64(SplitMix64(base ^ tag) + index);
}

}  // namespace usdr
