#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "callscape/x86_decode.hpp"

namespace callscape::detail {

// Linear sweep over code mapped at base. Undecodable bytes are skipped one
// at a time. The visitor returns false to stop early.
inline void sweep(std::span<const std::uint8_t> code, std::uint64_t base,
                  const std::function<bool(std::uint64_t, const x86::Instruction&)>& visit) {
  std::size_t offset = 0;
  while (offset < code.size()) {
    const auto insn = x86::decode(code.subspan(offset));
    if (!insn) {
      ++offset;
      continue;
    }
    if (!visit(base + offset, *insn)) return;
    offset += insn->length;
  }
}

inline std::uint64_t branch_target(std::uint64_t address, const x86::Instruction& insn) {
  return address + insn.length + static_cast<std::uint64_t>(insn.immediate);
}

inline std::uint64_t rip_operand(std::uint64_t address, const x86::Instruction& insn) {
  return address + insn.length + static_cast<std::uint64_t>(insn.displacement);
}

}  // namespace callscape::detail
