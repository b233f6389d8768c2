#pragma once

// Instruction-length decoder for 64-bit mode x86. It recovers instruction
// boundaries and the operand fields needed to resolve calls; it does not
// produce mnemonics.

#include <cstdint>
#include <optional>
#include <span>

namespace callscape::x86 {

enum class OpcodeMap : std::uint8_t { Primary, Map0F, Map0F38, Map0F3A };

struct Instruction {
  std::uint8_t length = 0;
  OpcodeMap map = OpcodeMap::Primary;
  std::uint8_t opcode = 0;
  bool has_modrm = false;
  std::uint8_t modrm = 0;
  bool rip_relative = false;
  std::int64_t displacement = 0;
  std::int64_t immediate = 0;  // sign-extended; relative target offset for branches
  bool operand_size_override = false;
  bool vex = false;
  std::uint8_t rep_prefix = 0;  // 0xF2, 0xF3 or 0

  std::uint8_t modrm_reg() const { return (modrm >> 3) & 7; }
  std::uint8_t modrm_mod() const { return modrm >> 6; }
  std::uint8_t modrm_rm() const { return modrm & 7; }

  bool is_direct_call() const { return map == OpcodeMap::Primary && opcode == 0xE8; }
  // call qword ptr [rip+disp32]
  bool is_rip_indirect_call() const {
    return map == OpcodeMap::Primary && opcode == 0xFF && has_modrm && modrm_reg() == 2 &&
           rip_relative;
  }
  bool is_endbr64() const;
};

// Decodes one instruction at the start of code. Returns nullopt for bytes
// that are not a valid 64-bit mode encoding or run past the buffer.
std::optional<Instruction> decode(std::span<const std::uint8_t> code);

}  // namespace callscape::x86
