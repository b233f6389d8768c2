#include "callscape/x86_decode.hpp"

#include <array>
#include <cstring>

namespace callscape::x86 {
namespace {

enum class Imm : std::uint8_t { None, B, W, Z, V64, Moffs, WB, Rel32 };

constexpr std::size_t kMaxLength = 15;

struct Tables {
  std::array<bool, 256> primary_modrm{};
  std::array<Imm, 256> primary_imm{};
  std::array<bool, 256> primary_invalid{};
  std::array<bool, 256> map0f_no_modrm{};
  std::array<Imm, 256> map0f_imm{};

  constexpr Tables() {
    for (int op = 0; op < 0x40; ++op) {
      if ((op & 7) < 4) primary_modrm[op] = true;
      if ((op & 7) == 4) primary_imm[op] = Imm::B;
      if ((op & 7) == 5) primary_imm[op] = Imm::Z;
    }
    for (int op : {0x63, 0x69, 0x6B, 0xC0, 0xC1, 0xC6, 0xC7, 0xD0, 0xD1, 0xD2, 0xD3, 0xF6,
                   0xF7, 0xFE, 0xFF})
      primary_modrm[op] = true;
    for (int op = 0x80; op <= 0x8F; ++op) primary_modrm[op] = true;
    for (int op = 0xD8; op <= 0xDF; ++op) primary_modrm[op] = true;

    primary_imm[0x68] = Imm::Z;
    primary_imm[0x69] = Imm::Z;
    primary_imm[0x6A] = Imm::B;
    primary_imm[0x6B] = Imm::B;
    for (int op = 0x70; op <= 0x7F; ++op) primary_imm[op] = Imm::B;
    primary_imm[0x80] = Imm::B;
    primary_imm[0x81] = Imm::Z;
    primary_imm[0x83] = Imm::B;
    for (int op = 0xA0; op <= 0xA3; ++op) primary_imm[op] = Imm::Moffs;
    primary_imm[0xA8] = Imm::B;
    primary_imm[0xA9] = Imm::Z;
    for (int op = 0xB0; op <= 0xB7; ++op) primary_imm[op] = Imm::B;
    for (int op = 0xB8; op <= 0xBF; ++op) primary_imm[op] = Imm::V64;
    primary_imm[0xC0] = Imm::B;
    primary_imm[0xC1] = Imm::B;
    primary_imm[0xC2] = Imm::W;
    primary_imm[0xC6] = Imm::B;
    primary_imm[0xC7] = Imm::Z;
    primary_imm[0xC8] = Imm::WB;
    primary_imm[0xCA] = Imm::W;
    primary_imm[0xCD] = Imm::B;
    for (int op = 0xE0; op <= 0xE7; ++op) primary_imm[op] = Imm::B;
    primary_imm[0xE8] = Imm::Rel32;
    primary_imm[0xE9] = Imm::Rel32;
    primary_imm[0xEB] = Imm::B;

    for (int op : {0x06, 0x07, 0x0E, 0x16, 0x17, 0x1E, 0x1F, 0x27, 0x2F, 0x37, 0x3F, 0x60,
                   0x61, 0x82, 0x9A, 0xCE, 0xD4, 0xD5, 0xD6, 0xEA})
      primary_invalid[op] = true;

    for (int op : {0x05, 0x06, 0x07, 0x08, 0x09, 0x0B, 0x0E, 0x77, 0xA0, 0xA1, 0xA2, 0xA8,
                   0xA9, 0xAA})
      map0f_no_modrm[op] = true;
    for (int op = 0x30; op <= 0x37; ++op) map0f_no_modrm[op] = true;
    for (int op = 0x80; op <= 0x8F; ++op) {
      map0f_no_modrm[op] = true;
      map0f_imm[op] = Imm::Rel32;
    }
    for (int op = 0xC8; op <= 0xCF; ++op) map0f_no_modrm[op] = true;
    for (int op : {0x0F, 0x70, 0x71, 0x72, 0x73, 0xA4, 0xAC, 0xBA, 0xC2, 0xC4, 0xC5, 0xC6})
      map0f_imm[op] = Imm::B;
  }
};

constexpr Tables kTables;

bool vex_map1_has_imm8(std::uint8_t op) {
  return (op >= 0x70 && op <= 0x73) || op == 0xC2 || op == 0xC4 || op == 0xC5 || op == 0xC6;
}

std::int64_t read_signed(std::span<const std::uint8_t> code, std::size_t pos, std::size_t width) {
  switch (width) {
    case 1: return static_cast<std::int8_t>(code[pos]);
    case 2: {
      std::int16_t v;
      std::memcpy(&v, code.data() + pos, 2);
      return v;
    }
    case 4: {
      std::int32_t v;
      std::memcpy(&v, code.data() + pos, 4);
      return v;
    }
    case 8: {
      std::int64_t v;
      std::memcpy(&v, code.data() + pos, 8);
      return v;
    }
    default: return 0;
  }
}

}  // namespace

bool Instruction::is_endbr64() const {
  return map == OpcodeMap::Map0F && opcode == 0x1E && rep_prefix == 0xF3 && has_modrm &&
         modrm == 0xFA;
}

std::optional<Instruction> decode(std::span<const std::uint8_t> code) {
  Instruction insn;
  std::size_t pos = 0;
  bool addr32 = false;
  bool rex_w = false;
  auto have = [&](std::size_t n) { return pos + n <= code.size() && pos + n <= kMaxLength; };

  // Legacy prefixes.
  while (have(1)) {
    const std::uint8_t b = code[pos];
    if (b == 0x66) {
      insn.operand_size_override = true;
    } else if (b == 0x67) {
      addr32 = true;
    } else if (b == 0xF2 || b == 0xF3) {
      insn.rep_prefix = b;
    } else if (b == 0xF0 || b == 0x2E || b == 0x36 || b == 0x3E || b == 0x26 || b == 0x64 ||
               b == 0x65) {
      // lock / segment
    } else {
      break;
    }
    ++pos;
  }
  if (!have(1)) return std::nullopt;

  if ((code[pos] & 0xF0) == 0x40) {
    rex_w = (code[pos] & 0x08) != 0;
    ++pos;
    if (!have(1)) return std::nullopt;
  }

  Imm imm = Imm::None;
  const std::uint8_t lead = code[pos];
  if (lead == 0xC4 || lead == 0xC5 || lead == 0x62) {
    insn.vex = true;
    int map_select = 1;
    if (lead == 0xC5) {
      if (!have(2)) return std::nullopt;
      pos += 2;
    } else if (lead == 0xC4) {
      if (!have(3)) return std::nullopt;
      map_select = code[pos + 1] & 0x1F;
      rex_w = (code[pos + 2] & 0x80) != 0;
      pos += 3;
    } else {
      if (!have(4)) return std::nullopt;
      map_select = code[pos + 1] & 0x07;
      if ((code[pos + 2] & 0x04) == 0) return std::nullopt;  // EVEX P1 bit 2 is fixed at 1
      pos += 4;
    }
    if (!have(1)) return std::nullopt;
    insn.opcode = code[pos++];
    switch (map_select) {
      case 1:
        insn.map = OpcodeMap::Map0F;
        if (insn.opcode == 0x77) {  // vzeroupper / vzeroall
          insn.length = static_cast<std::uint8_t>(pos);
          return insn;
        }
        if (vex_map1_has_imm8(insn.opcode)) imm = Imm::B;
        break;
      case 2: insn.map = OpcodeMap::Map0F38; break;
      case 3:
        insn.map = OpcodeMap::Map0F3A;
        imm = Imm::B;
        break;
      case 5:
      case 6: insn.map = OpcodeMap::Map0F38; break;  // AVX512-FP16 maps, no immediate
      default: return std::nullopt;
    }
    insn.has_modrm = true;
  } else if (lead == 0x0F) {
    if (!have(2)) return std::nullopt;
    const std::uint8_t second = code[pos + 1];
    if (second == 0x38 || second == 0x3A) {
      if (!have(3)) return std::nullopt;
      insn.map = second == 0x38 ? OpcodeMap::Map0F38 : OpcodeMap::Map0F3A;
      insn.opcode = code[pos + 2];
      insn.has_modrm = true;
      if (second == 0x3A) imm = Imm::B;
      pos += 3;
    } else {
      if (second == 0x04 || second == 0x0A || second == 0x0C || second == 0x24 ||
          second == 0x25 || second == 0x26 || second == 0x27 || second == 0x36 ||
          second == 0x39 || second == 0x3B || second == 0x3C || second == 0x3D ||
          second == 0x3E || second == 0x3F || second == 0xFF)
        return std::nullopt;
      insn.map = OpcodeMap::Map0F;
      insn.opcode = second;
      insn.has_modrm = !kTables.map0f_no_modrm[second];
      imm = kTables.map0f_imm[second];
      pos += 2;
    }
  } else {
    if (kTables.primary_invalid[lead]) return std::nullopt;
    insn.map = OpcodeMap::Primary;
    insn.opcode = lead;
    insn.has_modrm = kTables.primary_modrm[lead];
    imm = kTables.primary_imm[lead];
    ++pos;
  }

  if (insn.has_modrm) {
    if (!have(1)) return std::nullopt;
    insn.modrm = code[pos++];
    const std::uint8_t mod = insn.modrm_mod();
    const std::uint8_t rm = insn.modrm_rm();
    std::size_t disp_width = 0;
    if (mod != 3) {
      if (rm == 4) {
        if (!have(1)) return std::nullopt;
        const std::uint8_t sib = code[pos++];
        if (mod == 0 && (sib & 7) == 5) disp_width = 4;
      }
      if (mod == 0 && rm == 5) {
        disp_width = 4;
        insn.rip_relative = true;
      }
      if (mod == 1) disp_width = 1;
      if (mod == 2) disp_width = 4;
    }
    if (disp_width) {
      if (!have(disp_width)) return std::nullopt;
      insn.displacement = read_signed(code, pos, disp_width);
      pos += disp_width;
    }
    if (insn.map == OpcodeMap::Primary && (insn.opcode == 0xF6 || insn.opcode == 0xF7) &&
        insn.modrm_reg() < 2)
      imm = insn.opcode == 0xF6 ? Imm::B : Imm::Z;
  }

  std::size_t imm_width = 0;
  switch (imm) {
    case Imm::None: break;
    case Imm::B: imm_width = 1; break;
    case Imm::W: imm_width = 2; break;
    case Imm::Z: imm_width = insn.operand_size_override ? 2 : 4; break;
    case Imm::V64: imm_width = rex_w ? 8 : (insn.operand_size_override ? 2 : 4); break;
    case Imm::Moffs: imm_width = addr32 ? 4 : 8; break;
    case Imm::WB: imm_width = 3; break;
    case Imm::Rel32: imm_width = 4; break;
  }
  if (imm_width) {
    if (!have(imm_width)) return std::nullopt;
    insn.immediate = imm == Imm::WB ? read_signed(code, pos, 2) : read_signed(code, pos, imm_width);
    pos += imm_width;
  }

  insn.length = static_cast<std::uint8_t>(pos);
  return insn;
}

}  // namespace callscape::x86
