#include <elf.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "callscape/binary.hpp"
#include "sweep.hpp"

namespace callscape {
namespace {

struct Section {
  std::string name;
  Elf64_Shdr header{};
};

class ElfView {
 public:
  explicit ElfView(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), ELFMAG, SELFMAG) != 0)
      throw BinaryError(BinaryErrc::NotElf, "file does not start with the ELF magic");
    if (bytes.size() < EI_NIDENT)
      throw BinaryError(BinaryErrc::Truncated, "ELF identification is truncated");
    if (bytes[EI_CLASS] != ELFCLASS64)
      throw BinaryError(BinaryErrc::UnsupportedArch, "only ELF64 is supported");
    if (bytes[EI_DATA] != ELFDATA2LSB)
      throw BinaryError(BinaryErrc::UnsupportedArch, "only little-endian ELF is supported");
    ehdr_ = read<Elf64_Ehdr>(0);
    if (ehdr_.e_machine != EM_X86_64)
      throw BinaryError(BinaryErrc::UnsupportedArch,
                        "unsupported machine " + std::to_string(ehdr_.e_machine));

    if (ehdr_.e_shoff != 0 && ehdr_.e_shnum != 0) {
      if (ehdr_.e_shentsize < sizeof(Elf64_Shdr))
        throw BinaryError(BinaryErrc::Truncated, "section header entries too small");
      check_range(ehdr_.e_shoff, std::uint64_t{ehdr_.e_shnum} * ehdr_.e_shentsize,
                  "section header table");
      for (unsigned i = 0; i < ehdr_.e_shnum; ++i)
        sections_.push_back({{}, read<Elf64_Shdr>(ehdr_.e_shoff + i * ehdr_.e_shentsize)});
      if (ehdr_.e_shstrndx < sections_.size()) {
        const auto& strtab = sections_[ehdr_.e_shstrndx].header;
        for (auto& s : sections_) s.name = string_at(strtab, s.header.sh_name);
      }
    }
    if (ehdr_.e_phoff != 0 && ehdr_.e_phnum != 0) {
      if (ehdr_.e_phentsize < sizeof(Elf64_Phdr))
        throw BinaryError(BinaryErrc::Truncated, "program header entries too small");
      check_range(ehdr_.e_phoff, std::uint64_t{ehdr_.e_phnum} * ehdr_.e_phentsize,
                  "program header table");
      for (unsigned i = 0; i < ehdr_.e_phnum; ++i)
        segments_.push_back(read<Elf64_Phdr>(ehdr_.e_phoff + i * ehdr_.e_phentsize));
    }
  }

  const Elf64_Ehdr& header() const { return ehdr_; }
  const std::vector<Section>& sections() const { return sections_; }
  const std::vector<Elf64_Phdr>& segments() const { return segments_; }

  const Section* section(std::string_view name) const {
    for (const auto& s : sections_)
      if (s.name == name) return &s;
    return nullptr;
  }

  void check_range(std::uint64_t offset, std::uint64_t size, const char* what) const {
    if (offset > bytes_.size() || size > bytes_.size() - offset)
      throw BinaryError(BinaryErrc::Truncated,
                        std::string(what) + " extends past the end of the file");
  }

  template <typename T>
  T read(std::uint64_t offset) const {
    check_range(offset, sizeof(T), "structure");
    T value;
    std::memcpy(&value, bytes_.data() + offset, sizeof(T));
    return value;
  }

  std::string string_at(const Elf64_Shdr& strtab, std::uint64_t index) const {
    if (strtab.sh_type == SHT_NOBITS) return {};
    check_range(strtab.sh_offset, strtab.sh_size, "string table");
    if (index >= strtab.sh_size) return {};
    const char* begin = reinterpret_cast<const char*>(bytes_.data() + strtab.sh_offset + index);
    const std::size_t max = strtab.sh_size - index;
    return std::string(begin, strnlen(begin, max));
  }

  struct Symbol {
    std::string name;
    Elf64_Sym sym{};
  };

  std::vector<Symbol> symbols(const Section& table) const {
    std::vector<Symbol> out;
    if (table.header.sh_type == SHT_NOBITS || table.header.sh_entsize < sizeof(Elf64_Sym))
      return out;
    check_range(table.header.sh_offset, table.header.sh_size, table.name.c_str());
    if (table.header.sh_link >= sections_.size()) return out;
    const auto& strtab = sections_[table.header.sh_link].header;
    const std::uint64_t count = table.header.sh_size / table.header.sh_entsize;
    for (std::uint64_t i = 0; i < count; ++i) {
      Symbol s;
      s.sym = read<Elf64_Sym>(table.header.sh_offset + i * table.header.sh_entsize);
      s.name = string_at(strtab, s.sym.st_name);
      out.push_back(std::move(s));
    }
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  Elf64_Ehdr ehdr_{};
  std::vector<Section> sections_;
  std::vector<Elf64_Phdr> segments_;
};

bool is_plt_section(std::string_view name) {
  return name == ".plt" || name == ".plt.sec" || name == ".plt.got" || name == ".iplt";
}

struct LocalSymbol {
  std::uint64_t address = 0;
  std::uint64_t size = 0;
  std::string name;
  bool global = false;
};

void collect_imports(const ElfView& elf, BinaryProgram& program) {
  for (const auto& rel : elf.sections()) {
    if (rel.header.sh_type != SHT_RELA || rel.header.sh_entsize < sizeof(Elf64_Rela)) continue;
    if (rel.header.sh_link == 0 || rel.header.sh_link >= elf.sections().size()) continue;
    const auto symbols = elf.symbols(elf.sections()[rel.header.sh_link]);
    elf.check_range(rel.header.sh_offset, rel.header.sh_size, rel.name.c_str());
    const std::uint64_t count = rel.header.sh_size / rel.header.sh_entsize;
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto r = elf.read<Elf64_Rela>(rel.header.sh_offset + i * rel.header.sh_entsize);
      const auto type = ELF64_R_TYPE(r.r_info);
      const auto index = ELF64_R_SYM(r.r_info);
      if (type != R_X86_64_JUMP_SLOT && type != R_X86_64_GLOB_DAT) continue;
      if (index == 0 || index >= symbols.size()) continue;
      const auto& sym = symbols[index];
      if (sym.sym.st_shndx != SHN_UNDEF || sym.name.empty()) continue;
      if (type == R_X86_64_GLOB_DAT && ELF64_ST_TYPE(sym.sym.st_info) != STT_FUNC) continue;
      program.got_imports[r.r_offset] = sym.name;
    }
  }

  for (const auto& sec : elf.sections()) {
    if (!is_plt_section(sec.name) || sec.header.sh_type == SHT_NOBITS) continue;
    elf.check_range(sec.header.sh_offset, sec.header.sh_size, sec.name.c_str());
    const std::uint64_t entry_size = sec.header.sh_entsize ? sec.header.sh_entsize : 16;
    const auto code = program.bytes_at(sec.header.sh_addr, sec.header.sh_size);
    detail::sweep(code, sec.header.sh_addr, [&](std::uint64_t addr, const x86::Instruction& insn) {
      const bool indirect_jmp = insn.map == x86::OpcodeMap::Primary && insn.opcode == 0xFF &&
                                insn.has_modrm && insn.modrm_reg() == 4 && insn.rip_relative;
      if (indirect_jmp) {
        const auto slot = detail::rip_operand(addr, insn);
        if (auto it = program.got_imports.find(slot); it != program.got_imports.end()) {
          const auto stub =
              sec.header.sh_addr + (addr - sec.header.sh_addr) / entry_size * entry_size;
          program.plt_stubs.emplace(stub, it->second);
        }
      }
      return true;
    });
  }
}

std::vector<AddressRange> code_ranges(const ElfView& elf, const BinaryProgram& program) {
  std::vector<AddressRange> ranges;
  for (const auto& sec : elf.sections()) {
    if (!(sec.header.sh_flags & SHF_EXECINSTR) || sec.header.sh_type != SHT_PROGBITS) continue;
    if (is_plt_section(sec.name)) continue;
    ranges.push_back({sec.header.sh_addr, sec.header.sh_addr + sec.header.sh_size});
  }
  if (ranges.empty() && elf.sections().empty())
    for (const auto& seg : program.executable) ranges.push_back({seg.vaddr, seg.vaddr + seg.size});
  std::sort(ranges.begin(), ranges.end(),
            [](const AddressRange& a, const AddressRange& b) { return a.begin < b.begin; });
  return ranges;
}

std::vector<LocalSymbol> defined_functions(const ElfView& elf, const BinaryProgram& program) {
  std::vector<LocalSymbol> out;
  for (const char* table : {".symtab", ".dynsym"}) {
    const Section* sec = elf.section(table);
    if (!sec) continue;
    for (const auto& s : elf.symbols(*sec)) {
      if (ELF64_ST_TYPE(s.sym.st_info) != STT_FUNC) continue;
      if (s.sym.st_shndx == SHN_UNDEF || s.sym.st_value == 0 || s.name.empty()) continue;
      if (!program.is_executable(s.sym.st_value)) continue;
      out.push_back({s.sym.st_value, s.sym.st_size, s.name,
                     ELF64_ST_BIND(s.sym.st_info) != STB_LOCAL});
    }
  }
  // One record per address: prefer global binding, then the smallest name.
  std::sort(out.begin(), out.end(), [](const LocalSymbol& a, const LocalSymbol& b) {
    if (a.address != b.address) return a.address < b.address;
    if (a.global != b.global) return a.global;
    if (a.size != b.size) return a.size > b.size;
    return a.name < b.name;
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const LocalSymbol& a, const LocalSymbol& b) {
                          return a.address == b.address;
                        }),
            out.end());
  return out;
}

std::string sub_name(std::uint64_t address) {
  return "sub_" + hex_address(address).substr(2);
}

// Function starts for images without symbols: the entry point, direct call
// targets and endbr64 landing pads found by sweeping the code ranges.
std::vector<LocalSymbol> synthesize_functions(const BinaryProgram& program,
                                              const std::vector<AddressRange>& ranges,
                                              std::uint64_t entry) {
  std::set<std::uint64_t> starts;
  auto in_code = [&](std::uint64_t addr) {
    return std::any_of(ranges.begin(), ranges.end(),
                       [&](const AddressRange& r) { return r.contains(addr); });
  };
  if (in_code(entry)) starts.insert(entry);
  for (const auto& range : ranges) {
    const auto code = program.bytes_at(range.begin, range.end - range.begin);
    detail::sweep(code, range.begin, [&](std::uint64_t addr, const x86::Instruction& insn) {
      if (insn.is_endbr64()) starts.insert(addr);
      if (insn.is_direct_call()) {
        const auto target = detail::branch_target(addr, insn);
        if (in_code(target)) starts.insert(target);
      }
      return true;
    });
  }
  std::vector<LocalSymbol> out;
  for (auto it = starts.begin(); it != starts.end(); ++it) {
    const auto range = std::find_if(ranges.begin(), ranges.end(),
                                    [&](const AddressRange& r) { return r.contains(*it); });
    auto next = std::next(it);
    std::uint64_t end = range->end;
    if (next != starts.end() && *next < end) end = *next;
    out.push_back({*it, end - *it, sub_name(*it), true});
  }
  return out;
}

// Gives each symbol without a usable size the distance to the next start.
void fill_sizes(std::vector<LocalSymbol>& functions, const std::vector<AddressRange>& ranges) {
  for (std::size_t i = 0; i < functions.size(); ++i) {
    auto& fn = functions[i];
    if (fn.size != 0) continue;
    std::uint64_t end = fn.address;
    for (const auto& r : ranges)
      if (r.contains(fn.address)) end = r.end;
    if (i + 1 < functions.size() && functions[i + 1].address < end)
      end = functions[i + 1].address;
    fn.size = end - fn.address;
  }
}

void assign_names(BinaryProgram& program, const std::vector<LocalSymbol>& locals) {
  std::map<std::string, std::uint64_t> imports;  // name -> lowest stub address
  for (const auto& [slot, name] : program.got_imports) imports.emplace(name, 0);
  for (const auto& [stub, name] : program.plt_stubs) {
    auto& addr = imports[name];
    if (addr == 0 || stub < addr) addr = stub;
  }

  std::set<std::string> taken;
  for (const auto& [name, addr] : imports) {
    FunctionRecord fn;
    fn.id = fn.name = name;
    fn.address = addr;
    fn.is_import = true;
    taken.insert(name);
    program.functions.push_back(std::move(fn));
  }
  std::map<std::string, int> local_counts;
  for (const auto& sym : locals) ++local_counts[sym.name];
  for (const auto& sym : locals) {
    FunctionRecord fn;
    fn.name = sym.name;
    if (taken.count(sym.name) || local_counts[sym.name] > 1)
      fn.name = sym.name + "@" + hex_address(sym.address);
    fn.id = fn.name;
    fn.address = sym.address;
    fn.size = sym.size;
    taken.insert(fn.name);
    program.functions.push_back(std::move(fn));
  }
}

void sort_functions(std::vector<FunctionRecord>& functions) {
  std::sort(functions.begin(), functions.end(),
            [](const FunctionRecord& a, const FunctionRecord& b) {
              if (a.is_import != b.is_import) return !a.is_import;
              if (a.address != b.address) return a.address < b.address;
              return a.name < b.name;
            });
}

// Adds records for direct-call targets that land in executable memory but
// outside every known function.
void add_orphan_targets(BinaryProgram& program) {
  std::set<std::uint64_t> orphans;
  for (const auto& fn : program.functions) {
    if (fn.is_import || fn.size == 0) continue;
    const auto code = program.bytes_at(fn.address, fn.size);
    detail::sweep(code, fn.address, [&](std::uint64_t addr, const x86::Instruction& insn) {
      if (!insn.is_direct_call()) return true;
      const auto target = detail::branch_target(addr, insn);
      if (program.plt_stubs.count(target) || program.containing(target) ||
          program.find_by_address(target) || !program.is_executable(target))
        return true;
      orphans.insert(target);
      return true;
    });
  }
  for (auto addr : orphans) {
    FunctionRecord fn;
    fn.id = fn.name = sub_name(addr);
    fn.address = addr;
    program.functions.push_back(std::move(fn));
  }
  if (!orphans.empty()) sort_functions(program.functions);
}

}  // namespace

std::string_view to_string(BinaryErrc code) {
  switch (code) {
    case BinaryErrc::NotElf: return "NotElf";
    case BinaryErrc::UnsupportedArch: return "UnsupportedArch";
    case BinaryErrc::Truncated: return "Truncated";
    case BinaryErrc::NoTextSegment: return "NoTextSegment";
    case BinaryErrc::SchemaViolation: return "SchemaViolation";
    case BinaryErrc::DanglingEdge: return "DanglingEdge";
    case BinaryErrc::Io: return "Io";
  }
  return "Unknown";
}

std::string hex_address(std::uint64_t addr) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  do {
    out.push_back(kDigits[addr & 0xF]);
    addr >>= 4;
  } while (addr);
  out += "x0";
  std::reverse(out.begin(), out.end());
  return out;
}

std::string file_id_for(std::span<const std::uint8_t> bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return "bin-" + hex_address(hash).substr(2);
}

const FunctionRecord* BinaryProgram::find(std::string_view id) const {
  for (const auto& fn : functions)
    if (fn.id == id) return &fn;
  return nullptr;
}

const FunctionRecord* BinaryProgram::find_by_address(std::uint64_t addr) const {
  for (const auto& fn : functions)
    if (!fn.is_import && fn.address == addr) return &fn;
  return nullptr;
}

const FunctionRecord* BinaryProgram::containing(std::uint64_t addr) const {
  for (const auto& fn : functions)
    if (!fn.is_import && addr >= fn.address && addr < fn.address + fn.size) return &fn;
  return nullptr;
}

std::span<const std::uint8_t> BinaryProgram::bytes_at(std::uint64_t addr,
                                                      std::uint64_t len) const {
  for (const auto& seg : executable) {
    if (addr < seg.vaddr || addr >= seg.vaddr + seg.size) continue;
    const auto offset = addr - seg.vaddr;
    const auto avail = std::min<std::uint64_t>(len, seg.size - offset);
    return std::span<const std::uint8_t>(image).subspan(seg.file_offset + offset, avail);
  }
  return {};
}

bool BinaryProgram::is_executable(std::uint64_t addr) const {
  return std::any_of(executable.begin(), executable.end(), [&](const Segment& seg) {
    return addr >= seg.vaddr && addr < seg.vaddr + seg.size;
  });
}

BinaryProgram load_binary_image(std::vector<std::uint8_t> bytes,
                                const std::filesystem::path& path) {
  BinaryProgram program;
  program.path = path;
  program.file_id = file_id_for(bytes);
  program.image = std::move(bytes);
  const ElfView elf(program.image);

  for (const auto& ph : elf.segments()) {
    if (ph.p_type != PT_LOAD || !(ph.p_flags & PF_X)) continue;
    elf.check_range(ph.p_offset, ph.p_filesz, "executable segment");
    program.executable.push_back({ph.p_vaddr, ph.p_offset, ph.p_filesz});
  }
  if (elf.segments().empty()) {
    for (const auto& sec : elf.sections()) {
      if (!(sec.header.sh_flags & SHF_EXECINSTR) || sec.header.sh_type != SHT_PROGBITS)
        continue;
      elf.check_range(sec.header.sh_offset, sec.header.sh_size, sec.name.c_str());
      program.executable.push_back({sec.header.sh_addr, sec.header.sh_offset, sec.header.sh_size});
    }
  }

  collect_imports(elf, program);
  const auto ranges = code_ranges(elf, program);
  auto locals = defined_functions(elf, program);
  if (locals.empty()) locals = synthesize_functions(program, ranges, elf.header().e_entry);
  fill_sizes(locals, ranges);
  assign_names(program, locals);
  sort_functions(program.functions);
  add_orphan_targets(program);

  if (const auto* fn = program.find_by_address(elf.header().e_entry))
    program.entry = fn->id;
  else if (const auto* owner = program.containing(elf.header().e_entry))
    program.entry = owner->id;

  if (!program.executable.empty()) {
    const auto graph = extract_call_graph(program);
    for (auto& fn : program.functions) fn.capabilities = function_capabilities(graph, fn.id);
  } else {
    for (auto& fn : program.functions) fn.capabilities = {Capability::Unknown};
  }
  return program;
}

BinaryProgram load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BinaryError(BinaryErrc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return load_binary_image(std::move(bytes), path);
}

}  // namespace callscape
