#include "callscape/binary.hpp"

#include <elf.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <regex>

#include "callscape/x86_decode.hpp"
#include "support/objdump_oracle.hpp"

namespace callscape {
namespace {

std::string fixture(const char* name) { return std::string(CALLSCAPE_FIXTURE_DIR) + "/" + name; }

std::vector<std::string> local_names(const BinaryProgram& program) {
  std::vector<std::string> names;
  for (const auto& fn : program.functions)
    if (!fn.is_import) names.push_back(fn.name);
  std::sort(names.begin(), names.end());
  return names;
}

std::set<std::pair<std::string, std::string>> edge_set(const CallGraph& graph) {
  return {graph.edges.begin(), graph.edges.end()};
}

// Smallest well-formed ELF64 executable image: one executable PT_LOAD and an
// empty .text section.
std::vector<std::uint8_t> minimal_elf() {
  const char shstrtab[] = "\0.text\0.shstrtab\0";
  Elf64_Ehdr eh{};
  std::memcpy(eh.e_ident, ELFMAG, SELFMAG);
  eh.e_ident[EI_CLASS] = ELFCLASS64;
  eh.e_ident[EI_DATA] = ELFDATA2LSB;
  eh.e_ident[EI_VERSION] = EV_CURRENT;
  eh.e_type = ET_EXEC;
  eh.e_machine = EM_X86_64;
  eh.e_version = EV_CURRENT;
  eh.e_entry = 0x401000;
  eh.e_phoff = sizeof(Elf64_Ehdr);
  eh.e_ehsize = sizeof(Elf64_Ehdr);
  eh.e_phentsize = sizeof(Elf64_Phdr);
  eh.e_phnum = 1;
  eh.e_shentsize = sizeof(Elf64_Shdr);
  eh.e_shnum = 3;
  eh.e_shstrndx = 2;
  const std::uint64_t strtab_off = sizeof(Elf64_Ehdr) + sizeof(Elf64_Phdr);
  eh.e_shoff = strtab_off + sizeof(shstrtab);

  Elf64_Phdr ph{};
  ph.p_type = PT_LOAD;
  ph.p_flags = PF_R | PF_X;
  ph.p_vaddr = 0x400000;
  ph.p_filesz = ph.p_memsz = eh.e_shoff;
  ph.p_align = 0x1000;

  Elf64_Shdr sh[3]{};
  sh[1].sh_name = 1;
  sh[1].sh_type = SHT_PROGBITS;
  sh[1].sh_flags = SHF_ALLOC | SHF_EXECINSTR;
  sh[1].sh_addr = 0x401000;
  sh[1].sh_offset = strtab_off;
  sh[2].sh_name = 7;
  sh[2].sh_type = SHT_STRTAB;
  sh[2].sh_offset = strtab_off;
  sh[2].sh_size = sizeof(shstrtab);

  std::vector<std::uint8_t> out(eh.e_shoff + sizeof sh);
  std::memcpy(out.data(), &eh, sizeof eh);
  std::memcpy(out.data() + eh.e_phoff, &ph, sizeof ph);
  std::memcpy(out.data() + strtab_off, shstrtab, sizeof shstrtab);
  std::memcpy(out.data() + eh.e_shoff, sh, sizeof sh);
  return out;
}

BinaryErrc load_error(std::vector<std::uint8_t> bytes) {
  try {
    load_binary_image(std::move(bytes));
  } catch (const BinaryError& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a BinaryError";
  return BinaryErrc::Io;
}

TEST(LoadBinary, MinimalElfHasNoFunctions) {
  const auto program = load_binary_image(minimal_elf());
  EXPECT_TRUE(local_names(program).empty());
  EXPECT_EQ(program.arch, "x86-64");
  const auto graph = extract_call_graph(program);
  EXPECT_TRUE(graph.nodes.empty());
  EXPECT_TRUE(graph.edges.empty());
  EXPECT_TRUE(graph.roots.empty());
}

TEST(LoadBinary, RejectsBadInput) {
  EXPECT_EQ(load_error({'M', 'Z', 0x90, 0x00}), BinaryErrc::NotElf);
  EXPECT_EQ(load_error({}), BinaryErrc::NotElf);

  auto elf32 = minimal_elf();
  elf32[EI_CLASS] = ELFCLASS32;
  EXPECT_EQ(load_error(elf32), BinaryErrc::UnsupportedArch);

  auto arm = minimal_elf();
  const std::uint16_t machine = EM_AARCH64;
  std::memcpy(arm.data() + offsetof(Elf64_Ehdr, e_machine), &machine, 2);
  EXPECT_EQ(load_error(arm), BinaryErrc::UnsupportedArch);

  auto truncated = minimal_elf();
  truncated.resize(truncated.size() - 10);
  EXPECT_EQ(load_error(truncated), BinaryErrc::Truncated);

  auto header_only = minimal_elf();
  header_only.resize(20);
  EXPECT_EQ(load_error(header_only), BinaryErrc::Truncated);
}

TEST(LoadBinary, MissingFileIsIoError) {
  try {
    load_binary("/nonexistent/definitely/missing");
    FAIL();
  } catch (const BinaryError& e) {
    EXPECT_EQ(e.code(), BinaryErrc::Io);
  }
}

TEST(LoadBinary, ThreeFunctionProgramMatchesSymbolListing) {
  const auto program = load_binary(fixture("tiny"));
  EXPECT_EQ(local_names(program), (std::vector<std::string>{"bar", "foo", "main"}));
  EXPECT_EQ(program.entry, "main");

  const auto oracle = testing::objdump(fixture("tiny"));
  for (const auto& [name, addr] : oracle.functions) {
    const auto* fn = program.find(name);
    ASSERT_NE(fn, nullptr) << name;
    EXPECT_EQ(fn->address, addr);
    EXPECT_GT(fn->size, 0u);
    EXPECT_TRUE(program.is_executable(fn->address));
  }
}

TEST(ExtractCallGraph, ThreeFunctionChain) {
  const auto graph = extract_call_graph(load_binary(fixture("tiny")));
  EXPECT_EQ(edge_set(graph), (std::set<CallEdge>{{"foo", "bar"}, {"main", "foo"}}));
  EXPECT_EQ(graph.roots, std::vector<std::string>{"main"});
}

TEST(ExtractCallGraph, NoCallsNoEdges) {
  // bar alone: rebuild the tiny program with only bar's bytes as the image.
  const auto program = load_binary(fixture("tiny"));
  BinaryProgram only_bar = program;
  std::erase_if(only_bar.functions, [](const FunctionRecord& fn) { return fn.name != "bar"; });
  only_bar.entry = "bar";
  const auto graph = extract_call_graph(only_bar);
  EXPECT_TRUE(graph.edges.empty());
  EXPECT_EQ(graph.roots, std::vector<std::string>{"bar"});
}

TEST(ExtractCallGraph, NoExecutableSegment) {
  BinaryProgram empty;
  EXPECT_THROW(extract_call_graph(empty), BinaryError);
}

class MatchesDisassembler : public ::testing::TestWithParam<const char*> {};

TEST_P(MatchesDisassembler, CallEdges) {
  const auto path = fixture(GetParam());
  const auto graph = extract_call_graph(load_binary(path));
  const auto oracle = testing::objdump(path);
  ASSERT_FALSE(oracle.call_edges.empty());
  EXPECT_EQ(edge_set(graph), oracle.call_edges);
}

INSTANTIATE_TEST_SUITE_P(Fixtures, MatchesDisassembler,
                         ::testing::Values("tiny", "chain", "chain_noplt", "v11",
                                           "hexdump_symbols"));

TEST(ExtractCallGraph, PltImportEdge) {
  const auto graph = extract_call_graph(load_binary(fixture("chain")));
  EXPECT_TRUE(edge_set(graph).count({"bar", "printf"}));
  const auto* printf_node = graph.find("printf");
  ASSERT_NE(printf_node, nullptr);
  EXPECT_TRUE(printf_node->is_import);
  EXPECT_NE(printf_node->address, 0u);
  EXPECT_TRUE(edge_set(graph).count({"_start", "__libc_start_main"}));
}

TEST(ExtractCallGraph, GotImportEdgeWithoutPlt) {
  const auto graph = extract_call_graph(load_binary(fixture("chain_noplt")));
  EXPECT_TRUE(edge_set(graph).count({"bar", "printf"}));
}

TEST(ExtractCallGraph, StrippedBinaryUsesSubNames) {
  const auto stripped = load_binary(fixture("chain_stripped"));
  const std::regex sub(R"(sub_[0-9a-f]+)");
  for (const auto& fn : stripped.functions) {
    if (fn.is_import) continue;
    EXPECT_TRUE(std::regex_match(fn.name, sub)) << fn.name;
  }

  // Call structure by address equals the symbolised build's oracle.
  const auto oracle = testing::objdump(fixture("chain"));
  const auto graph = extract_call_graph(stripped);
  std::set<std::pair<std::uint64_t, std::uint64_t>> ours;
  for (const auto& [caller, callee] : graph.edges) {
    const auto* to = graph.find(callee);
    if (to->is_import) continue;
    ours.emplace(graph.find(caller)->address, to->address);
  }
  std::set<std::pair<std::uint64_t, std::uint64_t>> expected;
  for (const auto& [from, to] : oracle.call_addresses) {
    const bool to_plt = std::any_of(stripped.plt_stubs.begin(), stripped.plt_stubs.end(),
                                    [&](const auto& stub) { return stub.first == to; });
    if (!to_plt) expected.emplace(from, to);
  }
  EXPECT_EQ(ours, expected);
  EXPECT_TRUE(stripped.find("sub_" + hex_address(oracle.functions.at("main")).substr(2)));
  EXPECT_TRUE(edge_set(graph).count({"sub_" + hex_address(oracle.functions.at("bar")).substr(2),
                                     "printf"}));
}

TEST(ExtractCallGraph, StrippedFreestandingChain) {
  const auto program = load_binary(fixture("tiny_stripped"));
  const auto oracle = testing::objdump(fixture("tiny"));
  const auto main_id = "sub_" + hex_address(oracle.functions.at("main")).substr(2);
  const auto foo_id = "sub_" + hex_address(oracle.functions.at("foo")).substr(2);
  const auto bar_id = "sub_" + hex_address(oracle.functions.at("bar")).substr(2);
  EXPECT_EQ(program.entry, main_id);
  EXPECT_EQ(edge_set(extract_call_graph(program)),
            (std::set<CallEdge>{{main_id, foo_id}, {foo_id, bar_id}}));
}

TEST(ExtractCallGraph, EveryEdgeHasADecodableCallSite) {
  for (const char* name : {"chain", "v11", "hexdump"}) {
    const auto program = load_binary(fixture(name));
    const auto graph = extract_call_graph(program);
    std::set<CallEdge> witnessed;
    for (const auto& site : scan_call_sites(program)) {
      const auto* caller = program.find(site.caller);
      ASSERT_NE(caller, nullptr);
      EXPECT_GE(site.address, caller->address);
      EXPECT_LT(site.address, caller->address + caller->size);
      auto insn = x86::decode(program.bytes_at(site.address, 15));
      ASSERT_TRUE(insn);
      EXPECT_EQ(insn->length, site.length);
      EXPECT_TRUE(insn->is_direct_call() || insn->is_rip_indirect_call());
      witnessed.emplace(site.caller, site.callee);
    }
    EXPECT_EQ(witnessed, edge_set(graph)) << name;
  }
}

TEST(ExtractCallGraph, Deterministic) {
  const auto a = extract_call_graph(load_binary(fixture("v11")));
  const auto b = extract_call_graph(load_binary(fixture("v11")));
  EXPECT_EQ(a, b);
  EXPECT_EQ(export_call_graph(a), export_call_graph(b));
}

TEST(LoadBinary, FileIdIsContentDerived) {
  const auto a = load_binary(fixture("chain"));
  const auto b = load_binary(fixture("chain_noplt"));
  EXPECT_NE(a.file_id, b.file_id);
  EXPECT_EQ(a.file_id, load_binary(fixture("chain")).file_id);
}

TEST(Capabilities, DerivedFromImportCallees) {
  const auto program = load_binary(fixture("v11"));
  auto tags = [&](const char* name) { return program.find(name)->capabilities; };
  EXPECT_TRUE(tags("connect_c2").count(Capability::Network));
  EXPECT_TRUE(tags("cmd_write_file").count(Capability::FileIo));
  EXPECT_EQ(tags("xor_buffer"), std::set<Capability>{Capability::Unknown});
  // One level of propagation: send_beacon -> send_message -> send().
  EXPECT_TRUE(tags("send_beacon").count(Capability::Network));
  EXPECT_TRUE(tags("socket").count(Capability::Network));
}

TEST(Capabilities, NoImportsInClosureMeansNoIoTags) {
  for (const char* name : {"tiny", "chain", "v11", "hexdump"}) {
    const auto program = load_binary(fixture(name));
    const auto graph = extract_call_graph(program);
    for (const auto& fn : program.functions) {
      if (fn.is_import) continue;
      std::set<std::string> seen{fn.id};
      std::vector<std::string> stack{fn.id};
      bool reaches_import = false;
      while (!stack.empty()) {
        auto id = stack.back();
        stack.pop_back();
        for (const auto& [caller, callee] : graph.edges) {
          if (caller != id || !seen.insert(callee).second) continue;
          if (graph.find(callee)->is_import) reaches_import = true;
          stack.push_back(callee);
        }
      }
      if (!reaches_import) {
        EXPECT_FALSE(fn.capabilities.count(Capability::Network)) << fn.name;
        EXPECT_FALSE(fn.capabilities.count(Capability::FileIo)) << fn.name;
      }
    }
  }
}

TEST(ImportCallGraph, TwoNodesOneEdge) {
  const auto graph = import_call_graph(R"({
    "nodes": [{"id": "main", "name": "main", "address": "0x1000", "is_import": false},
              {"id": "puts", "name": "puts", "address": "0x0", "is_import": true}],
    "edges": [{"caller": "main", "callee": "puts"}]})");
  EXPECT_EQ(graph.nodes.size(), 2u);
  EXPECT_EQ(graph.edges.size(), 1u);
  EXPECT_EQ(graph.find("main")->address, 0x1000u);
  EXPECT_EQ(graph.roots, std::vector<std::string>{"main"});
}

TEST(ImportCallGraph, Errors) {
  auto code = [](const char* doc) {
    try {
      import_call_graph(doc);
    } catch (const BinaryError& e) {
      return e.code();
    }
    return BinaryErrc::Io;
  };
  EXPECT_EQ(code(R"({"nodes": [{"id": "a", "name": "a", "address": "0x1", "is_import": false}],
                    "edges": [{"caller": "a", "callee": "ghost"}]})"),
            BinaryErrc::DanglingEdge);
  EXPECT_EQ(code(R"({"nodes": [{"id": "a", "address": "0x1", "is_import": false}], "edges": []})"),
            BinaryErrc::SchemaViolation);
  EXPECT_EQ(code(R"({"nodes": []})"), BinaryErrc::SchemaViolation);
  EXPECT_EQ(code(R"({"nodes": [{"id": "a", "name": "a", "address": "17", "is_import": false}],
                    "edges": []})"),
            BinaryErrc::SchemaViolation);
  EXPECT_EQ(code("not json"), BinaryErrc::SchemaViolation);
}

TEST(ImportCallGraph, RoundTripIsIdentity) {
  for (const char* name : {"tiny", "chain", "v11", "hexdump"}) {
    const auto graph = extract_call_graph(load_binary(fixture(name)));
    EXPECT_EQ(import_call_graph(export_call_graph(graph)), graph) << name;
  }
}

TEST(AttachDecompilation, MatchesByNameAndAddress) {
  const auto program = load_binary(fixture("tiny"));
  const auto foo_addr = hex_address(program.find("foo")->address);
  const auto result = attach_decompilation(
      program, R"({"main": "void main(void) { foo(4); }", ")" + foo_addr +
                   R"(": "int foo(int x) { return bar(x) + 2; }"})");
  EXPECT_TRUE(result.warnings.empty());
  EXPECT_EQ(result.program.find("main")->decompilation, "void main(void) { foo(4); }");
  EXPECT_TRUE(result.program.find("foo")->decompilation.has_value());
  EXPECT_FALSE(result.program.find("bar")->decompilation.has_value());
}

TEST(AttachDecompilation, EmptySidecarLeavesProgramUnchanged) {
  const auto program = load_binary(fixture("tiny"));
  const auto result = attach_decompilation(program, "{}");
  EXPECT_TRUE(result.warnings.empty());
  EXPECT_EQ(result.program.functions, program.functions);
}

TEST(AttachDecompilation, UnknownFunctionWarns) {
  const auto result =
      attach_decompilation(load_binary(fixture("tiny")), R"({"no_such_fn": "int x;"})");
  EXPECT_EQ(result.warnings.size(), 1u);
  EXPECT_THROW(attach_decompilation(load_binary(fixture("tiny")), R"({"main": 3})"), BinaryError);
  EXPECT_THROW(attach_decompilation(load_binary(fixture("tiny")), "[]"), BinaryError);
}

}  // namespace
}  // namespace callscape
