#pragma once

// ELF64/x86-64 loading, function inventory and call-graph extraction.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace callscape {

enum class BinaryErrc {
  NotElf,
  UnsupportedArch,
  Truncated,
  NoTextSegment,
  SchemaViolation,
  DanglingEdge,
  Io,
};

std::string_view to_string(BinaryErrc code);

class BinaryError : public std::runtime_error {
 public:
  BinaryError(BinaryErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  BinaryErrc code() const noexcept { return code_; }

 private:
  BinaryErrc code_;
};

enum class Capability {
  FileIo,
  Network,
  Process,
  Memory,
  String,
  CryptoLike,
  Unknown,
};

std::string_view to_string(Capability cap);
std::optional<Capability> capability_from_string(std::string_view name);

struct FunctionRecord {
  std::string id;
  std::string name;
  std::uint64_t address = 0;
  std::uint64_t size = 0;
  bool is_import = false;
  std::set<Capability> capabilities;
  std::optional<std::string> decompilation;

  bool operator==(const FunctionRecord&) const = default;
};

struct AddressRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;  // exclusive
  bool contains(std::uint64_t addr) const { return addr >= begin && addr < end; }
};

struct BinaryProgram {
  std::string file_id;
  std::filesystem::path path;
  std::string arch = "x86-64";
  std::vector<FunctionRecord> functions;  // sorted by (is_import, address, name)
  std::string entry;                      // function id; empty when none resolved

  // Raw image data needed for re-scanning. Shared bytes, immutable after load.
  std::vector<std::uint8_t> image;
  struct Segment {
    std::uint64_t vaddr = 0;
    std::uint64_t file_offset = 0;
    std::uint64_t size = 0;  // bytes backed by the file
  };
  std::vector<Segment> executable;
  // GOT slot address -> imported symbol name.
  std::map<std::uint64_t, std::string> got_imports;
  // PLT stub address -> imported symbol name.
  std::map<std::uint64_t, std::string> plt_stubs;

  const FunctionRecord* find(std::string_view id) const;
  const FunctionRecord* find_by_address(std::uint64_t addr) const;
  // Function whose [address, address+size) contains addr; imports excluded.
  const FunctionRecord* containing(std::uint64_t addr) const;
  // Bytes of an executable region starting at addr, empty when unmapped.
  std::span<const std::uint8_t> bytes_at(std::uint64_t addr, std::uint64_t len) const;
  bool is_executable(std::uint64_t addr) const;
};

struct GraphNode {
  std::string id;
  std::string name;
  std::uint64_t address = 0;
  bool is_import = false;

  bool operator==(const GraphNode&) const = default;
};

using CallEdge = std::pair<std::string, std::string>;  // (caller, callee)

struct CallGraph {
  std::vector<GraphNode> nodes;  // sorted by id
  std::vector<CallEdge> edges;   // sorted, unique
  std::vector<std::string> roots;
  std::string entry;

  const GraphNode* find(std::string_view id) const;
  bool operator==(const CallGraph&) const = default;
};

// A call instruction found by the sweep.
struct CallSite {
  std::uint64_t address = 0;  // of the call instruction
  std::uint8_t length = 0;
  std::string caller;
  std::string callee;
  bool via_got = false;
};

// Opaque, content-derived identifier for a loaded file.
std::string file_id_for(std::span<const std::uint8_t> bytes);

BinaryProgram load_binary(const std::filesystem::path& path);
BinaryProgram load_binary_image(std::vector<std::uint8_t> bytes,
                                const std::filesystem::path& path = {});

std::vector<CallSite> scan_call_sites(const BinaryProgram& program);
CallGraph extract_call_graph(const BinaryProgram& program);

// Builds a graph from explicit parts; sorts, de-duplicates and derives roots.
CallGraph make_call_graph(std::vector<GraphNode> nodes, std::vector<CallEdge> edges,
                          std::string entry = {});

std::string export_call_graph(const CallGraph& graph);
CallGraph import_call_graph(std::string_view document);

struct DecompilationResult {
  BinaryProgram program;
  std::vector<std::string> warnings;
};

DecompilationResult attach_decompilation(BinaryProgram program, std::string_view sidecar);

// Tags from the fixed libc import table; empty for unrecognised names.
std::set<Capability> import_capabilities(std::string_view import_name);

// Direct import tags plus those of direct local callees, {Unknown} when empty.
std::set<Capability> function_capabilities(const CallGraph& graph, std::string_view function_id);

std::string hex_address(std::uint64_t addr);  // "0x401136"

}  // namespace callscape
