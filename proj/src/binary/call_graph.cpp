#include <algorithm>
#include <map>
#include <set>

#include "callscape/binary.hpp"
#include "sweep.hpp"

namespace callscape {
namespace {

std::string resolve_direct(const BinaryProgram& program, std::uint64_t target) {
  if (auto it = program.plt_stubs.find(target); it != program.plt_stubs.end()) {
    for (const auto& fn : program.functions)
      if (fn.is_import && fn.name == it->second) return fn.id;
  }
  if (const auto* fn = program.find_by_address(target)) return fn->id;
  if (const auto* fn = program.containing(target)) return fn->id;
  if (program.is_executable(target)) return "sub_" + hex_address(target).substr(2);
  return {};
}

std::string resolve_got(const BinaryProgram& program, std::uint64_t slot) {
  auto it = program.got_imports.find(slot);
  if (it == program.got_imports.end()) return {};
  for (const auto& fn : program.functions)
    if (fn.is_import && fn.name == it->second) return fn.id;
  return {};
}

}  // namespace

std::vector<CallSite> scan_call_sites(const BinaryProgram& program) {
  if (program.executable.empty())
    throw BinaryError(BinaryErrc::NoTextSegment, "program has no executable segment");
  std::vector<CallSite> sites;
  for (const auto& fn : program.functions) {
    if (fn.is_import || fn.size == 0) continue;
    const auto code = program.bytes_at(fn.address, fn.size);
    detail::sweep(code, fn.address, [&](std::uint64_t addr, const x86::Instruction& insn) {
      std::string callee;
      bool via_got = false;
      if (insn.is_direct_call()) {
        callee = resolve_direct(program, detail::branch_target(addr, insn));
      } else if (insn.is_rip_indirect_call()) {
        callee = resolve_got(program, detail::rip_operand(addr, insn));
        via_got = true;
      }
      if (!callee.empty()) sites.push_back({addr, insn.length, fn.id, std::move(callee), via_got});
      return true;
    });
  }
  return sites;
}

CallGraph extract_call_graph(const BinaryProgram& program) {
  const auto sites = scan_call_sites(program);
  std::vector<GraphNode> nodes;
  std::set<std::string> known;
  for (const auto& fn : program.functions) {
    nodes.push_back({fn.id, fn.name, fn.address, fn.is_import});
    known.insert(fn.id);
  }
  std::vector<CallEdge> edges;
  for (const auto& site : sites) {
    if (!known.count(site.callee)) {
      // Only reachable when the program was modified after loading.
      const auto addr = std::stoull(site.callee.substr(4), nullptr, 16);
      nodes.push_back({site.callee, site.callee, addr, false});
      known.insert(site.callee);
    }
    edges.emplace_back(site.caller, site.callee);
  }
  return make_call_graph(std::move(nodes), std::move(edges), program.entry);
}

const GraphNode* CallGraph::find(std::string_view id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const GraphNode& n, std::string_view key) { return n.id < key; });
  return it != nodes.end() && it->id == id ? &*it : nullptr;
}

CallGraph make_call_graph(std::vector<GraphNode> nodes, std::vector<CallEdge> edges,
                          std::string entry) {
  CallGraph graph;
  std::sort(nodes.begin(), nodes.end(),
            [](const GraphNode& a, const GraphNode& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (nodes[i].id == nodes[i - 1].id)
      throw BinaryError(BinaryErrc::SchemaViolation, "duplicate node id '" + nodes[i].id + "'");
  graph.nodes = std::move(nodes);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (const auto& [caller, callee] : edges) {
    if (!graph.find(caller) || !graph.find(callee))
      throw BinaryError(BinaryErrc::DanglingEdge,
                        "edge " + caller + " -> " + callee + " references an unknown node");
  }
  graph.edges = std::move(edges);
  if (!entry.empty() && !graph.find(entry))
    throw BinaryError(BinaryErrc::DanglingEdge, "entry '" + entry + "' is not a node");
  graph.entry = std::move(entry);

  std::set<std::string> has_caller;
  for (const auto& [caller, callee] : graph.edges)
    if (caller != callee) has_caller.insert(callee);
  for (const auto& node : graph.nodes)
    if (!has_caller.count(node.id) || node.id == graph.entry) graph.roots.push_back(node.id);
  return graph;
}

std::set<Capability> import_capabilities(std::string_view name) {
  using C = Capability;
  static const std::map<std::string_view, std::set<C>> kTable = {
      {"fopen", {C::FileIo}},      {"fopen64", {C::FileIo}},   {"fclose", {C::FileIo}},
      {"fread", {C::FileIo}},      {"fwrite", {C::FileIo}},    {"fgets", {C::FileIo}},
      {"fputs", {C::FileIo}},      {"fputc", {C::FileIo}},     {"fgetc", {C::FileIo}},
      {"getc", {C::FileIo}},       {"putc", {C::FileIo}},      {"fseek", {C::FileIo}},
      {"fseeko", {C::FileIo}},     {"ftell", {C::FileIo}},     {"fflush", {C::FileIo}},
      {"open", {C::FileIo}},       {"open64", {C::FileIo}},    {"openat", {C::FileIo}},
      {"close", {C::FileIo}},      {"read", {C::FileIo}},      {"write", {C::FileIo}},
      {"lseek", {C::FileIo}},      {"unlink", {C::FileIo}},    {"rename", {C::FileIo}},
      {"stat", {C::FileIo}},       {"fstat", {C::FileIo}},     {"__fxstat", {C::FileIo}},
      {"opendir", {C::FileIo}},    {"readdir", {C::FileIo}},   {"printf", {C::FileIo}},
      {"fprintf", {C::FileIo}},    {"puts", {C::FileIo}},      {"putchar", {C::FileIo}},
      {"__printf_chk", {C::FileIo}}, {"__fprintf_chk", {C::FileIo}}, {"vfprintf", {C::FileIo}},
      {"__vfprintf_chk", {C::FileIo}}, {"setvbuf", {C::FileIo}}, {"ferror", {C::FileIo}},
      {"feof", {C::FileIo}},       {"freopen", {C::FileIo}},   {"fdopen", {C::FileIo}},
      {"socket", {C::Network}},    {"connect", {C::Network}},  {"bind", {C::Network}},
      {"listen", {C::Network}},    {"accept", {C::Network}},   {"send", {C::Network}},
      {"sendto", {C::Network}},    {"recv", {C::Network}},     {"recvfrom", {C::Network}},
      {"getaddrinfo", {C::Network}}, {"gethostbyname", {C::Network}},
      {"inet_addr", {C::Network}}, {"inet_pton", {C::Network}}, {"htons", {C::Network}},
      {"setsockopt", {C::Network}}, {"shutdown", {C::Network}},
      {"fork", {C::Process}},      {"execve", {C::Process}},   {"execl", {C::Process}},
      {"execvp", {C::Process}},    {"system", {C::Process}},   {"popen", {C::Process}},
      {"kill", {C::Process}},      {"waitpid", {C::Process}},  {"getpid", {C::Process}},
      {"exit", {C::Process}},      {"_exit", {C::Process}},    {"abort", {C::Process}},
      {"signal", {C::Process}},    {"sigaction", {C::Process}}, {"sleep", {C::Process}},
      {"usleep", {C::Process}},    {"daemon", {C::Process}},   {"setsid", {C::Process}},
      {"__libc_start_main", {C::Process}}, {"__cxa_finalize", {C::Process}},
      {"malloc", {C::Memory}},     {"calloc", {C::Memory}},    {"realloc", {C::Memory}},
      {"free", {C::Memory}},       {"mmap", {C::Memory}},      {"munmap", {C::Memory}},
      {"mprotect", {C::Memory}},   {"memcpy", {C::Memory}},    {"memmove", {C::Memory}},
      {"memset", {C::Memory}},     {"__memcpy_chk", {C::Memory}}, {"__memset_chk", {C::Memory}},
      {"strcpy", {C::String}},     {"strncpy", {C::String}},   {"strcat", {C::String}},
      {"strncat", {C::String}},    {"strlen", {C::String}},    {"strcmp", {C::String}},
      {"strncmp", {C::String}},    {"strchr", {C::String}},    {"strrchr", {C::String}},
      {"strstr", {C::String}},     {"strtok", {C::String}},    {"strdup", {C::String}},
      {"sprintf", {C::String}},    {"snprintf", {C::String}},  {"__sprintf_chk", {C::String}},
      {"__snprintf_chk", {C::String}}, {"sscanf", {C::String}}, {"__isoc99_sscanf", {C::String}},
      {"strtol", {C::String}},     {"strtoul", {C::String}},   {"atoi", {C::String}},
      {"toupper", {C::String}},    {"tolower", {C::String}},   {"__ctype_b_loc", {C::String}},
      {"memcmp", {C::String}},     {"__strcpy_chk", {C::String}},
      {"rand", {C::CryptoLike}},   {"srand", {C::CryptoLike}}, {"random", {C::CryptoLike}},
      {"crypt", {C::CryptoLike}},  {"getrandom", {C::CryptoLike}},
      {"MD5", {C::CryptoLike}},    {"SHA1", {C::CryptoLike}},  {"SHA256", {C::CryptoLike}},
  };
  if (auto it = kTable.find(name); it != kTable.end()) return it->second;
  if (name.starts_with("EVP_") || name.starts_with("AES_") || name.starts_with("RAND_"))
    return {C::CryptoLike};
  return {};
}

std::set<Capability> function_capabilities(const CallGraph& graph, std::string_view id) {
  const auto* node = graph.find(id);
  if (!node) return {Capability::Unknown};
  std::set<Capability> tags;
  if (node->is_import) {
    tags = import_capabilities(node->name);
  } else {
    auto direct_imports = [&](std::string_view caller, std::set<Capability>& into,
                              auto&& on_local) {
      auto it = std::lower_bound(graph.edges.begin(), graph.edges.end(),
                                 CallEdge{std::string(caller), std::string()});
      for (; it != graph.edges.end() && it->first == caller; ++it) {
        const auto* callee = graph.find(it->second);
        if (!callee) continue;
        if (callee->is_import) {
          const auto t = import_capabilities(callee->name);
          into.insert(t.begin(), t.end());
        } else {
          on_local(callee->id);
        }
      }
    };
    direct_imports(id, tags, [&](const std::string& local) {
      if (local != id) direct_imports(local, tags, [](const std::string&) {});
    });
  }
  if (tags.empty()) tags.insert(Capability::Unknown);
  return tags;
}

std::string_view to_string(Capability cap) {
  switch (cap) {
    case Capability::FileIo: return "file-io";
    case Capability::Network: return "network";
    case Capability::Process: return "process";
    case Capability::Memory: return "memory";
    case Capability::String: return "string";
    case Capability::CryptoLike: return "crypto-like";
    case Capability::Unknown: return "unknown";
  }
  return "unknown";
}

std::optional<Capability> capability_from_string(std::string_view name) {
  for (auto cap : {Capability::FileIo, Capability::Network, Capability::Process,
                   Capability::Memory, Capability::String, Capability::CryptoLike,
                   Capability::Unknown})
    if (to_string(cap) == name) return cap;
  return std::nullopt;
}

}  // namespace callscape
