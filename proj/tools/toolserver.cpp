// toolserver: serves the binary-analysis tools over stdio or HTTP.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "callscape/tool_server.hpp"
#include "callscape/tool_server_http.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace callscape;
  CLI::App app{"JSON-RPC binary-analysis tool server"};
  std::vector<std::string> binaries, sidecars, names;
  std::string http_addr;
  bool list_files = false;
  app.add_option("--binary", binaries, "ELF file to register (repeatable)")->required()->check(CLI::ExistingFile);
  app.add_option("--sidecar", sidecars, "Decompilation sidecar, paired with --binary by position")
      ->check(CLI::ExistingFile);
  app.add_option("--name", names, "Program name, paired with --binary by position (default: file name)");
  app.add_option("--http", http_addr, "Serve POST /rpc on addr:port instead of stdio");
  app.add_flag("--list-files", list_files, "Print registered file ids and exit");
  CLI11_PARSE(app, argc, argv);

  try {
    if (sidecars.size() > binaries.size() || names.size() > binaries.size())
      throw std::runtime_error("more --sidecar/--name values than --binary values");
    std::vector<RegisteredFile> files;
    for (std::size_t i = 0; i < binaries.size(); ++i) {
      BinaryProgram program = load_binary(binaries[i]);
      if (i < sidecars.size()) {
        auto result = attach_decompilation(std::move(program), slurp(sidecars[i]));
        for (const auto& w : result.warnings) std::cerr << "toolserver: " << w << "\n";
        program = std::move(result.program);
      }
      const std::string name =
          i < names.size() ? names[i] : std::filesystem::path(binaries[i]).filename().string();
      files.push_back(register_file(std::move(program), name));
    }
    const ToolServer server(std::move(files));
    for (const auto& f : server.files()) std::cerr << "toolserver: " << f.name << " = " << f.program.file_id << "\n";
    if (list_files) return 0;

    if (http_addr.empty()) {
      serve_stdio(server, std::cin, std::cout);
      return 0;
    }
    const auto colon = http_addr.rfind(':');
    if (colon == std::string::npos) throw std::runtime_error("--http expects addr:port");
    httplib::Server http;
    mount_tool_server(http, server);
    const std::string host = http_addr.substr(0, colon);
    const int port = std::stoi(http_addr.substr(colon + 1));
    std::cerr << "toolserver: listening on " << host << ":" << port << "\n";
    if (!http.listen(host, port)) throw std::runtime_error("cannot listen on " + http_addr);
  } catch (const std::exception& e) {
    std::cerr << "toolserver: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
