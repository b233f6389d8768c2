#include "callscape/tool_server_http.hpp"

namespace callscape {

void mount_tool_server(httplib::Server& http, const ToolServer& server) {
  http.Post("/rpc", [&server](const httplib::Request& req, httplib::Response& res) {
    const auto body = server.handle_text(req.body);
    if (body.empty()) {
      res.status = 202;
      return;
    }
    res.set_content(body, "application/json");
  });
}

}  // namespace callscape
