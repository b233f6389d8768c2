#pragma once

#include "callscape/http.hpp"
#include "callscape/tool_server.hpp"

namespace callscape {

// Serves JSON-RPC requests posted to /rpc. The server must outlive `http`.
void mount_tool_server(httplib::Server& http, const ToolServer& server);

}  // namespace callscape
