/* Small hexdump(1) work-alike used as an optimized, stripped analysis target. */
#include <ctype.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

struct options {
  long skip;
  long length;
  int canonical;
  const char *path;
};

static void __attribute__((noinline)) usage(const char *argv0) {
  fprintf(stderr, "usage: %s [-C] [-s offset] [-n length] [file]\n", argv0);
  exit(1);
}

static long __attribute__((noinline)) parse_number(const char *text, const char *argv0) {
  char *end = NULL;
  long value = strtol(text, &end, 0);
  if (!end || *end != '\0' || value < 0) usage(argv0);
  return value;
}

static void __attribute__((noinline)) parse_args(int argc, char **argv, struct options *opt) {
  memset(opt, 0, sizeof *opt);
  opt->length = -1;
  for (int i = 1; i < argc; ++i) {
    if (strcmp(argv[i], "-C") == 0) opt->canonical = 1;
    else if (strcmp(argv[i], "-s") == 0 && i + 1 < argc) opt->skip = parse_number(argv[++i], argv[0]);
    else if (strcmp(argv[i], "-n") == 0 && i + 1 < argc) opt->length = parse_number(argv[++i], argv[0]);
    else if (argv[i][0] == '-') usage(argv[0]);
    else opt->path = argv[i];
  }
}

static FILE *__attribute__((noinline)) open_input(const struct options *opt) {
  FILE *in = opt->path ? fopen(opt->path, "rb") : stdin;
  if (!in) {
    perror(opt->path);
    exit(1);
  }
  if (opt->skip && fseek(in, opt->skip, SEEK_SET) != 0) {
    for (long i = 0; i < opt->skip && getc(in) != EOF; ++i) {
    }
  }
  return in;
}

static void __attribute__((noinline)) print_hex(const unsigned char *buf, size_t n, int canonical) {
  for (size_t i = 0; i < 16; ++i) {
    if (canonical && i == 8) putchar(' ');
    if (i < n) printf(canonical ? " %02x" : " %02x", buf[i]);
    else fputs("   ", stdout);
  }
}

static void __attribute__((noinline)) print_ascii(const unsigned char *buf, size_t n) {
  fputs("  |", stdout);
  for (size_t i = 0; i < n; ++i) putchar(isprint(buf[i]) ? buf[i] : '.');
  puts("|");
}

static void __attribute__((noinline)) dump_line(long offset, const unsigned char *buf, size_t n, int canonical) {
  printf("%08lx", offset);
  print_hex(buf, n, canonical);
  if (canonical) print_ascii(buf, n);
  else putchar('\n');
}

static long __attribute__((noinline)) dump_stream(FILE *in, const struct options *opt) {
  unsigned char buf[16];
  long offset = opt->skip;
  long remaining = opt->length;
  size_t n;
  while (remaining != 0) {
    size_t want = remaining < 0 || remaining > 16 ? 16 : (size_t)remaining;
    n = fread(buf, 1, want, in);
    if (n == 0) break;
    dump_line(offset, buf, n, opt->canonical);
    offset += (long)n;
    if (remaining > 0) remaining -= (long)n;
  }
  printf("%08lx\n", offset);
  return offset;
}

int main(int argc, char **argv) {
  struct options opt;
  parse_args(argc, argv, &opt);
  FILE *in = open_input(&opt);
  dump_stream(in, &opt);
  if (in != stdin) fclose(in);
  return 0;
}
