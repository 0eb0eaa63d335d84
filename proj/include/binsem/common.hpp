#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>

#include <json.hpp>

namespace binsem {

using json = nlohmann::json;

// Input/schema problems: bad JSONL lines, unknown enum literals, unusable
// configs. The CLI maps these to exit code 1, everything else to 2.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public ValidationError {
public:
  ParseError(size_t line, const std::string& msg)
      : ValidationError("line " + std::to_string(line) + ": " + msg), line_(line) {}
  size_t line() const { return line_; }

private:
  size_t line_;
};

// FNV-1a, used for vocabulary/dataset/checkpoint fingerprints. Stable across
// builds, unlike std::hash.
inline uint64_t fnv1a_bytes(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a_bytes(s.data(), s.size(), h);
}

inline std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

// Calls fn(line_number, line) for every non-empty line. Line numbers are
// 1-based to match the error contract.
inline void for_each_line(std::istream& in, const std::function<void(size_t, const std::string&)>& fn) {
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(lineno, line);
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open input file " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open output file " + path);
  return out;
}

// Worker-thread cap: BINSEM_THREADS, else hardware concurrency.
inline unsigned worker_threads() {
  if (const char* env = std::getenv("BINSEM_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

inline std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string strip_whitespace(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  return out;
}

}  // namespace binsem
