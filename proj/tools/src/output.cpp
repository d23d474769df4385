#include "kesten_cli/output.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kesten/errors.hpp"

namespace kesten::cli {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::Io, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Staging::Staging(fs::path out_dir) : out_(std::move(out_dir)) {
  std::error_code ec;
  fs::create_directories(out_, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_.string() + ": " + ec.message());
  staging_ = out_ / (".staging-" + std::to_string(::getpid()));
  fs::remove_all(staging_, ec);
  fs::create_directories(staging_, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + staging_.string() + ": " + ec.message());
}

Staging::~Staging() {
  std::error_code ec;
  fs::remove_all(staging_, ec);
}

void Staging::write(const std::string& name, const std::string& contents) {
  std::ofstream out(staging_ / name, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + (staging_ / name).string());
  out << contents;
  out.close();
  if (!out) throw Error(ErrorCode::Io, "write failed for " + name);
  if (std::find(names_.begin(), names_.end(), name) == names_.end()) names_.push_back(name);
}

void Staging::write_json(const std::string& name, const nlohmann::json& doc) { write(name, doc.dump(2) + "\n"); }

nlohmann::json Staging::digests() const {
  std::vector<std::string> sorted = names_;
  std::sort(sorted.begin(), sorted.end());
  nlohmann::json out = nlohmann::json::array();
  for (const auto& n : sorted) {
    const std::string bytes = read_file(staging_ / n);
    out.push_back({{"name", n}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  return out;
}

void Staging::commit() {
  for (const auto& n : names_) {
    std::error_code ec;
    fs::rename(staging_ / n, out_ / n, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot move " + n + " into " + out_.string() + ": " + ec.message());
  }
  committed_ = true;
}

}  // namespace kesten::cli
