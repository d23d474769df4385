#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace kesten::cli {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// %.17g
std::string fmt(double v);

// Files are written under a staging directory and moved into place by
// commit(). Destruction without commit removes the staging directory.
class Staging {
 public:
  explicit Staging(std::filesystem::path out_dir);
  ~Staging();
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;

  std::filesystem::path path(const std::string& name) const { return staging_ / name; }
  void write(const std::string& name, const std::string& contents);
  void write_json(const std::string& name, const nlohmann::json& doc);
  // name -> sha256 of every staged file, sorted by name.
  nlohmann::json digests() const;
  void commit();
  const std::filesystem::path& out_dir() const { return out_; }

 private:
  std::filesystem::path out_;
  std::filesystem::path staging_;
  std::vector<std::string> names_;
  bool committed_ = false;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace kesten::cli
