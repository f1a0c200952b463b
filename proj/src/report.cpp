#include "bhealth/report.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>

#include "bhealth/errors.hpp"

#ifndef BHEALTH_VERSION
#define BHEALTH_VERSION "0.0.0"
#endif

namespace bhealth {

namespace fs = std::filesystem;

namespace {
std::atomic<bool> g_warnings{true};
std::atomic<int> g_warning_count{0};
}  // namespace

void log_warning(const std::string& message) {
  ++g_warning_count;
  if (g_warnings) std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings = enabled; }
int warning_count() { return g_warning_count; }

std::string format_number(double value, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, value);
  return buf;
}

CsvWriter::CsvWriter(const fs::path& file, const std::vector<std::string>& header) : path_(file) {
  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    if (ec) throw IoError("cannot create " + file.parent_path().string() + ": " + ec.message());
  }
  out_.open(file, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot write " + file.string());
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter& CsvWriter::cell(const std::string& text) {
  if (!first_) row_ += ',';
  first_ = false;
  if (text.find_first_of(",\"\n") != std::string::npos) {
    row_ += '"';
    for (char c : text) {
      if (c == '"') row_ += '"';
      row_ += c;
    }
    row_ += '"';
  } else {
    row_ += text;
  }
  return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(format_number(value)); }
CsvWriter& CsvWriter::cell(long long value) { return cell(std::to_string(value)); }

void CsvWriter::end_row() {
  row_ += '\n';
  out_ << row_;
  row_.clear();
  first_ = true;
}

void CsvWriter::close() {
  out_.flush();
  if (!out_) throw IoError("write failed: " + path_.string());
  out_.close();
}

// ---------------------------------------------------------------------------

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) throw std::runtime_error("sha256 update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md, &len) != 1) throw std::runtime_error("sha256 final failed");
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
      s += digits[md[i] >> 4];
      s += digits[md[i] & 15];
    }
    return s;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string dataset_fingerprint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetNotFound(dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  for (const auto& rel : files) {
    const std::string name = rel.generic_string();
    h.update(name.data(), name.size() + 1);  // include the terminator as a separator
    std::ifstream in(dir / rel, std::ios::binary);
    if (!in) throw IoError("cannot read " + (dir / rel).string());
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  return h.hex();
}

std::string artifact_version() { return BHEALTH_VERSION; }

std::vector<fs::path> emit_report(const RunRecord& record, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  nlohmann::ordered_json m;
  m["artifact_version"] = artifact_version();
  m["command"] = record.command;
  m["config"] = record.config;
  m["seed"] = record.config.contains("seed") ? record.config["seed"] : nlohmann::json();
  if (!record.dataset_dir.empty()) {
    m["dataset"] = {{"path", record.dataset_dir.string()}, {"fingerprint_sha256", dataset_fingerprint(record.dataset_dir)}};
  } else {
    m["dataset"] = nullptr;
  }
  m["config_sha256"] = sha256_hex(record.config.dump());
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& p : record.artifacts) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read artifact " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    files.push_back({{"file", p.filename().string()}, {"sha256", sha256_hex(ss.str())}});
  }
  m["artifacts"] = std::move(files);

  const fs::path manifest = out_dir / "manifest.json";
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << m.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + manifest.string());

  auto list = record.artifacts;
  list.push_back(manifest);
  return list;
}

}  // namespace bhealth
