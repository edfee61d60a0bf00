#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "psr/params.hpp"

namespace psr {

// Checkpoint container: a JSON header (length-prefixed, 8-byte little-endian
// count) followed by a flat stream of 64-bit little-endian floats. The header
// lists tensor names, shapes, and byte offsets into the stream, plus an
// arbitrary JSON metadata object.
class TensorArchive {
 public:
  void put(const std::string& name, const Mat& m) {
    entries_.push_back({name, static_cast<int>(m.rows()), static_cast<int>(m.cols()), data_.size()});
    const std::size_t n = static_cast<std::size_t>(m.size());
    const std::size_t base = data_.size();
    data_.resize(base + n);
    // column-major as stored by Eigen
    for (std::size_t i = 0; i < n; ++i) data_[base + i] = m.data()[i];
  }

  void put_vector(const std::string& name, const Eigen::VectorXd& v) {
    Mat m = v;
    put(name, m);
  }

  void put_scalar(const std::string& name, double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    put(name, m);
  }

  bool has(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return true;
    return false;
  }

  Mat get(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.name == name) {
        Mat m(e.rows, e.cols);
        for (Eigen::Index i = 0; i < m.size(); ++i)
          m.data()[i] = data_[e.offset_doubles + static_cast<std::size_t>(i)];
        return m;
      }
    }
    throw std::runtime_error("TensorArchive: missing tensor " + name);
  }

  Eigen::VectorXd get_vector(const std::string& name) const {
    Mat m = get(name);
    if (m.cols() != 1) throw std::runtime_error("TensorArchive: " + name + " is not a vector");
    return m.col(0);
  }

  double get_scalar(const std::string& name) const {
    Mat m = get(name);
    if (m.size() != 1) throw std::runtime_error("TensorArchive: " + name + " is not a scalar");
    return m(0, 0);
  }

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void put_param_set(const std::string& prefix, const ParamSet& ps) {
    for (int id = 0; id < ps.count(); ++id) put(prefix + "/" + ps.name(id), ps.at(id));
  }

  void get_param_set(const std::string& prefix, ParamSet& ps) const {
    for (int id = 0; id < ps.count(); ++id) {
      Mat m = get(prefix + "/" + ps.name(id));
      if (m.rows() != ps.at(id).rows() || m.cols() != ps.at(id).cols())
        throw std::runtime_error("TensorArchive: shape mismatch for " + ps.name(id));
      ps.at(id) = m;
    }
  }

  void save(const std::string& path) const {
    nlohmann::json header;
    header["format"] = "psr-checkpoint-v1";
    header["meta"] = meta_;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& e : entries_) {
      tensors.push_back({{"name", e.name},
                         {"rows", e.rows},
                         {"cols", e.cols},
                         {"offset_bytes", e.offset_doubles * sizeof(double)}});
    }
    header["tensors"] = tensors;
    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("TensorArchive: cannot open " + path);
    std::uint64_t len = hs.size();
    char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<char>((len >> (8 * i)) & 0xff);
    out.write(lenb, 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    out.write(reinterpret_cast<const char*>(data_.data()),
              static_cast<std::streamsize>(data_.size() * sizeof(double)));
    if (!out) throw std::runtime_error("TensorArchive: write failed for " + path);
  }

  static TensorArchive load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("TensorArchive: cannot open " + path);
    char lenb[8];
    in.read(lenb, 8);
    if (!in) throw std::runtime_error("TensorArchive: truncated header length");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenb[i])) << (8 * i);
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("TensorArchive: truncated header");
    nlohmann::json header = nlohmann::json::parse(hs);
    if (header.value("format", "") != std::string("psr-checkpoint-v1"))
      throw std::runtime_error("TensorArchive: unknown format");
    TensorArchive a;
    a.meta_ = header.value("meta", nlohmann::json::object());
    std::vector<double> data;
    {
      std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (raw.size() % sizeof(double) != 0) throw std::runtime_error("TensorArchive: ragged payload");
      data.resize(raw.size() / sizeof(double));
      std::memcpy(data.data(), raw.data(), raw.size());
    }
    a.data_ = std::move(data);
    for (const auto& t : header.at("tensors")) {
      Entry e;
      e.name = t.at("name").get<std::string>();
      e.rows = t.at("rows").get<int>();
      e.cols = t.at("cols").get<int>();
      e.offset_doubles = t.at("offset_bytes").get<std::size_t>() / sizeof(double);
      if (e.offset_doubles + static_cast<std::size_t>(e.rows) * static_cast<std::size_t>(e.cols) > a.data_.size())
        throw std::runtime_error("TensorArchive: tensor out of bounds: " + e.name);
      a.entries_.push_back(e);
    }
    return a;
  }

 private:
  struct Entry {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset_doubles = 0;
  };
  std::vector<Entry> entries_;
  std::vector<double> data_;
  nlohmann::json meta_;
};

}  // namespace psr
