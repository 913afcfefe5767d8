// Copyright 2026 The signrecon Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "signrecon/checkpoint.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <iomanip>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "signrecon/errors.hpp"
#include "signrecon/random.hpp"

namespace signrecon::train {

namespace {

constexpr char kMagic[8] = {'S', 'I', 'G', 'N', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void blob(const std::vector<std::vector<double>>& tensors) {
    pod<std::uint64_t>(tensors.size());
    for (const auto& t : tensors) {
      pod<std::uint64_t>(t.size());
      buf_.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
    }
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<std::vector<double>> blob() {
    const auto count = pod<std::uint64_t>();
    if (count > end_) throw CorruptFileError("checkpoint: implausible tensor count");
    std::vector<std::vector<double>> out(count);
    for (auto& t : out) {
      const auto n = pod<std::uint64_t>();
      if (n > end_ / sizeof(double)) throw CorruptFileError("checkpoint: implausible tensor size");
      need(n * sizeof(double));
      t.resize(n);
      std::memcpy(t.data(), buf_.data() + pos_, n * sizeof(double));
      pos_ += n * sizeof(double);
    }
    return out;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CorruptFileError("checkpoint: file is truncated");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

// JSON cannot hold NaN, so metric values travel as strings when not finite.
nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

double number(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::string_view to_string(Stage s) { return s == Stage::kPretrain ? "pretrain" : "finetune"; }

Stage parse_stage(std::string_view s) {
  if (s == "pretrain") return Stage::kPretrain;
  if (s == "finetune") return Stage::kFinetune;
  throw ConfigError("unknown training stage '" + std::string(s) + "'");
}

std::string MetricsLog::to_csv() const {
  std::ostringstream os;
  os << "stage,epoch,split,loss,psnr,ssim\n" << std::setprecision(10);
  auto cell = [&](double v) {
    if (!std::isnan(v)) os << v;
  };
  for (const auto& r : rows_) {
    os << to_string(r.stage) << "," << r.epoch << "," << r.split << ",";
    cell(r.loss);
    os << ",";
    cell(r.psnr);
    os << ",";
    cell(r.ssim);
    os << "\n";
  }
  return os.str();
}

Checkpoint Checkpoint::capture(const nets::ReconModel& model, std::uint64_t config_hash) {
  Checkpoint c;
  c.config_hash = config_hash;
  c.model_name = model.name();
  for (const auto& p : model.params().items()) {
    c.param_names.push_back(p.name);
    c.param_shapes.push_back(p.var.shape());
  }
  c.params = model.params().snapshot();
  c.stats = model.continuous_stats();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["model"] = ckpt.model_name;
  header["stage"] = std::string(to_string(ckpt.stage));
  header["epoch"] = ckpt.epoch;
  header["param_names"] = ckpt.param_names;
  header["param_shapes"] = ckpt.param_shapes;
  header["stats_mean"] = ckpt.stats.mean;
  header["stats_std"] = ckpt.stats.std;
  header["adam_step"] = ckpt.adam.step;
  header["rng_state"] = ckpt.rng_state;
  header["best_val_psnr"] = number(ckpt.best_val_psnr);
  header["best_epoch"] = ckpt.best_epoch;
  auto& rows = header["log"] = nlohmann::json::array();
  for (const auto& r : ckpt.log.rows()) {
    rows.push_back({std::string(to_string(r.stage)), r.epoch, r.split, number(r.loss),
                    number(r.psnr), number(r.ssim)});
  }

  Writer w;
  w.buffer().append(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(Checkpoint::kVersion);
  w.pod<std::uint64_t>(ckpt.config_hash);
  w.bytes(header.dump());
  w.blob(ckpt.params);
  w.blob(ckpt.best_params);
  w.blob(ckpt.adam.m);
  w.blob(ckpt.adam.v);
  const auto checksum = fnv1a(w.buffer());
  w.pod<std::uint64_t>(checksum);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t kPrefix = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (buf.size() < kPrefix + sizeof(std::uint64_t) || std::memcmp(buf.data(), kMagic, 8) != 0) {
    throw CorruptFileError("checkpoint " + path.string() + ": bad magic or truncated");
  }
  Reader r(buf, buf.size());
  r.pod<std::array<char, 8>>();
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw VersionError("checkpoint " + path.string() + ": format version " +
                       std::to_string(version) + ", expected " +
                       std::to_string(Checkpoint::kVersion));
  }
  const auto body_end = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body_end, sizeof(stored));
  if (fnv1a(buf.substr(0, body_end)) != stored) {
    throw CorruptFileError("checkpoint " + path.string() + ": checksum mismatch");
  }

  Reader body(buf, body_end);
  body.pod<std::array<char, 8>>();
  body.pod<std::uint32_t>();
  Checkpoint c;
  c.config_hash = body.pod<std::uint64_t>();
  if (expected_hash && *expected_hash != c.config_hash) {
    throw VersionError("checkpoint " + path.string() + " was written for a different config");
  }
  try {
    const auto header = nlohmann::json::parse(body.bytes());
    c.model_name = header.at("model").get<std::string>();
    c.stage = parse_stage(header.at("stage").get<std::string>());
    c.epoch = header.at("epoch").get<int>();
    c.param_names = header.at("param_names").get<std::vector<std::string>>();
    c.param_shapes = header.at("param_shapes").get<std::vector<ag::Shape>>();
    c.stats.mean = header.at("stats_mean").get<std::vector<double>>();
    c.stats.std = header.at("stats_std").get<std::vector<double>>();
    c.adam.step = header.at("adam_step").get<std::int64_t>();
    c.rng_state = header.at("rng_state").get<std::string>();
    c.best_val_psnr = number(header.at("best_val_psnr"));
    c.best_epoch = header.at("best_epoch").get<int>();
    for (const auto& row : header.at("log")) {
      c.log.add({parse_stage(row.at(0).get<std::string>()), row.at(1).get<int>(),
                 row.at(2).get<std::string>(), number(row.at(3)), number(row.at(4)),
                 number(row.at(5))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("checkpoint " + path.string() + ": bad header: " + e.what());
  }
  c.params = body.blob();
  c.best_params = body.blob();
  c.adam.m = body.blob();
  c.adam.v = body.blob();
  if (body.position() != body_end) throw CorruptFileError("checkpoint: trailing bytes");
  if (c.params.size() != c.param_names.size()) {
    throw CorruptFileError("checkpoint: parameter count does not match header");
  }
  return c;
}

void apply_checkpoint(const Checkpoint& ckpt, nets::ReconModel& model) {
  const auto& items = model.params().items();
  if (items.size() != ckpt.params.size()) {
    throw VersionError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                       " parameters, model " + model.name() + " has " +
                       std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].name != ckpt.param_names[i] || items[i].var.shape() != ckpt.param_shapes[i]) {
      throw VersionError("checkpoint parameter '" + ckpt.param_names[i] +
                         "' does not match model parameter '" + items[i].name + "'");
    }
  }
  model.params().restore(ckpt.params);
  model.set_continuous_stats(ckpt.stats);
}

}  // namespace signrecon::train
