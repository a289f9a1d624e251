// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cednn/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cednn {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// PNG

namespace {

std::vector<std::uint8_t> read_png_as(const fs::path& path, png_uint_32 format,
                                      int& width, int& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  const std::string bytes = read_file(path);
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError(path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(path.string() + ": " + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buf;
}

void write_png_raw(const fs::path& path, const std::uint8_t* data, int width,
                   int height, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data, 0, nullptr)) {
    throw IoError(path.string() + ": " + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data, 0, nullptr)) {
    throw IoError(path.string() + ": " + image.message);
  }
  out.resize(size);
  write_file_atomic(path, out);
}

}  // namespace

RgbImage read_png_rgb(const fs::path& path) {
  RgbImage img;
  img.pixels = read_png_as(path, PNG_FORMAT_RGB, img.width, img.height);
  return img;
}

GrayImage read_png_gray(const fs::path& path) {
  GrayImage img;
  img.pixels = read_png_as(path, PNG_FORMAT_GRAY, img.width, img.height);
  return img;
}

void write_png(const fs::path& path, const RgbImage& img) {
  write_png_raw(path, img.pixels.data(), img.width, img.height, PNG_FORMAT_RGB);
}

void write_png(const fs::path& path, const GrayImage& img) {
  write_png_raw(path, img.pixels.data(), img.width, img.height, PNG_FORMAT_GRAY);
}

void write_png(const fs::path& path, const BinaryMap& map) {
  write_png_raw(path, map.pixels.data(), map.width, map.height, PNG_FORMAT_GRAY);
}

// ---------------------------------------------------------------------------
// Landmarks

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int parse_int(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw IoError(where + ": '" + s + "' is not an integer");
  }
  if (used != s.size()) throw IoError(where + ": '" + s + "' is not an integer");
  return v;
}

double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw IoError(where + ": '" + s + "' is not a number");
  }
  if (used != s.size()) throw IoError(where + ": '" + s + "' is not a number");
  return v;
}

}  // namespace

LandmarkSet read_landmarks(const fs::path& path, LandmarkScheme scheme) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open landmark file " + path.string());
  const int want = scheme == LandmarkScheme::five_point ? kFivePointCount : kDenseCount;
  std::vector<Point> pts(want);
  std::vector<bool> seen(want, false);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_csv(t);
    if (f.size() != 3) throw IoError(where + ": expected index,x,y");
    const int idx = parse_int(f[0], where);
    if (idx < 0 || idx >= want || seen[idx]) {
      throw IoError(where + ": landmark index " + f[0] + " invalid or repeated");
    }
    pts[idx] = {parse_double(f[1], where), parse_double(f[2], where)};
    seen[idx] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw IoError(path.string() + ": expected " + std::to_string(want) + " landmarks");
  }
  LandmarkSet s{scheme, std::move(pts)};
  s.validate();
  return s;
}

void write_landmarks(const fs::path& path, const LandmarkSet& set) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    os << i << ',' << set.points[i].x << ',' << set.points[i].y << '\n';
  }
  write_file_atomic(path, os.str());
}

// ---------------------------------------------------------------------------
// Manifest

namespace {
const std::array<std::string, 7> kManifestColumns{
    "subject_id", "frame", "neutral", "landmarks5", "landmarks5_neutral",
    "landmarks_dense", "fold"};
}

DatasetManifest load_manifest(const fs::path& path, bool check_paths) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  bool intensities = false;
  bool have_header = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string directive = trim(t.substr(1));
      if (directive == "labels=intensity") intensities = true;
      else if (directive == "labels=binary") intensities = false;
      continue;
    }
    const auto f = split_csv(t);
    if (!have_header) {
      if (f.size() <= kManifestColumns.size()) {
        throw IoError(where + ": header needs the fixed columns plus AU columns");
      }
      for (std::size_t i = 0; i < kManifestColumns.size(); ++i) {
        if (f[i] != kManifestColumns[i]) {
          throw IoError(where + ": column " + std::to_string(i + 1) + " must be '" +
                        kManifestColumns[i] + "'");
        }
      }
      m.au_names.assign(f.begin() + kManifestColumns.size(), f.end());
      have_header = true;
      continue;
    }
    if (f.size() != kManifestColumns.size() + m.au_names.size()) {
      throw IoError(where + ": record has " + std::to_string(f.size()) +
                    " fields, header declares " +
                    std::to_string(kManifestColumns.size() + m.au_names.size()));
    }
    ManifestRecord r;
    r.subject_id = f[0];
    if (r.subject_id.empty()) throw IoError(where + ": empty subject_id");
    r.frame_path = f[1];
    r.neutral_frame_path = f[2];
    r.landmarks5_path = f[3];
    r.landmarks5_neutral_path = f[4];
    r.landmarks_dense_path = f[5];
    if (!f[6].empty()) r.fold_id = parse_int(f[6], where);
    for (std::size_t k = 0; k < m.au_names.size(); ++k) {
      const int v = parse_int(f[kManifestColumns.size() + k], where);
      if (intensities) {
        if (v < 0 || v > 5) throw IoError(where + ": intensity outside 0..5");
        r.labels.push_back(static_cast<std::uint8_t>(binarize_intensity(v)));
      } else {
        if (v != 0 && v != 1) throw IoError(where + ": binary label must be 0 or 1");
        r.labels.push_back(static_cast<std::uint8_t>(v));
      }
    }
    if (check_paths) {
      for (const std::string* p : {&r.frame_path, &r.neutral_frame_path,
                                   &r.landmarks5_path, &r.landmarks5_neutral_path,
                                   &r.landmarks_dense_path}) {
        if (!fs::exists(m.resolve(*p))) {
          throw IoError(where + ": record for subject " + r.subject_id +
                        " references missing file " + *p);
        }
      }
    }
    m.records.push_back(std::move(r));
  }
  if (!have_header) throw IoError(path.string() + ": missing header line");
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::ostringstream os;
  os << "# labels=binary\n";
  for (std::size_t i = 0; i < kManifestColumns.size(); ++i) {
    os << (i ? "," : "") << kManifestColumns[i];
  }
  for (const auto& au : manifest.au_names) os << ',' << au;
  os << '\n';
  for (const auto& r : manifest.records) {
    os << r.subject_id << ',' << r.frame_path << ',' << r.neutral_frame_path << ','
       << r.landmarks5_path << ',' << r.landmarks5_neutral_path << ','
       << r.landmarks_dense_path << ',';
    if (r.fold_id) os << *r.fold_id;
    for (auto v : r.labels) os << ',' << static_cast<int>(v);
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& section) {
  if (!j.is_object()) throw std::invalid_argument(section + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) {
      throw std::invalid_argument("unknown key '" + k + "' in " + section);
    }
  }
}

json model_to_json(const ModelConfig& c) {
  json blocks = json::array();
  for (const BlockSpec& b : c.blocks) {
    blocks.push_back({{"L", b.L}, {"M", b.M}, {"connection", to_string(b.connection)},
                      {"se_mode", to_string(b.se_mode)}});
  }
  return {{"d", c.d},
          {"attention_depth", c.attention_depth},
          {"attention_mode", to_string(c.attention_mode)},
          {"input_size", c.input_size},
          {"se_reduction", c.se_reduction},
          {"reduce_channels", c.reduce_channels},
          {"top_channels", c.top_channels},
          {"linear", c.linear},
          {"blocks", blocks}};
}

ModelConfig model_from_json(const json& j) {
  reject_unknown(j,
                 {"connection", "L", "num_blocks", "d", "attention_depth",
                  "attention_mode", "se_mode", "se_reduction", "input_size",
                  "reduce_channels", "top_channels", "linear", "blocks"},
                 "model");
  const Connection conn = parse_connection(j.value("connection", "res"));
  const SeMode se = parse_se_mode(j.value("se_mode", "none"));
  const int depth = j.value("attention_depth", 2);
  ModelConfig c = ModelConfig::standard(conn, j.value("L", 6), j.value("d", 12), depth, se);
  if (j.contains("blocks")) {
    c.blocks.clear();
    int i = 1;
    for (const auto& jb : j.at("blocks")) {
      reject_unknown(jb, {"L", "M", "connection", "se_mode"},
                     "model.blocks[" + std::to_string(i - 1) + "]");
      BlockSpec b;
      b.index = i;
      b.L = jb.at("L").get<int>();
      b.M = jb.at("M").get<int>();
      b.connection = parse_connection(jb.value("connection", to_string(conn)));
      b.se_mode = parse_se_mode(jb.value("se_mode", to_string(se)));
      b.attention = i <= depth;
      c.blocks.push_back(b);
      ++i;
    }
  } else if (j.contains("num_blocks")) {
    const int nb = j.at("num_blocks").get<int>();
    if (nb < 1 || nb > 6) throw std::invalid_argument("num_blocks must be 1..6");
    c.blocks.resize(nb);
  }
  c.attention_mode = parse_attention_mode(j.value("attention_mode", "channel_groups"));
  c.input_size = j.value("input_size", 224);
  c.se_reduction = j.value("se_reduction", 16);
  c.reduce_channels = j.value("reduce_channels", 144);
  c.top_channels = j.value("top_channels", 1024);
  c.linear = j.value("linear", false);
  c.validate();
  return c;
}

std::string profile_name(LrSchedule::Profile p) {
  switch (p) {
    case LrSchedule::Profile::ck: return "ck";
    case LrSchedule::Profile::disfa: return "disfa";
    case LrSchedule::Profile::custom: return "custom";
  }
  return "custom";
}

}  // namespace

AppConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"model", "train", "attention", "folds"}, "config");
  AppConfig c;
  try {
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    else c.model.validate();
    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown(t,
                     {"epochs", "batch_size", "lr_profile", "base_lr", "lr_factor",
                      "lr_step", "momentum", "weight_decay", "seed"},
                     "train");
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      // Explicit values that differ from the named profile make it custom;
      // values equal to it (as written by config_to_json) keep the name.
      LrSchedule& s = c.train.schedule;
      s = LrSchedule::parse(t.value("lr_profile", std::string("ck")));
      const LrSchedule named = s;
      s.base = t.value("base_lr", s.base);
      s.factor = t.value("lr_factor", s.factor);
      s.step_epochs = t.value("lr_step", s.step_epochs);
      if (s.base != named.base || s.factor != named.factor ||
          s.step_epochs != named.step_epochs) {
        s.profile = LrSchedule::Profile::custom;
      }
      c.train.momentum = t.value("momentum", c.train.momentum);
      c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
      c.train.seed = t.value("seed", c.train.seed);
    }
    if (j.contains("attention")) {
      const json& a = j.at("attention");
      reject_unknown(a, {"thresholds", "template", "template_size", "contour_inset",
                         "brow_lift"},
                     "attention");
      if (a.contains("thresholds")) {
        const auto th = a.at("thresholds").get<std::vector<int>>();
        if (th.size() != kAttentionMaps) {
          throw std::invalid_argument("attention.thresholds needs five values");
        }
        std::copy(th.begin(), th.end(), c.attention.thresholds.begin());
      }
      if (a.contains("template")) {
        const auto pts = a.at("template").get<std::vector<std::array<double, 2>>>();
        if (pts.size() != kFivePointCount) {
          throw std::invalid_argument("attention.template needs five points");
        }
        for (int i = 0; i < kFivePointCount; ++i) {
          c.attention.alignment.points[i] = {pts[i][0], pts[i][1]};
        }
      }
      c.attention.alignment.size = a.value("template_size", c.attention.alignment.size);
      c.attention.mask.contour_inset = a.value("contour_inset", c.attention.mask.contour_inset);
      c.attention.mask.brow_lift = a.value("brow_lift", c.attention.mask.brow_lift);
    }
    if (j.contains("folds")) {
      const json& f = j.at("folds");
      reject_unknown(f, {"scheme", "groups"}, "folds");
      const std::string scheme = f.value("scheme", std::string("leave_groups"));
      if (scheme == "fixed_three_fold") c.fold_scheme = FoldScheme::fixed_three_fold;
      else if (scheme == "leave_groups") c.fold_scheme = FoldScheme::leave_groups;
      else throw std::invalid_argument("unknown fold scheme '" + scheme + "'");
      c.fold_groups = f.value("groups", c.fold_groups);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return c;
}

AppConfig load_config(const fs::path& path) { return parse_config(read_file(path)); }

std::string model_config_to_json(const ModelConfig& config) {
  return model_to_json(config).dump(2);
}

ModelConfig parse_model_config(const std::string& json_text) {
  return model_from_json(json::parse(json_text));
}

std::string config_to_json(const AppConfig& c) {
  json tmpl = json::array();
  for (const Point& p : c.attention.alignment.points) tmpl.push_back({p.x, p.y});
  json j{{"model", model_to_json(c.model)},
         {"train",
          {{"epochs", c.train.epochs},
           {"batch_size", c.train.batch_size},
           {"lr_profile", profile_name(c.train.schedule.profile)},
           {"base_lr", c.train.schedule.base},
           {"lr_factor", c.train.schedule.factor},
           {"lr_step", c.train.schedule.step_epochs},
           {"momentum", c.train.momentum},
           {"weight_decay", c.train.weight_decay},
           {"seed", c.train.seed}}},
         {"attention",
          {{"thresholds", c.attention.thresholds},
           {"template", tmpl},
           {"template_size", c.attention.alignment.size},
           {"contour_inset", c.attention.mask.contour_inset},
           {"brow_lift", c.attention.mask.brow_lift}}},
         {"folds",
          {{"scheme", c.fold_scheme == FoldScheme::fixed_three_fold ? "fixed_three_fold"
                                                                    : "leave_groups"},
           {"groups", c.fold_groups}}}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'C', 'E', 'D', 'N', 'N', 'C', 'K', 'P'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

struct ParsedCheckpoint {
  CheckpointHeader header;
  std::size_t payload_start = 0;
};

ParsedCheckpoint parse_header(const std::string& bytes, const std::string& name,
                              bool whole_file) {
  constexpr std::size_t fixed = sizeof kMagic + 4 + 8;
  if (bytes.size() < fixed || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError(name + ": not a checkpoint (bad magic or truncated)");
  }
  ParsedCheckpoint p;
  p.header.version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (p.header.version != kCheckpointVersion) {
    throw IoError(name + ": checkpoint version " + std::to_string(p.header.version) +
                  " is not supported (expected " + std::to_string(kCheckpointVersion) +
                  ")");
  }
  const std::uint64_t hlen = get_le(bytes, 12, 8);
  if (bytes.size() < fixed + hlen) throw IoError(name + ": truncated header");
  json h;
  try {
    h = json::parse(bytes.substr(fixed, hlen));
  } catch (const json::exception& e) {
    throw IoError(name + ": corrupt header: " + e.what());
  }
  try {
    p.header.config = model_from_json(h.at("config"));
    for (const auto& e : h.at("inventory")) {
      p.header.inventory.push_back({e.at("name").get<std::string>(),
                                    e.at("shape").get<std::vector<int>>(),
                                    e.at("offset").get<std::uint64_t>(),
                                    e.at("count").get<std::uint64_t>()});
    }
    const json& m = h.at("metadata");
    p.header.meta.epoch = m.at("epoch").get<int>();
    p.header.meta.seed = m.at("seed").get<std::uint64_t>();
    p.header.meta.momentum = m.at("momentum").get<double>();
    p.header.meta.weight_decay = m.at("weight_decay").get<double>();
    p.header.meta.learning_rate = m.at("learning_rate").get<double>();
    p.header.payload_bytes = h.at("payload_bytes").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw IoError(name + ": invalid header: " + e.what());
  }
  std::uint64_t expected = 0;
  for (const auto& e : p.header.inventory) {
    std::uint64_t prod = 1;
    for (int d : e.shape) prod *= static_cast<std::uint64_t>(d);
    if (prod != e.count || e.offset != expected) {
      throw IoError(name + ": inventory entry " + e.name + " is inconsistent");
    }
    expected += 4 * e.count;
  }
  if (expected != p.header.payload_bytes) {
    throw IoError(name + ": inventory describes " + std::to_string(expected) +
                  " payload bytes, header declares " +
                  std::to_string(p.header.payload_bytes));
  }
  p.payload_start = fixed + hlen;
  if (whole_file && bytes.size() - p.payload_start != p.header.payload_bytes) {
    throw IoError(name + ": payload length mismatch (" +
                  std::to_string(bytes.size() - p.payload_start) + " bytes, expected " +
                  std::to_string(p.header.payload_bytes) + ")");
  }
  return p;
}

}  // namespace

void save_checkpoint(const fs::path& path, ModelParams<float>& params,
                     const CheckpointMeta& meta) {
  auto inv = params.inventory();
  json inventory = json::array();
  std::uint64_t offset = 0;
  for (const auto& p : inv) {
    inventory.push_back(
        {{"name", p.name}, {"shape", p.shape}, {"offset", offset}, {"count", p.count()}});
    offset += 4 * p.count();
  }
  json header{{"format_version", kCheckpointVersion},
              {"config", model_to_json(params.config)},
              {"inventory", inventory},
              {"metadata",
               {{"epoch", meta.epoch},
                {"seed", meta.seed},
                {"momentum", meta.momentum},
                {"weight_decay", meta.weight_decay},
                {"learning_rate", meta.learning_rate}}},
              {"payload_bytes", offset},
              {"payload_encoding", "float32-le"}};
  const std::string htext = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u64(out, htext.size());
  out += htext;
  out.reserve(out.size() + offset);
  for (const auto& p : inv) {
    for (float v : p.value) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  write_file_atomic(path, out);
}

CheckpointHeader read_checkpoint_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string head(20, '\0');
  in.read(head.data(), 20);
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (head.size() < 20) throw IoError(path.string() + ": truncated header");
  const std::uint64_t hlen = get_le(head, 12, 8);
  std::string text(hlen, '\0');
  in.read(text.data(), static_cast<std::streamsize>(hlen));
  if (static_cast<std::uint64_t>(in.gcount()) != hlen) {
    throw IoError(path.string() + ": truncated header");
  }
  return parse_header(head + text, path.string(), false).header;
}

ModelParams<float> load_checkpoint(const fs::path& path, CheckpointMeta* meta) {
  const std::string bytes = read_file(path);
  const ParsedCheckpoint p = parse_header(bytes, path.string(), true);
  ModelParams<float> model = build_model<float>(p.header.config, 0);
  auto inv = model.inventory();
  if (inv.size() != p.header.inventory.size()) {
    throw IoError(path.string() + ": inventory does not match the model layout");
  }
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const CheckpointEntry& e = p.header.inventory[i];
    if (inv[i].name != e.name || inv[i].shape != e.shape) {
      throw IoError(path.string() + ": entry " + e.name + " does not match " +
                    inv[i].name);
    }
    std::size_t pos = p.payload_start + e.offset;
    for (float& v : inv[i].value) {
      const auto bits = static_cast<std::uint32_t>(get_le(bytes, pos, 4));
      std::memcpy(&v, &bits, 4);
      pos += 4;
    }
  }
  if (meta) *meta = p.header.meta;
  return model;
}

// ---------------------------------------------------------------------------
// Attention stacks

void save_attention_stack(const fs::path& dir, const AttentionStack& stack) {
  fs::create_directories(dir);
  json active = json::array();
  for (int k = 0; k < kAttentionMaps; ++k) {
    write_png(dir / ("map_" + std::to_string(stack.thresholds[k]) + ".png"),
              stack.maps[k]);
    active.push_back(std::count_if(stack.maps[k].pixels.begin(),
                                   stack.maps[k].pixels.end(),
                                   [](std::uint8_t v) { return v != 0; }));
  }
  json j{{"thresholds", stack.thresholds},
         {"size", stack.maps[0].width},
         {"pyramid_sizes", stack.pyramid_sizes()},
         {"active_pixels", active}};
  write_file_atomic(dir / "stack.json", j.dump(2) + "\n");
}

AttentionStack load_attention_stack(const fs::path& dir) {
  const json j = json::parse(read_file(dir / "stack.json"));
  AttentionStack s;
  const auto th = j.at("thresholds").get<std::vector<int>>();
  if (th.size() != kAttentionMaps) throw IoError(dir.string() + ": need five thresholds");
  std::copy(th.begin(), th.end(), s.thresholds.begin());
  for (int k = 0; k < kAttentionMaps; ++k) {
    const fs::path p = dir / ("map_" + std::to_string(s.thresholds[k]) + ".png");
    GrayImage g = read_png_gray(p);
    for (auto v : g.pixels) {
      if (v != 0 && v != 255) throw IoError(p.string() + ": map is not two-valued");
    }
    s.maps[k].width = g.width;
    s.maps[k].height = g.height;
    s.maps[k].pixels = std::move(g.pixels);
  }
  s.pyramid = build_pyramid(s.maps);
  return s;
}

// ---------------------------------------------------------------------------
// Samples

AttentionResult process_record(const DatasetManifest& manifest,
                               const ManifestRecord& record,
                               const PipelineOptions& options) {
  const RgbImage action = read_png_rgb(manifest.resolve(record.frame_path));
  const RgbImage neutral = read_png_rgb(manifest.resolve(record.neutral_frame_path));
  const LandmarkSet five_a =
      read_landmarks(manifest.resolve(record.landmarks5_path), LandmarkScheme::five_point);
  const LandmarkSet five_n = read_landmarks(
      manifest.resolve(record.landmarks5_neutral_path), LandmarkScheme::five_point);
  const LandmarkSet dense =
      read_landmarks(manifest.resolve(record.landmarks_dense_path), LandmarkScheme::dense68);
  return generate_attention_stack(action, neutral, five_a, five_n, dense, options);
}

std::vector<Sample> load_samples(const DatasetManifest& manifest,
                                 const std::vector<std::size_t>& indices,
                                 const PipelineOptions& options, int input_size) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const ManifestRecord& r = manifest.records.at(i);
    AttentionResult res = process_record(manifest, r, options);
    Sample s;
    s.subject_id = r.subject_id;
    s.image = image_to_tensor<float>(res.aligned_action, input_size);
    s.stack = std::move(res.stack);
    s.labels = r.labels;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cednn
