#include "nsod/io.hpp"

#include "nsod/access_log.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace nsod {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

std::string slurp(const std::string& path) {
  AccessLog::instance().record_read(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create file: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) {
      if (it.key() == "instances" || it.key() == "gt" ||
          it.key() == "ground_truth") {
        throw ValidationError(where + ": ground truth must not appear inline "
                                      "in a manifest (key '" +
                              it.key() + "')");
      }
      throw ValidationError(where + ": unknown key '" + it.key() + "'");
    }
  }
}

Box box_from_json(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.size() != 4)
    throw ValidationError(where + ": box must be [x1,y1,x2,y2]");
  Box b{arr[0].get<int>(), arr[1].get<int>(), arr[2].get<int>(),
        arr[3].get<int>()};
  if (!b.valid()) {
    throw ValidationError(where + ": invalid box [" + std::to_string(b.x1) +
                          "," + std::to_string(b.y1) + "," +
                          std::to_string(b.x2) + "," + std::to_string(b.y2) +
                          "]");
  }
  return b;
}

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

void validate_id(const std::string& id, const std::string& where) {
  if (id.empty()) throw ValidationError(where + ": empty image id");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
    if (!ok) {
      throw ValidationError(where + ": image id '" + id +
                            "' contains characters outside [A-Za-z0-9_.-]");
    }
  }
}

/// Applies `fn` to each non-empty line. Line numbers are 1-based for
/// diagnostics.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  const std::string text = slurp(path);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    fn(parse_json(line, where), where);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

Manifest read_manifest(const std::string& path) {
  const json doc = parse_json(slurp(path), path);
  if (!doc.is_object())
    throw ValidationError(path + ": manifest must be a JSON object");
  reject_unknown_keys(doc, {"classes", "images"}, path);
  if (!doc.contains("classes") || !doc.contains("images"))
    throw ValidationError(path + ": manifest needs 'classes' and 'images'");

  Manifest m;
  for (const auto& c : doc["classes"]) {
    m.classes.names.push_back(c.get<std::string>());
  }
  m.classes.validate();

  if (!doc["images"].is_array() || doc["images"].empty())
    throw ValidationError(path + ": manifest contains no records");

  std::set<std::string> seen_ids;
  for (const auto& jimg : doc["images"]) {
    const std::string where =
        path + " (image '" + jimg.value("id", std::string("?")) + "')";
    reject_unknown_keys(jimg,
                        {"id", "path", "width", "height", "split",
                         "support_label", "is_distractor"},
                        where);
    ImageRecord rec;
    rec.image_id = jimg.at("id").get<std::string>();
    validate_id(rec.image_id, path);
    if (!seen_ids.insert(rec.image_id).second)
      throw ValidationError(path + ": duplicate image id '" + rec.image_id +
                            "'");
    rec.path = jimg.at("path").get<std::string>();
    rec.width = jimg.at("width").get<int>();
    rec.height = jimg.at("height").get<int>();
    if (rec.width <= 0 || rec.height <= 0)
      throw ValidationError(where + ": non-positive dimensions");
    rec.split = split_from_name(jimg.at("split").get<std::string>());
    if (jimg.contains("support_label") && !jimg["support_label"].is_null())
      rec.support_label = jimg["support_label"].get<int>();
    rec.is_distractor = jimg.value("is_distractor", false);

    if (rec.split == Split::Support) {
      if (!rec.support_label.has_value())
        throw ValidationError(path + ": support record '" + rec.image_id +
                              "' is missing support_label");
      if (*rec.support_label < 0 || *rec.support_label >= m.classes.size())
        throw ValidationError(path + ": support record '" + rec.image_id +
                              "' has out-of-range support_label");
    } else if (rec.support_label.has_value()) {
      throw ValidationError(path + ": non-support record '" + rec.image_id +
                            "' must not carry support_label");
    }
    m.images.push_back(std::move(rec));
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  json doc;
  doc["classes"] = manifest.classes.names;
  json images = json::array();
  for (const auto& rec : manifest.images) {
    json j;
    j["id"] = rec.image_id;
    j["path"] = rec.path;
    j["width"] = rec.width;
    j["height"] = rec.height;
    j["split"] = split_name(rec.split);
    if (rec.support_label.has_value()) j["support_label"] = *rec.support_label;
    if (rec.is_distractor) j["is_distractor"] = true;
    images.push_back(std::move(j));
  }
  doc["images"] = std::move(images);
  spit(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

std::vector<GroundTruth> read_ground_truth(const std::string& path) {
  std::vector<GroundTruth> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) {
    GroundTruth gt;
    gt.image_id = j.at("id").get<std::string>();
    for (const auto& inst : j.at("instances")) {
      GtInstance gi;
      gi.box = box_from_json(inst.at("box"), where);
      gi.class_index = inst.at("class").get<int>();
      if (gi.class_index < 0)
        throw ValidationError(where + ": negative class index");
      gt.instances.push_back(gi);
    }
    out.push_back(std::move(gt));
  });
  return out;
}

void write_ground_truth(const std::string& path,
                        const std::vector<GroundTruth>& gt) {
  std::ostringstream out;
  for (const auto& g : gt) {
    json j;
    j["id"] = g.image_id;
    json instances = json::array();
    for (const auto& inst : g.instances) {
      instances.push_back({{"box", box_to_json(inst.box)},
                           {"class", inst.class_index}});
    }
    j["instances"] = std::move(instances);
    out << j.dump() << "\n";
  }
  spit(path, out.str());
}

// ---------------------------------------------------------------------------
// Proposals
// ---------------------------------------------------------------------------

std::vector<ProposalSet> read_proposals(const std::string& path) {
  std::vector<ProposalSet> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) {
    ProposalSet ps;
    ps.image_id = j.at("id").get<std::string>();
    for (const auto& b : j.at("boxes")) {
      ps.boxes.push_back(box_from_json(b, where));
    }
    if (ps.boxes.empty())
      throw ValidationError(where + ": proposal set for '" + ps.image_id +
                            "' is empty");
    out.push_back(std::move(ps));
  });
  return out;
}

void write_proposals(const std::string& path,
                     const std::vector<ProposalSet>& proposals) {
  std::ostringstream out;
  for (const auto& ps : proposals) {
    json j;
    j["id"] = ps.image_id;
    json boxes = json::array();
    for (const auto& b : ps.boxes) boxes.push_back(box_to_json(b));
    j["boxes"] = std::move(boxes);
    out << j.dump() << "\n";
  }
  spit(path, out.str());
}

// ---------------------------------------------------------------------------
// Pseudo-labels
// ---------------------------------------------------------------------------

namespace {

ClassScoreVector scores_from_json(const json& arr, const std::string& where) {
  ClassScoreVector v;
  for (const auto& x : arr) {
    const double d = x.get<double>();
    if (!(d >= 0.0 && d <= 1.0))
      throw ValidationError(where + ": score outside [0,1]");
    v.push_back(d);
  }
  return v;
}

}  // namespace

std::vector<PseudoLabelRecord> read_pseudo_labels(const std::string& path) {
  std::vector<PseudoLabelRecord> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) {
    PseudoLabelRecord rec;
    rec.image_id = j.at("id").get<std::string>();
    rec.sigma_s = scores_from_json(j.at("sigma_s"), where);
    if (j.contains("sigma_a") && !j["sigma_a"].is_null())
      rec.sigma_a = scores_from_json(j["sigma_a"], where);
    rec.q_hat = scores_from_json(j.at("q_hat"), where);
    rec.cway = j.at("cway").get<int>();
    for (const auto& y : j.at("y_hat")) {
      const int b = y.get<int>();
      if (b != 0 && b != 1)
        throw ValidationError(where + ": y_hat entries must be 0 or 1");
      rec.y_hat.push_back(b);
    }
    out.push_back(std::move(rec));
  });
  return out;
}

void write_pseudo_labels(const std::string& path,
                         const std::vector<PseudoLabelRecord>& records) {
  std::ostringstream out;
  for (const auto& rec : records) {
    json j;
    j["id"] = rec.image_id;
    j["sigma_s"] = rec.sigma_s;
    if (rec.sigma_a.has_value())
      j["sigma_a"] = *rec.sigma_a;
    else
      j["sigma_a"] = nullptr;
    j["q_hat"] = rec.q_hat;
    j["cway"] = rec.cway;
    j["y_hat"] = rec.y_hat;
    out << j.dump() << "\n";
  }
  spit(path, out.str());
}

// ---------------------------------------------------------------------------
// Detections
// ---------------------------------------------------------------------------

std::vector<Detection> read_detections(const std::string& path) {
  std::vector<Detection> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) {
    Detection d;
    d.image_id = j.at("id").get<std::string>();
    d.box = box_from_json(j.at("box"), where);
    d.class_index = j.at("class").get<int>();
    d.score = j.at("score").get<double>();
    if (!std::isfinite(d.score))
      throw ValidationError(where + ": non-finite detection score");
    out.push_back(std::move(d));
  });
  return out;
}

void write_detections(const std::string& path,
                      const std::vector<Detection>& detections) {
  std::ostringstream out;
  for (const auto& d : detections) {
    json j;
    j["id"] = d.image_id;
    j["box"] = box_to_json(d.box);
    j["class"] = d.class_index;
    j["score"] = d.score;
    out << j.dump() << "\n";
  }
  spit(path, out.str());
}

// ---------------------------------------------------------------------------
// Feature files
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "feature file codec assumes a little-endian host");

namespace detail {

void write_file_bytes(const std::string& path, const std::string& bytes) {
  spit(path, bytes);
}

std::string read_file_bytes(const std::string& path) { return slurp(path); }

void append_u32le(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void append_f32le(std::string& out, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

std::uint32_t take_u32le(const std::string& in, std::size_t& pos,
                         const std::string& path) {
  if (pos + 4 > in.size())
    throw ValidationError(path + ": truncated file");
  std::uint32_t v;
  std::memcpy(&v, in.data() + pos, 4);
  pos += 4;
  return v;
}

float take_f32le(const std::string& in, std::size_t& pos,
                 const std::string& path) {
  if (pos + 4 > in.size())
    throw ValidationError(path + ": truncated file");
  float v;
  std::memcpy(&v, in.data() + pos, 4);
  pos += 4;
  return v;
}

void expect_magic(const std::string& in, std::size_t& pos,
                  const char (&magic)[9], const std::string& path,
                  const std::string& what) {
  if (in.size() < pos + 8 || std::memcmp(in.data() + pos, magic, 8) != 0)
    throw ValidationError(path + ": not a " + what);
  pos += 8;
}

}  // namespace detail

void write_features(const std::string& path, const MatF& matrix) {
  if (matrix.rows < 1 || matrix.cols < 1)
    throw ValidationError("feature matrix must be at least 1x1");
  for (float v : matrix.data) {
    if (!std::isfinite(v))
      throw ValidationError("feature matrix contains non-finite entries");
  }
  std::string out;
  out.reserve(16 + matrix.data.size() * 4);
  out.append("NSODFEAT", 8);
  detail::append_u32le(out, static_cast<std::uint32_t>(matrix.rows));
  detail::append_u32le(out, static_cast<std::uint32_t>(matrix.cols));
  const char* raw = reinterpret_cast<const char*>(matrix.data.data());
  out.append(raw, matrix.data.size() * 4);
  detail::write_file_bytes(path, out);
}

MatF read_features(const std::string& path) {
  const std::string in = detail::read_file_bytes(path);
  std::size_t pos = 0;
  detail::expect_magic(in, pos, "NSODFEAT", path, "feature file");
  const std::uint32_t rows = detail::take_u32le(in, pos, path);
  const std::uint32_t cols = detail::take_u32le(in, pos, path);
  if (rows < 1 || cols < 1)
    throw ValidationError(path + ": degenerate feature dimensions");
  const std::size_t need = static_cast<std::size_t>(rows) * cols * 4;
  if (in.size() - pos < need)
    throw ValidationError(path + ": truncated file");
  if (in.size() - pos > need)
    throw ValidationError(path + ": trailing bytes after feature payload");
  MatF m(static_cast<int>(rows), static_cast<int>(cols));
  std::memcpy(m.data.data(), in.data() + pos, need);
  return m;
}

// ---------------------------------------------------------------------------
// Lookup helpers
// ---------------------------------------------------------------------------

std::map<std::string, std::vector<GtInstance>> gt_by_image(
    const std::vector<GroundTruth>& gt) {
  std::map<std::string, std::vector<GtInstance>> out;
  for (const auto& g : gt) {
    if (!out.emplace(g.image_id, g.instances).second)
      throw ValidationError("duplicate ground-truth entry for image '" +
                            g.image_id + "'");
  }
  return out;
}

std::map<std::string, std::vector<Box>> proposals_by_image(
    const std::vector<ProposalSet>& proposals) {
  std::map<std::string, std::vector<Box>> out;
  for (const auto& p : proposals) {
    if (!out.emplace(p.image_id, p.boxes).second)
      throw ValidationError("duplicate proposal entry for image '" +
                            p.image_id + "'");
  }
  return out;
}

}  // namespace nsod
