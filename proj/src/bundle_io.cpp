#include "patchfuse/bundle_io.hpp"

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace patchfuse {

namespace {

// Little-endian float32 on every target this builds for; static_assert keeps
// the byte copy honest.
static_assert(sizeof(float) == 4);
static_assert(std::endian::native == std::endian::little);

void atomic_write(const std::string& path, const void* data,
                  std::size_t size) {
  const fs::path target(path);
  const fs::path tmp = target.parent_path() /
                       (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + tmp.string());
    out.write(static_cast<const char*>(data), size);
    if (!out) throw ValidationError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return bytes;
}

std::vector<float> probs_to_f32(const std::vector<double>& probs) {
  std::vector<float> f(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    f[i] = static_cast<float>(probs[i]);
  return f;
}

}  // namespace

std::string write_bundle(const std::string& dir, const Bundle& bundle) {
  fs::create_directories(dir);
  json manifest;
  manifest["width"] = bundle.grid.width;
  manifest["height"] = bundle.grid.height;
  manifest["labels"] = kLocalLabels;
  manifest["patches"] = json::array();

  for (std::size_t i = 0; i < bundle.patches.size(); ++i) {
    const SoftmaxPatch& p = bundle.patches[i];
    const std::string data_name = p.id + ".bin";
    const std::vector<float> f32 = probs_to_f32(p.probs);
    atomic_write((fs::path(dir) / data_name).string(), f32.data(),
                 f32.size() * sizeof(float));
    manifest["patches"].push_back({{"id", p.id},
                                   {"x0", p.x0},
                                   {"y0", p.y0},
                                   {"width", p.width},
                                   {"height", p.height},
                                   {"size_class", to_string(p.size_class)},
                                   {"data", data_name}});
  }

  const std::string text = manifest.dump(2) + "\n";
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  atomic_write(manifest_path, text.data(), text.size());
  return manifest_path;
}

Bundle read_bundle(const std::string& manifest_path) {
  json manifest;
  try {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open: " + manifest_path);
    in >> manifest;
  } catch (const json::exception& e) {
    throw ValidationError("bad manifest " + manifest_path + ": " + e.what());
  }

  Bundle bundle;
  try {
    bundle.grid.width = manifest.at("width").get<int>();
    bundle.grid.height = manifest.at("height").get<int>();
    const int labels = manifest.at("labels").get<int>();
    if (labels != kLocalLabels)
      throw ValidationError("manifest declares " + std::to_string(labels) +
                            " local labels, this build requires 6");
    if (!bundle.grid.valid())
      throw ValidationError("manifest declares a degenerate image size");

    const fs::path base = fs::path(manifest_path).parent_path();
    for (const json& rec : manifest.at("patches")) {
      SoftmaxPatch p;
      p.id = rec.at("id").get<std::string>();
      p.x0 = rec.at("x0").get<int>();
      p.y0 = rec.at("y0").get<int>();
      p.width = rec.at("width").get<int>();
      p.height = rec.at("height").get<int>();
      p.size_class = parse_size_class(rec.at("size_class").get<std::string>());

      const std::string data_path =
          (base / rec.at("data").get<std::string>()).string();
      const std::vector<char> bytes = read_file(data_path);
      const std::size_t expect = static_cast<std::size_t>(p.width) *
                                 p.height * kLocalLabels * sizeof(float);
      if (bytes.size() != expect)
        throw ValidationError(
            "tensor " + data_path + " is " + std::to_string(bytes.size()) +
            " bytes, manifest shape needs " + std::to_string(expect));

      p.probs.resize(bytes.size() / sizeof(float));
      const float* f = reinterpret_cast<const float*>(bytes.data());
      for (std::size_t i = 0; i < p.probs.size(); ++i)
        p.probs[i] = static_cast<double>(f[i]);
      bundle.patches.push_back(
          validate_patch(std::move(p), bundle.grid));
    }
  } catch (const json::exception& e) {
    throw ValidationError("bad manifest " + manifest_path + ": " + e.what());
  }
  return bundle;
}

void write_label_map(const std::string& path, const GlobalLabelMap& labels) {
  if (static_cast<std::int64_t>(labels.labels.size()) != labels.grid.size())
    throw ValidationError("label map shape mismatch");
  for (std::uint8_t v : labels.labels)
    if (v > 9) throw ValidationError("label value above 9");
  std::ostringstream header;
  header << "P5\n" << labels.grid.width << " " << labels.grid.height
         << "\n255\n";
  std::vector<char> bytes;
  const std::string h = header.str();
  bytes.insert(bytes.end(), h.begin(), h.end());
  bytes.insert(bytes.end(), labels.labels.begin(), labels.labels.end());
  atomic_write(path, bytes.data(), bytes.size());
}

GlobalLabelMap read_label_map(const std::string& path) {
  const std::vector<char> bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size() &&
           std::isspace(static_cast<unsigned char>(bytes[pos])))
      ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      while (pos < bytes.size() &&
             std::isspace(static_cast<unsigned char>(bytes[pos])))
        ++pos;
    }
    std::size_t start = pos;
    while (pos < bytes.size() &&
           !std::isspace(static_cast<unsigned char>(bytes[pos])))
      ++pos;
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };

  if (token() != "P5") throw ValidationError(path + ": not a binary graymap");
  GlobalLabelMap map;
  try {
    map.grid.width = std::stoi(token());
    map.grid.height = std::stoi(token());
    const int maxval = std::stoi(token());
    if (maxval != 255)
      throw ValidationError(path + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw ValidationError(path + ": bad graymap header");
  }
  if (!map.grid.valid())
    throw ValidationError(path + ": degenerate image size");
  ++pos;  // single whitespace byte after maxval
  if (bytes.size() - pos != static_cast<std::size_t>(map.grid.size()))
    throw ValidationError(path + ": pixel payload length mismatch");
  map.labels.assign(bytes.begin() + pos, bytes.end());
  for (std::uint8_t v : map.labels)
    if (v > 9) throw ValidationError(path + ": label value above 9");
  return map;
}

void write_marginals(const std::string& path, const BeliefField& q) {
  if (static_cast<std::int64_t>(q.q.size()) !=
      q.grid.size() * kGlobalLabels)
    throw ValidationError("marginals shape mismatch");
  const std::vector<float> f32 = probs_to_f32(q.q);
  atomic_write(path, f32.data(), f32.size() * sizeof(float));
}

}  // namespace patchfuse
