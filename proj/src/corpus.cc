#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pixlab/error.h"
#include "pixlab/harness.h"

namespace fs = std::filesystem;

namespace pixlab {

namespace {

constexpr std::string_view kManifestHeader = "image_file,label";

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Corpus load_corpus(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
  const fs::path base = fs::path(manifest_path).parent_path();

  Corpus corpus;
  corpus.manifest_path = manifest_path;
  std::string line;
  std::size_t line_no = 0;
  std::size_t offset = 0;
  std::set<std::string> seen;

  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    ++line_no;
    line = trim_cr(line);
    if (line_no == 1) {
      if (line != kManifestHeader) {
        throw ParseError(manifest_path + ": expected header '" + std::string(kManifestHeader) + "'", 0);
      }
      continue;
    }
    if (line.empty()) continue;

    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) {
      throw ParseError(manifest_path + ": line " + std::to_string(line_no) + " is not 'image_file,label'",
                       line_start);
    }
    const std::string file = line.substr(0, comma);
    const std::string label_text = line.substr(comma + 1);
    std::size_t label = 0;
    const auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc() || ptr != label_text.data() + label_text.size()) {
      throw ParseError(manifest_path + ": line " + std::to_string(line_no) + " has bad label '" + label_text + "'",
                       line_start + comma + 1);
    }
    if (!seen.insert(file).second) {
      throw ValidationError(manifest_path + ": duplicate image id '" + file + "'");
    }

    const fs::path image_path = base / file;
    if (!fs::exists(image_path)) throw IoError("missing image file '" + image_path.string() + "'");
    Tensor pixels = read_tensor_file(image_path.string());
    require_image_shape(pixels);
    if (!corpus.entries.empty() && pixels.shape() != corpus.entries.front().raw.pixels.shape()) {
      throw ShapeError("inconsistent image shapes: " + corpus.entries.front().id + " is " +
                       shape_string(corpus.entries.front().raw.pixels.shape()) + ", " + file + " is " +
                       shape_string(pixels.shape()));
    }
    corpus.entries.push_back({file, Image{std::move(pixels), kRawDomain}, label});
  }
  return corpus;
}

std::string write_corpus(const std::string& dir, std::span<const CorpusEntry> entries) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  std::ostringstream manifest;
  manifest << kManifestHeader << '\n';
  for (const auto& e : entries) {
    write_tensor_file(e.raw.pixels, (fs::path(dir) / e.id).string());
    manifest << e.id << ',' << e.label << '\n';
  }
  const std::string path = (fs::path(dir) / "manifest.csv").string();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << manifest.str();
  return path;
}

std::vector<Sample> to_samples(const Corpus& corpus, const PreprocessSpec& spec) {
  std::vector<Sample> samples;
  samples.reserve(corpus.entries.size());
  for (const auto& e : corpus.entries) samples.push_back({apply(spec, e.raw), e.label});
  return samples;
}

}  // namespace pixlab
