#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmr/config_io.hpp"
#include "mmr/corpus.hpp"
#include "mmr/errors.hpp"
#include "mmr/utf8.hpp"

namespace mmr {

namespace fs = std::filesystem;
using nlohmann::json;

void write_ppm(const Tensor& image, const fs::path& path) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw DimensionError("write_ppm: expected 3xHxW image, got " + shape_string(image.shape));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  const Tensor q = quantize_image(image);
  std::string bytes;
  bytes.reserve(h * w * 3);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        bytes += static_cast<char>(static_cast<unsigned char>(
            std::lround(q[(c * h + i) * w + j] * 255.0f)));
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << w << " " << h << "\n255\n";
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write on image " + path.string());
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok += static_cast<char>(ch);
  }
  return tok;
}

}  // namespace

Tensor read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing image file " + path.string());
  if (ppm_token(in) != "P6") throw IoError("not a binary PPM (P6): " + path.string());
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(ppm_token(in));
    h = std::stoul(ppm_token(in));
    maxval = std::stoul(ppm_token(in));
  } catch (const std::exception&) {
    throw IoError("malformed PPM header in " + path.string());
  }
  if (maxval != 255 || w == 0 || h == 0) {
    throw IoError("unsupported PPM geometry/maxval in " + path.string());
  }
  std::string bytes(w * h * 3, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError("truncated pixel data in " + path.string());
  }
  Tensor img(Shape{3, h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        const auto b = static_cast<unsigned char>(bytes[(i * w + j) * 3 + c]);
        img[(c * h + i) * w + j] = static_cast<float>(b) / 255.0f;
      }
    }
  }
  return img;
}


void save_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());

  json header;
  header["version"] = 1;
  std::vector<std::uint32_t> symbols(ds.alphabet.symbols().begin(), ds.alphabet.symbols().end());
  header["alphabet"] = symbols;
  header["meta"] = {{"rng", ds.meta.rng}, {"origin", ds.meta.origin}};
  if (ds.meta.generator) header["meta"]["generator"] = to_json(*ds.meta.generator);
  {
    std::ofstream out(dir / "dataset.json");
    if (!out) throw IoError("cannot write " + (dir / "dataset.json").string());
    out << header.dump(2) << "\n";
  }

  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.jsonl").string());
  for (const auto& s : ds.samples) {
    const std::string rel = "images/" + s.id + ".ppm";
    write_ppm(s.image, dir / rel);
    json rec = {{"id", s.id},
                {"tokens", to_utf8(s.tokens)},
                {"label", s.label},
                {"event", s.event_id},
                {"image", rel}};
    manifest << rec.dump() << "\n";
  }
  if (!manifest) throw IoError("short write on manifest in " + dir.string());
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  {
    std::ifstream in(dir / "dataset.json");
    if (!in) throw IoError("missing dataset header " + (dir / "dataset.json").string());
    json header;
    try {
      header = json::parse(in);
    } catch (const json::exception& e) {
      throw IoError("malformed dataset header: " + std::string(e.what()));
    }
    std::vector<char32_t> symbols;
    for (std::uint32_t cp : header.at("alphabet").get<std::vector<std::uint32_t>>()) {
      symbols.push_back(static_cast<char32_t>(cp));
    }
    ds.alphabet = Alphabet(std::move(symbols));
    const json& meta = header.at("meta");
    ds.meta.rng = meta.value("rng", std::string{});
    ds.meta.origin = meta.value("origin", std::string{});
    if (meta.contains("generator")) ds.meta.generator = config_from_json<GenConfig>(meta["generator"]);
  }

  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw IoError("missing manifest " + (dir / "manifest.jsonl").string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    NewsSample s;
    std::string image_rel;
    try {
      const json rec = json::parse(line);
      s.id = rec.at("id").get<std::string>();
      s.tokens = from_utf8(rec.at("tokens").get<std::string>());
      s.label = rec.at("label").get<int>();
      s.event_id = rec.at("event").get<int>();
      image_rel = rec.at("image").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed manifest record: ") + e.what(), lineno);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    if (s.label != kReal && s.label != kFake) {
      throw ParseError("label " + std::to_string(s.label) + " not in {0,1}", lineno);
    }
    if (s.event_id < 0) throw ParseError("negative event id", lineno);
    s.image = read_ppm(dir / image_rel);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace mmr
