#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "mmr/config_io.hpp"
#include "mmr/detector.hpp"
#include "mmr/errors.hpp"

namespace mmr {

namespace {

using nlohmann::json;
constexpr char kMagic[8] = {'M', 'M', 'R', 'D', 'E', 'T', '0', '1'};

void put_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out += static_cast<char>((bits >> (8 * b)) & 0xFF);
}

float get_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= std::uint32_t(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace

void save_checkpoint(const DetectorParams& params, const std::filesystem::path& path) {
  json header;
  header["format"] = "MMRDET01";
  header["config"] = to_json(params.config);
  std::vector<std::uint32_t> symbols(params.alphabet.symbols().begin(),
                                     params.alphabet.symbols().end());
  header["alphabet"] = symbols;
  header["image_height"] = params.image_height;
  header["image_width"] = params.image_width;
  header["n_events"] = params.n_events;

  std::string blob;
  json dir = json::array();
  for (const auto& [name, t] : params.tensors()) {
    dir.push_back({{"name", name}, {"shape", t->shape}, {"offset", blob.size()}});
    for (float v : t->data) put_le(blob, v);
  }
  header["tensors"] = dir;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  out << header.dump() << '\n';
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("short write on checkpoint " + path.string());
}

DetectorParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("bad checkpoint magic in " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) throw IoError("truncated checkpoint header in " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header: " + std::string(e.what()));
  }

  DetectorParams p;
  try {
    p.config = config_from_json<DetectorConfig>(header.at("config"));
    std::vector<char32_t> symbols;
    for (auto cp : header.at("alphabet").get<std::vector<std::uint32_t>>()) symbols.push_back(cp);
    p.alphabet = Alphabet(std::move(symbols));
    p.image_height = header.at("image_height").get<std::size_t>();
    p.image_width = header.at("image_width").get<std::size_t>();
    p.n_events = header.at("n_events").get<std::size_t>();

    std::map<std::string, const json*> entries;
    for (const auto& e : header.at("tensors")) entries[e.at("name").get<std::string>()] = &e;
    for (auto& [name, t] : p.tensors()) {
      auto it = entries.find(name);
      if (it == entries.end()) throw IoError("checkpoint lacks tensor " + name);
      const Shape shape = it->second->at("shape").get<Shape>();
      const std::size_t offset = it->second->at("offset").get<std::size_t>();
      const std::size_t count = shape_volume(shape);
      if (offset + 4 * count > blob.size()) {
        throw IoError("tensor " + name + " runs past the end of " + path.string());
      }
      std::vector<float> values(count);
      const auto* base = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
      for (std::size_t i = 0; i < count; ++i) values[i] = get_le(base + 4 * i);
      *t = Tensor(shape, std::move(values));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header: " + std::string(e.what()));
  }
  if (!p.all_finite()) throw ValidationError("checkpoint holds non-finite weights");
  return p;
}

}  // namespace mmr
