#include "ggcf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ggcf/error.hpp"

namespace ggcf {

namespace {

constexpr char kMagic[8] = {'G', 'G', 'C', 'F', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& name) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IncompatibleError(name + ": truncated checkpoint");
  return v;
}

void put_table(std::ostream& out, const Table& t) {
  const auto f = t.flat();
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
}

Table get_table(std::istream& in, std::size_t rows, std::size_t cols, const std::string& name) {
  Table t(rows, cols);
  auto f = t.flat();
  in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
  if (!in) throw IncompatibleError(name + ": truncated checkpoint tables");
  return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["dim"] = ckpt.params.dim();
  header["users"] = ckpt.params.user_count();
  header["items"] = ckpt.params.item_count();
  header["layers"] = ckpt.layers;
  header["epoch"] = ckpt.epoch;
  header["ablation"] = ablation_name(ckpt.flags);
  header["flags"] = {{"disable_interaction", ckpt.flags.disable_interaction},
                     {"euclidean_only", ckpt.flags.euclidean_only},
                     {"hyperbolic_only", ckpt.flags.hyperbolic_only}};
  header["config_hash"] = ckpt.config_hash;
  header["split_hash"] = ckpt.split_hash;
  header["config"] = ckpt.config_json;
  header["user_ids"] = ckpt.user_ids;
  header["item_ids"] = ckpt.item_ids;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, Checkpoint::kFormatVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put(out, ckpt.params.gamma);
  put(out, ckpt.params.gamma_prime);
  put(out, ckpt.params.lambda);
  put_table(out, ckpt.params.euclid_user);
  put_table(out, ckpt.params.euclid_item);
  put_table(out, ckpt.params.tangent_user);
  put_table(out, ckpt.params.tangent_item);
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + name);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IncompatibleError(name + ": not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in, name);
  if (version != Checkpoint::kFormatVersion) {
    throw IncompatibleError(name + ": checkpoint format version " + std::to_string(version) +
                            " is not supported (expected " +
                            std::to_string(Checkpoint::kFormatVersion) + ")");
  }
  const auto header_len = get<std::uint64_t>(in, name);
  if (header_len > (1ULL << 32)) throw IncompatibleError(name + ": implausible header length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IncompatibleError(name + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleError(name + ": corrupt header: " + e.what());
  }
  Checkpoint ckpt;
  try {
    const auto d = header.at("dim").get<std::size_t>();
    const auto users = header.at("users").get<std::size_t>();
    const auto items = header.at("items").get<std::size_t>();
    ckpt.layers = header.at("layers").get<int>();
    ckpt.epoch = header.at("epoch").get<int>();
    const auto& f = header.at("flags");
    ckpt.flags.disable_interaction = f.at("disable_interaction").get<bool>();
    ckpt.flags.euclidean_only = f.at("euclidean_only").get<bool>();
    ckpt.flags.hyperbolic_only = f.at("hyperbolic_only").get<bool>();
    ckpt.config_hash = header.at("config_hash").get<std::string>();
    ckpt.split_hash = header.at("split_hash").get<std::string>();
    ckpt.config_json = header.at("config").get<std::string>();
    ckpt.user_ids = header.at("user_ids").get<std::vector<RawId>>();
    ckpt.item_ids = header.at("item_ids").get<std::vector<RawId>>();
    if (ckpt.user_ids.size() != users || ckpt.item_ids.size() != items) {
      throw IncompatibleError(name + ": ID tables disagree with table shapes");
    }
    ckpt.params.gamma = get<double>(in, name);
    ckpt.params.gamma_prime = get<double>(in, name);
    ckpt.params.lambda = get<double>(in, name);
    ckpt.params.euclid_user = get_table(in, users, d, name);
    ckpt.params.euclid_item = get_table(in, items, d, name);
    ckpt.params.tangent_user = get_table(in, users, d, name);
    ckpt.params.tangent_item = get_table(in, items, d, name);
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleError(name + ": incomplete header: " + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IncompatibleError(name + ": trailing bytes after tables");
  }
  return ckpt;
}

}  // namespace ggcf
