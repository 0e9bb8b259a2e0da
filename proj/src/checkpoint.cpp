#include "sear/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "sear/kernels.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace sear::ckpt {

namespace {

nlohmann::json header_for(const std::vector<NamedTensor>& tensors,
                          const nlohmann::json& meta) {
  nlohmann::json table = nlohmann::json::array();
  for (const NamedTensor& nt : tensors) {
    if (!nt.tensor.defined()) {
      throw std::runtime_error("checkpoint: undefined tensor '" + nt.name +
                               "'");
    }
    table.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}});
  }
  return {{"dtype", "float64"}, {"meta", meta}, {"tensors", table}};
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& meta) {
  const nlohmann::json header = header_for(tensors, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out << header.dump() << '\n';
  for (const NamedTensor& nt : tensors) {
    const std::vector<double>& v = nt.tensor.value();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

nlohmann::json read_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("checkpoint: missing header in " + path);
  }
  return nlohmann::json::parse(line).value("meta", nlohmann::json::object());
}

nlohmann::json load_checkpoint(const std::string& path,
                               std::vector<NamedTensor>& tensors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("checkpoint: missing header in " + path);
  }
  const nlohmann::json header = nlohmann::json::parse(line);
  if (header.value("dtype", "") != "float64") {
    throw std::runtime_error("checkpoint: unsupported dtype in " + path);
  }
  const nlohmann::json& table = header.at("tensors");
  if (table.size() != tensors.size()) {
    throw std::runtime_error(
        "checkpoint: expected " + std::to_string(tensors.size()) +
        " tensors, file has " + std::to_string(table.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string fname = table[i].at("name").get<std::string>();
    if (fname != tensors[i].name) {
      throw std::runtime_error("checkpoint: tensor " + std::to_string(i) +
                               " is '" + fname + "', expected '" +
                               tensors[i].name + "'");
    }
    const auto fshape = table[i].at("shape").get<ad::Shape>();
    if (fshape != tensors[i].tensor.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + fname +
                               "': file has " + ad::shape_str(fshape) +
                               ", expected " +
                               ad::shape_str(tensors[i].tensor.shape()));
    }
  }
  for (NamedTensor& nt : tensors) {
    std::vector<double>& v = nt.tensor.raw_value();
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (in.gcount() !=
        static_cast<std::streamsize>(v.size() * sizeof(double))) {
      throw std::runtime_error("checkpoint: truncated payload in " + path);
    }
    if (!kernels::all_finite(v.data(), v.size())) {
      throw std::runtime_error("checkpoint: non-finite values in '" + nt.name +
                               "'");
    }
  }
  return header.value("meta", nlohmann::json::object());
}

}  // namespace sear::ckpt
