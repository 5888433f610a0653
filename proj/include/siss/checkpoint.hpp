#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "siss/denoiser.hpp"

namespace siss {

struct Checkpoint {
  DenoiserModel model;
  int schedule_T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::uint64_t rng_seed = 0;
  std::int64_t step_count = 0;
};

namespace detail {

inline void to_little_endian_bytes(const double* src, std::size_t count, std::string& out) {
  out.resize(count * sizeof(double));
  std::memcpy(out.data(), src, out.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t b = 0; b < 4; ++b)
        std::swap(out[i * 8 + b], out[i * 8 + 7 - b]);
  }
}

inline void from_little_endian_bytes(const char* src, std::size_t count, double* dst) {
  std::memcpy(dst, src, count * sizeof(double));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) {
      char* p = reinterpret_cast<char*>(dst + i);
      for (std::size_t b = 0; b < 4; ++b) std::swap(p[b], p[7 - b]);
    }
  }
}

}  // namespace detail

// File layout: one-line JSON architecture descriptor, '\n', then the flat
// parameter vector as little-endian 64-bit floats. The write goes through a
// temp file and rename so concurrent readers never observe a torn file.
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json header;
  header["format"] = "siss-checkpoint/1";
  header["layer_sizes"] = ck.model.layer_sizes;
  header["time_embed_dim"] = ck.model.time_embed_dim;
  header["activation"] = activation_name(ck.model.activation);
  header["schedule_T"] = ck.schedule_T;
  header["beta_start"] = ck.beta_start;
  header["beta_end"] = ck.beta_end;
  header["rng_seed"] = ck.rng_seed;
  header["step_count"] = ck.step_count;
  header["param_count"] = ck.model.params.size();
  header["float_format"] = "f64-le";

  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << header.dump() << '\n';
    std::string payload;
    detail::to_little_endian_bytes(ck.model.params.data(), ck.model.params.size(), payload);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::string header_line;
  if (!std::getline(in, header_line))
    throw std::runtime_error("checkpoint missing header: " + path);
  nlohmann::json header = nlohmann::json::parse(header_line);
  if (header.value("format", "") != "siss-checkpoint/1")
    throw std::runtime_error("unrecognized checkpoint format in " + path);

  Checkpoint ck;
  ck.model.layer_sizes = header.at("layer_sizes").get<std::vector<int>>();
  ck.model.time_embed_dim = header.at("time_embed_dim").get<int>();
  ck.model.activation = activation_from_name(header.at("activation").get<std::string>());
  ck.schedule_T = header.at("schedule_T").get<int>();
  ck.beta_start = header.at("beta_start").get<double>();
  ck.beta_end = header.at("beta_end").get<double>();
  ck.rng_seed = header.at("rng_seed").get<std::uint64_t>();
  ck.step_count = header.at("step_count").get<std::int64_t>();
  const auto count = header.at("param_count").get<std::size_t>();
  if (count != denoiser_param_count(ck.model.layer_sizes))
    throw std::runtime_error("checkpoint param_count inconsistent with layer_sizes");

  std::string payload(count * sizeof(double), '\0');
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size())
    throw std::runtime_error("checkpoint payload truncated: " + path);
  ck.model.params.resize(count);
  detail::from_little_endian_bytes(payload.data(), count, ck.model.params.data());
  validate_model(ck.model);
  return ck;
}

}  // namespace siss
