#pragma once

#include <array>
#include <bit>
#include <filesystem>
#include <fstream>

#include "lego/io/config.hpp"

namespace lego::io {

inline constexpr std::array<char, 8> kCheckpointMagic{'L', 'E', 'G', 'O', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

inline nlohmann::json policy_config_json(const policy::PolicyConfig& c) {
  nlohmann::json schema = nlohmann::json::array();
  for (Role r : c.schema) schema.push_back(role_name(r));
  return {{"arch", policy::arch_name(c.arch)},
          {"role", role_name(c.role)},
          {"schema", schema},
          {"flat_width", c.flat_width},
          {"width", c.attention.width},
          {"heads", c.attention.heads},
          {"ffn", c.attention.ffn},
          {"layers", c.layers},
          {"hidden", c.hidden},
          {"log_std_init", c.log_std_init},
          {"action_cap", c.action_cap},
          {"actor_output_gain", c.actor_output_gain},
          {"separate_critic_encoder", c.separate_critic_encoder},
          {"seed", c.seed}};
}

inline policy::PolicyConfig policy_config_from_json(const nlohmann::json& j) {
  policy::PolicyConfig c;
  c.arch = policy::arch_from_name(j.at("arch").get<std::string>());
  c.role = role_from_name(j.at("role").get<std::string>());
  for (const auto& r : j.at("schema")) c.schema.push_back(role_from_name(r.get<std::string>()));
  c.flat_width = j.at("flat_width").get<std::size_t>();
  c.attention.width = j.at("width").get<Eigen::Index>();
  c.attention.heads = j.at("heads").get<Eigen::Index>();
  c.attention.ffn = j.at("ffn").get<Eigen::Index>();
  c.layers = j.at("layers").get<int>();
  c.hidden = j.at("hidden").get<Eigen::Index>();
  c.log_std_init = j.at("log_std_init").get<double>();
  c.action_cap = j.at("action_cap").get<double>();
  c.actor_output_gain = j.at("actor_output_gain").get<double>();
  c.separate_critic_encoder = j.at("separate_critic_encoder").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline marl::Control control_from_name(const std::string& s) {
  for (auto c : {marl::Control::Learn, marl::Control::Frozen, marl::Control::Random, marl::Control::Pursue,
                 marl::Control::Flee})
    if (marl::control_name(c) == s) return c;
  throw IoError("unknown control mode '" + s + "' in checkpoint");
}

}  // namespace detail

/// A team plus where and how long it was trained.
template <class S>
struct Checkpoint {
  marl::Team<S> team;
  sim::ScenarioConfig scenario;
  long step = 0;
};

/// Layout: magic, u32 version, u64 manifest length, manifest JSON, float32
/// little-endian tensors in manifest order, u64 FNV-1a of all preceding bytes.
template <class S>
std::vector<std::uint8_t> encode_checkpoint(const marl::Team<S>& team, const sim::ScenarioConfig& scenario, long step) {
  nlohmann::json manifest;
  manifest["format"] = "lego-checkpoint";
  manifest["schema_version"] = kCheckpointVersion;
  manifest["step"] = step;
  manifest["scenario"] = scenario_to_json(scenario);
  manifest["roles"] = nlohmann::json::array();
  std::vector<std::uint8_t> payload;
  for (const auto& slot : team.slots) {
    nlohmann::json r{{"role", role_name(slot.role)}, {"control", marl::control_name(slot.control)}};
    if (slot.policy) {
      const auto& p = *slot.policy;
      r["policy"] = detail::policy_config_json(p.config());
      const auto& vn = p.value_normalizer();
      r["value_norm"] = {{"mean", vn.mean()}, {"m2", vn.m2()}, {"count", vn.count()}, {"enabled", vn.enabled()}};
      auto& tensors = r["tensors"] = nlohmann::json::array();
      p.params().for_each([&](const nn::Parameter<S>& t) {
        tensors.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}});
        for (Eigen::Index i = 0; i < t.value.size(); ++i)
          detail::put_u32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(t.value.data()[i])));
      });
    }
    manifest["roles"].push_back(std::move(r));
  }
  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  detail::put_u64(out, fnv1a(out));
  return out;
}

template <class S>
Checkpoint<S> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = 8 + 4 + 8;
  if (bytes.size() < header + 8 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
    throw IoError("not a checkpoint file");
  const auto stored = detail::get_le(bytes, bytes.size() - 8, 8);
  if (fnv1a(bytes.first(bytes.size() - 8)) != stored) throw ChecksumError("checkpoint checksum mismatch");
  if (detail::get_le(bytes, 8, 4) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  const auto manifest_len = detail::get_le(bytes, 12, 8);
  if (manifest_len > bytes.size() - header - 8) throw IoError("checkpoint manifest overruns the file");
  Checkpoint<S> ck;
  std::size_t at = header + manifest_len;
  try {
    const auto manifest = nlohmann::json::parse(bytes.begin() + header, bytes.begin() + static_cast<long>(at));
    ck.step = manifest.at("step").get<long>();
    ck.scenario = scenario_from_json(manifest.at("scenario"));
    for (const auto& r : manifest.at("roles")) {
      marl::RoleSlot<S> slot{role_from_name(r.at("role").get<std::string>()),
                             detail::control_from_name(r.at("control").get<std::string>()), nullptr};
      if (r.contains("policy")) {
        auto pol = std::make_shared<policy::RolePolicy<S>>(detail::policy_config_from_json(r.at("policy")));
        const auto& tensors = r.at("tensors");
        if (tensors.size() != pol->params().size()) throw IoError("checkpoint tensor count does not match the architecture");
        for (std::size_t i = 0; i < tensors.size(); ++i) {
          auto& p = pol->params()[i];
          const auto& t = tensors[i];
          const auto rows = t.at("shape").at(0).get<Eigen::Index>(), cols = t.at("shape").at(1).get<Eigen::Index>();
          if (t.at("name").get<std::string>() != p.name || rows != p.value.rows() || cols != p.value.cols())
            throw IoError("checkpoint tensor '" + t.at("name").get<std::string>() + "' does not match the architecture");
          const auto n = static_cast<std::size_t>(rows * cols);
          if (at + 4 * n > bytes.size() - 8) throw IoError("checkpoint tensor data truncated");
          for (std::size_t k = 0; k < n; ++k, at += 4)
            p.value.data()[k] = static_cast<S>(std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(bytes, at, 4))));
        }
        const auto& vn = r.at("value_norm");
        pol->value_normalizer().restore(vn.at("mean").get<double>(), vn.at("m2").get<double>(),
                                        vn.at("count").get<double>());
        pol->value_normalizer().set_enabled(vn.at("enabled").get<bool>());
        slot.policy = std::move(pol);
      }
      ck.team.slots.push_back(std::move(slot));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("invalid checkpoint contents: ") + e.what());
  }
  if (at != bytes.size() - 8) throw IoError("checkpoint has trailing tensor data");
  return ck;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a temporary file and renames, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

template <class S>
void save_checkpoint(const std::filesystem::path& path, const marl::Team<S>& team, const sim::ScenarioConfig& scenario,
                     long step) {
  write_file_atomic(path, encode_checkpoint(team, scenario, step));
}

template <class S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<S>(read_file(path));
}

}  // namespace lego::io
