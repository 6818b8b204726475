#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ton/policy.hpp"

namespace ton {

namespace {

constexpr const char* kFormat = "ton-checkpoint/1";

nlohmann::json config_json(const PolicyConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},
          {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"max_context", c.max_context}, {"mlp_hidden", c.mlp_hidden},
          {"init_std", c.init_std}};
}

PolicyConfig config_from(const nlohmann::json& j) {
  PolicyConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.max_context = j.at("max_context").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.init_std = j.at("init_std").get<double>();
  return c;
}

}  // namespace

std::string checkpoint_to_string(const PolicyParams& params) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["config"] = config_json(params.config());
  nlohmann::json tensors = nlohmann::json::array();
  params.for_each([&](std::string_view name, const Tensor& t) {
    tensors.push_back({{"name", std::string(name)}, {"shape", t.shape}, {"data", t.data}});
  });
  j["tensors"] = std::move(tensors);
  return j.dump();
}

PolicyParams checkpoint_from_string(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) {
      throw std::runtime_error("checkpoint: unsupported format " + j.at("format").dump());
    }
    PolicyParams params = PolicyParams::zeros(config_from(j.at("config")));
    const auto& tensors = j.at("tensors");
    std::size_t i = 0;
    params.for_each([&](std::string_view name, Tensor& t) {
      if (i >= tensors.size()) {
        throw std::runtime_error("checkpoint: missing tensor " + std::string(name));
      }
      const auto& e = tensors[i++];
      if (e.at("name").get<std::string>() != name) {
        throw std::runtime_error("checkpoint: expected tensor " + std::string(name) + ", found " +
                                 e.at("name").get<std::string>());
      }
      auto shape = e.at("shape").get<Shape>();
      auto data = e.at("data").get<std::vector<double>>();
      if (shape != t.shape || data.size() != t.size()) {
        throw std::runtime_error("checkpoint: tensor " + std::string(name) + " has shape " +
                                 shape_str(shape) + ", expected " + shape_str(t.shape));
      }
      t.data = std::move(data);
    });
    if (i != tensors.size()) throw std::runtime_error("checkpoint: unexpected extra tensors");
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << checkpoint_to_string(params);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace ton
