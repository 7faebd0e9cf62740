#include "lossmix/checkpoint.hpp"

#include <fstream>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lossmix/errors.hpp"

namespace lossmix {

namespace {

constexpr const char* kMagic = "LMIXCKPT1";

std::vector<std::pair<std::string, Tensor*>> named_tensors(Model& model) {
  std::vector<std::pair<std::string, Tensor*>> out;
  const auto collect = [&out](const std::string& prefix, Network& net) {
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      Layer& layer = net.layers()[l];
      out.emplace_back(prefix + ".layer" + std::to_string(l) + ".weight",
                       &layer.weight);
      out.emplace_back(prefix + ".layer" + std::to_string(l) + ".bias",
                       &layer.bias);
    }
  };
  collect("denoiser", model.denoiser.net);
  if (model.has_mlp) collect("rho_mlp", model.rho_mlp);
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  nlohmann::json doc;
  doc["magic"] = kMagic;
  nlohmann::json params = nlohmann::json::object();
  for (auto& [name, tensor] : named_tensors(const_cast<Model&>(model))) {
    params[name] = {{"shape", tensor->shape()},
                    {"data", std::vector<double>(tensor->data().begin(),
                                                 tensor->data().end())}};
  }
  doc["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << doc.dump() << "\n";
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, Model& model) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("magic", std::string{}) != kMagic) {
    throw IoError("checkpoint " + path.string() +
                  " has an unknown magic string");
  }
  const auto& params = doc.at("params");
  for (auto& [name, tensor] : named_tensors(model)) {
    if (!params.contains(name)) {
      throw IoError("checkpoint " + path.string() + " is missing '" + name +
                    "'");
    }
    const auto& entry = params.at(name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != tensor->shape()) {
      throw IoError("checkpoint " + path.string() + ": shape mismatch for '" +
                    name + "'");
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    *tensor = Tensor(shape, data);
  }
}

}  // namespace lossmix
