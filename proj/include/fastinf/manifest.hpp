#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fastinf/errors.hpp"
#include "fastinf/model.hpp"

namespace fastinf {

// Plain-text key-value file: `key = value` or `key=value`, '#' comments.
inline std::map<std::string, std::string> load_keyvalue(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline ModelSpec load_model_spec(const std::string& path) {
  const auto kv = load_keyvalue(path);
  ModelSpec spec;
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(path + ": missing key '" + key + "'");
    return it->second;
  };
  const std::string arch = get("architecture");
  if (arch == "logistic-regression")
    spec.arch = Architecture::LogisticRegression;
  else if (arch == "mlp")
    spec.arch = Architecture::Mlp;
  else
    throw ConfigError(path + ": unknown architecture '" + arch + "'");
  spec.d = std::stoi(get("d"));
  spec.num_classes = std::stoi(get("C"));
  if (auto it = kv.find("l2"); it != kv.end()) spec.l2 = std::stod(it->second);
  if (auto it = kv.find("activation"); it != kv.end())
    spec.activation = it->second == "relu" ? Activation::Relu : Activation::Tanh;
  if (auto it = kv.find("hidden"); it != kv.end()) {
    std::istringstream hs(it->second);
    std::string tok;
    while (std::getline(hs, tok, ',')) spec.hidden.push_back(std::stoi(tok));
  }
  if (auto it = kv.find("frozen"); it != kv.end()) {
    std::istringstream fs(it->second);
    std::string tok;
    while (std::getline(fs, tok, ',')) spec.frozen.push_back(tok);
  }
  spec.validate();
  return spec;
}

inline void save_model_spec(const ModelSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write spec file: " + path);
  out << "architecture = " << to_string(spec.arch) << "\n";
  out << "d = " << spec.d << "\nC = " << spec.num_classes << "\nl2 = " << spec.l2 << "\n";
  if (spec.arch == Architecture::Mlp) {
    out << "hidden = ";
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) out << (i ? "," : "") << spec.hidden[i];
    out << "\nactivation = " << to_string(spec.activation) << "\n";
  }
  if (!spec.frozen.empty()) {
    out << "frozen = ";
    for (std::size_t i = 0; i < spec.frozen.size(); ++i) out << (i ? "," : "") << spec.frozen[i];
    out << "\n";
  }
}

// Everything needed to reproduce a run bit-for-bit.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;  // fully resolved flag values
  std::map<std::string, std::uint64_t> dataset_digests;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
  double wall_time_s = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config;
    auto& d = j["dataset_digests"] = nlohmann::ordered_json::object();
    for (const auto& [name, digest] : dataset_digests) {
      char buf[24];
      std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
      d[name] = buf;
    }
    j["seed"] = seed;
    j["artifacts"] = artifacts;
    j["wall_time_s"] = wall_time_s;
    return j;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write manifest: " + path);
    out << to_json().dump(2) << "\n";
  }
};

}  // namespace fastinf
