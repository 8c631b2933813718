#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cotkit/errors.hpp"

namespace cotkit {

// Plain-text prompt template with {{name}} placeholders and a front-matter
// header declaring id and required variables.
struct PromptTemplate {
  std::string id;
  std::string body;
  std::set<std::string> required_variables;

  void validate() const {
    if (id.empty()) throw ConfigError("prompt template without id");
    for (const auto& name : placeholders()) {
      if (!required_variables.count(name)) {
        throw ConfigError("template '" + id + "': placeholder '" + name +
                          "' not listed in required variables");
      }
    }
  }

  std::vector<std::string> placeholders() const {
    static const std::regex ph(R"(\{\{([A-Za-z0-9_]+)\}\})");
    std::vector<std::string> names;
    for (auto it = std::sregex_iterator(body.begin(), body.end(), ph);
         it != std::sregex_iterator(); ++it) {
      names.push_back((*it)[1].str());
    }
    return names;
  }

  std::string render(const std::map<std::string, std::string>& variables) const {
    std::string out = body;
    for (const auto& name : placeholders()) {
      auto it = variables.find(name);
      if (it == variables.end()) {
        throw InvalidArgumentError("template '" + id + "': missing variable '" + name + "'");
      }
      std::string token = "{{" + name + "}}";
      std::size_t pos = 0;
      while ((pos = out.find(token, pos)) != std::string::npos) {
        out.replace(pos, token.size(), it->second);
        pos += it->second.size();
      }
    }
    return out;
  }
};

// Parses a template file:
//   ---
//   id: P_C
//   required: question, gold_answer
//   ---
//   <body>
inline PromptTemplate parse_prompt_template(const std::string& text) {
  PromptTemplate t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "---") {
    throw ConfigError("prompt template must start with '---' front matter");
  }
  while (std::getline(in, line) && line != "---") {
    std::size_t colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    auto trim = [](std::string s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
      return s;
    };
    key = trim(key);
    value = trim(value);
    if (key == "id") {
      t.id = value;
    } else if (key == "required") {
      std::istringstream vars(value);
      std::string name;
      while (std::getline(vars, name, ',')) {
        name = trim(name);
        if (!name.empty()) t.required_variables.insert(name);
      }
    }
  }
  std::ostringstream body;
  bool first = true;
  while (std::getline(in, line)) {
    if (!first) body << "\n";
    body << line;
    first = false;
  }
  t.body = body.str();
  t.validate();
  return t;
}

class PromptLibrary {
 public:
  void add(PromptTemplate t) {
    t.validate();
    templates_[t.id] = std::move(t);
  }

  bool contains(const std::string& id) const { return templates_.count(id) > 0; }

  const PromptTemplate& get(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw ConfigError("unknown prompt template '" + id + "'");
    return it->second;
  }

  std::size_t size() const { return templates_.size(); }

  static PromptLibrary load_directory(const std::filesystem::path& dir) {
    PromptLibrary lib;
    if (!std::filesystem::is_directory(dir)) {
      throw ConfigError("template directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".tmpl") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      std::stringstream ss;
      ss << in.rdbuf();
      lib.add(parse_prompt_template(ss.str()));
    }
    return lib;
  }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

}  // namespace cotkit
