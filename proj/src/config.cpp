#include "pgds/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pgds/common.hpp"

namespace pgds {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    PGDS_CHECK_ARG(pos == v.size() && std::isfinite(x), "config: bad number for ", key, ": ", v);
    return x;
  } catch (const DomainError&) {
    throw;
  } catch (const std::exception&) {
    throw DomainError("config: bad number for " + key + ": " + v);
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    PGDS_CHECK_ARG(pos == v.size(), "config: bad integer for ", key, ": ", v);
    return x;
  } catch (const DomainError&) {
    throw;
  } catch (const std::exception&) {
    throw DomainError("config: bad integer for " + key + ": " + v);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    PGDS_CHECK_ARG(pos == v.size() && v[0] != '-', "config: bad seed for ", key, ": ", v);
    return x;
  } catch (const DomainError&) {
    throw;
  } catch (const std::exception&) {
    throw DomainError("config: bad seed for " + key + ": " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DomainError("config: bad boolean for " + key + ": " + v);
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    out.push_back(static_cast<int>(to_int(key, tok)));
  }
  PGDS_CHECK_ARG(!out.empty(), "config: empty list for ", key);
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

}  // namespace

void validate(const PGDSConfig& cfg) {
  PGDS_CHECK_ARG(cfg.embedding_dim > 0, "config: embedding_dim must be positive");
  PGDS_CHECK_ARG(cfg.channels.size() == 5, "config: expected 5 channel widths, got ",
                 cfg.channels.size());
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    PGDS_CHECK_ARG(cfg.channels[i] > 0, "config: channel width must be positive");
    if (i) PGDS_CHECK_ARG(cfg.channels[i] > cfg.channels[i - 1],
                          "config: channel widths must be strictly increasing");
  }
  PGDS_CHECK_ARG(!cfg.php_stages.empty(), "config: php_stages must be nonempty");
  for (int s : cfg.php_stages)
    PGDS_CHECK_ARG(s >= 0 && s <= 4, "config: php stage ", s, " outside 0..4");
  for (std::size_t i = 1; i < cfg.php_stages.size(); ++i)
    PGDS_CHECK_ARG(cfg.php_stages[i] > cfg.php_stages[i - 1],
                   "config: php_stages must be strictly increasing");
  PGDS_CHECK_ARG(cfg.temperature > 0.0, "config: temperature must be positive");
  PGDS_CHECK_ARG(cfg.triplet_margin > 0.0, "config: triplet_margin must be positive");
  PGDS_CHECK_ARG(cfg.guide_margin > 0.0, "config: guide_margin must be positive");
  PGDS_CHECK_ARG(cfg.guide_weight >= 0.0 && cfg.guide_weight <= 1.0,
                 "config: guide_weight must be in [0,1]");
  PGDS_CHECK_ARG(cfg.batch_p >= 2, "config: batch_p must be >= 2");
  PGDS_CHECK_ARG(cfg.batch_k >= 2, "config: batch_k must be >= 2");
  PGDS_CHECK_ARG(cfg.base_lr > 0.0, "config: base_lr must be positive");
  PGDS_CHECK_ARG(cfg.weight_decay >= 0.0, "config: weight_decay must be nonnegative");
  PGDS_CHECK_ARG(cfg.grad_clip_norm > 0.0, "config: grad_clip_norm must be positive");
  PGDS_CHECK_ARG(cfg.warmup_frac >= 0.0 && cfg.warmup_frac < 1.0,
                 "config: warmup_frac must be in [0,1)");
  PGDS_CHECK_ARG(cfg.epochs >= 1, "config: epochs must be >= 1");
  PGDS_CHECK_ARG(cfg.image_height > 0 && cfg.image_height % 32 == 0,
                 "config: image_height must be a positive multiple of 32, got ", cfg.image_height);
  PGDS_CHECK_ARG(cfg.image_width > 0 && cfg.image_width % 32 == 0,
                 "config: image_width must be a positive multiple of 32, got ", cfg.image_width);
  PGDS_CHECK_ARG(cfg.joints >= 5, "config: joints must be >= 5");
}

std::map<std::string, std::string> parse_ini(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t cmt = line.find_first_of("#;");
    if (cmt != std::string::npos) line = line.substr(0, cmt);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      PGDS_CHECK_IO(line.back() == ']', "config line ", lineno, ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      PGDS_CHECK_IO(!section.empty(), "config line ", lineno, ": empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    PGDS_CHECK_IO(eq != std::string::npos, "config line ", lineno, ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    PGDS_CHECK_IO(!key.empty(), "config line ", lineno, ": empty key");
    PGDS_CHECK_IO(!section.empty(), "config line ", lineno,
                  ": key outside any [section]: ", key);
    key = section + "." + key;
    PGDS_CHECK_IO(!kv.count(key), "config line ", lineno, ": duplicate key ", key);
    kv[key] = val;
  }
  return kv;
}

std::map<std::string, std::string> read_ini(const std::string& path) {
  std::ifstream in(path);
  PGDS_CHECK_IO(in.good(), "cannot open config file ", path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_ini(buf.str());
}

void apply_overrides(PGDSConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, val] : kv) {
    if (key == "model.embedding_dim") cfg.embedding_dim = static_cast<int>(to_int(key, val));
    else if (key == "model.channels") cfg.channels = to_int_list(key, val);
    else if (key == "model.php_stages") cfg.php_stages = to_int_list(key, val);
    else if (key == "model.include_final_embedding_in_guide")
      cfg.include_final_embedding_in_guide = to_bool(key, val);
    else if (key == "model.semantic_ratio") cfg.semantic_ratio = to_double(key, val);
    else if (key == "loss.temperature") cfg.temperature = to_double(key, val);
    else if (key == "loss.triplet_margin") cfg.triplet_margin = to_double(key, val);
    else if (key == "loss.guide_margin") cfg.guide_margin = to_double(key, val);
    else if (key == "loss.guide_weight") cfg.guide_weight = to_double(key, val);
    else if (key == "train.batch_p") cfg.batch_p = static_cast<int>(to_int(key, val));
    else if (key == "train.batch_k") cfg.batch_k = static_cast<int>(to_int(key, val));
    else if (key == "train.base_lr") cfg.base_lr = to_double(key, val);
    else if (key == "train.weight_decay") cfg.weight_decay = to_double(key, val);
    else if (key == "train.grad_clip_norm") cfg.grad_clip_norm = to_double(key, val);
    else if (key == "train.warmup_frac") cfg.warmup_frac = to_double(key, val);
    else if (key == "train.epochs") cfg.epochs = static_cast<int>(to_int(key, val));
    else if (key == "train.seed") cfg.seed = to_u64(key, val);
    else if (key == "train.strict_deterministic") cfg.strict_deterministic = to_bool(key, val);
    else if (key == "data.image_height") cfg.image_height = static_cast<int>(to_int(key, val));
    else if (key == "data.image_width") cfg.image_width = static_cast<int>(to_int(key, val));
    else if (key == "data.joints") cfg.joints = static_cast<int>(to_int(key, val));
    else throw DomainError("config: unknown key " + key);
  }
}

PGDSConfig load_config(const std::string& path) {
  PGDSConfig cfg;
  apply_overrides(cfg, read_ini(path));
  validate(cfg);
  return cfg;
}

std::string serialize_config(const PGDSConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "[model]\n"
     << "embedding_dim = " << cfg.embedding_dim << "\n"
     << "channels = " << join_ints(cfg.channels) << "\n"
     << "php_stages = " << join_ints(cfg.php_stages) << "\n"
     << "include_final_embedding_in_guide = "
     << (cfg.include_final_embedding_in_guide ? "true" : "false") << "\n"
     << "semantic_ratio = " << cfg.semantic_ratio << "\n"
     << "\n[loss]\n"
     << "temperature = " << cfg.temperature << "\n"
     << "triplet_margin = " << cfg.triplet_margin << "\n"
     << "guide_margin = " << cfg.guide_margin << "\n"
     << "guide_weight = " << cfg.guide_weight << "\n"
     << "\n[train]\n"
     << "batch_p = " << cfg.batch_p << "\n"
     << "batch_k = " << cfg.batch_k << "\n"
     << "base_lr = " << cfg.base_lr << "\n"
     << "weight_decay = " << cfg.weight_decay << "\n"
     << "grad_clip_norm = " << cfg.grad_clip_norm << "\n"
     << "warmup_frac = " << cfg.warmup_frac << "\n"
     << "epochs = " << cfg.epochs << "\n"
     << "seed = " << cfg.seed << "\n"
     << "strict_deterministic = " << (cfg.strict_deterministic ? "true" : "false") << "\n"
     << "\n[data]\n"
     << "image_height = " << cfg.image_height << "\n"
     << "image_width = " << cfg.image_width << "\n"
     << "joints = " << cfg.joints << "\n";
  return os.str();
}

std::vector<int> php_stages_for_depth(int depth) {
  PGDS_CHECK_ARG(depth >= 1 && depth <= 3, "php depth must be 1..3, got ", depth);
  std::vector<int> stages;
  for (int s = 4 - depth; s <= 3; ++s) stages.push_back(s);
  return stages;
}

}  // namespace pgds
