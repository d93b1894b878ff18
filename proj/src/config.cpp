#include "recal/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace recal {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

int64_t parse_i64(std::string_view v, std::string_view key) {
  try {
    size_t used = 0;
    std::string s(v);
    const long long r = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return r;
  } catch (const std::exception&) {
    throw ConfigError(str_cat("config: '", key, "' expects an integer, got '", v, "'"));
  }
}

uint64_t parse_u64(std::string_view v, std::string_view key) {
  try {
    size_t used = 0;
    std::string s(v);
    const unsigned long long r = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return r;
  } catch (const std::exception&) {
    throw ConfigError(str_cat("config: '", key, "' expects an unsigned integer, got '",
                              v, "'"));
  }
}

real parse_real(std::string_view v, std::string_view key) {
  try {
    size_t used = 0;
    std::string s(v);
    const double r = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return static_cast<real>(r);
  } catch (const std::exception&) {
    throw ConfigError(str_cat("config: '", key, "' expects a number, got '", v, "'"));
  }
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= v.size()) {
    const size_t comma = v.find(',', pos);
    const std::string_view item =
        trim(v.substr(pos, comma == std::string_view::npos ? comma : comma - pos));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string g17(real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
  return buf;
}

bool known_class_name(const std::string& c) {
  return c == "pupil" || c == "iris" || c == "lens" || c == "instrument";
}

}  // namespace

void DataConfig::validate() const {
  if (root.empty()) throw ConfigError("config: data.root must not be empty");
  if (classes.empty()) throw ConfigError("config: data.classes must not be empty");
  for (const auto& c : classes) {
    if (!known_class_name(c)) {
      throw ConfigError(str_cat("config: unknown class '", c, "' in data.classes"));
    }
  }
  if (!known_class_name(object_class)) {
    throw ConfigError(str_cat("config: unknown class '", object_class,
                              "' in data.class"));
  }
  if (height < 16 || width < 16 || height % 16 != 0 || width % 16 != 0) {
    throw ConfigError(str_cat("config: data dimensions ", height, "x", width,
                              " must be divisible by 16"));
  }
  if (train_count < 1 || test_count < 1) {
    throw ConfigError("config: data.train_count and data.test_count must be >= 1");
  }
  if (noise_sigma < 0) {
    throw ConfigError(str_cat("config: data.noise_sigma must be >= 0, got ",
                              noise_sigma));
  }
}

void RunConfig::apply(std::string_view key, std::string_view value) {
  const std::string v(trim(value));
  if (key == "model.variant") {
    model.variant = variant_from_string(v);
  } else if (key == "model.width_scale") {
    model.width_scale = parse_i64(v, key);
  } else if (key == "model.placements") {
    if (v.size() != 5 || v.find_first_not_of("01") != std::string::npos) {
      throw ConfigError(str_cat("config: 'model.placements' expects five 0/1 flags, "
                                "got '", v, "'"));
    }
    for (size_t i = 0; i < 5; ++i) model.placements[i] = v[i] == '1';
  } else if (key == "model.reduction") {
    model.reduction = parse_i64(v, key);
  } else if (key == "model.in_channels") {
    model.in_channels = parse_i64(v, key);
  } else if (key == "model.out_channels") {
    model.out_channels = parse_i64(v, key);
  } else if (key == "train.lr0") {
    train.lr0 = parse_real(v, key);
  } else if (key == "train.momentum") {
    train.momentum = parse_real(v, key);
  } else if (key == "train.clip_threshold") {
    train.clip_threshold = parse_real(v, key);
  } else if (key == "train.clip_mode") {
    train.clip_mode = clip_mode_from_string(v);
  } else if (key == "train.decay_factor") {
    train.decay_factor = parse_real(v, key);
  } else if (key == "train.decay_every") {
    train.decay_every = parse_i64(v, key);
  } else if (key == "train.epochs") {
    train.epochs = parse_i64(v, key);
  } else if (key == "train.batch_size") {
    train.batch_size = parse_i64(v, key);
  } else if (key == "train.seed") {
    train.seed = parse_u64(v, key);
  } else if (key == "train.max_steps") {
    train.max_steps = parse_i64(v, key);
  } else if (key == "train.lambda") {
    loss.lambda = parse_real(v, key);
  } else if (key == "train.sigma") {
    loss.sigma = parse_real(v, key);
  } else if (key == "data.root") {
    data.root = v;
  } else if (key == "data.classes") {
    data.classes = split_list(v);
  } else if (key == "data.class") {
    data.object_class = v;
  } else if (key == "data.height") {
    data.height = parse_i64(v, key);
  } else if (key == "data.width") {
    data.width = parse_i64(v, key);
  } else if (key == "data.train_count") {
    data.train_count = parse_i64(v, key);
  } else if (key == "data.test_count") {
    data.test_count = parse_i64(v, key);
  } else if (key == "data.noise_sigma") {
    data.noise_sigma = parse_real(v, key);
  } else if (key == "data.seed") {
    data.seed = parse_u64(v, key);
  } else if (key == "data.augment") {
    data.augment.clear();
    for (const auto& name : split_list(v)) {
      data.augment.push_back(augment_op_from_string(name));
    }
  } else {
    throw ConfigError(str_cat("config: unknown key '", key, "'"));
  }
}

std::string RunConfig::resolved_text() const {
  std::string placements;
  for (bool p : model.placements) placements += p ? '1' : '0';
  std::string classes;
  for (size_t i = 0; i < data.classes.size(); ++i) {
    if (i) classes += ',';
    classes += data.classes[i];
  }
  std::string augment;
  for (size_t i = 0; i < data.augment.size(); ++i) {
    if (i) augment += ',';
    augment += to_string(data.augment[i]);
  }
  std::string out;
  out += str_cat("model.variant=", to_string(model.variant), "\n");
  out += str_cat("model.width_scale=", model.width_scale, "\n");
  out += str_cat("model.placements=", placements, "\n");
  out += str_cat("model.reduction=", model.reduction, "\n");
  out += str_cat("model.in_channels=", model.in_channels, "\n");
  out += str_cat("model.out_channels=", model.out_channels, "\n");
  out += str_cat("train.lr0=", g17(train.lr0), "\n");
  out += str_cat("train.momentum=", g17(train.momentum), "\n");
  out += str_cat("train.clip_threshold=", g17(train.clip_threshold), "\n");
  out += str_cat("train.clip_mode=", to_string(train.clip_mode), "\n");
  out += str_cat("train.decay_factor=", g17(train.decay_factor), "\n");
  out += str_cat("train.decay_every=", train.decay_every, "\n");
  out += str_cat("train.epochs=", train.epochs, "\n");
  out += str_cat("train.batch_size=", train.batch_size, "\n");
  out += str_cat("train.seed=", train.seed, "\n");
  out += str_cat("train.max_steps=", train.max_steps, "\n");
  out += str_cat("train.lambda=", g17(loss.lambda), "\n");
  out += str_cat("train.sigma=", g17(loss.sigma), "\n");
  out += str_cat("data.root=", data.root, "\n");
  out += str_cat("data.classes=", classes, "\n");
  out += str_cat("data.class=", data.object_class, "\n");
  out += str_cat("data.height=", data.height, "\n");
  out += str_cat("data.width=", data.width, "\n");
  out += str_cat("data.train_count=", data.train_count, "\n");
  out += str_cat("data.test_count=", data.test_count, "\n");
  out += str_cat("data.noise_sigma=", g17(data.noise_sigma), "\n");
  out += str_cat("data.seed=", data.seed, "\n");
  out += str_cat("data.augment=", augment, "\n");
  return out;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  loss.validate();
  data.validate();
}

std::vector<std::pair<std::string, std::string>> parse_kv_text(std::string_view text,
                                                               std::string_view origin) {
  std::vector<std::pair<std::string, std::string>> entries;
  size_t pos = 0;
  int64_t lineno = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    ++lineno;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(str_cat("config ", origin, " line ", lineno,
                                ": expected key=value, got '", line, "'"));
    }
    const std::string_view k = trim(line.substr(0, eq));
    if (k.empty()) {
      throw ConfigError(str_cat("config ", origin, " line ", lineno, ": empty key"));
    }
    entries.emplace_back(std::string(k), std::string(trim(line.substr(eq + 1))));
  }
  return entries;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  if (const char* env = std::getenv("RECAL_SEED")) {
    const uint64_t seed = parse_u64(env, "RECAL_SEED");
    cfg.train.seed = seed;
    cfg.data.seed = seed;
  }
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError(str_cat("config: cannot open '", path, "'"));
    std::ostringstream buf;
    buf << in.rdbuf();
    for (const auto& [k, v] : parse_kv_text(buf.str(), str_cat("'", path, "'"))) {
      cfg.apply(k, v);
    }
  }
  return cfg;
}

}  // namespace recal
