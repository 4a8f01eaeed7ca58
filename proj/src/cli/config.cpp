#include "flipbound/cli.hpp"

#include "flipbound/csv.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#ifndef FLIPBOUND_VERSION
#define FLIPBOUND_VERSION "unknown"
#endif

namespace flipbound::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class Int>
Int parse_int(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  Int v{};
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || end != t.data() + t.size() || t.empty()) {
    throw ConfigError("config key '" + std::string(key) + "' expects an integer, got '" + t + "'");
  }
  return v;
}

double parse_real(std::string_view key, std::string_view text) {
  try {
    return parse_double(trim(text));
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "' expects a number, got '" + trim(text) + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "' expects true/false, got '" + t + "'");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

struct Key {
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define FB_INT(name)                                                                        \
  {                                                                                         \
    #name, {                                                                                \
      [](ExperimentConfig& c, std::string_view v) { c.name = parse_int<decltype(c.name)>(#name, v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.name); }                  \
    }                                                                                       \
  }
#define FB_REAL(name)                                                              \
  {                                                                                \
    #name, {                                                                       \
      [](ExperimentConfig& c, std::string_view v) { c.name = parse_real(#name, v); }, \
          [](const ExperimentConfig& c) { return format_double(c.name); }          \
    }                                                                              \
  }
#define FB_TEXT(name)                                                          \
  {                                                                            \
    #name, {                                                                   \
      [](ExperimentConfig& c, std::string_view v) { c.name = trim(v); },      \
          [](const ExperimentConfig& c) { return std::string(c.name); }        \
    }                                                                          \
  }

const std::map<std::string, Key, std::less<>>& registry() {
  static const std::map<std::string, Key, std::less<>> keys{
      FB_TEXT(data_dir),
      FB_TEXT(out_dir),
      FB_INT(k),
      FB_INT(class0),
      FB_INT(class1),
      FB_TEXT(class0_name),
      FB_TEXT(class1_name),
      FB_INT(seed),
      FB_INT(threads),
      {"hidden",
       {[](ExperimentConfig& c, std::string_view v) {
          c.hidden.clear();
          for (const auto& item : split_list(v)) c.hidden.push_back(parse_int<long>("hidden", item));
        },
        [](const ExperimentConfig& c) { return join(c.hidden, [](long x) { return std::to_string(x); }); }}},
      FB_REAL(sigma_init),
      FB_INT(epochs),
      FB_INT(batch_size),
      FB_REAL(learning_rate),
      FB_REAL(dropout_rate),
      {"train_sigma",
       {[](ExperimentConfig& c, std::string_view v) { c.train_sigma = parse_bool("train_sigma", v); },
        [](const ExperimentConfig& c) { return std::string(c.train_sigma ? "true" : "false"); }}},
      FB_REAL(adam_beta1),
      FB_REAL(adam_beta2),
      FB_REAL(adam_eps),
      {"recon_ks",
       {[](ExperimentConfig& c, std::string_view v) {
          c.recon_ks.clear();
          for (const auto& item : split_list(v)) c.recon_ks.push_back(parse_int<long>("recon_ks", item));
        },
        [](const ExperimentConfig& c) { return join(c.recon_ks, [](long x) { return std::to_string(x); }); }}},
      FB_INT(recon_image),
      FB_TEXT(flip_split),
      FB_INT(flip_count),
      FB_INT(flip_restarts),
      FB_REAL(score_tol),
      FB_REAL(overshoot),
      FB_TEXT(region_split),
      FB_INT(region_class),
      FB_INT(region_max_points),
      FB_TEXT(attack_split),
      FB_INT(attack_count),
      {"attack_epsilons",
       {[](ExperimentConfig& c, std::string_view v) {
          c.attack_epsilons.clear();
          for (const auto& item : split_list(v)) c.attack_epsilons.push_back(parse_real("attack_epsilons", item));
        },
        [](const ExperimentConfig& c) { return join(c.attack_epsilons, [](double x) { return format_double(x); }); }}},
      FB_INT(attack_steps),
      FB_REAL(histogram_bin_width),
  };
  return keys;
}

#undef FB_INT
#undef FB_REAL
#undef FB_TEXT

void check_split(const std::string& key, const std::string& split) {
  if (split != "train" && split != "test") throw ConfigError(key + " must be 'train' or 'test', got '" + split + "'");
}

}  // namespace

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  const auto it = registry().find(key);
  if (it == registry().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second.set(*this, value);
}

void ExperimentConfig::validate() const {
  if (k < 1 || k > 4096) throw ConfigError("k must lie in [1, 4096], got " + std::to_string(k));
  if (class0 < 0 || class0 > 9 || class1 < 0 || class1 > 9 || class0 == class1) {
    throw ConfigError("class0 and class1 must be distinct CIFAR-10 labels in 0..9");
  }
  for (long h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
  }
  if (!(sigma_init > 0.0)) throw ConfigError("sigma_init must be positive");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  for (long r : recon_ks) {
    if (r < 1 || r > k) throw ConfigError("recon_ks entries must lie in [1, k]");
  }
  check_split("flip_split", flip_split);
  check_split("region_split", region_split);
  check_split("attack_split", attack_split);
  if (flip_count < 1 || attack_count < 1) throw ConfigError("flip_count and attack_count must be >= 1");
  if (flip_restarts < 1) throw ConfigError("flip_restarts must be >= 1");
  if (region_class != 0 && region_class != 1) throw ConfigError("region_class must be 0 or 1");
  if (region_max_points < 2) throw ConfigError("region_max_points must be >= 2");
  if (!(score_tol > 0.0)) throw ConfigError("score_tol must be positive");
  if (!(overshoot >= 1.0)) throw ConfigError("overshoot must be >= 1");
  for (double e : attack_epsilons) {
    if (!(e > 0.0)) throw ConfigError("attack epsilons must be positive");
  }
  if (attack_steps < 1) throw ConfigError("attack_steps must be >= 1");
  if (!(histogram_bin_width > 0.0)) throw ConfigError("histogram_bin_width must be positive");
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [key, k] : registry()) {
    if (key == "threads" || key == "out_dir" || key == "data_dir") continue;  // do not affect results
    out += key + " = " + k.get(*this) + "\n";
  }
  return out;
}

DependencyError::DependencyError(std::filesystem::path file, std::string producer)
    : std::runtime_error("missing " + file.string() + "; run '" + producer + "' first"),
      file_(std::move(file)),
      producer_(std::move(producer)) {}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + " is not 'key = value': " + t);
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + " has an empty key");
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  for (const auto& [key, value] : parse_key_values(buf.str())) cfg.set(key, value);
}

std::uint64_t stage_seed(std::uint64_t global, std::string_view stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stage) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = global ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const std::vector<std::filesystem::path>& outputs) {
  const auto path = cfg.out_dir / ("manifest_" + command + ".txt");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string canon = cfg.canonical();
  out << "command = " << command << '\n';
  out << "version = flipbound " << FLIPBOUND_VERSION << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "stage_seed = " << stage_seed(cfg.seed, command) << '\n';
  out << "config_sha256 = " << sha256_hex(canon) << '\n';
  for (const auto& file : outputs) {
    out << "output = " << file.filename().string() << " bytes=" << std::filesystem::file_size(file)
        << " sha256=" << sha256_file(file) << '\n';
  }
  out << "# config\n";
  std::istringstream lines(canon);
  std::string line;
  while (std::getline(lines, line)) out << "# " << line << '\n';
}

}  // namespace flipbound::cli
