// .mdl text artifact encoding.

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

#include <zlib.h>

#include "edgefleet/error.hpp"
#include "edgefleet/models.hpp"

namespace edgefleet {

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large bodies.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset), static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

class BodyWriter {
 public:
  template <typename Range>
  void numbers(std::string_view name, const Range& values) {
    out_ << name << ':';
    for (double v : values) out_ << ' ' << format_double(v);
    out_ << '\n';
  }
  void number(std::string_view name, double value) { out_ << name << ": " << format_double(value) << '\n'; }
  void integer(std::string_view name, long long value) { out_ << name << ": " << value << '\n'; }
  void integers(std::string_view name, const std::vector<long long>& values) {
    out_ << name << ':';
    for (long long v : values) out_ << ' ' << v;
    out_ << '\n';
  }
  void text(std::string_view name, std::string_view value) { out_ << name << ": " << value << '\n'; }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::kCorruptArtifact, why); }

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

using Blocks = std::map<std::string, std::string, std::less<>>;

class BodyReader {
 public:
  explicit BodyReader(Blocks blocks) : blocks_(std::move(blocks)) {}

  const std::string& raw(std::string_view name) const {
    const auto it = blocks_.find(name);
    if (it == blocks_.end()) corrupt("missing block '" + std::string(name) + "'");
    return it->second;
  }

  std::vector<double> numbers(std::string_view name) const {
    std::vector<double> out;
    std::istringstream in(raw(name));
    std::string token;
    while (in >> token) {
      const auto v = parse_double(token);
      if (!v) corrupt("bad number in block '" + std::string(name) + "'");
      out.push_back(*v);
    }
    return out;
  }

  std::vector<double> numbers(std::string_view name, std::size_t expected) const {
    auto out = numbers(name);
    if (out.size() != expected) corrupt("block '" + std::string(name) + "' has wrong length");
    return out;
  }

  double number(std::string_view name) const { return numbers(name, 1)[0]; }

  long long integer(std::string_view name) const {
    const auto v = parse_int(raw(name));
    if (!v) corrupt("bad integer in block '" + std::string(name) + "'");
    return *v;
  }

  std::vector<long long> integers(std::string_view name) const {
    std::vector<long long> out;
    std::istringstream in(raw(name));
    std::string token;
    while (in >> token) {
      const auto v = parse_int(token);
      if (!v) corrupt("bad integer in block '" + std::string(name) + "'");
      out.push_back(*v);
    }
    return out;
  }

 private:
  Blocks blocks_;
};

Features to_features(const std::vector<double>& v) {
  Features f{};
  std::copy(v.begin(), v.end(), f.begin());
  return f;
}

std::string encode_body(const ModelArtifact& a) {
  BodyWriter w;
  w.numbers("scaler.means", a.scaler.means);
  w.numbers("scaler.std_devs", a.scaler.std_devs);
  struct Visitor {
    BodyWriter& w;
    void operator()(const LinearParams& p) const {
      w.numbers("mlr.weights", p.weights);
      w.number("mlr.intercept", p.intercept);
    }
    void operator()(const SvrParams& p) const {
      w.numbers("svr.weights", p.weights);
      w.number("svr.intercept", p.intercept);
      w.number("svr.epsilon", p.epsilon);
      w.number("svr.c", p.c);
      w.integer("svr.epochs", p.epochs);
      w.number("svr.learning_rate", p.learning_rate);
    }
    void operator()(const ElmParams& p) const {
      w.integer("elm.hidden", p.hidden);
      w.text("elm.activation", p.activation);
      w.text("elm.seed", std::to_string(p.seed));
      w.numbers("elm.input_weights", p.input_weights);
      w.numbers("elm.input_biases", p.input_biases);
      w.numbers("elm.output_weights", p.output_weights);
      w.number("elm.output_bias", p.output_bias);
    }
    void operator()(const ForestParams& p) const {
      w.integer("rfr.trees", static_cast<long long>(p.trees.size()));
      w.integer("rfr.max_depth", p.max_depth);
      w.integer("rfr.min_leaf", p.min_leaf);
      w.integer("rfr.feature_subset", p.feature_subset);
      w.text("rfr.seed", std::to_string(p.seed));
      for (std::size_t t = 0; t < p.trees.size(); ++t) {
        const std::string prefix = "rfr.tree." + std::to_string(t) + ".";
        const auto& nodes = p.trees[t].nodes;
        std::vector<long long> feature, left, right;
        std::vector<double> threshold, value;
        for (const auto& n : nodes) {
          feature.push_back(n.feature);
          left.push_back(n.left);
          right.push_back(n.right);
          threshold.push_back(n.threshold);
          value.push_back(n.value);
        }
        w.integers(prefix + "feature", feature);
        w.numbers(prefix + "threshold", threshold);
        w.integers(prefix + "left", left);
        w.integers(prefix + "right", right);
        w.numbers(prefix + "value", value);
      }
    }
  };
  std::visit(Visitor{w}, a.params);
  return w.str();
}

std::uint64_t parse_u64(const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) corrupt("bad unsigned value '" + text + "'");
  return v;
}

ModelParams decode_params(Algorithm algorithm, const BodyReader& r) {
  switch (algorithm) {
    case Algorithm::kMlr: {
      LinearParams p;
      p.weights = to_features(r.numbers("mlr.weights", kFeatureCount));
      p.intercept = r.number("mlr.intercept");
      return p;
    }
    case Algorithm::kSvr: {
      SvrParams p;
      p.weights = to_features(r.numbers("svr.weights", kFeatureCount));
      p.intercept = r.number("svr.intercept");
      p.epsilon = r.number("svr.epsilon");
      p.c = r.number("svr.c");
      p.epochs = static_cast<int>(r.integer("svr.epochs"));
      p.learning_rate = r.number("svr.learning_rate");
      return p;
    }
    case Algorithm::kElm: {
      ElmParams p;
      p.hidden = static_cast<int>(r.integer("elm.hidden"));
      if (p.hidden < 1 || p.hidden > 1'000'000) corrupt("bad ELM hidden size");
      const auto h = static_cast<std::size_t>(p.hidden);
      p.activation = std::string(trim(r.raw("elm.activation")));
      p.seed = parse_u64(std::string(trim(r.raw("elm.seed"))));
      p.input_weights = r.numbers("elm.input_weights", h * kFeatureCount);
      p.input_biases = r.numbers("elm.input_biases", h);
      p.output_weights = r.numbers("elm.output_weights", h);
      p.output_bias = r.number("elm.output_bias");
      return p;
    }
    case Algorithm::kRfr: {
      ForestParams p;
      const long long trees = r.integer("rfr.trees");
      if (trees < 1 || trees > 100'000) corrupt("bad tree count");
      p.max_depth = static_cast<int>(r.integer("rfr.max_depth"));
      p.min_leaf = static_cast<int>(r.integer("rfr.min_leaf"));
      p.feature_subset = static_cast<int>(r.integer("rfr.feature_subset"));
      p.seed = parse_u64(std::string(trim(r.raw("rfr.seed"))));
      p.trees.resize(static_cast<std::size_t>(trees));
      for (std::size_t t = 0; t < p.trees.size(); ++t) {
        const std::string prefix = "rfr.tree." + std::to_string(t) + ".";
        const auto feature = r.integers(prefix + "feature");
        const std::size_t n = feature.size();
        const auto threshold = r.numbers(prefix + "threshold", n);
        const auto left = r.integers(prefix + "left");
        const auto right = r.integers(prefix + "right");
        const auto value = r.numbers(prefix + "value", n);
        if (left.size() != n || right.size() != n) corrupt("tree block length mismatch");
        auto& nodes = p.trees[t].nodes;
        nodes.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          nodes[i] = TreeNode{static_cast<int>(feature[i]), threshold[i], static_cast<int>(left[i]),
                              static_cast<int>(right[i]), value[i]};
        }
      }
      return p;
    }
  }
  corrupt("unknown algorithm");
}

}  // namespace

std::string serialize(const ModelArtifact& a) {
  if (a.room.find_first_of("\r\n") != std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "room name must not contain line breaks");
  }
  const std::string body = encode_body(a);
  std::ostringstream out;
  out << "format_version: " << kArtifactFormatVersion << '\n'
      << "algorithm: " << to_string(a.algorithm) << '\n'
      << "version: " << a.version.value << '\n'
      << "room: " << a.room << '\n'
      << "trained_at: " << format_rfc3339(a.trained_at) << '\n'
      << "training_window: " << format_rfc3339(a.window_start) << ' ' << format_rfc3339(a.window_end) << '\n'
      << "cv_rmse: " << format_double(a.cv_rmse) << '\n'
      << "test_rmse: " << format_double(a.test_rmse) << '\n'
      << "checksum: " << hex32(crc32(body)) << '\n'
      << '\n'
      << body;
  return out.str();
}

ModelArtifact deserialize(std::string_view bytes) {
  const std::size_t split = bytes.find("\n\n");
  if (split == std::string_view::npos) corrupt("no header/body separator");
  const std::string_view header_text = bytes.substr(0, split + 1);
  const std::string_view body = bytes.substr(split + 2);

  Blocks header;
  std::size_t pos = 0;
  while (pos < header_text.size()) {
    const std::size_t eol = header_text.find('\n', pos);
    const std::string_view line = header_text.substr(pos, eol - pos);
    pos = eol + 1;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) corrupt("header line without ':'");
    header.emplace(std::string(trim(line.substr(0, colon))), std::string(trim(line.substr(colon + 1))));
  }

  const auto fv = header.find("format_version");
  if (fv == header.end()) corrupt("missing format_version");
  const auto format_version = parse_int(fv->second);
  if (!format_version) corrupt("bad format_version");
  if (*format_version != kArtifactFormatVersion) {
    throw Error(ErrorCode::kFormatVersionMismatch,
                "artifact format_version " + fv->second + " (expected " + std::to_string(kArtifactFormatVersion) + ")");
  }
  const auto checksum = header.find("checksum");
  if (checksum == header.end()) corrupt("missing checksum");
  if (checksum->second != hex32(crc32(body))) corrupt("checksum mismatch");

  const BodyReader head(header);
  ModelArtifact a;
  try {
    a.algorithm = parse_algorithm(head.raw("algorithm"));
  } catch (const Error&) {
    corrupt("unknown algorithm '" + head.raw("algorithm") + "'");
  }
  a.version = ModelVersion{parse_u64(head.raw("version"))};
  a.room = head.raw("room");
  try {
    a.trained_at = parse_rfc3339(head.raw("trained_at"));
    std::istringstream window(head.raw("training_window"));
    std::string start, end;
    window >> start >> end;
    a.window_start = parse_rfc3339(start);
    a.window_end = parse_rfc3339(end);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptArtifact) throw;
    corrupt(std::string("bad timestamp: ") + e.what());
  }
  a.cv_rmse = head.number("cv_rmse");
  a.test_rmse = head.number("test_rmse");

  Blocks blocks;
  pos = 0;
  while (pos < body.size()) {
    std::size_t eol = body.find('\n', pos);
    if (eol == std::string_view::npos) eol = body.size();
    const std::string_view line = body.substr(pos, eol - pos);
    pos = eol + 1;
    if (trim(line).empty()) continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) corrupt("body line without ':'");
    blocks.emplace(std::string(line.substr(0, colon)), std::string(line.substr(colon + 1)));
  }
  const BodyReader reader(std::move(blocks));
  a.scaler.means = to_features(reader.numbers("scaler.means", kFeatureCount));
  a.scaler.std_devs = to_features(reader.numbers("scaler.std_devs", kFeatureCount));
  a.params = decode_params(a.algorithm, reader);
  return a;
}

}  // namespace edgefleet
