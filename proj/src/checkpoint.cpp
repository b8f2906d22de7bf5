#include "mgaze/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "mgaze/errors.hpp"

namespace mgaze {

namespace {

constexpr const char* kMagic = "mgaze-checkpoint";
constexpr int kVersion = 1;

std::string hexfloat(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
  return std::string(buf, res.ptr);
}

double parse_hexfloat(const std::string& token, long line) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = first + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::hex);
  if (ec != std::errc() || ptr != last) throw ParseError("bad value '" + token + "'", line);
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  const auto values = t.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << hexfloat(values[i]) << (i + 1 == values.size() || (i + 1) % t.cols() == 0 ? '\n' : ' ');
  }
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::istringstream next(const char* what) {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_;
      if (!text.empty()) return std::istringstream(text);
    }
    throw ParseError(std::string("unexpected end of file, expected ") + what, line_);
  }

  template <typename T>
  T field(const std::string& name) {
    auto row = next(name.c_str());
    std::string key;
    T value{};
    if (!(row >> key >> value) || key != name) throw ParseError("expected '" + name + "'", line_);
    return value;
  }

  long line() const { return line_; }

 private:
  std::istream& in_;
  long line_ = 0;
};

Tensor take(std::map<std::string, Tensor>& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ParseError("checkpoint is missing tensor " + name, 0);
  Tensor t = it->second;
  tensors.erase(it);
  return t;
}

void check_chain(std::size_t in, const Affine& layer, const std::string& name) {
  if (layer.in_dim() != in || layer.bias.rows() != 1 || layer.bias.cols() != layer.out_dim()) {
    throw ShapeError("checkpoint: inconsistent shape for " + name);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const ModelState& model = checkpoint.model;
  out << kMagic << ' ' << kVersion << '\n';
  out << "config_hash " << checkpoint.config_hash << '\n';
  out << "epoch " << checkpoint.epoch << '\n';
  out << "init_seed " << checkpoint.init_seed << '\n';
  out << "data_seed " << checkpoint.data_seed << '\n';
  out << "shuffle_seed " << checkpoint.shuffle_seed << '\n';
  out << "alpha " << hexfloat(checkpoint.bank.alpha) << '\n';
  out << "tau " << hexfloat(checkpoint.bank.tau) << '\n';
  const auto names = model.parameter_names();
  const auto params = model.parameters();
  out << "tensors " << params.size() + 1 << '\n';
  for (std::size_t i = 0; i < params.size(); ++i) write_tensor(out, names[i], params[i]);
  write_tensor(out, "prototypes", checkpoint.bank.mu);
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader reader(in);
  Checkpoint ck;
  {
    auto row = reader.next("header");
    std::string magic;
    int version = 0;
    if (!(row >> magic >> version) || magic != kMagic) throw ParseError("not a checkpoint file", reader.line());
    if (version != kVersion) throw ParseError("unsupported checkpoint version", reader.line());
  }
  ck.config_hash = reader.field<std::uint64_t>("config_hash");
  ck.epoch = reader.field<long>("epoch");
  ck.init_seed = reader.field<std::uint64_t>("init_seed");
  ck.data_seed = reader.field<std::uint64_t>("data_seed");
  ck.shuffle_seed = reader.field<std::uint64_t>("shuffle_seed");
  ck.bank.alpha = parse_hexfloat(reader.field<std::string>("alpha"), reader.line());
  ck.bank.tau = parse_hexfloat(reader.field<std::string>("tau"), reader.line());
  const auto count = reader.field<std::size_t>("tensors");

  std::map<std::string, Tensor> tensors;
  for (std::size_t n = 0; n < count; ++n) {
    auto row = reader.next("tensor");
    std::string tag, name;
    std::size_t rows = 0, cols = 0;
    if (!(row >> tag >> name >> rows >> cols) || tag != "tensor" || rows == 0 || cols == 0) {
      throw ParseError("malformed tensor header", reader.line());
    }
    std::vector<double> values;
    values.reserve(rows * cols);
    while (values.size() < rows * cols) {
      auto data = reader.next(name.c_str());
      std::string token;
      while (data >> token) values.push_back(parse_hexfloat(token, reader.line()));
    }
    if (values.size() != rows * cols) throw ParseError("too many values for " + name, reader.line());
    const bool trainable = name != "prototypes";
    if (!tensors.emplace(name, Tensor::matrix(rows, cols, std::move(values), trainable)).second) {
      throw ParseError("duplicate tensor " + name, reader.line());
    }
  }

  for (std::size_t i = 0; tensors.count("backbone." + std::to_string(i) + ".weight") != 0; ++i) {
    const std::string base = "backbone." + std::to_string(i);
    ck.model.backbone.push_back({take(tensors, base + ".weight"), take(tensors, base + ".bias")});
  }
  ck.model.regressor = {take(tensors, "regressor.weight"), take(tensors, "regressor.bias")};
  for (std::size_t i = 0; tensors.count("projection." + std::to_string(i) + ".weight") != 0; ++i) {
    const std::string base = "projection." + std::to_string(i);
    ck.model.projection.push_back({take(tensors, base + ".weight"), take(tensors, base + ".bias")});
  }
  ck.bank.mu = take(tensors, "prototypes");
  if (!tensors.empty()) throw ParseError("unexpected tensor " + tensors.begin()->first, reader.line());
  if (ck.model.backbone.empty() || ck.model.projection.empty()) {
    throw ShapeError("checkpoint: model needs backbone and projection layers");
  }

  std::size_t in_dim = ck.model.backbone.front().in_dim();
  for (std::size_t i = 0; i < ck.model.backbone.size(); ++i) {
    check_chain(in_dim, ck.model.backbone[i], "backbone." + std::to_string(i));
    in_dim = ck.model.backbone[i].out_dim();
  }
  check_chain(in_dim, ck.model.regressor, "regressor");
  if (ck.model.regressor.out_dim() != 2) throw ShapeError("checkpoint: regressor must output pitch and yaw");
  for (std::size_t i = 0; i < ck.model.projection.size(); ++i) {
    check_chain(in_dim, ck.model.projection[i], "projection." + std::to_string(i));
    in_dim = ck.model.projection[i].out_dim();
  }
  if (ck.bank.dim() != in_dim) throw ShapeError("checkpoint: prototype width differs from projection width");
  return ck;
}

}  // namespace mgaze
