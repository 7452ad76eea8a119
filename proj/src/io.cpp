#include "bat/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "bat/error.hpp"
#include "bat/rng.hpp"

namespace bat::io {

namespace {

constexpr char kMagic[4] = {'B', 'A', 'M', '1'};

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

void put_u32(std::ostream& out, std::uint64_t value) {
  if (value > std::numeric_limits<std::uint32_t>::max()) throw InvalidInput("value does not fit in u32");
  const std::uint32_t x = to_little(static_cast<std::uint32_t>(value));
  out.write(reinterpret_cast<const char*>(&x), sizeof x);
}

void put_f64(std::ostream& out, double value) {
  const double x = to_little(value);
  out.write(reinterpret_cast<const char*>(&x), sizeof x);
}

template <typename T>
T get(std::istream& in) {
  T x;
  if (!in.read(reinterpret_cast<char*>(&x), sizeof x)) throw InvalidInput("model file is truncated");
  return to_little(x);
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return in;
}

}  // namespace

void write_model(std::ostream& out, const ToyModel& model) {
  model.validate();
  const Eigen::MatrixXd& w = model.w.weights();
  out.write(kMagic, sizeof kMagic);
  put_u32(out, model.vocab_size());
  put_u32(out, model.hidden_size());
  put_u32(out, model.context_order);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) put_f64(out, w(i, j));
  }
  put_u32(out, model.contexts.size());
  for (const auto& [ctx, h] : model.contexts) {
    for (std::uint32_t t : ctx) put_u32(out, t);
    for (Eigen::Index j = 0; j < h.size(); ++j) put_f64(out, h[j]);
  }
  for (Eigen::Index j = 0; j < model.fallback_h.size(); ++j) put_f64(out, model.fallback_h[j]);
  if (!out) throw InvalidInput("failed writing model");
}

ToyModel read_model(std::istream& in) {
  char magic[4];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw InvalidInput("not a BAM1 model file");
  }
  const auto v = get<std::uint32_t>(in);
  const auto d = get<std::uint32_t>(in);
  const auto m = get<std::uint32_t>(in);
  if (v == 0 || d == 0) throw InvalidInput("model has an empty dimension");

  Eigen::MatrixXd w(v, d);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = get<double>(in);
  }
  ToyModel model{SoftmaxMatrix(std::move(w)), m, {}, Eigen::VectorXd(d)};
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    Context ctx(m);
    for (auto& t : ctx) t = get<std::uint32_t>(in);
    Eigen::VectorXd h(d);
    for (Eigen::Index j = 0; j < h.size(); ++j) h[j] = get<double>(in);
    if (!model.contexts.emplace(std::move(ctx), std::move(h)).second) {
      throw InvalidInput("model file repeats a context");
    }
  }
  for (Eigen::Index j = 0; j < model.fallback_h.size(); ++j) model.fallback_h[j] = get<double>(in);
  if (in.peek() != std::char_traits<char>::eof()) throw InvalidInput("trailing bytes after model");
  model.validate();
  return model;
}

void save_model(const std::string& path, const ToyModel& model) {
  std::ofstream out = open_out(path, std::ios::binary | std::ios::trunc);
  write_model(out, model);
}

ToyModel load_model(const std::string& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  return read_model(in);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  corpus.validate();
  out << "#vocab " << corpus.vocab_size << '\n';
  for (const auto& doc : corpus.docs) {
    for (std::size_t t = 0; t < doc.size(); ++t) out << (t ? " " : "") << doc[t];
    out << '\n';
  }
  if (!out) throw InvalidInput("failed writing corpus");
}

Corpus read_corpus(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#vocab ", 0) != 0) {
    throw InvalidInput("corpus must start with '#vocab v'");
  }
  Corpus corpus;
  std::istringstream head(line.substr(7));
  if (!(head >> corpus.vocab_size) || !(head >> std::ws).eof()) {
    throw InvalidInput("bad vocabulary line '" + line + "'");
  }
  while (std::getline(in, line)) {
    std::vector<std::uint32_t> doc;
    std::istringstream fields(line);
    std::string field;
    while (fields >> field) {
      std::size_t used = 0;
      unsigned long id = 0;
      try {
        id = std::stoul(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != field.size() || field[0] == '-' ||
          id > std::numeric_limits<std::uint32_t>::max()) {
        throw InvalidInput("bad token id '" + field + "'");
      }
      doc.push_back(static_cast<std::uint32_t>(id));
    }
    corpus.docs.push_back(std::move(doc));
  }
  corpus.validate();
  return corpus;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out = open_out(path, std::ios::trunc);
  write_corpus(out, corpus);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in = open_in(path, std::ios::in);
  return read_corpus(in);
}

void write_metadata(std::ostream& out, const Metadata& fields) {
  out << "# version=" << kVersion << '\n';
  out << "# rng=" << Rng::kAlgorithm << '\n';
  for (const auto& [key, value] : fields) out << "# " << key << '=' << value << '\n';
}

}  // namespace bat::io
