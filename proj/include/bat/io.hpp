#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "bat/toy_model.hpp"

namespace bat::io {

/// Binary model format, little-endian: "BAM1", u32 v, u32 d, u32 m,
/// f64 W row-major, u32 context count, per context m u32 ids and d f64,
/// then d f64 fallback state. Contexts are written in table order.
void write_model(std::ostream& out, const ToyModel& model);
ToyModel read_model(std::istream& in);

void save_model(const std::string& path, const ToyModel& model);
ToyModel load_model(const std::string& path);

/// Text corpus: "#vocab v" on the first line, then one document per line
/// as space-separated ids.
void write_corpus(std::ostream& out, const Corpus& corpus);
Corpus read_corpus(std::istream& in);

void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// "# key=value" lines, starting with version and rng.
void write_metadata(std::ostream& out, const Metadata& fields);

}  // namespace bat::io
