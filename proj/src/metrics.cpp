#include "fedquad/metrics.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "fedquad/error.hpp"
#include "fedquad/io.hpp"
#include "fedquad/kernels.hpp"

namespace fedquad {

VarianceReport variance_report(const Tensor& embeddings, std::span<const int> labels) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != labels.size()) {
    throw InputError("variance_report: embeddings " + shape_str(embeddings.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t d = embeddings.dim(1);
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  if (members.size() < 2) throw InputError("variance_report needs at least two classes");

  std::vector<std::vector<double>> centroids;
  double intra = 0.0;
  for (const auto& [label, rows] : members) {
    std::vector<double> c(d, 0.0);
    for (std::size_t i : rows) {
      for (std::size_t j = 0; j < d; ++j) c[j] += embeddings[i * d + j];
    }
    for (auto& x : c) x /= static_cast<double>(rows.size());
    double spread = 0.0;
    for (std::size_t i : rows) spread += kernels::squared_distance(embeddings.data() + i * d, c.data(), d);
    intra += spread / static_cast<double>(rows.size());
    centroids.push_back(std::move(c));
  }
  VarianceReport r;
  r.classes = centroids.size();
  r.intra = intra / static_cast<double>(r.classes);
  double inter = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < centroids.size(); ++a) {
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      inter += kernels::squared_distance(centroids[a].data(), centroids[b].data(), d);
      ++pairs;
    }
  }
  r.inter = inter / static_cast<double>(pairs);
  r.ratio = r.intra > 0.0 ? r.inter / r.intra : std::numeric_limits<double>::infinity();
  return r;
}

ForwardResult embed_dataset(EncoderModel& model, const Dataset& dataset, std::size_t limit,
                            std::size_t chunk) {
  const std::size_t n = limit == 0 ? dataset.size() : std::min(limit, dataset.size());
  std::vector<Tensor> emb, logits;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    idx.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) idx[i - begin] = i;
    auto out = model.forward(dataset.gather(idx), false);
    emb.push_back(std::move(out.embeddings));
    logits.push_back(std::move(out.logits));
  }
  return {concat_rows(emb), concat_rows(logits)};
}

std::string embeddings_csv(const Tensor& embeddings, std::span<const int> labels) {
  const std::size_t d = embeddings.rank() == 2 ? embeddings.dim(1) : 0;
  std::string out = "sample_index,label";
  for (std::size_t j = 0; j < d; ++j) out += ",e_" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += std::to_string(labels[i]);
    for (std::size_t j = 0; j < d; ++j) {
      out += ',';
      out += format_double(embeddings[i * d + j]);
    }
    out += '\n';
  }
  return out;
}

void export_embeddings(EncoderModel& model, const Dataset& dataset, const std::filesystem::path& path,
                       std::size_t max_samples) {
  const std::size_t n = std::min(dataset.size(), max_samples);
  if (n == 0) {
    write_file_atomic(path, embeddings_csv(Tensor({0, model.embedding_dim()}), {}));
    return;
  }
  auto out = embed_dataset(model, dataset, n);
  write_file_atomic(path, embeddings_csv(out.embeddings, std::span<const int>(dataset.labels).first(n)));
}

EmbeddingTable read_embeddings_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty embedding file");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 2) throw DataError(path.string() + ": malformed header");
  const std::size_t d = cols - 2;
  EmbeddingTable t;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != cols) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(cols));
    }
    auto parse = [&](std::string_view f, auto& v) {
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw DataError(path.string() + ": bad number '" + std::string(f) + "' on line " + std::to_string(line_no));
      }
    };
    std::size_t idx = 0;
    int label = 0;
    parse(fields[0], idx);
    parse(fields[1], label);
    t.sample_index.push_back(idx);
    t.labels.push_back(label);
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      parse(fields[2 + j], v);
      values.push_back(v);
    }
  }
  t.embeddings = Tensor({t.labels.size(), d}, std::move(values));
  return t;
}

}  // namespace fedquad
