#include "objslam/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "objslam/error.hpp"
#include "objslam/kernels.hpp"
#include "objslam/text_io.hpp"

namespace objslam {

namespace {

// Transposes entries into a B x n dimension-major table.
std::vector<double> make_table(const std::vector<IndexEntry>& entries, int b,
                               const Eigen::VectorXd* scale) {
  const std::size_t n = entries.size();
  std::vector<double> t(static_cast<std::size_t>(b) * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < b; ++d) {
      double v = entries[i].params.lambda[d];
      if (scale) v /= (*scale)[d];
      t[d * n + i] = v;
    }
  }
  return t;
}

Eigen::VectorXd whitening_scale(const Eigen::VectorXd& eigenvalues) {
  Eigen::VectorXd s(eigenvalues.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    s[i] = eigenvalues[i] > 0.0 ? std::sqrt(eigenvalues[i]) : 1.0;
  }
  return s;
}

}  // namespace

InstanceIndex::InstanceIndex(int basis_size, Eigen::VectorXd eigenvalues)
    : basis_size_(basis_size), eigenvalues_(std::move(eigenvalues)) {
  if (eigenvalues_.size() != basis_size_) {
    throw Error(ErrorCode::DimensionMismatch, "one eigenvalue per basis vector");
  }
}

InstanceIndex InstanceIndex::build(const CategoryModel& model,
                                   std::span<const KeypointSet3D> instances,
                                   const std::string& source) {
  InstanceIndex index(model.basis_size(), model.eigenvalues);
  for (const auto& s : instances) index.add({s.id, fit_params(model, s), source});
  return index;
}

void InstanceIndex::add(IndexEntry entry) {
  if (entry.params.size() != basis_size_) {
    throw Error(ErrorCode::DimensionMismatch, "entry length differs from B");
  }
  for (const auto& e : entries_) {
    if (e.id == entry.id) throw Error(ErrorCode::DuplicateId, "instance " + entry.id);
  }
  entries_.push_back(std::move(entry));
  raw_ = make_table(entries_, basis_size_, nullptr);
  const Eigen::VectorXd scale = whitening_scale(eigenvalues_);
  whitened_ = make_table(entries_, basis_size_, &scale);
}

const std::vector<double>& InstanceIndex::table(RetrievalMetric metric) const {
  return metric == RetrievalMetric::Whitened ? whitened_ : raw_;
}

std::vector<Neighbor> knn_retrieve(const InstanceIndex& index, const ShapeParams& query, int k,
                                   RetrievalMetric metric) {
  if (index.size() == 0) throw Error(ErrorCode::EmptyIndex, "index has no entries");
  if (k < 1) throw Error(ErrorCode::ConfigError, "k must be at least 1");
  if (query.size() != index.basis_size()) {
    throw Error(ErrorCode::DimensionMismatch, "query length differs from B");
  }
  Eigen::VectorXd q = query.lambda;
  if (metric == RetrievalMetric::Whitened) {
    q = q.cwiseQuotient(whitening_scale(index.eigenvalues()));
  }
  const std::size_t n = index.size();
  std::vector<double> d2(n);
  kernels::squared_distances(index.table(metric), n, {q.data(), static_cast<std::size_t>(q.size())},
                             d2);
  const auto& entries = index.entries();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), n);
  std::partial_sort(order.begin(), order.begin() + take, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (d2[a] != d2[b]) return d2[a] < d2[b];
                      return entries[a].id < entries[b].id;
                    });
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({entries[order[i]].id, std::sqrt(d2[order[i]])});
  }
  return out;
}

void write_index(std::ostream& out, const InstanceIndex& index) {
  out << "objslam-index 1\n";
  out << "B " << index.basis_size() << " count " << index.size() << '\n';
  out << "eigenvalues";
  for (Eigen::Index i = 0; i < index.eigenvalues().size(); ++i) {
    out << ' ' << format_double(index.eigenvalues()[i]);
  }
  out << '\n';
  for (const auto& e : index.entries()) {
    out << e.id << ' ' << (e.source.empty() ? "-" : e.source);
    for (Eigen::Index i = 0; i < e.params.lambda.size(); ++i) {
      out << ' ' << format_double(e.params.lambda[i]);
    }
    out << '\n';
  }
}

InstanceIndex read_index(std::istream& in) {
  std::string line;
  if (!next_content_line(in, line) || split_tokens(line) != std::vector<std::string>{"objslam-index", "1"}) {
    throw Error(ErrorCode::ParseError, "missing index header");
  }
  if (!next_content_line(in, line)) throw Error(ErrorCode::ParseError, "missing size line");
  auto tok = split_tokens(line);
  if (tok.size() != 4 || tok[0] != "B" || tok[2] != "count") {
    throw Error(ErrorCode::ParseError, "expected `B <b> count <n>`");
  }
  const int b = static_cast<int>(parse_int(tok[1]));
  const long long count = parse_int(tok[3]);
  if (b < 0 || count < 0) throw Error(ErrorCode::ParseError, "negative index size");
  if (!next_content_line(in, line)) throw Error(ErrorCode::ParseError, "missing eigenvalues");
  tok = split_tokens(line);
  if (tok.empty() || tok[0] != "eigenvalues" || static_cast<int>(tok.size()) != b + 1) {
    throw Error(ErrorCode::ParseError, "expected B eigenvalues");
  }
  Eigen::VectorXd ev(b);
  for (int i = 0; i < b; ++i) ev[i] = parse_double(tok[i + 1]);
  InstanceIndex index(b, ev);
  for (long long r = 0; r < count; ++r) {
    if (!next_content_line(in, line)) throw Error(ErrorCode::ParseError, "index truncated");
    tok = split_tokens(line);
    if (static_cast<int>(tok.size()) != b + 2) throw Error(ErrorCode::ParseError, "bad record");
    IndexEntry e;
    e.id = tok[0];
    e.source = tok[1] == "-" ? "" : tok[1];
    e.params.lambda.resize(b);
    for (int i = 0; i < b; ++i) e.params.lambda[i] = parse_double(tok[i + 2]);
    index.add(std::move(e));
  }
  return index;
}

}  // namespace objslam
