#pragma once

// Nearest training instances in shape-coefficient space.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "objslam/category_model.hpp"

namespace objslam {

enum class RetrievalMetric { Euclidean, Whitened };

struct IndexEntry {
  std::string id;
  ShapeParams params;
  std::string source;
};

class InstanceIndex {
 public:
  InstanceIndex() = default;
  /// `eigenvalues` (length B) scale the whitened metric.
  InstanceIndex(int basis_size, Eigen::VectorXd eigenvalues);

  /// Projects every instance onto the model basis.
  static InstanceIndex build(const CategoryModel& model, std::span<const KeypointSet3D> instances,
                             const std::string& source);

  /// Throws DimensionMismatch, DuplicateId.
  void add(IndexEntry entry);

  int basis_size() const { return basis_size_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

  /// Coefficients stored dimension-major (B x n), optionally whitened.
  const std::vector<double>& table(RetrievalMetric metric) const;

 private:
  int basis_size_ = 0;
  Eigen::VectorXd eigenvalues_;
  std::vector<IndexEntry> entries_;
  std::vector<double> raw_;
  std::vector<double> whitened_;
};

struct Neighbor {
  std::string id;
  double distance = 0.0;
};

/// The k nearest entries, ascending by distance, ties by id. k larger than the index returns
/// everything. Throws EmptyIndex, DimensionMismatch, ConfigError (k < 1).
std::vector<Neighbor> knn_retrieve(const InstanceIndex& index, const ShapeParams& query, int k,
                                   RetrievalMetric metric = RetrievalMetric::Euclidean);

/// Header `objslam-index 1`, `B <b> count <n>`, `eigenvalues ...`, then
/// `<id> <source> l1 .. lB` per instance.
void write_index(std::ostream& out, const InstanceIndex& index);
InstanceIndex read_index(std::istream& in);

}  // namespace objslam
