#include "objslam/category_model.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "objslam/error.hpp"
#include "objslam/kernels.hpp"
#include "objslam/text_io.hpp"

namespace objslam {

namespace {

constexpr const char* kModelMagic = "objslam-category-model";
constexpr const char* kCollectionMagic = "objslam-keypoints";
constexpr int kFormatVersion = 1;

void fix_column_signs(Eigen::MatrixXd& basis) {
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
  }
}

std::vector<std::string> expect_line(std::istream& in, const std::string& what) {
  std::string line;
  if (!next_content_line(in, line)) throw Error(ErrorCode::ParseError, "missing " + what);
  return split_tokens(line);
}

Eigen::VectorXd read_vector_line(std::istream& in, const std::string& key, Eigen::Index n) {
  auto tok = expect_line(in, key);
  if (tok.empty() || tok[0] != key || static_cast<Eigen::Index>(tok.size()) != n + 1) {
    throw Error(ErrorCode::ParseError, "malformed '" + key + "' record");
  }
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = parse_double(tok[i + 1]);
  return v;
}

void write_vector_line(std::ostream& out, const std::string& key, const Eigen::VectorXd& v) {
  out << key;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v[i]);
  out << '\n';
}

}  // namespace

Eigen::VectorXd KeypointSet3D::flat() const {
  Eigen::VectorXd v(3 * static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) v.segment<3>(3 * k) = points[k];
  return v;
}

KeypointSet3D KeypointSet3D::from_flat(const Eigen::VectorXd& flat, std::string id,
                                       std::string category) {
  if (flat.size() % 3 != 0) throw Error(ErrorCode::DimensionMismatch, "flat size not 3K");
  KeypointSet3D s{std::move(id), std::move(category), {}};
  s.points.resize(flat.size() / 3);
  for (std::size_t k = 0; k < s.points.size(); ++k) s.points[k] = flat.segment<3>(3 * k);
  return s;
}

double CategoryModel::explained_variance_ratio() const {
  if (total_variance <= 0.0) return 1.0;
  return eigenvalues.sum() / total_variance;
}

double CategoryModel::mean_eigenvalue() const {
  return eigenvalues.size() == 0 ? 0.0 : eigenvalues.mean();
}

CategoryModel build_category_model(std::span<const KeypointSet3D> instances,
                                   const ModelBuildOptions& options) {
  if (instances.size() < 2) {
    throw Error(ErrorCode::InsufficientInstances, "need at least 2 instances");
  }
  const std::size_t k = instances.front().points.size();
  if (k == 0) throw Error(ErrorCode::InconsistentK, "instances have no keypoints");
  for (const auto& inst : instances) {
    if (inst.points.size() != k) {
      throw Error(ErrorCode::InconsistentK, "instance '" + inst.id + "' has a different K");
    }
    for (const auto& p : inst.points) {
      if (!p.allFinite()) throw Error(ErrorCode::DimensionMismatch, "non-finite keypoint");
    }
  }

  const Eigen::Index n = static_cast<Eigen::Index>(instances.size());
  const Eigen::Index dim = 3 * static_cast<Eigen::Index>(k);
  Eigen::MatrixXd data(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) data.row(i) = instances[i].flat().transpose();

  CategoryModel model;
  model.category = instances.front().category;
  model.num_keypoints = static_cast<int>(k);
  model.mean = data.colwise().mean().transpose();
  data.rowwise() -= model.mean.transpose();

  // Principal directions from the SVD of the centered data; no covariance is formed.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinV);
  const Eigen::VectorXd variances = svd.singularValues().array().square() / double(n - 1);
  model.total_variance = data.squaredNorm() / double(n - 1);

  const int max_b = static_cast<int>(std::min<Eigen::Index>(dim, n - 1));
  int b = 0;
  if (options.basis_size) {
    b = *options.basis_size;
    if (b < 1 || b > max_b) {
      throw Error(ErrorCode::DimensionMismatch,
                  "basis size must be in [1, " + std::to_string(max_b) + "]");
    }
  } else {
    b = max_b;
    double cumulative = 0.0;
    for (int i = 0; i < max_b; ++i) {
      cumulative += variances[i];
      if (model.total_variance <= 0.0 ||
          cumulative >= options.explained_variance_floor * model.total_variance) {
        b = i + 1;
        break;
      }
    }
  }

  model.basis = svd.matrixV().leftCols(b);
  model.eigenvalues = variances.head(b);
  fix_column_signs(model.basis);
  return model;
}

Eigen::VectorXd instantiate_flat(const CategoryModel& model, const ShapeParams& params) {
  if (params.size() != model.basis_size()) {
    throw Error(ErrorCode::DimensionMismatch, "shape parameter length differs from B");
  }
  Eigen::VectorXd out(model.mean.size());
  kernels::affine_combine({model.mean.data(), static_cast<std::size_t>(model.mean.size())},
                          {model.basis.data(), static_cast<std::size_t>(model.basis.size())},
                          {params.lambda.data(), static_cast<std::size_t>(params.lambda.size())},
                          {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

KeypointSet3D instantiate_shape(const CategoryModel& model, const ShapeParams& params) {
  return KeypointSet3D::from_flat(instantiate_flat(model, params), {}, model.category);
}

ShapeParams fit_params(const CategoryModel& model, const KeypointSet3D& shape) {
  if (static_cast<int>(shape.points.size()) != model.num_keypoints) {
    throw Error(ErrorCode::DimensionMismatch, "keypoint count differs from model K");
  }
  return {model.basis.transpose() * (shape.flat() - model.mean)};
}

void write_model(std::ostream& out, const CategoryModel& model) {
  out << kModelMagic << ' ' << kFormatVersion << '\n';
  out << "category " << (model.category.empty() ? "-" : model.category) << '\n';
  out << "K " << model.num_keypoints << '\n';
  out << "B " << model.basis_size() << '\n';
  out << "total_variance " << format_double(model.total_variance) << '\n';
  if (!model.labels.empty()) {
    out << "labels";
    for (const auto& l : model.labels) out << ' ' << l;
    out << '\n';
  }
  write_vector_line(out, "mean", model.mean);
  write_vector_line(out, "eigenvalues", model.eigenvalues);
  for (int c = 0; c < model.basis_size(); ++c) {
    write_vector_line(out, "basis", model.basis.col(c));
  }
}

CategoryModel read_model(std::istream& in) {
  auto header = expect_line(in, "header");
  if (header.size() != 2 || header[0] != kModelMagic) {
    throw Error(ErrorCode::ParseError, "not a category model file");
  }
  if (parse_int(header[1]) != kFormatVersion) {
    throw Error(ErrorCode::ParseError, "unsupported model version " + header[1]);
  }
  CategoryModel model;
  auto cat = expect_line(in, "category");
  if (cat.size() != 2 || cat[0] != "category") throw Error(ErrorCode::ParseError, "category");
  model.category = cat[1] == "-" ? "" : cat[1];
  auto kline = expect_line(in, "K");
  auto bline = expect_line(in, "B");
  if (kline.size() != 2 || kline[0] != "K" || bline.size() != 2 || bline[0] != "B") {
    throw Error(ErrorCode::ParseError, "K/B records");
  }
  model.num_keypoints = static_cast<int>(parse_int(kline[1]));
  const int b = static_cast<int>(parse_int(bline[1]));
  if (model.num_keypoints <= 0 || b < 0) throw Error(ErrorCode::ParseError, "bad K/B");
  auto tv = expect_line(in, "total_variance");
  if (tv.size() != 2 || tv[0] != "total_variance") throw Error(ErrorCode::ParseError, "variance");
  model.total_variance = parse_double(tv[1]);

  const Eigen::Index dim = 3 * model.num_keypoints;
  std::string line;
  auto pos = in.tellg();
  if (!next_content_line(in, line)) throw Error(ErrorCode::ParseError, "truncated model");
  auto tok = split_tokens(line);
  if (!tok.empty() && tok[0] == "labels") {
    if (static_cast<int>(tok.size()) != model.num_keypoints + 1) {
      throw Error(ErrorCode::ParseError, "label count differs from K");
    }
    model.labels.assign(tok.begin() + 1, tok.end());
  } else {
    in.seekg(pos);
  }
  model.mean = read_vector_line(in, "mean", dim);
  model.eigenvalues = read_vector_line(in, "eigenvalues", b);
  model.basis.resize(dim, b);
  for (int c = 0; c < b; ++c) model.basis.col(c) = read_vector_line(in, "basis", dim);
  return model;
}

void save_model(const std::string& path, const CategoryModel& model) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
  write_model(out, model);
}

CategoryModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot read " + path);
  return read_model(in);
}

void write_keypoint_collection(std::ostream& out, std::span<const KeypointSet3D> instances,
                               const std::vector<std::string>& labels) {
  const std::size_t k = instances.empty() ? labels.size() : instances.front().points.size();
  out << kCollectionMagic << ' ' << kFormatVersion << '\n';
  out << "category "
      << (instances.empty() || instances.front().category.empty() ? "-"
                                                                   : instances.front().category)
      << '\n';
  out << "K " << k << '\n';
  out << "labels";
  for (std::size_t i = 0; i < k; ++i) {
    out << ' ' << (i < labels.size() ? labels[i] : "kp" + std::to_string(i));
  }
  out << '\n';
  for (const auto& inst : instances) {
    out << inst.id;
    for (const auto& p : inst.points) {
      out << ' ' << format_double(p.x()) << ' ' << format_double(p.y()) << ' '
          << format_double(p.z());
    }
    out << '\n';
  }
}

std::vector<KeypointSet3D> read_keypoint_collection(std::istream& in,
                                                    std::vector<std::string>* labels) {
  auto header = expect_line(in, "header");
  if (header.size() != 2 || header[0] != kCollectionMagic) {
    throw Error(ErrorCode::ParseError, "not a keypoint collection file");
  }
  if (parse_int(header[1]) != kFormatVersion) {
    throw Error(ErrorCode::ParseError, "unsupported collection version " + header[1]);
  }
  auto cat = expect_line(in, "category");
  auto kline = expect_line(in, "K");
  auto lab = expect_line(in, "labels");
  if (cat.size() != 2 || kline.size() != 2 || kline[0] != "K" || lab.empty() ||
      lab[0] != "labels") {
    throw Error(ErrorCode::ParseError, "malformed collection header");
  }
  const std::string category = cat[1] == "-" ? "" : cat[1];
  const std::size_t k = static_cast<std::size_t>(parse_int(kline[1]));
  if (lab.size() != k + 1) throw Error(ErrorCode::ParseError, "label count differs from K");
  if (labels) labels->assign(lab.begin() + 1, lab.end());

  std::vector<KeypointSet3D> out;
  std::string line;
  while (next_content_line(in, line)) {
    auto tok = split_tokens(line);
    if (tok.size() != 1 + 3 * k) {
      throw Error(ErrorCode::InconsistentK, "record '" + tok.front() + "' has wrong arity");
    }
    KeypointSet3D s{tok[0], category, {}};
    s.points.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      s.points[i] = Vec3(parse_double(tok[1 + 3 * i]), parse_double(tok[2 + 3 * i]),
                         parse_double(tok[3 + 3 * i]));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace objslam
