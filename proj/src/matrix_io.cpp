#include "almostcomm/matrix_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "almostcomm/errors.hpp"

namespace almostcomm {

namespace {

std::vector<std::vector<double>> read_rows(const nlohmann::json& j, const std::string& field, const char* part,
                                           Index n) {
  if (!j.contains(part) || !j.at(part).is_array()) {
    throw FormatError(fmt::format("{}: missing array \"{}\"", field, part));
  }
  const auto& rows = j.at(part);
  if (static_cast<Index>(rows.size()) != n) {
    throw FormatError(fmt::format("{}.{}: expected {} rows, found {}", field, part, n, rows.size()));
  }
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || static_cast<Index>(row.size()) != n) {
      throw FormatError(fmt::format("{}.{}[{}]: expected {} entries", field, part, i, n));
    }
    std::vector<double> r;
    r.reserve(row.size());
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!row[k].is_number()) {
        throw FormatError(fmt::format("{}.{}[{}][{}]: not a number", field, part, i, k));
      }
      r.push_back(row[k].get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

Matrix matrix_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_object()) throw FormatError(fmt::format("{}: expected an object", field));
  if (!j.contains("n") || !j.at("n").is_number_integer() || j.at("n").get<long long>() < 1) {
    throw FormatError(fmt::format("{}: \"n\" must be a positive integer", field));
  }
  const Index n = j.at("n").get<Index>();
  const auto re = read_rows(j, field, "re", n);
  std::vector<std::vector<double>> im;
  if (j.contains("im")) {
    im = read_rows(j, field, "im", n);
  }
  Matrix m(n, n);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) {
      const auto ru = static_cast<std::size_t>(r);
      const auto cu = static_cast<std::size_t>(c);
      m(r, c) = Complex(re[ru][cu], im.empty() ? 0.0 : im[ru][cu]);
    }
  }
  if (!m.allFinite()) throw FormatError(fmt::format("{}: non-finite entries", field));
  return m;
}

HermitianMatrix hermitian_from_json(const nlohmann::json& j, const std::string& field) {
  const Matrix m = matrix_from_json(j, field);
  try {
    return HermitianMatrix(m);
  } catch (const NotHermitian& e) {
    throw FormatError(fmt::format("{}: {}", field, e.what()));
  }
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json re = nlohmann::json::array();
  nlohmann::json im = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json rr = nlohmann::json::array();
    nlohmann::json ri = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) {
      rr.push_back(m(r, c).real());
      ri.push_back(m(r, c).imag());
    }
    re.push_back(std::move(rr));
    im.push_back(std::move(ri));
  }
  return {{"n", m.rows()}, {"re", std::move(re)}, {"im", std::move(im)}};
}

nlohmann::json matrix_to_json(const HermitianMatrix& m) { return matrix_to_json(m.matrix()); }

nlohmann::json real_vector_to_json(const RealVector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(fmt::format("cannot open {}", path));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(fmt::format("{}: {}", path, e.what()));
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(fmt::format("cannot write {}", path));
  out << text;
  if (!out) throw FormatError(fmt::format("write failed for {}", path));
}

}  // namespace almostcomm
