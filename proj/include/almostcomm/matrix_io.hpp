#pragma once

// JSON form of dense matrices: {"n": int, "re": [[...]], "im": [[...]]}.

#include <string>

#include <json.hpp>

#include "almostcomm/herm_core.hpp"

namespace almostcomm {

/// Throws FormatError naming `field` when the object is malformed.
Matrix matrix_from_json(const nlohmann::json& j, const std::string& field);
/// Checked Hermitian read; NotHermitian errors are rethrown as FormatError
/// carrying the field name.
HermitianMatrix hermitian_from_json(const nlohmann::json& j, const std::string& field);

nlohmann::json matrix_to_json(const Matrix& m);
/// Writes the stored (exactly symmetrized) entries.
nlohmann::json matrix_to_json(const HermitianMatrix& m);

nlohmann::json real_vector_to_json(const RealVector& v);

nlohmann::json read_json_file(const std::string& path);
/// Writes `text` verbatim, replacing any existing file.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace almostcomm
