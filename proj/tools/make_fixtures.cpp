// Regenerates the input fixtures (not calibration.json, which comes from
// `almostcomm calibrate`). Usage: make_fixtures <directory>

#include <iostream>
#include <string>

#include <fmt/core.h>

#include "almostcomm/car_lab.hpp"
#include "almostcomm/matrix_io.hpp"
#include "almostcomm/pipeline.hpp"

using namespace almostcomm;

namespace {

void write_pair(const std::string& path, const EnsembleInstance& inst) {
  nlohmann::json j;
  j["a"] = matrix_to_json(inst.a);
  j["b"] = matrix_to_json(inst.b);
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <directory>\n";
    return 1;
  }
  const std::string dir = argv[1];
  try {
    write_pair(dir + "/correct_commuting.json", random_instance(8, 0.0, 1.0, 101));
    write_pair(dir + "/correct_nu_1e-3.json", random_instance(16, 1e-3, 1.0, 102));
    write_pair(dir + "/correct_nu_0.5.json", random_instance(16, 0.5, 1.0, 103));

    write_text_file(dir + "/measure_gaussian16.json", gaussian_measure(16, 0.5, 0.15).to_json().dump(2) + "\n");
    RealVector atoms(3);
    atoms << 0.0, 0.3, 1.0;
    RealVector weights(3);
    weights << 0.25, 0.5, 0.25;
    Vector xi(3);
    xi << Complex(0.8, 0.3), Complex(1.0, 0.0), Complex(0.0, 0.9);
    write_text_file(dir + "/measure_three_atom.json",
                    DiscreteMeasureState::normalized(atoms, weights, xi).to_json().dump(2) + "\n");
    const DiscreteMeasureState single(RealVector::Constant(1, 0.5), RealVector::Constant(1, 1.0),
                                      Vector::Constant(1, 1.0));
    write_text_file(dir + "/measure_single_atom.json", single.to_json().dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
