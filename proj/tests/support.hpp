#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>

#include "eom/error.hpp"
#include "eom/survey_data.hpp"

namespace eom::test {

inline WorkerRecord worker(std::string occ, double edu, double weight = 1.0) {
  WorkerRecord r;
  r.person_id = "p";
  r.occ_code = std::move(occ);
  r.years_edu = edu;
  r.weight = weight;
  r.age = 30.0;
  r.employment_status = EmploymentStatus::wage_salary;
  r.daily_wage = 100.0;
  return r;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("eomkit_" + name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline std::filesystem::path data_dir() { return EOM_DATA_DIR; }

// Error code of the eom::Error thrown by f, or "" if none.
template <class F>
std::string error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return {};
}

template <class F>
ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  throw std::logic_error("no error thrown");
}

inline double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a - b).cwiseAbs().array() / (1.0 + b.cwiseAbs().array())).maxCoeff();
}

}  // namespace eom::test
