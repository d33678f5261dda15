#include "epsurv/calibration.hpp"

#include "epsurv/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace epsurv {

using nlohmann::json;

void CalibrationModel::check() const {
  const Eigen::Index pp = delta1.rows();
  if (delta1.cols() != pp || delta0.size() != pp || delta2.rows() != pp ||
      residual_covariance.rows() != pp || residual_covariance.cols() != pp ||
      coef_covariance.rows() != pp * w() || coef_covariance.cols() != pp * w()) {
    throw Error(Errc::DimensionMismatch, "calibration blocks have inconsistent shapes");
  }
}

CalibrationModel fit_calibration(const Cohort& cohort) {
  const Eigen::Index p = cohort.p(), q = cohort.q(), w = p + q;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (!cohort[i].in_calibration_subset) continue;
    if (!cohort[i].x_double_star || cohort[i].x_double_star->size() != p) {
      throw Error(Errc::MissingCalibrationMeasure, "subject " + cohort[i].id + " lacks x** values");
    }
    rows.push_back(i);
  }
  const auto n_c = static_cast<Eigen::Index>(rows.size());
  if (n_c <= w + 1) {
    throw Error(Errc::SubsetTooSmall, "calibration subset has " + std::to_string(n_c) +
                                          " subjects; need more than " + std::to_string(w + 1));
  }

  Eigen::MatrixXd design(n_c, w + 1), resp(n_c, p);
  for (Eigen::Index r = 0; r < n_c; ++r) {
    const SubjectRecord& s = cohort[rows[static_cast<std::size_t>(r)]];
    design(r, 0) = 1.0;
    design.row(r).segment(1, p) = s.x_star.transpose();
    design.row(r).tail(q) = s.z.transpose();
    resp.row(r) = s.x_double_star->transpose();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < w + 1) throw Error(Errc::RankDeficient, "calibration design is rank deficient");
  const Eigen::MatrixXd coef = qr.solve(resp);  // (1+w) x p
  const Eigen::MatrixXd resid = resp - design * coef;
  const double df = static_cast<double>(n_c - (w + 1));

  CalibrationModel out;
  out.n_c = static_cast<std::size_t>(n_c);
  out.delta0 = coef.row(0).transpose();
  out.delta1 = coef.middleRows(1, p).transpose();
  out.delta2 = coef.bottomRows(q).transpose();
  out.residual_covariance = resid.transpose() * resid / df;

  const Eigen::MatrixXd wtw_inv =
      (design.transpose() * design).ldlt().solve(Eigen::MatrixXd::Identity(w + 1, w + 1));
  out.coef_covariance.resize(p * w, p * w);
  for (Eigen::Index r = 0; r < p; ++r) {
    for (Eigen::Index t = 0; t < p; ++t) {
      out.coef_covariance.block(r * w, t * w, w, w) = out.residual_covariance(r, t) * wtw_inv.bottomRightCorner(w, w);
    }
  }
  out.coef_covariance = 0.5 * (out.coef_covariance + out.coef_covariance.transpose());
  return out;
}

CorrectionMatrix build_correction(const CalibrationModel& calib) {
  calib.check();
  const Eigen::Index p = calib.p(), q = calib.q(), w = calib.w();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(calib.delta1);
  if (!lu.isInvertible()) throw Error(Errc::SingularDelta, "calibration slope matrix is singular");

  CorrectionMatrix corr;
  corr.delta = Eigen::MatrixXd::Identity(w, w);
  corr.delta.topLeftCorner(p, p) = calib.delta1;
  corr.delta.topRightCorner(p, q) = calib.delta2;

  const Eigen::MatrixXd inv1 = lu.inverse();
  corr.a = Eigen::MatrixXd::Identity(w, w);
  corr.a.topLeftCorner(p, p) = inv1;
  corr.a.topRightCorner(p, q) = -inv1 * calib.delta2;
  return corr;
}

CoefficientVector correct_beta(const CoefficientVector& beta_star, const CorrectionMatrix& corr) {
  const Eigen::VectorXd b = beta_star.joined();
  if (b.size() != corr.a.rows()) throw Error(Errc::DimensionMismatch, "coefficient length does not match Delta");
  const Eigen::VectorXd out = corr.a.transpose() * b;
  return CoefficientVector::split(out, beta_star.beta_x.size());
}

Eigen::MatrixXd corrected_covariance(const CoefficientVector& beta_star, const Eigen::MatrixXd& sigma_beta_star,
                                     const CorrectionMatrix& corr, const CalibrationModel& calib) {
  calib.check();
  const Eigen::VectorXd b = beta_star.joined();
  const Eigen::Index w = calib.w(), p = calib.p();
  if (b.size() != w || sigma_beta_star.rows() != w || sigma_beta_star.cols() != w || corr.a.rows() != w) {
    throw Error(Errc::DimensionMismatch, "corrected covariance inputs disagree on dimension");
  }
  const Eigen::MatrixXd& a = corr.a;
  Eigen::MatrixXd out = a.transpose() * sigma_beta_star * a;
  const Eigen::MatrixXd& cov = calib.coef_covariance;

  for (Eigen::Index j1 = 0; j1 < w; ++j1) {
    for (Eigen::Index j2 = 0; j2 < w; ++j2) {
      double term = 0.0;
      for (Eigen::Index i1 = 0; i1 < w; ++i1) {
        for (Eigen::Index i2 = 0; i2 < w; ++i2) {
          double inner = 0.0;
          for (Eigen::Index r = 0; r < p; ++r) {
            for (Eigen::Index s = 0; s < w; ++s) {
              for (Eigen::Index t = 0; t < p; ++t) {
                for (Eigen::Index u = 0; u < w; ++u) {
                  inner += a(i1, r) * a(s, j1) * a(i2, t) * a(u, j2) *
                           cov(CalibrationModel::coef_index(r, s, w), CalibrationModel::coef_index(t, u, w));
                }
              }
            }
          }
          term += b(i1) * b(i2) * inner;
        }
      }
      out(j1, j2) += term;
    }
  }
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd calibrated_design(const Cohort& cohort, const CalibrationModel& calib) {
  calib.check();
  if (calib.p() != cohort.p() || calib.q() != cohort.q()) {
    throw Error(Errc::DimensionMismatch, "calibration does not match the cohort covariates");
  }
  Eigen::MatrixXd x = cohort.design();
  const Eigen::Index p = calib.p();
  const Eigen::MatrixXd xs = x.leftCols(p), z = x.rightCols(calib.q());
  x.leftCols(p) = (xs * calib.delta1.transpose() + z * calib.delta2.transpose()).rowwise() +
                  calib.delta0.transpose();
  return x;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& field, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw Error(Errc::Config, "calibration field '" + field + "' must have " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(Errc::Config, "calibration field '" + field + "' row " + std::to_string(r) + " must have " +
                                    std::to_string(cols) + " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) {
        throw Error(Errc::Config, "calibration field '" + field + "' has a non-numeric entry");
      }
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

}  // namespace

std::string calibration_to_json(const CalibrationModel& calib) {
  calib.check();
  json j;
  j["p"] = calib.p();
  j["q"] = calib.q();
  j["n_c"] = calib.n_c;
  j["delta0"] = std::vector<double>(calib.delta0.data(), calib.delta0.data() + calib.delta0.size());
  j["delta1"] = matrix_to_json(calib.delta1);
  j["delta2"] = matrix_to_json(calib.delta2);
  j["residual_covariance"] = matrix_to_json(calib.residual_covariance);
  j["coef_covariance_layout"] = "row-major over (response r, regressor s): index r*(p+q)+s";
  j["coef_covariance"] = matrix_to_json(calib.coef_covariance);
  return j.dump(2);
}

CalibrationModel calibration_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::Config, std::string("calibration file is not valid JSON: ") + e.what());
  }
  auto need = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw Error(Errc::Config, std::string("calibration field '") + key + "' is missing");
    return j.at(key);
  };
  const json& jp = need("p");
  const json& jq = need("q");
  if (!jp.is_number_integer() || !jq.is_number_integer() || jp.get<long>() < 1 || jq.get<long>() < 0) {
    throw Error(Errc::Config, "calibration fields 'p' and 'q' must be integers with p >= 1");
  }
  const Eigen::Index p = jp.get<Eigen::Index>(), q = jq.get<Eigen::Index>(), w = p + q;

  CalibrationModel calib;
  calib.n_c = j.value("n_c", std::size_t{0});
  calib.delta0 = matrix_from_json(json::array({need("delta0")}), "delta0", 1, p).row(0).transpose();
  calib.delta1 = matrix_from_json(need("delta1"), "delta1", p, p);
  calib.delta2 = q > 0 ? matrix_from_json(need("delta2"), "delta2", p, q) : Eigen::MatrixXd(p, 0);
  calib.residual_covariance = j.contains("residual_covariance")
                                  ? matrix_from_json(j["residual_covariance"], "residual_covariance", p, p)
                                  : Eigen::MatrixXd::Zero(p, p);
  calib.coef_covariance = matrix_from_json(need("coef_covariance"), "coef_covariance", p * w, p * w);
  calib.check();
  return calib;
}

void write_calibration(const CalibrationModel& calib, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << calibration_to_json(calib) << '\n';
  if (!out) throw Error(Errc::Io, "failed writing " + path);
}

CalibrationModel read_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return calibration_from_json(buf.str());
}

}  // namespace epsurv
