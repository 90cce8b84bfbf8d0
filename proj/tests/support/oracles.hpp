#pragma once

// Independent reference computations for the test suites and the acceptance
// binary. Nothing here calls the analytic Jacobians it is meant to check.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "cnav/dataset.hpp"
#include "cnav/fusion_filter.hpp"
#include "cnav/ins_mech.hpp"
#include "cnav/msckf_vision.hpp"

namespace cnav::oracle {

// WGS-84 forward conversion of (0.5340 rad, 1.9897 rad, 50 m), evaluated with
// 40-digit arithmetic (mpmath) outside this code base.
inline constexpr double kRefEcefX = -2235129.4753155907321;
inline constexpr double kRefEcefY = 5019849.9401996853539;
inline constexpr double kRefEcefZ = 3227440.4199479654445;
// b = a (1 - f), same arithmetic.
inline constexpr double kRefSemiMinor = 6356752.3142451794976;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double a, double b);
Vec3 random_vec(Rng& rng, double scale);
Attitude random_attitude(Rng& rng);
InsState random_ins_state(Rng& rng);
ImuSample random_imu(Rng& rng, double time = 0.0);
Eigen::MatrixXd random_spd(Rng& rng, Eigen::Index n, double scale = 1.0);

/// Matrix exponential by Pade scaling and squaring (Eigen MatrixFunctions).
Eigen::MatrixXd expm(const Eigen::MatrixXd& a);

/// Rotation vector of a rotation matrix close to identity (SO(3) log).
Vec3 log_so3(const Mat3& r);

/// Central difference of the continuous-time error-state derivative of the
/// nominal kinematics, perturbing [dp dv dtheta dba dbg] one at a time with a
/// right-multiplied attitude error.
Mat15 fd_error_dynamics(const InsState& state, const ImuSample& sample, double eps = 1e-6);

/// Central difference of the clone pose error [dtheta_c dp_c] w.r.t. INS error.
Eigen::Matrix<double, 6, kInsErrorDim> fd_clone_jacobian(const InsState& ins, const ExtrinsicSet& extr,
                                                         double eps = 1e-6);

struct FdReprojection {
  Eigen::MatrixXd h_cam;      // 4n x 6n, per clone [dtheta dp]
  Eigen::MatrixXd h_feature;  // 4n x 3
};

/// Central differences of the predicted stereo measurements. With the error
/// defined as true minus estimate, z - h(x) ~ H dx, so these compare directly.
FdReprojection fd_reprojection(const Vec3& feature, const std::vector<CameraClone>& clones, const ExtrinsicSet& extr,
                               double eps = 1e-6);

struct LinearUpdate {
  Eigen::VectorXd dx;
  Eigen::MatrixXd P;
};

/// Update with the feature error appended as an unconstrained state, then
/// marginalized, in information form:
///   r = H_x dx + H_f df + n,  n ~ N(0, sigma^2 I),  df without prior.
LinearUpdate augment_then_marginalize(const Eigen::MatrixXd& P, const Eigen::MatrixXd& h_x,
                                      const Eigen::MatrixXd& h_f, const Eigen::VectorXd& r, double sigma);

/// Plain dense Kalman update in covariance form, P - K H P.
LinearUpdate dense_update(const Eigen::MatrixXd& P, const Eigen::MatrixXd& H, const Eigen::MatrixXd& R,
                          const Eigen::VectorXd& r);

/// Largest |relative error| of a against b, relative to max(|b|_inf, floor).
double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-12);

/// goGPS-form variance written out term by term with std::pow, independent of
/// the library's snr_multiplier.
double gogps_variance_by_hand(double elevation, double snr, double sigma);

/// Clones along a short forward path looking at one feature ahead.
struct StereoScene {
  ExtrinsicSet extr;
  std::vector<CameraClone> clones;
  Vec3 feature;
  FeatureTrack track;
};
StereoScene random_stereo_scene(Rng& rng, int n);

/// Random small MSCKF instance: filter with `n` clones and one feature residual.
struct MsckfInstance {
  FilterState st;
  FeatureResidual res;
};
MsckfInstance random_msckf_instance(Rng& rng, int n, int rows_per_clone = 4);

/// Null-space update of `in` compared with augment_then_marginalize; returns the
/// largest deviation over covariance, INS pose and clone positions.
double msckf_equivalence_error(MsckfInstance in, double sigma);

struct LabelTally {
  std::size_t in_dome = 0;
  std::size_t agree = 0;
  std::size_t no_mask = 0;  // labels whose epoch has no mask at the same time
};

/// Classifies every generator truth label against the mask stamped at the same
/// epoch, using the truth heading, and counts agreement.
LabelTally tally_labels(const Dataset& ds, const FisheyeModel& model);

/// Every regular file under `dir`, keyed by relative path, with its bytes.
std::map<std::string, std::string> read_tree(const std::filesystem::path& dir);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace cnav::oracle
