#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Dense>

#include "ctdens/ctdens.hpp"

using namespace ctdens;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

namespace fs = std::filesystem;

//! Per-case scratch directory, removed on destruction.
struct Scratch {
  fs::path dir;

  explicit Scratch(const std::string& name)
    : dir(fs::temp_directory_path() / ("ctdens_io_" + name))
  {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }

  std::string file(const std::string& name) const { return (dir / name).string(); }
};

void write_file(const std::string& path, const std::string& content)
{
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::string read_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Eigen::MatrixXd two_lobes(int n, std::uint64_t seed)
{
  Rng rng(seed);
  Eigen::MatrixXd y(n, 2);
  for (int i = 0; i < n; ++i) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    y(i, 0) = sign * 2.5 + rng.normal();
    y(i, 1) = sign * 2.5 + rng.normal();
  }
  return y;
}

} // namespace

TEST_CASE("csv loading detects headers and reports error locations")
{
  const Scratch scratch("csv_load");

  const std::string with_header = scratch.file("a.csv");
  write_file(with_header, "x,y\r\n1.5,2\n-3e-2,4.25\n");
  const io::Dataset a = io::load_csv(with_header);
  REQUIRE(a.names == std::vector<std::string>{"x", "y"});
  REQUIRE(a.values.rows() == 2);
  CHECK(a.values(0, 0) == 1.5);
  CHECK(a.values(1, 0) == -3e-2);
  CHECK(a.values(1, 1) == 4.25);

  const std::string headerless = scratch.file("b.csv");
  write_file(headerless, "1,2\n3,4\n");
  CHECK(io::load_csv(headerless).names.empty());
  // Forcing a header consumes the first numeric row as names.
  const io::Dataset forced = io::load_csv(headerless, io::CsvHeader::yes);
  CHECK(forced.names == std::vector<std::string>{"1", "2"});
  CHECK(forced.values.rows() == 1);

  const std::string ragged = scratch.file("c.csv");
  write_file(ragged, "x,y\n1,2\n3,4,5\n");
  CHECK_THROWS_MATCHES(io::load_csv(ragged), data_error, Catch::Matchers::MessageMatches(ContainsSubstring("row 3")));

  const std::string alpha = scratch.file("d.csv");
  write_file(alpha, "x,y\n1,2\n3,oops\n");
  CHECK_THROWS_MATCHES(io::load_csv(alpha), data_error,
                       Catch::Matchers::MessageMatches(ContainsSubstring("row 3, column 2")));

  const std::string nonfinite = scratch.file("e.csv");
  write_file(nonfinite, "x\n1\nnan\n");
  CHECK_THROWS_MATCHES(io::load_csv(nonfinite), data_error,
                       Catch::Matchers::MessageMatches(ContainsSubstring("non-finite")));

  const std::string empty = scratch.file("f.csv");
  write_file(empty, "");
  CHECK_THROWS_MATCHES(io::load_csv(empty), data_error, Catch::Matchers::MessageMatches(ContainsSubstring("empty")));

  const std::string header_only = scratch.file("g.csv");
  write_file(header_only, "x,y\n");
  CHECK_THROWS_MATCHES(io::load_csv(header_only), data_error,
                       Catch::Matchers::MessageMatches(ContainsSubstring("no data rows")));

  CHECK_THROWS_MATCHES(io::load_csv(scratch.file("missing.csv")), data_error,
                       Catch::Matchers::MessageMatches(ContainsSubstring("cannot open")));
}

TEST_CASE("csv writing round trips bytes and exact values")
{
  const Scratch scratch("csv_write");
  Eigen::MatrixXd values(2, 3);
  values << 0.1, -1.0 / 3.0, 12345.678, 1e-300, 2.5, -0.0;

  const std::string text = io::to_csv({"a", "b", "c"}, values);
  const std::string path = scratch.file("t.csv");
  io::atomic_write(path, text);
  CHECK_FALSE(fs::exists(path + ".tmp"));

  const io::Dataset back = io::load_csv(path);
  REQUIRE(back.values.rows() == 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(back.values(i, j) == values(i, j));

  // Re-serializing the loaded data reproduces the file byte for byte.
  CHECK(io::to_csv(back.names, back.values) == text);

  // Overwrites replace the whole file.
  io::atomic_write(path, "x\n1\n");
  CHECK(read_file(path) == "x\n1\n");
}

TEST_CASE("model files round trip every estimator kind byte for byte")
{
  const Scratch scratch("model_json");
  Rng rng(40);
  std::vector<DensityEstimate> estimates;

  {
    vb::MixtureModel m;
    m.family = vb::Family::mt;
    m.dim = 2;
    m.weights = {0.3, 0.7};
    m.locations = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
    Eigen::MatrixXd s(2, 2);
    s << 1.0, 0.2, 0.2, 0.8;
    m.scales = {s, Eigen::MatrixXd::Identity(2, 2)};
    m.dof = {5, 31};
    m.standardization.shift = Eigen::VectorXd::Constant(2, 0.25);
    m.standardization.scale = Eigen::VectorXd::Constant(2, 1.5);
    estimates.push_back({EstimatorId::mt, m});
  }
  {
    // Factor family with one silenced component (zero columns).
    vb::MixtureModel m;
    m.family = vb::Family::mfa;
    m.dim = 3;
    m.weights = {0.6, 0.4};
    m.locations = {Eigen::VectorXd::Zero(3), Eigen::VectorXd::Constant(3, -1.0)};
    Eigen::MatrixXd lam(3, 2);
    lam << 0.9, 0.1, -0.4, 0.3, 0.2, -0.8;
    m.loadings = {lam, Eigen::MatrixXd(3, 0)};
    m.noise_precision = {2.0, 1.5};
    m.standardization = vb::Standardization::identity(3);
    estimates.push_back({EstimatorId::mfa, m});
  }
  {
    CopulaTypeModel m;
    m.family = vb::Family::mn;
    m.marginals = {MarginalModel::kernel(Eigen::VectorXd::LinSpaced(20, -2.0, 2.0)),
                   MarginalModel::student_t(0.1, 0.9, 7.0)};
    vb::MixtureModel joint;
    joint.family = vb::Family::mn;
    joint.dim = 2;
    joint.weights = {1.0};
    joint.locations = {Eigen::VectorXd::Zero(2)};
    Eigen::MatrixXd s(2, 2);
    s << 1.0, 0.4, 0.4, 1.0;
    joint.scales = {s};
    joint.standardization = vb::Standardization::identity(2);
    m.working = {MarginalModel::implied(joint, 0), MarginalModel::implied(joint, 1)};
    m.joint = joint;
    m.iterations = {{1, -312.5, 1}, {2, -311.75, 1}};
    estimates.push_back({EstimatorId::ct_mn, m});
  }
  {
    ParametricCopulaModel m;
    m.kind = CopulaKind::t;
    m.correlation = Eigen::MatrixXd::Identity(2, 2);
    m.correlation(0, 1) = m.correlation(1, 0) = -0.35;
    m.dof = 9;
    m.marginals = {MarginalModel::normal(0.0, 2.0), MarginalModel::normal(1.0, 0.5)};
    estimates.push_back({EstimatorId::tc, m});
  }

  for (const DensityEstimate& est : estimates) {
    const io::json j = io::estimate_to_json(est);
    const DensityEstimate back = io::estimate_from_json(j);
    CHECK(io::estimate_to_json(back).dump(2) == j.dump(2));
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd y(2 + (est.id == EstimatorId::mfa));
      for (int k = 0; k < y.size(); ++k)
        y[k] = 2.0 * rng.normal();
      CHECK(back.log_pdf(y) == est.log_pdf(y));
    }

    // File round trip, with the fit block carried verbatim.
    io::StoredModel stored;
    stored.estimate = est;
    stored.fit_info = {{"seed", 7}, {"note", "unit"}};
    const std::string p1 = scratch.file("m1.json");
    const std::string p2 = scratch.file("m2.json");
    io::save_model(p1, stored);
    const io::StoredModel loaded = io::load_model(p1);
    CHECK(loaded.fit_info == stored.fit_info);
    io::save_model(p2, loaded);
    CHECK(read_file(p1) == read_file(p2));
  }
}

TEST_CASE("model files reject malformed input with clear errors")
{
  const Scratch scratch("model_bad");

  DensityEstimate est;
  vb::MixtureModel m;
  m.family = vb::Family::mn;
  m.dim = 1;
  m.weights = {1.0};
  m.locations = {Eigen::VectorXd::Zero(1)};
  m.scales = {Eigen::MatrixXd::Identity(1, 1)};
  m.standardization = vb::Standardization::identity(1);
  est.model = m;
  est.id = EstimatorId::mn;

  io::json good = io::estimate_to_json(est);

  io::json wrong_version = good;
  wrong_version["schema_version"] = 2;
  CHECK_THROWS_MATCHES(io::estimate_from_json(wrong_version), data_error,
                       Catch::Matchers::MessageMatches(ContainsSubstring("schema_version")));

  io::json wrong_type = good;
  wrong_type["model"]["type"] = "spline";
  CHECK_THROWS_MATCHES(io::estimate_from_json(wrong_type), data_error,
                       Catch::Matchers::MessageMatches(ContainsSubstring("unknown model type")));

  const std::string full = good.dump(2);
  const std::string truncated_path = scratch.file("trunc.json");
  write_file(truncated_path, full.substr(0, full.size() / 2));
  CHECK_THROWS_MATCHES(io::load_model(truncated_path), data_error,
                       Catch::Matchers::MessageMatches(ContainsSubstring("not valid JSON")));

  CHECK_THROWS_MATCHES(io::load_model(scratch.file("absent.json")), data_error,
                       Catch::Matchers::MessageMatches(ContainsSubstring("cannot open")));
}

TEST_CASE("persisted fits rescore their recorded training likelihood")
{
  const Scratch scratch("rescore");
  const Eigen::MatrixXd y = two_lobes(250, 61);
  const MarginalPlan plan = MarginalPlan::from_models(
      {MarginalModel::mixture(MarginalKind::univ_mix_normal, {0.5, 0.5}, {-2.5, 2.5}, {1.0, 1.0}, {}),
       MarginalModel::mixture(MarginalKind::univ_mix_normal, {0.5, 0.5}, {-2.5, 2.5}, {1.0, 1.0}, {})});
  CtOptions opts;
  opts.vb_opts.seed = 13;
  const DensityEstimate est = fit_estimator(y, EstimatorId::ct_mn, plan, opts);
  const auto& ct = std::get<CopulaTypeModel>(est.model);
  double best = -std::numeric_limits<double>::infinity();
  for (const IterationRecord& rec : ct.iterations)
    best = std::max(best, rec.loglik);

  const std::string path = scratch.file("fit.json");
  io::save_model(path, {est, {}});
  const io::StoredModel loaded = io::load_model(path);

  double rescored = 0.0;
  for (int i = 0; i < y.rows(); ++i)
    rescored += loaded.estimate.log_pdf(y.row(i).transpose());
  CHECK_THAT(rescored, WithinRel(best, 1e-8));
}
