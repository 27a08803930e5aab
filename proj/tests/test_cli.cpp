#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gpforecast/data.hpp"
#include "gpforecast/eval.hpp"
#include "gpforecast/model_io.hpp"
#include "support/synthetic.hpp"

using namespace gpforecast;
namespace fs = std::filesystem;

namespace {

const std::string kCli = GPFORECAST_CLI_PATH;
const fs::path kFixtureDir = GPFORECAST_FIXTURE_DIR;

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gpf_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& dir) {
  const std::string cmd = kCli + " " + args + " > " + (dir / "out.txt").string() +
                          " 2> " + (dir / "err.txt").string();
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Noise-free integer series: an exactly 12-periodic count cycle, so the
// fitted model lands in the near-interpolating regime.
std::vector<RawRecord> periodic_records(int n_months) {
  static constexpr long long kCycle[12] = {100, 130, 170, 210, 240, 250,
                                           230, 190, 150, 120, 105, 100};
  std::vector<RawRecord> records;
  for (int i = 0; i < n_months; ++i) {
    const int year = 2010 + i / 12;
    const int month = 1 + i % 12;
    const double phase = 2.0 * 3.14159265358979 * (i % 12) / 12.0;
    records.push_back(RawRecord{month_label(MonthKey{year, month}),
                                kCycle[i % 12], 150.0 + 60.0 * std::sin(phase),
                                75.0 + 6.0 * std::cos(phase),
                                26.0 + 2.0 * std::sin(phase + 0.4)});
  }
  return records;
}

const std::string kFixtureCsv = (kFixtureDir / "synthetic_monthly.csv").string();

}  // namespace

TEST_CASE("fit runs the happy path and the model reloads") {
  const fs::path dir = work_dir("fit_happy");
  const std::string model = (dir / "model.json").string();
  const int code = run("fit --data " + kFixtureCsv +
                           " --train-end 2018-12 --restarts 1 --seed 0 --out " +
                           model,
                       dir);
  INFO(slurp(dir / "err.txt"));
  REQUIRE(code == 0);
  REQUIRE(fs::exists(model));
  const ModelDocument doc = load_model(model);
  CHECK(doc.points.size() == 108);
  CHECK(doc.meta["first_period"] == "2010-01");
  CHECK_NOTHROW(refit(doc));
}

TEST_CASE("fit rejects a train_end outside the data range") {
  const fs::path dir = work_dir("fit_range");
  const int code = run("fit --data " + kFixtureCsv +
                           " --train-end 2031-01 --restarts 1 --out " +
                           (dir / "model.json").string(),
                       dir);
  CHECK(code == 2);
  CHECK(slurp(dir / "err.txt").find("train_end") != std::string::npos);
}

TEST_CASE("fit rejects missing required flags") {
  const fs::path dir = work_dir("fit_flags");
  CHECK(run("fit --data " + kFixtureCsv, dir) == 2);
}

TEST_CASE("repeated seeded fits produce byte-identical model documents") {
  const fs::path dir = work_dir("fit_determinism");
  const std::string m1 = (dir / "m1.json").string();
  const std::string m2 = (dir / "m2.json").string();
  const std::string args = "fit --data " + kFixtureCsv +
                           " --train-end 2018-12 --restarts 2 --seed 7 --out ";
  REQUIRE(run(args + m1, dir) == 0);
  REQUIRE(run(args + m2, dir) == 0);
  CHECK(slurp(m1) == slurp(m2));
  CHECK(!slurp(m1).empty());
}

TEST_CASE("predict on training periods tracks counts on a noise-free series") {
  const fs::path dir = work_dir("predict_train");
  const std::string data = (dir / "periodic.csv").string();
  write_csv(data, periodic_records(72));

  const std::string model = (dir / "model.json").string();
  REQUIRE(run("fit --data " + data +
                  " --train-end 2014-12 --restarts 1 --seed 0 --out " + model,
              dir) == 0);

  const std::string pred = (dir / "pred.csv").string();
  REQUIRE(run("predict --model " + model + " --data " + data +
                  " --from 2010-01 --to 2014-12 --out " + pred,
              dir) == 0);

  const auto records = periodic_records(72);
  std::ifstream in(pred);
  std::string line;
  std::getline(in, line);
  REQUIRE(line ==
          "period,mean_transformed,lo95_transformed,hi95_transformed,"
          "mean_count,lo95_count,hi95_count");
  int row = 0;
  while (std::getline(in, line) && line[0] != '#') {
    const auto fields = detail::split_csv_line(line);
    REQUIRE(fields.size() == 7);
    CHECK(fields[0] == records[static_cast<std::size_t>(row)].period);
    const double mean_count = std::stod(fields[4]);
    CHECK(std::abs(mean_count -
                   static_cast<double>(
                       records[static_cast<std::size_t>(row)].incidence)) < 0.5);
    ++row;
  }
  CHECK(row == 60);
}

TEST_CASE("predict rejects an empty range and missing covariates") {
  const fs::path dir = work_dir("predict_bad");
  const std::string data = (dir / "periodic.csv").string();
  write_csv(data, periodic_records(40));
  const std::string model = (dir / "model.json").string();
  REQUIRE(run("fit --data " + data +
                  " --train-end 2012-04 --restarts 1 --seed 0 --out " + model,
              dir) == 0);

  CHECK(run("predict --model " + model + " --data " + data +
                " --from 2013-05 --to 2013-01 --out " + (dir / "p.csv").string(),
            dir) == 2);
  // beyond the covariate range
  CHECK(run("predict --model " + model + " --data " + data +
                " --from 2013-04 --to 2013-08 --out " + (dir / "p.csv").string(),
            dir) == 1);
}

TEST_CASE("predict output matches the library path bit for bit") {
  const fs::path dir = work_dir("predict_equiv");
  const std::string data = (dir / "periodic.csv").string();
  const auto records = periodic_records(48);
  write_csv(data, records);
  const std::string model = (dir / "model.json").string();
  REQUIRE(run("fit --data " + data +
                  " --train-end 2012-12 --restarts 1 --seed 0 --out " + model,
              dir) == 0);
  const std::string pred = (dir / "pred.csv").string();
  REQUIRE(run("predict --model " + model + " --data " + data +
                  " --from 2013-01 --to 2013-12 --out " + pred,
              dir) == 0);

  // library-side reproduction
  const ModelDocument doc = load_model(model);
  CovariateStats stats;
  stats.mean = doc.meta["covariate_stats"]["mean"].get<std::array<double, 3>>();
  stats.stdev = doc.meta["covariate_stats"]["std"].get<std::array<double, 3>>();
  const MonthKey first =
      parse_month_label(doc.meta["first_period"].get<std::string>());
  std::vector<InputPoint> stars;
  std::vector<std::string> labels;
  for (std::size_t i = 36; i < 48; ++i) {
    const MonthKey key = parse_month_label(records[i].period);
    stars.push_back(standardize_point(
        static_cast<double>(key.serial() - first.serial() + 1), records[i],
        stats));
    labels.push_back(records[i].period);
  }
  const TrainedModel m = refit(doc);
  const Prediction p = predict(m, stars);
  const TransformState state{doc.transform_center};
  const Eigen::VectorXd mean_c = inverse(p.mean, state);
  const Eigen::VectorXd lo_c = inverse(p.lower95, state);
  const Eigen::VectorXd hi_c = inverse(p.upper95, state);

  std::ostringstream expected;
  for (Eigen::Index i = 0; i < 12; ++i) {
    expected << labels[static_cast<std::size_t>(i)] << ','
             << detail::format_double(p.mean[i]) << ','
             << detail::format_double(p.lower95[i]) << ','
             << detail::format_double(p.upper95[i]) << ','
             << detail::format_double(mean_c[i]) << ','
             << detail::format_double(lo_c[i]) << ','
             << detail::format_double(hi_c[i]) << "\n";
  }

  std::istringstream got(slurp(pred));
  std::string line;
  std::getline(got, line);  // header
  std::ostringstream data_rows;
  while (std::getline(got, line)) {
    if (!line.empty() && line[0] == '#') break;
    data_rows << line << "\n";
  }
  CHECK(data_rows.str() == expected.str());
}

TEST_CASE("weekly input is aggregated before fitting") {
  const fs::path dir = work_dir("weekly");
  // 120 contiguous ISO weeks starting 2015-W01
  std::vector<RawRecord> weekly;
  for (int w = 0; w < 120; ++w) {
    const int year = 2015 + (w >= 53 ? 1 + (w - 53) / 52 : 0);
    const int week = w < 53 ? w + 1 : (w - 53) % 52 + 1;  // 2015 has 53 weeks
    char label[16];
    std::snprintf(label, sizeof(label), "%04d-W%02d", year, week);
    const double phase = 2.0 * 3.14159265358979 * (w % 52) / 52.0;
    weekly.push_back(RawRecord{label, 40 + static_cast<long long>(20.0 * (1 + std::sin(phase))),
                               30.0 + 10.0 * std::sin(phase), 75.0, 26.0});
  }
  const std::string data = (dir / "weekly.csv").string();
  write_csv(data, weekly);

  const std::string model = (dir / "model.json").string();
  const int code = run("fit --data " + data +
                           " --train-end 2016-10 --restarts 1 --seed 0 --out " +
                           model,
                       dir);
  INFO(slurp(dir / "err.txt"));
  REQUIRE(code == 0);
  const ModelDocument doc = load_model(model);
  CHECK(doc.meta["first_period"] == "2015-01");
}

TEST_CASE("cv writes one row per fold and validates k") {
  const fs::path dir = work_dir("cv");
  const std::string out = (dir / "report").string();
  REQUIRE(run("cv --data " + kFixtureCsv + " --k 10 --restarts 1 --seed 0 --out " +
                  out,
              dir) == 0);
  REQUIRE(fs::exists(fs::path(out) / "cv_folds.csv"));
  REQUIRE(fs::exists(fs::path(out) / "cv_report.json"));

  std::istringstream csv(slurp(fs::path(out) / "cv_folds.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "fold,n,rmse_transformed,mad_transformed,rmse_counts,mad_counts");
  int rows = 0;
  while (std::getline(csv, line)) {
    if (!line.empty() && line[0] == '#') continue;
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 10);

  CHECK(run("cv --data " + kFixtureCsv + " --k 1 --out " + out, dir) == 2);
}

TEST_CASE("repeated seeded cv runs are byte-identical") {
  const fs::path dir = work_dir("cv_determinism");
  const std::string data = (dir / "small.csv").string();
  write_csv(data, testsupport::seasonal_monthly_records(24, 3));
  const std::string args =
      "cv --data " + data + " --k 3 --restarts 2 --seed 5 --out ";
  REQUIRE(run(args + (dir / "r1").string(), dir) == 0);
  REQUIRE(run(args + (dir / "r2").string(), dir) == 0);
  CHECK(slurp(dir / "r1" / "cv_report.json") == slurp(dir / "r2" / "cv_report.json"));
  CHECK(slurp(dir / "r1" / "cv_folds.csv") == slurp(dir / "r2" / "cv_folds.csv"));
  CHECK(!slurp(dir / "r1" / "cv_report.json").empty());
}

TEST_CASE("eval scores a prediction file against itself as zero") {
  const fs::path dir = work_dir("eval_self");
  const std::string data = (dir / "periodic.csv").string();
  write_csv(data, periodic_records(40));
  const std::string model = (dir / "model.json").string();
  REQUIRE(run("fit --data " + data +
                  " --train-end 2012-04 --restarts 1 --seed 0 --out " + model,
              dir) == 0);
  const std::string pred = (dir / "pred.csv").string();
  REQUIRE(run("predict --model " + model + " --data " + data +
                  " --from 2012-05 --to 2013-04 --out " + pred,
              dir) == 0);

  REQUIRE(run("eval --pred " + pred + " --actual " + pred, dir) == 0);
  const std::string out = slurp(dir / "out.txt");
  CHECK(out.find("rmse_transformed=0\n") != std::string::npos);
  CHECK(out.find("mad_counts=0\n") != std::string::npos);

  // against the actual series file: finite nonzero errors
  REQUIRE(run("eval --pred " + pred + " --actual " + data, dir) == 0);
}

TEST_CASE("eval fails cleanly on disjoint periods") {
  const fs::path dir = work_dir("eval_disjoint");
  const std::string a = (dir / "a.csv").string();
  const std::string b = (dir / "b.csv").string();
  write_csv(a, periodic_records(12));
  auto other = periodic_records(24);
  other.erase(other.begin(), other.begin() + 12);
  write_csv(b, other);

  // synthesize a tiny prediction file over the first series' periods
  const std::string pred = (dir / "pred.csv").string();
  {
    std::ofstream out(pred);
    out << "period,mean_transformed,lo95_transformed,hi95_transformed,"
           "mean_count,lo95_count,hi95_count\n";
    out << "2010-01,0,0,0,100,90,110\n";
  }
  CHECK(run("eval --pred " + pred + " --actual " + a, dir) == 0);
  CHECK(run("eval --pred " + pred + " --actual " + b, dir) == 1);
}
