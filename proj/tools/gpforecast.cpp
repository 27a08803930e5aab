// Batch front end for the seasonal incidence forecaster: fit a model on a
// monthly (or weekly, auto-aggregated) series, predict a month range,
// cross-validate, and score prediction files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpforecast/data.hpp"
#include "gpforecast/eval.hpp"
#include "gpforecast/gp.hpp"
#include "gpforecast/model_io.hpp"
#include "gpforecast/optimizer.hpp"
#include "gpforecast/transform.hpp"
#include "gpforecast/version.hpp"

namespace gpf = gpforecast;
namespace fs = std::filesystem;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

constexpr const char* kPredictionHeader =
    "period,mean_transformed,lo95_transformed,hi95_transformed,"
    "mean_count,lo95_count,hi95_count";

std::vector<gpf::RawRecord> load_series(const std::string& path) {
  std::vector<gpf::RawRecord> records = gpf::load_csv(path);
  if (!records.empty() &&
      gpf::detect_resolution(records.front().period) ==
          gpf::Resolution::kWeekly) {
    records = gpf::aggregate_monthly(records);
  }
  return records;
}

// Full-series dataset for cross validation: t = 1..N, statistics over all
// rows (each fold re-standardizes from its own training rows).
gpf::Dataset make_full_dataset(const std::vector<gpf::RawRecord>& monthly) {
  gpf::Dataset d;
  d.covariate_stats = gpf::compute_covariate_stats(monthly, monthly.size());
  for (std::size_t i = 0; i < monthly.size(); ++i) {
    d.points.push_back(gpf::standardize_point(static_cast<double>(i + 1),
                                              monthly[i], d.covariate_stats));
    d.counts.push_back(monthly[i].incidence);
    d.periods.push_back(monthly[i].period);
  }
  return d;
}

void write_comment_block(std::ostream& out,
                         const std::vector<std::pair<std::string, std::string>>& kv) {
  out << "# tool_version=" << gpf::kVersion << "\n";
  for (const auto& [key, value] : kv) {
    out << "# " << key << "=" << value << "\n";
  }
}

std::string fmt(double v) { return gpf::detail::format_double(v); }

struct FitArgs {
  std::string data;
  std::string train_end;
  int restarts = 5;
  std::uint32_t seed = 0;
  std::string out;
};

int run_fit(const FitArgs& args) {
  std::string stage = "ingest";
  try {
    const auto monthly = load_series(args.data);

    stage = "split";
    gpf::Dataset train, test;
    try {
      std::tie(train, test) = gpf::build_dataset(monthly, args.train_end);
    } catch (const gpf::EmptySplit& e) {
      std::cerr << "gpforecast fit: train_end " << args.train_end
                << " does not split the data range: " << e.what() << "\n";
      return kExitConfig;
    }

    stage = "transform";
    auto [targets, state] = gpf::forward(train.counts_vector());

    stage = "optimize";
    const gpf::OptimResult opt =
        gpf::fit_hyperparams(train.points, targets, args.restarts, args.seed);

    stage = "fit";
    const gpf::TrainedModel model =
        gpf::fit(train.points, targets, opt.theta, state);

    stage = "write";
    gpf::ModelDocument doc = gpf::make_document(model);
    doc.meta["tool_version"] = gpf::kVersion;
    doc.meta["command"] = "fit";
    doc.meta["config"] = {{"data", args.data},
                          {"train_end", args.train_end},
                          {"restarts", args.restarts},
                          {"seed", args.seed}};
    doc.meta["first_period"] = train.periods.front();
    doc.meta["periods"] = train.periods;
    doc.meta["counts"] = train.counts;
    doc.meta["covariate_stats"] = {
        {"mean", train.covariate_stats.mean},
        {"std", train.covariate_stats.stdev}};
    doc.meta["optimizer"] = {{"final_nll", opt.final_nll},
                             {"iterations", opt.iterations},
                             {"converged", opt.converged},
                             {"restart_index", opt.restart_index}};
    gpf::save_model(args.out, doc);

    std::cout << "fit: " << train.size() << " training months ("
              << train.periods.front() << ".." << train.periods.back()
              << "), " << test.size() << " held out\n";
    std::cout << "final_nll=" << fmt(opt.final_nll)
              << " iterations=" << opt.iterations
              << " converged=" << (opt.converged ? "yes" : "no")
              << " restart_index=" << opt.restart_index << "\n";
    const auto naturals = opt.theta.naturals();
    for (std::size_t i = 0; i < gpf::HyperParams::kCount; ++i) {
      std::cout << "  " << gpf::kParamNames[i] << "=" << fmt(naturals[i])
                << "\n";
    }
    std::cout << "model written to " << args.out << "\n";
    return 0;
  } catch (const gpf::Error& e) {
    std::cerr << "gpforecast fit: " << stage << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

struct PredictArgs {
  std::string model;
  std::string data;
  std::string from;
  std::string to;
  std::string out;
};

int run_predict(const PredictArgs& args) {
  std::string stage = "load-model";
  try {
    const gpf::ModelDocument doc = gpf::load_model(args.model);
    if (!doc.meta.contains("covariate_stats") ||
        !doc.meta.contains("first_period")) {
      throw gpf::IoError("model document lacks dataset metadata");
    }
    gpf::CovariateStats stats;
    stats.mean = doc.meta["covariate_stats"]["mean"]
                     .get<std::array<double, 3>>();
    stats.stdev =
        doc.meta["covariate_stats"]["std"].get<std::array<double, 3>>();
    const gpf::MonthKey first =
        gpf::parse_month_label(doc.meta["first_period"].get<std::string>());

    stage = "range";
    const gpf::MonthKey from = gpf::parse_month_label(args.from);
    const gpf::MonthKey to = gpf::parse_month_label(args.to);
    if (to.serial() < from.serial()) {
      std::cerr << "gpforecast predict: empty prediction range " << args.from
                << ".." << args.to << "\n";
      return kExitConfig;
    }

    stage = "ingest";
    const auto monthly = load_series(args.data);
    std::map<int, const gpf::RawRecord*> by_serial;
    for (const auto& rec : monthly) {
      by_serial[gpf::parse_month_label(rec.period).serial()] = &rec;
    }

    stage = "covariates";
    std::vector<gpf::InputPoint> stars;
    std::vector<std::string> labels;
    for (int serial = from.serial(); serial <= to.serial(); ++serial) {
      auto it = by_serial.find(serial);
      if (it == by_serial.end()) {
        throw gpf::Error("no covariates for " +
                         gpf::month_label(gpf::month_from_serial(serial)));
      }
      const double t = static_cast<double>(serial - first.serial() + 1);
      stars.push_back(gpf::standardize_point(t, *it->second, stats));
      labels.push_back(it->second->period);
    }

    stage = "predict";
    const gpf::TrainedModel model = gpf::refit(doc);
    const gpf::Prediction pred = gpf::predict(model, stars);
    const gpf::TransformState state{doc.transform_center};
    const Eigen::VectorXd mean_c = gpf::inverse(pred.mean, state);
    const Eigen::VectorXd lo_c = gpf::inverse(pred.lower95, state);
    const Eigen::VectorXd hi_c = gpf::inverse(pred.upper95, state);

    stage = "write";
    std::ofstream out(args.out, std::ios::binary);
    if (!out) throw gpf::IoError("cannot open " + args.out);
    out << kPredictionHeader << "\n";
    for (Eigen::Index i = 0; i < pred.mean.size(); ++i) {
      out << labels[static_cast<std::size_t>(i)] << ',' << fmt(pred.mean[i])
          << ',' << fmt(pred.lower95[i]) << ',' << fmt(pred.upper95[i]) << ','
          << fmt(mean_c[i]) << ',' << fmt(lo_c[i]) << ',' << fmt(hi_c[i])
          << "\n";
    }
    write_comment_block(out, {{"command", "predict"},
                              {"model", args.model},
                              {"data", args.data},
                              {"from", args.from},
                              {"to", args.to}});
    std::cout << "predict: wrote " << pred.mean.size() << " rows to "
              << args.out;
    if (pred.clamped > 0) {
      std::cout << " (" << pred.clamped << " variance values clamped at 0)";
    }
    std::cout << "\n";
    return 0;
  } catch (const gpf::Error& e) {
    std::cerr << "gpforecast predict: " << stage << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

struct CvArgs {
  std::string data;
  int k = 10;
  int restarts = 5;
  std::uint32_t seed = 0;
  std::string out;
};

int run_cv(const CvArgs& args) {
  std::string stage = "ingest";
  try {
    const auto monthly = load_series(args.data);
    const gpf::Dataset dataset = make_full_dataset(monthly);

    stage = "cross-validate";
    gpf::PipelineConfig config;
    config.restarts = args.restarts;
    config.seed = args.seed;
    const gpf::CvReport report = gpf::blocked_kfold(dataset, args.k, config);

    stage = "write";
    fs::create_directories(args.out);
    nlohmann::ordered_json j = gpf::to_json(report);
    j["meta"] = {{"tool_version", gpf::kVersion},
                 {"command", "cv"},
                 {"config",
                  {{"data", args.data},
                   {"k", args.k},
                   {"restarts", args.restarts},
                   {"seed", args.seed}}}};
    const fs::path dir(args.out);
    {
      std::ofstream out(dir / "cv_report.json", std::ios::binary);
      if (!out) throw gpf::IoError("cannot open cv_report.json");
      out << j.dump(2) << "\n";
    }
    {
      std::ofstream out(dir / "cv_folds.csv", std::ios::binary);
      if (!out) throw gpf::IoError("cannot open cv_folds.csv");
      gpf::write_cv_csv(out, report);
      write_comment_block(out, {{"command", "cv"},
                                {"data", args.data},
                                {"k", std::to_string(args.k)},
                                {"seed", std::to_string(args.seed)}});
    }
    std::cout << "cv: k=" << report.k
              << " rmse_transformed mean=" << fmt(report.rmse_transformed.mean)
              << " std=" << fmt(report.rmse_transformed.stdev) << "\n";
    std::cout << "reports written to " << args.out << "\n";
    return 0;
  } catch (const gpf::Error& e) {
    std::cerr << "gpforecast cv: " << stage << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

struct EvalArgs {
  std::string pred;
  std::string actual;
};

struct SeriesValues {
  // period -> count-scale value
  std::map<std::string, double> counts;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gpf::IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

// Accepts either the prediction CSV (uses mean_count) or the series CSV
// (uses incidence).
SeriesValues read_values(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw gpf::ParseError("empty file " + path, 1);
  SeriesValues values;
  if (lines.front() == kPredictionHeader) {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto fields = gpf::detail::split_csv_line(lines[i]);
      if (fields.size() != 7) {
        throw gpf::ParseError("expected 7 fields in prediction row",
                              static_cast<long>(i + 1));
      }
      values.counts[fields[0]] = gpf::detail::parse_covariate(
          fields[4], "mean_count", static_cast<long>(i + 1));
    }
    return values;
  }
  if (lines.front() == gpf::kCsvHeader) {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto fields = gpf::detail::split_csv_line(lines[i]);
      if (fields.size() != 5) {
        throw gpf::ParseError("expected 5 fields in series row",
                              static_cast<long>(i + 1));
      }
      values.counts[fields[0]] = gpf::detail::parse_covariate(
          fields[1], "incidence", static_cast<long>(i + 1));
    }
    return values;
  }
  throw gpf::ParseError("unrecognized header in " + path, 1);
}

int run_eval(const EvalArgs& args) {
  std::string stage = "read";
  try {
    const SeriesValues pred = read_values(args.pred);
    const SeriesValues actual = read_values(args.actual);

    stage = "join";
    std::vector<double> p, a;
    for (const auto& [period, value] : pred.counts) {
      auto it = actual.counts.find(period);
      if (it == actual.counts.end()) {
        throw gpf::Error("period " + period + " missing from " + args.actual);
      }
      p.push_back(value);
      a.push_back(it->second);
    }
    if (p.empty()) throw gpf::Error("no overlapping periods");

    stage = "score";
    const Eigen::Index n = static_cast<Eigen::Index>(p.size());
    Eigen::VectorXd pc(n), ac(n), pt(n), at(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pc[i] = p[static_cast<std::size_t>(i)];
      ac[i] = a[static_cast<std::size_t>(i)];
      // The transform center cancels in differences, so log1p of the count
      // columns reproduces transformed-scale errors.
      pt[i] = std::log1p(pc[i]);
      at[i] = std::log1p(ac[i]);
    }
    std::cout << "n=" << n << "\n";
    std::cout << "rmse_transformed=" << fmt(gpf::rmse(pt, at)) << "\n";
    std::cout << "mad_transformed=" << fmt(gpf::mad(pt, at)) << "\n";
    std::cout << "rmse_counts=" << fmt(gpf::rmse(pc, ac)) << "\n";
    std::cout << "mad_counts=" << fmt(gpf::mad(pc, ac)) << "\n";
    return 0;
  } catch (const gpf::Error& e) {
    std::cerr << "gpforecast eval: " << stage << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seasonal epidemic incidence forecasting with an exact GP"};
  app.require_subcommand(1);
  app.set_config("--config", "", "plain-text key=value config file");
  app.set_version_flag("--version", std::string(gpf::kVersion));

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "fit a model on a training range");
  fit->add_option("--data", fit_args.data, "input series CSV")->required();
  fit->add_option("--train-end", fit_args.train_end,
                  "last training month, YYYY-MM")
      ->required();
  fit->add_option("--restarts", fit_args.restarts, "optimizer restarts")
      ->check(CLI::PositiveNumber);
  fit->add_option("--seed", fit_args.seed, "restart jitter seed");
  fit->add_option("--out", fit_args.out, "output model document path")
      ->required();

  PredictArgs predict_args;
  CLI::App* predict =
      app.add_subcommand("predict", "predict a month range from a model");
  predict->add_option("--model", predict_args.model, "model document")
      ->required();
  predict->add_option("--data", predict_args.data, "series CSV with covariates")
      ->required();
  predict->add_option("--from", predict_args.from, "first month, YYYY-MM")
      ->required();
  predict->add_option("--to", predict_args.to, "last month, YYYY-MM")
      ->required();
  predict->add_option("--out", predict_args.out, "output prediction CSV")
      ->required();

  CvArgs cv_args;
  CLI::App* cv = app.add_subcommand("cv", "blocked k-fold cross validation");
  cv->add_option("--data", cv_args.data, "input series CSV")->required();
  cv->add_option("--k", cv_args.k, "fold count");
  cv->add_option("--restarts", cv_args.restarts, "optimizer restarts")
      ->check(CLI::PositiveNumber);
  cv->add_option("--seed", cv_args.seed, "restart jitter seed");
  cv->add_option("--out", cv_args.out, "output report directory")->required();

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "score predictions against actuals");
  ev->add_option("--pred", eval_args.pred, "prediction CSV")->required();
  ev->add_option("--actual", eval_args.actual,
                 "actual series or prediction CSV")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (fit->parsed()) return run_fit(fit_args);
  if (predict->parsed()) return run_predict(predict_args);
  if (cv->parsed()) {
    if (cv_args.k < 2) {
      std::cerr << "gpforecast cv: k must be >= 2\n";
      return kExitConfig;
    }
    return run_cv(cv_args);
  }
  if (ev->parsed()) return run_eval(eval_args);
  return kExitConfig;
}
