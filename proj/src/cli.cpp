#include "varmod/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "varmod/baseline.hpp"
#include "varmod/csv.hpp"
#include "varmod/diagnostics.hpp"
#include "varmod/errors.hpp"
#include "varmod/inference.hpp"
#include "varmod/model.hpp"
#include "varmod/sampler.hpp"
#include "varmod/simulation.hpp"

namespace varmod::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// JSON has no infinities; degenerate diagnostics saturate instead.
double json_num(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? 1e308 : -1e308;
}

// ---------------------------------------------------------------------------
// plot data and rendering helpers

struct Histogram {
  std::vector<double> bin_low, bin_high;
  std::vector<long> count;
};

Histogram histogram(const std::vector<double>& values, int bins = 30) {
  Histogram h;
  if (values.empty()) return h;
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  if (hi <= lo) hi = lo + 1e-9;
  const double width = (hi - lo) / bins;
  h.bin_low.resize(static_cast<std::size_t>(bins));
  h.bin_high.resize(static_cast<std::size_t>(bins));
  h.count.assign(static_cast<std::size_t>(bins), 0);
  for (int b = 0; b < bins; ++b) {
    h.bin_low[static_cast<std::size_t>(b)] = lo + b * width;
    h.bin_high[static_cast<std::size_t>(b)] = lo + (b + 1) * width;
  }
  for (double v : values) {
    int b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    ++h.count[static_cast<std::size_t>(b)];
  }
  return h;
}

void write_histogram_csv(const std::string& path, const Histogram& h) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t b = 0; b < h.count.size(); ++b)
    rows.push_back({fmt17(h.bin_low[b]), fmt17(h.bin_high[b]), std::to_string(h.count[b])});
  write_csv(path, {"bin_low", "bin_high", "count"}, rows);
}

void write_histogram_svg(const std::string& path, const Histogram& h,
                         const std::string& title) {
  const double w = 640, hgt = 400, margin = 50;
  std::ofstream out(path);
  if (!out) fail("io", "cannot write " + path);
  long max_count = 1;
  for (long c : h.count) max_count = std::max(max_count, c);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << hgt
      << "'>\n<text x='" << w / 2 << "' y='20' text-anchor='middle'>" << title
      << "</text>\n";
  const double plot_w = w - 2 * margin, plot_h = hgt - 2 * margin;
  for (std::size_t b = 0; b < h.count.size(); ++b) {
    const double x = margin + plot_w * static_cast<double>(b) / h.count.size();
    const double bar_w = plot_w / h.count.size();
    const double bar_h = plot_h * static_cast<double>(h.count[b]) / static_cast<double>(max_count);
    out << "<rect x='" << x << "' y='" << hgt - margin - bar_h << "' width='" << bar_w * 0.92
        << "' height='" << bar_h << "' fill='steelblue'/>\n";
  }
  if (!h.bin_low.empty()) {
    out << "<text x='" << margin << "' y='" << hgt - margin + 20 << "'>"
        << fmt17(h.bin_low.front()) << "</text>\n<text x='" << w - margin << "' y='"
        << hgt - margin + 20 << "' text-anchor='end'>" << fmt17(h.bin_high.back())
        << "</text>\n";
  }
  out << "</svg>\n";
}

void write_dotplot_svg(const std::string& path,
                       const std::vector<std::string>& labels,
                       const std::vector<double>& median,
                       const std::vector<double>& lo,
                       const std::vector<double>& hi, const std::string& title) {
  const double w = 640, margin = 50;
  const double row_h = 10.0;
  const double hgt = 2 * margin + row_h * static_cast<double>(labels.size());
  std::ofstream out(path);
  if (!out) fail("io", "cannot write " + path);
  double vmin = *std::min_element(lo.begin(), lo.end());
  double vmax = *std::max_element(hi.begin(), hi.end());
  if (vmax <= vmin) vmax = vmin + 1e-9;
  auto sx = [&](double v) { return margin + (w - 2 * margin) * (v - vmin) / (vmax - vmin); };
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << hgt
      << "'>\n<text x='" << w / 2 << "' y='20' text-anchor='middle'>" << title
      << "</text>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = margin + row_h * (static_cast<double>(i) + 0.5);
    out << "<line x1='" << sx(lo[i]) << "' x2='" << sx(hi[i]) << "' y1='" << y
        << "' y2='" << y << "' stroke='gray'/>\n<circle cx='" << sx(median[i])
        << "' cy='" << y << "' r='2.2' fill='black'/>\n";
  }
  out << "</svg>\n";
}

void write_scatter_svg(const std::string& path, const std::vector<double>& x,
                       const std::vector<double>& y, const std::string& title) {
  const double w = 480, hgt = 480, margin = 50;
  std::ofstream out(path);
  if (!out) fail("io", "cannot write " + path);
  double xmin = *std::min_element(x.begin(), x.end());
  double xmax = *std::max_element(x.begin(), x.end());
  double ymin = *std::min_element(y.begin(), y.end());
  double ymax = *std::max_element(y.begin(), y.end());
  if (xmax <= xmin) xmax = xmin + 1e-9;
  if (ymax <= ymin) ymax = ymin + 1e-9;
  auto sx = [&](double v) { return margin + (w - 2 * margin) * (v - xmin) / (xmax - xmin); };
  auto sy = [&](double v) { return hgt - margin - (hgt - 2 * margin) * (v - ymin) / (ymax - ymin); };
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << hgt
      << "'>\n<text x='" << w / 2 << "' y='20' text-anchor='middle'>" << title
      << "</text>\n";
  for (std::size_t i = 0; i < x.size(); ++i)
    out << "<circle cx='" << sx(x[i]) << "' cy='" << sy(y[i])
        << "' r='1.4' fill='steelblue' fill-opacity='0.35'/>\n";
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// shared fit machinery

struct FitOptions {
  std::string within_csv;
  std::string between_csv;
  std::string out_dir;
  int chains = 4;
  int warmup = 1000;
  long iter = 16000;  // total post-warmup iterations across chains, pre-thinning
  int thin = 2;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  std::string focal = "Yalpha_1";
  bool use_latent_mean = true;
  bool emit_draws = false;
  bool render_plots = false;
  int threads = 0;
  std::string mediator_column;
  std::string design = "v2y";
};

std::string human_label(const std::string& name, const IngestResult& data,
                        bool mediation) {
  const auto& wn = data.within_covariate_names;
  const auto& bn = data.between_covariate_names;
  if (name == "VB_1") return "V intercept";
  if (name.rfind("VB_", 0) == 0) {
    const std::size_t i = std::stoul(name.substr(3)) - 2;
    return i < wn.size() ? "V on " + wn[i] : name;
  }
  if (name == "sigma_U") return "between-person SD of latent means";
  if (name == "shape") return "gamma shape of latent SDs";
  if (name == "rate") return "gamma rate of latent SDs";
  if (name == "YB_1") return "Y intercept";
  if (name.rfind("YB_", 0) == 0) {
    std::size_t i = std::stoul(name.substr(3)) - 2;
    if (mediation) {
      if (i == 0) return "Y on " + data.mediator_name;
      --i;
    }
    return i < bn.size() ? "Y on " + bn[i] : name;
  }
  if (name == "Yalpha_1") return "Y on latent SD";
  if (name == "Yalpha_2") return "Y on latent mean";
  if (name == "sigma_Y") return "Y residual SD";
  if (name == "MB_1") return data.mediator_name + " intercept";
  if (name.rfind("MB_", 0) == 0) {
    const std::size_t i = std::stoul(name.substr(3)) - 2;
    return i < bn.size() ? data.mediator_name + " on " + bn[i] : name;
  }
  if (name == "Malpha_1") return data.mediator_name + " on latent SD";
  if (name == "Malpha_2") return data.mediator_name + " on latent mean";
  if (name == "sigma_M") return data.mediator_name + " residual SD";
  if (name.rfind("Est_U_", 0) == 0) return "latent mean, subject " + name.substr(6);
  if (name.rfind("Est_Sigma_", 0) == 0) return "latent SD, subject " + name.substr(10);
  return name;
}

int fit_pipeline(const FitOptions& opt) {
  const bool mediation = opt.design == "v2m2y";
  const IngestResult data =
      ingest(opt.within_csv, opt.between_csv, mediation, opt.mediator_column);

  Design design{mediation ? DesignKind::VtoMtoY : DesignKind::VtoY,
                opt.use_latent_mean};
  const VariabilityModel model(data.repeated, data.between, design);
  const ParamLayout& layout = model.layout();

  ChainConfig cc;
  cc.chains = opt.chains;
  cc.warmup = opt.warmup;
  cc.total_post_warmup = opt.iter;
  cc.thin = opt.thin;
  cc.seed = opt.seed;
  cc.threads = opt.threads;
  cc.validate();

  std::vector<std::vector<double>> inits;
  for (int c = 0; c < cc.chains; ++c) {
    Rng init_rng = Rng::stream(opt.seed, {0x11, static_cast<std::uint64_t>(c)});
    inits.push_back(layout.unconstrain(model.initialize(init_rng)));
  }

  const PosteriorDraws draws = run_chains(
      [&model](std::span<const double> z, std::span<double> g) {
        return model.log_posterior_grad(z, g);
      },
      layout.size(), cc, inits, layout.names(),
      [&layout](std::span<const double> z, std::span<double> out) {
        layout.constrain(z, out);
      });

  const DiagnosticsReport report = convergence_report(draws, opt.focal);

  fs::create_directories(opt.out_dir);
  const std::string dir = opt.out_dir + "/";

  // Parameter summaries (the summary is derived from exactly the draws that
  // draws.csv stores, so every number is re-derivable).
  json params = json::array();
  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    const auto pooled = draws.pooled(p);
    ParameterSummary s = summarize(pooled, opt.ci_level, draws.names[p]);
    json row{{"name", s.name},
             {"label", human_label(s.name, data, mediation)},
             {"mean", s.mean},
             {"median", s.median},
             {"sd", s.sd},
             {"ci_low", s.ci_low},
             {"ci_high", s.ci_high},
             {"p_value", s.p_value},
             {"p_is_bound", s.p_is_bound},
             {"rhat", json_num(report.rhat[p])},
             {"ess", json_num(report.ess[p])}};
    params.push_back(std::move(row));
  }

  json indirect = json::array();
  if (mediation) {
    const auto b_draws = draws.pooled(draws.param_index("YB_2"));
    auto add_indirect = [&](const std::string& a_name, const std::string& path_label) {
      const auto a_draws = draws.pooled(draws.param_index(a_name));
      ParameterSummary s = indirect_effect(a_draws, b_draws, opt.ci_level, path_label);
      indirect.push_back(json{{"name", s.name},
                              {"a_path", a_name},
                              {"b_path", "YB_2"},
                              {"mean", s.mean},
                              {"median", s.median},
                              {"sd", s.sd},
                              {"ci_low", s.ci_low},
                              {"ci_high", s.ci_high},
                              {"p_value", s.p_value},
                              {"p_is_bound", s.p_is_bound}});
    };
    add_indirect("Malpha_1", "latent SD -> " + data.mediator_name + " -> Y");
    if (design.use_latent_mean)
      add_indirect("Malpha_2", "latent mean -> " + data.mediator_name + " -> Y");
  }

  json summary{{"model", "variability"},
               {"design", opt.design},
               {"converged", report.converged},
               {"n_subjects", data.repeated.n_subjects()},
               {"n_observations", data.repeated.n_obs()},
               {"parameters", params},
               {"diagnostics",
                json{{"max_rhat", json_num(report.max_rhat)},
                     {"min_ess", json_num(report.min_ess)},
                     {"focal", report.focal},
                     {"focal_ess", report.focal_ess},
                     {"focal_ess_ok", report.focal_ess_ok},
                     {"divergences", draws.divergence_count}}}};
  if (mediation) summary["indirect_effects"] = indirect;
  {
    std::ofstream out(dir + "summary.json");
    if (!out) fail("io", "cannot write " + dir + "summary.json");
    out << summary.dump(2) << "\n";
  }

  {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t p = 0; p < draws.n_params(); ++p)
      rows.push_back({draws.names[p], fmt17(report.rhat[p]), fmt17(report.ess[p])});
    write_csv(dir + "diagnostics.csv", {"name", "rhat", "ess"}, rows);
  }

  if (opt.emit_draws) {
    std::vector<std::string> header{"chain", "iteration"};
    header.insert(header.end(), draws.names.begin(), draws.names.end());
    std::vector<std::vector<std::string>> rows;
    for (int c = 0; c < draws.chains; ++c) {
      for (long i = 0; i < draws.iterations; ++i) {
        std::vector<std::string> row{std::to_string(c + 1), std::to_string(i + 1)};
        for (std::size_t p = 0; p < draws.n_params(); ++p)
          row.push_back(fmt17(draws.value(c, i, p)));
        rows.push_back(std::move(row));
      }
    }
    write_csv(dir + "draws.csv", header, rows);
  }

  // Plot data: Rhat/ESS histograms, per-subject latent interval dot plots,
  // and the bivariate draws of the two second-stage latent coefficients.
  const Histogram rhat_hist = histogram(report.rhat);
  const Histogram ess_hist = histogram(report.ess);
  write_histogram_csv(dir + "plot_rhat_hist.csv", rhat_hist);
  write_histogram_csv(dir + "plot_ess_hist.csv", ess_hist);

  std::vector<std::string> subj_labels;
  std::vector<double> sig_med, sig_lo, sig_hi, u_med, u_lo, u_hi;
  {
    std::vector<std::vector<std::string>> sig_rows, u_rows;
    for (int j = 0; j < layout.n_subjects(); ++j) {
      const std::string label = data.repeated.subject_labels.empty()
                                    ? std::to_string(j + 1)
                                    : data.repeated.subject_labels[static_cast<std::size_t>(j)];
      const auto sig = summarize(draws.pooled(layout.s(j)), 0.95);
      const auto u = summarize(draws.pooled(layout.u(j)), 0.95);
      sig_rows.push_back({label, fmt17(sig.median), fmt17(sig.ci_low), fmt17(sig.ci_high)});
      u_rows.push_back({label, fmt17(u.median), fmt17(u.ci_low), fmt17(u.ci_high)});
      subj_labels.push_back(label);
      sig_med.push_back(sig.median);
      sig_lo.push_back(sig.ci_low);
      sig_hi.push_back(sig.ci_high);
      u_med.push_back(u.median);
      u_lo.push_back(u.ci_low);
      u_hi.push_back(u.ci_high);
    }
    write_csv(dir + "plot_subject_sigma.csv", {"subject", "median", "ci_low", "ci_high"},
              sig_rows);
    write_csv(dir + "plot_subject_u.csv", {"subject", "median", "ci_low", "ci_high"},
              u_rows);
  }

  std::vector<double> a1 = draws.pooled(draws.param_index("Yalpha_1"));
  std::vector<double> a2;
  {
    std::vector<std::string> header{"Yalpha_1"};
    if (design.use_latent_mean) {
      a2 = draws.pooled(draws.param_index("Yalpha_2"));
      header.push_back("Yalpha_2");
    }
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < a1.size(); ++i) {
      std::vector<std::string> row{fmt17(a1[i])};
      if (!a2.empty()) row.push_back(fmt17(a2[i]));
      rows.push_back(std::move(row));
    }
    write_csv(dir + "plot_alpha_pairs.csv", header, rows);
  }

  if (opt.render_plots) {
    write_histogram_svg(dir + "plot_rhat_hist.svg", rhat_hist, "Rhat");
    write_histogram_svg(dir + "plot_ess_hist.svg", ess_hist, "N_Effective");
    write_dotplot_svg(dir + "plot_subject_sigma.svg", subj_labels, sig_med, sig_lo,
                      sig_hi, "latent SD by subject");
    write_dotplot_svg(dir + "plot_subject_u.svg", subj_labels, u_med, u_lo, u_hi,
                      "latent mean by subject");
    if (!a2.empty())
      write_scatter_svg(dir + "plot_alpha_pairs.svg", a1, a2, "Yalpha_1 vs Yalpha_2");
  }

  return report.converged ? 0 : 2;
}

// ---------------------------------------------------------------------------
// simulate

int simulate_command(const std::string& conditions_arg, int replications,
                     const std::string& estimator_arg, std::uint64_t seed,
                     const std::string& out_dir, int threads, int thin_override,
                     int warmup_override, long iter_override) {
  std::vector<SimCondition> conditions;
  if (conditions_arg == "paper-grid") {
    conditions = SimCondition::paper_grid(replications, seed);
  } else {
    std::string rest = conditions_arg;
    while (!rest.empty()) {
      const std::size_t pos = rest.find(',');
      const std::string id = rest.substr(0, pos);
      conditions.push_back(SimCondition::from_id(id, replications, seed));
      if (pos == std::string::npos) break;
      rest = rest.substr(pos + 1);
    }
  }
  if (conditions.empty()) fail("config", "no simulation conditions given");
  for (auto& c : conditions) {
    if (thin_override > 0) {
      c.thin = thin_override;
      c.total_iterations = 1000L * c.thin;
    }
    if (warmup_override > 0) c.warmup = warmup_override;
    if (iter_override > 0) c.total_iterations = iter_override;
    c.validate();
  }

  const Estimator estimator =
      estimator_arg == "bayes" ? Estimator::Bayesian : Estimator::ISDM;
  const StudyResult result = run_study(conditions, estimator, threads);

  fs::create_directories(out_dir);
  write_records_csv(out_dir + "/records.csv", result);
  write_metrics_csv(out_dir + "/metrics.csv", result);
  write_table_csvs(out_dir, result);

  json study{{"estimator", estimator_arg},
             {"seed", seed},
             {"replications", replications},
             {"conditions", json::array()}};
  for (const auto& c : conditions)
    study["conditions"].push_back(json{{"id", c.id()},
                                       {"thin", c.thin},
                                       {"warmup", c.warmup},
                                       {"total_iterations", c.total_iterations}});
  std::ofstream out(out_dir + "/study.json");
  if (!out) fail("io", "cannot write study.json");
  out << study.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// baseline and diagnose

int baseline_command(const std::string& within_csv, const std::string& between_csv,
                     const std::string& out_dir, double ci_level) {
  const IngestResult data = ingest(within_csv, between_csv, false);
  const OlsFit fit = isd_model(data.repeated, data.between, ci_level);

  fs::create_directories(out_dir);
  std::vector<std::string> coef_names{"Intercept"};
  for (const auto& n : data.between_covariate_names) coef_names.push_back(n);
  coef_names.push_back("ISD");
  coef_names.push_back("Mean");

  json coefs = json::array();
  for (std::size_t c = 0; c < fit.coefs.size(); ++c)
    coefs.push_back(json{{"name", coef_names[c]},
                         {"estimate", fit.coefs[c]},
                         {"se", fit.standard_errors[c]},
                         {"ci_low", fit.ci_low[c]},
                         {"ci_high", fit.ci_high[c]}});
  json summary{{"model", "isdm"},
               {"ci_level", ci_level},
               {"residual_sd", fit.residual_sd},
               {"df", fit.df},
               {"coefficients", coefs}};
  std::ofstream out(out_dir + "/isdm.json");
  if (!out) fail("io", "cannot write isdm.json");
  out << summary.dump(2) << "\n";

  const SubjectIndex index = SubjectIndex::build(data.repeated);
  std::vector<std::vector<std::string>> rows;
  for (int j = 0; j < data.repeated.n_subjects(); ++j) {
    const std::size_t sj = static_cast<std::size_t>(j);
    std::vector<double> series;
    for (std::size_t k = index.offsets[sj]; k < index.offsets[sj + 1]; ++k)
      series.push_back(data.repeated.value[index.order[k]]);
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(series.size());
    const std::string label = data.repeated.subject_labels.empty()
                                  ? std::to_string(j + 1)
                                  : data.repeated.subject_labels[sj];
    rows.push_back({label, std::to_string(series.size()), fmt17(mean),
                    fmt17(isd(series)), fmt17(rmssd(series))});
  }
  write_csv(out_dir + "/subjects.csv", {"id", "n_obs", "mean", "isd", "rmssd"}, rows);
  return 0;
}

int diagnose_command(const std::string& draws_csv, const std::string& out_dir,
                     const std::string& focal) {
  const CsvTable table = CsvTable::read(draws_csv);
  if (table.column("chain") != 0 || table.column("iteration") != 1)
    fail("data", draws_csv + ": expected leading chain,iteration columns");

  PosteriorDraws draws;
  draws.names.assign(table.header.begin() + 2, table.header.end());
  std::map<int, long> per_chain;
  for (const auto& row : table.rows)
    ++per_chain[static_cast<int>(parse_double(row[0], draws_csv, 0))];
  draws.chains = static_cast<int>(per_chain.size());
  draws.iterations = per_chain.empty() ? 0 : per_chain.begin()->second;
  for (const auto& [chain, count] : per_chain)
    if (count != draws.iterations)
      fail("data", draws_csv + ": chains have unequal lengths");

  draws.values.resize(table.rows.size() * draws.names.size());
  std::map<int, long> seen;
  std::size_t row_no = 1;
  for (const auto& row : table.rows) {
    ++row_no;
    const int chain = static_cast<int>(parse_double(row[0], draws_csv, row_no));
    const long it = seen[chain]++;
    const int chain_pos = static_cast<int>(std::distance(
        per_chain.begin(), per_chain.find(chain)));
    for (std::size_t p = 0; p < draws.names.size(); ++p)
      draws.values[(static_cast<std::size_t>(chain_pos) * static_cast<std::size_t>(draws.iterations) +
                    static_cast<std::size_t>(it)) *
                       draws.names.size() +
                   p] = parse_double(row[2 + p], draws_csv, row_no);
  }

  const DiagnosticsReport report = convergence_report(draws, focal);
  fs::create_directories(out_dir);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t p = 0; p < draws.n_params(); ++p)
    rows.push_back({draws.names[p], fmt17(report.rhat[p]), fmt17(report.ess[p])});
  write_csv(out_dir + "/diagnostics.csv", {"name", "rhat", "ess"}, rows);
  write_histogram_csv(out_dir + "/plot_rhat_hist.csv", histogram(report.rhat));
  write_histogram_csv(out_dir + "/plot_ess_hist.csv", histogram(report.ess));
  return report.converged ? 0 : 2;
}

}  // namespace

// ---------------------------------------------------------------------------
// ingestion

IngestResult ingest(const std::string& within_csv, const std::string& between_csv,
                    bool need_mediator, const std::string& mediator_column) {
  const CsvTable within = CsvTable::read(within_csv);
  const CsvTable between = CsvTable::read(between_csv);

  if (within.header.size() < 2 || within.header[0] != "id" ||
      within.header[1] != "value")
    fail("data", within_csv + ": header must start with id,value");
  if (between.header.size() < 2 || between.header[0] != "id")
    fail("data", between_csv + ": header must start with id,outcome");

  IngestResult out;

  // Between file: subjects are indexed densely in file order.
  int mediator_col = -1;
  if (need_mediator) {
    if (!mediator_column.empty()) {
      mediator_col = between.column(mediator_column);
      if (mediator_col < 0)
        fail("config", between_csv + ": no column named " + mediator_column);
    } else if (between.column("mediator") >= 0) {
      mediator_col = between.column("mediator");
    } else if (between.header.size() >= 3) {
      mediator_col = 2;
    } else {
      fail("config", between_csv + ": mediation design needs a mediator column");
    }
    out.mediator_name = between.header[static_cast<std::size_t>(mediator_col)];
  }
  for (std::size_t c = 2; c < between.header.size(); ++c)
    if (static_cast<int>(c) != mediator_col)
      out.between_covariate_names.push_back(between.header[c]);

  std::map<std::string, int> subject_of;
  std::vector<std::string> labels;
  if (need_mediator) out.between.mediator.emplace();
  std::size_t row_no = 1;
  for (const auto& row : between.rows) {
    ++row_no;
    const std::string& id = row[0];
    if (subject_of.count(id))
      fail("data", between_csv + ": row " + std::to_string(row_no) +
                       ": duplicated id '" + id + "'");
    subject_of[id] = static_cast<int>(labels.size());
    labels.push_back(id);
    out.between.outcome.push_back(parse_double(row[1], between_csv, row_no));
    if (need_mediator)
      out.between.mediator->push_back(
          parse_double(row[static_cast<std::size_t>(mediator_col)], between_csv, row_no));
    for (std::size_t c = 2; c < between.header.size(); ++c)
      if (static_cast<int>(c) != mediator_col)
        out.between.covariates.push_back(parse_double(row[c], between_csv, row_no));
  }
  out.between.n_covariates = out.between_covariate_names.size();

  // Within file.
  for (std::size_t c = 2; c < within.header.size(); ++c)
    out.within_covariate_names.push_back(within.header[c]);
  out.repeated.n_covariates = out.within_covariate_names.size();
  out.repeated.subject_labels = labels;

  std::set<std::string> unknown;
  std::vector<char> has_rows(labels.size(), 0);
  row_no = 1;
  for (const auto& row : within.rows) {
    ++row_no;
    const auto it = subject_of.find(row[0]);
    if (it == subject_of.end()) {
      unknown.insert(row[0]);
      continue;
    }
    has_rows[static_cast<std::size_t>(it->second)] = 1;
    out.repeated.subject.push_back(it->second);
    out.repeated.value.push_back(parse_double(row[1], within_csv, row_no));
    for (std::size_t c = 2; c < within.header.size(); ++c)
      out.repeated.covariates.push_back(parse_double(row[c], within_csv, row_no));
  }
  if (!unknown.empty()) {
    std::string ids;
    for (const auto& id : unknown) ids += (ids.empty() ? "" : ", ") + id;
    fail("data", within_csv + ": subjects with no between-file row: " + ids);
  }
  std::string missing;
  for (std::size_t j = 0; j < labels.size(); ++j)
    if (!has_rows[j]) missing += (missing.empty() ? "" : ", ") + labels[j];
  if (!missing.empty())
    fail("data", between_csv + ": subjects with no within-file rows: " + missing);

  // Constant covariate columns are rejected here with their names; rank
  // checks happen again inside validate().
  auto reject_constant = [](const std::vector<double>& values, std::size_t ncol,
                            const std::vector<std::string>& names,
                            const std::string& file) {
    for (std::size_t c = 0; c < ncol; ++c) {
      bool constant = true;
      for (std::size_t i = 1; i * ncol + c < values.size() && constant; ++i)
        constant = values[i * ncol + c] == values[c];
      if (constant)
        fail("data", file + ": covariate column '" + names[c] +
                         "' is constant (the intercept is implicit)");
    }
  };
  if (out.repeated.n_covariates > 0)
    reject_constant(out.repeated.covariates, out.repeated.n_covariates,
                    out.within_covariate_names, within_csv);
  if (out.between.n_covariates > 0)
    reject_constant(out.between.covariates, out.between.n_covariates,
                    out.between_covariate_names, between_csv);

  out.repeated.validate();
  out.between.validate(labels.size());
  return out;
}

// ---------------------------------------------------------------------------
// argument parsing

int run(const std::vector<std::string>& args) {
  CLI::App app{"hierarchical Bayesian variability analysis"};
  app.name("varmod");
  app.require_subcommand(1);

  FitOptions fit_opt;
  auto add_fit_flags = [&](CLI::App* cmd) {
    cmd->add_option("--within", fit_opt.within_csv, "within-person CSV (id,value[,covariate...])")
        ->required();
    cmd->add_option("--between", fit_opt.between_csv,
                    "between-person CSV (id,outcome[,mediator][,covariate...])")
        ->required();
    cmd->add_option("--out", fit_opt.out_dir, "output directory")->required();
    cmd->add_option("--chains", fit_opt.chains);
    cmd->add_option("--warmup", fit_opt.warmup);
    cmd->add_option("--iter", fit_opt.iter,
                    "total post-warmup iterations across chains (before thinning)");
    cmd->add_option("--thin", fit_opt.thin);
    cmd->add_option("--seed", fit_opt.seed);
    cmd->add_option("--ci", fit_opt.ci_level);
    cmd->add_option("--focal", fit_opt.focal);
    cmd->add_option("--use-latent-mean", fit_opt.use_latent_mean);
    cmd->add_flag("--draws", fit_opt.emit_draws, "emit draws.csv");
    cmd->add_flag("--render-plots", fit_opt.render_plots, "emit SVG plots");
    cmd->add_option("--threads", fit_opt.threads);
    cmd->add_option("--mediator", fit_opt.mediator_column, "mediator column name");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit the variability model");
  add_fit_flags(fit);
  fit->add_option("--design", fit_opt.design)
      ->check(CLI::IsMember({"v2y", "v2m2y"}));

  CLI::App* mediate = app.add_subcommand("mediate", "fit the mediation design");
  add_fit_flags(mediate);

  std::string conditions = "paper-grid";
  int replications = 100;
  std::string estimator = "isdm";
  std::uint64_t sim_seed = 1;
  std::string sim_out;
  int sim_threads = 0;
  int thin_override = 0;
  int warmup_override = 0;
  long iter_override = 0;
  CLI::App* simulate = app.add_subcommand("simulate", "run the Monte Carlo study");
  simulate->add_option("--conditions", conditions,
                       "'paper-grid' or comma-separated cell ids (e.g. lo_N80_k5_a20)");
  simulate->add_option("--replications", replications);
  simulate->add_option("--estimator", estimator)->check(CLI::IsMember({"bayes", "isdm"}));
  simulate->add_option("--seed", sim_seed);
  simulate->add_option("--out", sim_out)->required();
  simulate->add_option("--threads", sim_threads);
  simulate->add_option("--thin", thin_override, "override the per-condition thinning");
  simulate->add_option("--warmup", warmup_override);
  simulate->add_option("--iter", iter_override);

  std::string base_within, base_between, base_out;
  double base_ci = 0.95;
  CLI::App* baseline = app.add_subcommand("baseline", "classical ISD regression");
  baseline->add_option("--within", base_within)->required();
  baseline->add_option("--between", base_between)->required();
  baseline->add_option("--out", base_out)->required();
  baseline->add_option("--ci", base_ci);

  std::string diag_draws, diag_out, diag_focal = "Yalpha_1";
  CLI::App* diagnose = app.add_subcommand("diagnose", "diagnostics from a draws.csv");
  diagnose->add_option("--draws-file", diag_draws)->required();
  diagnose->add_option("--out", diag_out)->required();
  diagnose->add_option("--focal", diag_focal);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << std::flush;
      return 0;
    }
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  }

  try {
    if (fit->parsed()) return fit_pipeline(fit_opt);
    if (mediate->parsed()) {
      fit_opt.design = "v2m2y";
      return fit_pipeline(fit_opt);
    }
    if (simulate->parsed())
      return simulate_command(conditions, replications, estimator, sim_seed, sim_out,
                              sim_threads, thin_override, warmup_override,
                              iter_override);
    if (baseline->parsed())
      return baseline_command(base_within, base_between, base_out, base_ci);
    if (diagnose->parsed()) return diagnose_command(diag_draws, diag_out, diag_focal);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace varmod::cli
