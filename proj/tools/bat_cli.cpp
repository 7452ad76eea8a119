// Command-line front end for the samplers, solvers and experiments.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "bat/bottleneck_lab.hpp"
#include "bat/error.hpp"
#include "bat/hrr.hpp"
#include "bat/io.hpp"
#include "bat/linprog.hpp"
#include "bat/rng.hpp"
#include "bat/sampler.hpp"
#include "bat/toy_model.hpp"

namespace {

using namespace bat;

struct Globals {
  std::uint64_t seed = 0;
  std::string out = "-";
  std::size_t constraints = 20;
  std::size_t max_retries = 32;
  double tol = lp::kDefaultTolerance;
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
      if (!*file_) throw InvalidInput("cannot open '" + path + "' for writing");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<std::string> split(const std::string& text) {
  std::string spaced = text;
  std::replace(spaced.begin(), spaced.end(), ',', ' ');
  std::istringstream in(spaced);
  std::vector<std::string> out;
  for (std::string field; in >> field;) out.push_back(field);
  return out;
}

std::vector<double> parse_reals(const std::string& text) {
  std::vector<double> out;
  for (const std::string& f : split(text)) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(f, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f.size() || used == 0) throw InvalidInput("bad number '" + f + "'");
    out.push_back(x);
  }
  return out;
}

std::vector<std::uint32_t> parse_ids(const std::string& text) {
  std::vector<std::uint32_t> out;
  for (double x : parse_reals(text)) {
    if (x < 0 || x != static_cast<double>(static_cast<std::uint32_t>(x))) {
      throw InvalidInput("bad token id in '" + text + "'");
    }
    out.push_back(static_cast<std::uint32_t>(x));
  }
  return out;
}

std::string join(const std::vector<std::size_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? " " : "") + std::to_string(ids[i]);
  return out;
}

/// Method names without a parameter ("ba-epsilon") get a placeholder that is
/// valid for every bisectable kind.
SamplerSpec parse_target(const std::string& text) {
  return SamplerSpec::parse(text.find(':') == std::string::npos ? text + ":0.5" : text);
}

Eigen::MatrixXd gaussian(Rng& rng, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  }
  return m;
}

std::string num(double x) { return format_real(x); }

void print_distribution(std::ostream& out, const Distribution& p) {
  for (std::size_t i = 0; i < p.size(); ++i) out << (i ? " " : "") << num(p[i]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Basis-aware truncation sampling tools"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--out", g.out, "Output path, - for stdout");
  app.add_option("--constraints", g.constraints, "Basis-aware constraint count c")
      ->check(CLI::PositiveNumber);
  app.add_option("--max-retries", g.max_retries, "BAT rejection retries before fallback")
      ->check(CLI::PositiveNumber);
  app.add_option("--tol", g.tol, "Solver or fit tolerance")->check(CLI::PositiveNumber);

  // make-toy
  auto* make_toy = app.add_subcommand("make-toy", "Build a tabular toy model (and corpus)");
  std::size_t toy_v = 0, toy_d = 0, toy_m = 1, toy_docs = 1, toy_doc_len = 1000;
  double toy_support = 1.0;
  std::string toy_corpus;
  make_toy->add_option("--v", toy_v, "Vocabulary size")->required();
  make_toy->add_option("--d", toy_d, "Hidden size")->required();
  make_toy->add_option("--m", toy_m, "Context order");
  make_toy->add_option("--support-frac", toy_support, "Ground-truth support fraction");
  make_toy->add_option("--corpus", toy_corpus, "Also write a corpus sampled from the ground truth");
  make_toy->add_option("--docs", toy_docs, "Corpus documents");
  make_toy->add_option("--doc-len", toy_doc_len, "Tokens per document after the first m");

  // sample
  auto* sample = app.add_subcommand("sample", "Generate tokens from a model");
  std::string model_path, rule_text, prefix_text;
  std::size_t length = 100;
  bool audit = false;
  sample->add_option("--model", model_path, "Model file (.bam)")->required();
  sample->add_option("--rule", rule_text, "Rule, e.g. eta:0.002 or ba-eta:0.002 (ba-nucleus is experimental)")->required();
  sample->add_option("--len", length, "Tokens to generate");
  sample->add_option("--prefix", prefix_text, "Prefix token ids");
  sample->add_flag("--audit", audit, "Check each BAT token against the full candidate set");

  // candidates
  auto* candidates = app.add_subcommand("candidates", "Threshold and BAT candidate sets at one step");
  double cand_delta = -1.0;
  bool allow_large = false;
  candidates->add_option("--model", model_path, "Model file (.bam)")->required();
  candidates->add_option("--prefix", prefix_text, "Prefix token ids");
  auto* cand_delta_opt = candidates->add_option("--delta", cand_delta, "Underestimation bound in nats");
  auto* cand_rule_opt = candidates->add_option("--rule", rule_text, "Threshold rule giving delta");
  cand_delta_opt->excludes(cand_rule_opt);
  candidates->add_flag("--allow-large", allow_large, "Lift the vocabulary guard");

  // hrr
  auto* hrr_cmd = app.add_subcommand("hrr", "Human-text rejection rate on a corpus");
  std::string corpus_path;
  std::size_t positions = 0;
  hrr_cmd->add_option("--model", model_path, "Model file (.bam)")->required();
  hrr_cmd->add_option("--corpus", corpus_path, "Corpus file (.tok)")->required();
  hrr_cmd->add_option("--rule", rule_text, "Sampler rule")->required();
  hrr_cmd->add_option("--positions", positions, "Sample this many positions (0 = all)");

  // match-param
  auto* match = app.add_subcommand("match-param", "Match a parameter to a reference HRR");
  std::string reference_text, target_text;
  double match_lo = 0.0, match_hi = 0.0;
  match->add_option("--model", model_path, "Model file (.bam)")->required();
  match->add_option("--corpus", corpus_path, "Corpus file (.tok)")->required();
  match->add_option("--reference", reference_text, "Reference rule with parameter")->required();
  match->add_option("--target", target_text, "Target method, e.g. ba-epsilon")->required();
  auto* lo_opt = match->add_option("--lo", match_lo, "Lower end of the search interval");
  auto* hi_opt = match->add_option("--hi", match_hi, "Upper end of the search interval");
  match->add_option("--positions", positions, "Sample this many positions (0 = all)");

  // eym
  auto* eym = app.add_subcommand("eym", "Best rank-r Frobenius error of a synthetic log-prob matrix");
  std::size_t eym_v = 64, eym_n = 96;
  std::string ranks_text = "1";
  eym->add_option("--v", eym_v, "Rows (vocabulary)");
  eym->add_option("--n", eym_n, "Columns (prefixes)");
  eym->add_option("--ranks", ranks_text, "Ranks, comma separated");

  // rank-experiment
  auto* rank = app.add_subcommand("rank-experiment", "Numeric rank before and after truncation");
  std::size_t rank_v = 256, rank_d = 16, rank_n = 512;
  std::string rank_rule = "epsilon:0.0009";
  lab::RankOptions rank_options;
  rank->add_option("--v", rank_v, "Vocabulary size");
  rank->add_option("--d", rank_d, "Hidden size");
  rank->add_option("--n", rank_n, "Prefixes");
  rank->add_option("--rule", rank_rule, "Truncation rule");
  rank->add_option("--rel-tol", rank_options.rel_tol, "Relative singular value cutoff");
  rank->add_option("--sentinel", rank_options.sentinel, "Log value for truncated entries");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a hidden state to a target distribution");
  std::string weights_text, target_probs;
  fit->add_option("--model", model_path, "Take W from this model");
  fit->add_option("--weights", weights_text, "W as v comma-separated rows of a d = 1 matrix");
  fit->add_option("--target", target_probs, "Target distribution")->required();

  // toy-demo
  auto* toy_demo = app.add_subcommand("toy-demo", "Three-token example end to end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    Output output(g.out);
    std::ostream& out = output.stream();

    if (*make_toy) {
      if (g.out == "-") throw ConfigError("make-toy needs --out for the model file");
      ToyBuild built = build_toy_model(toy_v, toy_d, toy_m, g.seed, toy_support);
      // --out names the model; the summary goes to stdout.
      io::save_model(g.out, built.model);
      io::write_metadata(std::cout, {{"command", "make-toy"}, {"seed", std::to_string(g.seed)}});
      std::cout << "v,d,m,contexts,max_grad_norm\n"
                << toy_v << ',' << toy_d << ',' << toy_m << ',' << built.model.contexts.size() << ','
                << num(built.max_grad_norm) << '\n';
      if (!toy_corpus.empty()) {
        io::save_corpus(toy_corpus, sample_corpus(built.truth, toy_m, toy_docs, toy_doc_len, g.seed + 1));
      }
    } else if (*sample) {
      const ToyModel model = io::load_model(model_path);
      const SamplerSpec spec = SamplerSpec::parse(rule_text);
      const std::vector<std::uint32_t> prefix = parse_ids(prefix_text);
      GenerateOptions options{g.constraints, g.max_retries, g.tol, audit};
      const GenerateResult result = generate(model, prefix, spec, length, g.seed, options);
      io::write_metadata(out, {{"command", "sample"},
                               {"seed", std::to_string(g.seed)},
                               {"rule", spec.to_string()},
                               {"model", model_path},
                               {"audit_violations", std::to_string(result.audit_violations)}});
      out << "step,token,solver_calls,fastpath_hits,retries,fallback,audit_violation\n";
      for (std::size_t t = 0; t < result.steps.size(); ++t) {
        const GenerateStep& s = result.steps[t];
        out << t << ',' << s.token << ',' << s.diagnostics.solver_calls << ','
            << s.diagnostics.fastpath_hits << ',' << s.diagnostics.retries << ','
            << s.diagnostics.fallback << ',' << s.audit_violation << '\n';
      }
    } else if (*candidates) {
      const ToyModel model = io::load_model(model_path);
      const Distribution p = model.distribution(parse_ids(prefix_text));
      double delta_nats = cand_delta;
      if (*cand_rule_opt) {
        const double tau = threshold_for(TruncationRule::parse(rule_text), p);
        delta_nats = tau >= 1.0 ? std::numeric_limits<double>::infinity() : delta_from_tau(tau).nats();
      } else if (!*cand_delta_opt) {
        throw ConfigError("candidates needs --delta or --rule");
      }
      const Delta delta(delta_nats);
      const BasisConstraints basis = svd_reduce(model.w, std::min(g.constraints, model.hidden_size()));
      const std::vector<std::size_t> bat_set =
          candidate_set(p, basis, delta, {CandidateOptions{}.max_vocab, allow_large, g.tol});
      const CandidateSet thr = truncate(p, tau_from_delta(delta));
      io::write_metadata(out, {{"command", "candidates"},
                               {"delta", num(delta.nats())},
                               {"constraints", std::to_string(basis.count())},
                               {"model", model_path}});
      out << "token,p_hat,threshold_accept,bat_accept\n";
      for (std::size_t i = 0; i < p.size(); ++i) {
        out << i << ',' << num(p[i]) << ','
            << std::binary_search(thr.accepted.begin(), thr.accepted.end(), i) << ','
            << std::binary_search(bat_set.begin(), bat_set.end(), i) << '\n';
      }
    } else if (*hrr_cmd) {
      const ToyModel model = io::load_model(model_path);
      const Corpus corpus = io::load_corpus(corpus_path);
      const SamplerSpec spec = SamplerSpec::parse(rule_text);
      const HrrReport r = hrr(corpus, model, spec, {g.constraints, g.tol, positions, g.seed});
      io::write_metadata(out, {{"command", "hrr"},
                               {"seed", std::to_string(g.seed)},
                               {"rule", spec.to_string()},
                               {"corpus", corpus_path}});
      out << "method,parameter,rejected,total,hrr\n"
          << r.method << ',' << num(r.parameter) << ',' << r.rejected << ',' << r.total << ',' << num(r.hrr) << '\n';
    } else if (*match) {
      const ToyModel model = io::load_model(model_path);
      const Corpus corpus = io::load_corpus(corpus_path);
      const SamplerSpec reference = SamplerSpec::parse(reference_text);
      const SamplerSpec target = parse_target(target_text);
      const std::vector<HrrCase> cases = collect_cases(corpus, model, {g.constraints, g.tol, positions, g.seed});
      const BasisConstraints basis = svd_reduce(model.w, std::min(g.constraints, model.hidden_size()));
      MatchOptions options;
      if (*lo_opt) options.lo = match_lo;
      if (*hi_opt) options.hi = match_hi;
      options.tol = g.tol;
      const MatchResult r = match_param(cases, basis, reference, target, options);
      io::write_metadata(out, {{"command", "match-param"},
                               {"seed", std::to_string(g.seed)},
                               {"rule", reference.to_string()},
                               {"target", r.matched.method}});
      out << "reference,reference_parameter,reference_hrr,target,matched_parameter,matched_hrr,"
             "iterations,converged\n"
          << r.reference.method << ',' << num(r.reference.parameter) << ',' << num(r.reference.hrr) << ','
          << r.matched.method << ',' << num(r.parameter) << ',' << num(r.matched.hrr) << ',' << r.iterations << ','
          << r.converged << '\n';
      if (!r.converged) return 3;
    } else if (*eym) {
      const lab::CondDistMatrix a = lab::synth_true_matrix(eym_v, eym_n, 1.0, g.seed);
      io::write_metadata(out, {{"command", "eym"},
                               {"seed", std::to_string(g.seed)},
                               {"shape", std::to_string(eym_v) + "x" + std::to_string(eym_n)}});
      out << "rank,residual\n";
      for (std::uint32_t r : parse_ids(ranks_text)) out << r << ',' << num(lab::eym_residual(a, r)) << '\n';
    } else if (*rank) {
      const TruncationRule rule = TruncationRule::parse(rank_rule);
      Rng rng(g.seed);
      const SoftmaxMatrix w(gaussian(rng, rank_v, rank_d));
      const Eigen::MatrixXd hidden = gaussian(rng, rank_d, rank_n);
      const lab::RankExperiment r = lab::truncated_rank_experiment(w, hidden, rule, rank_options);
      io::write_metadata(out, {{"command", "rank-experiment"},
                               {"seed", std::to_string(g.seed)},
                               {"rule", rule.to_string()},
                               {"rel_tol", num(rank_options.rel_tol)}});
      out << "prefixes,pre_rank,post_rank\n";
      for (const lab::RankPoint& pt : r.curve) out << pt.prefixes << ',' << pt.pre_rank << ',' << pt.post_rank << '\n';
    } else if (*fit) {
      Eigen::MatrixXd weights;
      if (!model_path.empty()) {
        weights = io::load_model(model_path).w.weights();
      } else if (!weights_text.empty()) {
        const std::vector<double> rows = parse_reals(weights_text);
        weights = Eigen::Map<const Eigen::VectorXd>(rows.data(), static_cast<Eigen::Index>(rows.size()));
      } else {
        weights = toy_demo_weights();
      }
      const SoftmaxMatrix w(std::move(weights));
      const lab::FitReport r = lab::fit_hidden_state(w, Distribution::from_probs(parse_reals(target_probs)), g.tol);
      io::write_metadata(out, {{"command", "fit"}, {"tol", num(g.tol)}});
      out << "iterations,grad_norm,ce,converged,h\n"
          << r.iterations << ',' << num(r.grad_norm) << ',' << num(r.ce) << ',' << r.converged << ',';
      for (Eigen::Index j = 0; j < r.h.size(); ++j) out << (j ? " " : "") << num(r.h[j]);
      out << '\n';
      if (!r.converged) return 3;
    } else if (*toy_demo) {
      const SoftmaxMatrix w(toy_demo_weights());
      Eigen::VectorXd h(1);
      h << 2.55;
      const Distribution p = w.distribution(h);
      const Delta delta(std::log(1.9));
      const BasisConstraints basis = svd_reduce(w, 1);
      const SupportProver prover(p, basis, delta, g.tol);
      io::write_metadata(out, {{"command", "toy-demo"}, {"delta", "ln 1.9"}, {"constraints", "1"}});
      out << "# W^T = 0.55 0.71 0.29, h = 2.55\n# p_hat = ";
      print_distribution(out, p);
      out << "\n# tau = " << num(prover.fastpath_threshold()) << '\n';
      out << "token,p_hat,upper_bound,threshold_accept,bat_accept,witness\n";
      std::vector<std::size_t> bat_set;
      for (std::size_t i = 0; i < p.size(); ++i) {
        lp::FeasibilityProgram prog = prover.program();
        prog.fixed_zero = i;
        const lp::FeasibilityResult res = lp::solve_feasibility(prog, g.tol);
        const bool accepted = prover.proves(i);
        if (accepted) bat_set.push_back(i);
        out << i << ',' << num(p[i]) << ',' << num(prog.upper_bounds[i]) << ','
            << (p[i] >= prover.fastpath_threshold()) << ',' << accepted << ',';
        if (res.witness) print_distribution(out, *res.witness);
        out << '\n';
      }
      out << "# candidate set = {" << join(bat_set) << "}\n";
      if (bat_set != std::vector<std::size_t>{1, 2}) {
        std::cerr << "toy-demo: expected candidate set {1 2}, got {" << join(bat_set) << "}\n";
        return 3;
      }
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Refused& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
