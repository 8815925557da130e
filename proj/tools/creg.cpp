#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "creg/cli.hpp"
#include "creg/error.hpp"

using namespace creg;

namespace {

template <class E>
std::map<std::string, E> names(std::initializer_list<E> values) {
  std::map<std::string, E> out;
  for (E v : values) out.emplace(std::string(to_string(v)), v);
  return out;
}

struct Flags {
  cli::RunConfig cfg;
  std::vector<RelevanceSource> methods;
  std::string sigma_rule = "radius";
  bool unbounded = false;
  bool no_contrastive = false;
  std::string mode = "pred";
  std::string family = "gaussian_blob";
};

void common(CLI::App* sub, Flags& f, bool needs_manifest) {
  auto* m = sub->add_option("-m,--manifest", f.cfg.manifest, "sample manifest JSON");
  if (needs_manifest) m->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--out", f.cfg.out_dir, "output directory")->capture_default_str();
  sub->add_option("-j,--workers", f.cfg.workers, "worker threads (default: CREG_WORKERS or all cores)");
  sub->add_option("--seed", f.cfg.method.seed, "seed for random baselines and synthesis")->capture_default_str();
  sub->add_option("-K,--sectors", f.cfg.polar.sectors, "compass sectors")->capture_default_str();
  sub->add_option("--sigma-r", f.cfg.polar.sigma_r, "Gaussian spread ratio")->capture_default_str();
  sub->add_option("--rho-r", f.cfg.polar.rho_r, "truncation radius ratio")->capture_default_str();
  sub->add_option("--sigma-rule", f.sigma_rule, "radius: sigma = sigma_r * r_max; distance: also times d_AB")
      ->check(CLI::IsMember({"radius", "distance"}))
      ->capture_default_str();
}

void method_flags(CLI::App* sub, Flags& f, bool many) {
  auto sources = names({RelevanceSource::Creg, RelevanceSource::GradCam, RelevanceSource::GradNorm,
                        RelevanceSource::Ig, RelevanceSource::Rollout, RelevanceSource::SingleLayer,
                        RelevanceSource::Random, RelevanceSource::Oracle});
  auto* opt = sub->add_option("--method", f.methods, many ? "methods to evaluate" : "relevance method")
                  ->transform(CLI::CheckedTransformer(sources));
  if (!many) opt->expected(1);
  sub->add_option("--mode", f.mode, "contrastive target mode")
      ->check(CLI::IsMember({"gt", "pred"}))
      ->capture_default_str();
  sub->add_option("--layers", f.cfg.method.creg.layers, "hidden-state layers (negative index)")->delimiter(',');
  sub->add_flag("--no-contrastive", f.no_contrastive, "differentiate the plain ground-truth logit");
  sub->add_option("--baseline-layer", f.cfg.method.baseline_layer, "layer for single-layer baselines")
      ->capture_default_str();
}

void bootstrap_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--resamples", f.cfg.bootstrap.resamples, "bootstrap resamples")->capture_default_str();
  sub->add_option("--ci-level", f.cfg.bootstrap.level, "confidence level")->capture_default_str();
  sub->add_option("--bootstrap-seed", f.cfg.bootstrap.seed, "bootstrap seed")->capture_default_str();
  sub->add_flag("--exclude-degenerate", f.cfg.exclude_degenerate, "drop samples whose compass carries no mass");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Directional relevance compass: attribution, metrics and occlusion tooling"};
  app.require_subcommand(1);
  Flags f;

  auto* attr = app.add_subcommand("attr", "per-sample compass distributions");
  common(attr, f, true);
  method_flags(attr, f, false);

  auto* eval = app.add_subcommand("eval", "DAE / EA table with bootstrap intervals");
  common(eval, f, true);
  method_flags(eval, f, true);
  bootstrap_flags(eval, f);

  auto* sweep = app.add_subcommand("baseline-sweep", "every method plus the ablation rows");
  common(sweep, f, true);
  method_flags(sweep, f, false);
  bootstrap_flags(sweep, f);

  auto* occ = app.add_subcommand("occlude", "sector occlusion plan and mask blobs");
  common(occ, f, true);
  occ->add_flag("--unbounded", f.unbounded, "extend wedges to the image border");

  auto* cos = app.add_subcommand("cos", "causal occlusion scores from re-inference responses");
  common(cos, f, true);
  cos->add_option("--responses", f.cfg.responses, "responses JSON (default: logits stored in the manifest)")
      ->check(CLI::ExistingFile);
  cos->add_flag("--unbounded", f.unbounded, "wedges were extended to the image border");

  auto* syn = app.add_subcommand("synth", "synthetic manifest or the analytic validation suite");
  common(syn, f, false);
  syn->add_option("-n,--count", f.cfg.synth.n, "samples")->capture_default_str();
  syn->add_option("--family", f.family, "relevance field family")
      ->check(CLI::IsMember({"point_mass", "gaussian_blob", "diffuse", "opposite_blob", "uniform_random"}))
      ->capture_default_str();
  syn->add_flag("--cardinal", f.cfg.synth.cardinal, "place targets exactly on the axes");
  syn->add_option("--noise", f.cfg.synth.noise, "additive uniform noise amplitude")->capture_default_str();
  syn->add_option("--accuracy", f.cfg.synth.accuracy, "fraction of correct predictions")->capture_default_str();
  syn->add_flag("--baselines", f.cfg.synth.with_baselines, "also write attention, IG and GradCAM tensors");
  syn->add_flag("--scenes-only{false}", f.cfg.synth.with_tensors, "boxes and logits only");
  syn->add_option("--layers", f.cfg.method.creg.layers, "layers to fabricate")->delimiter(',');
  syn->add_flag("--validate", f.cfg.synth.validate, "run the validation suite and write validation.json");
  bootstrap_flags(syn, f);

  auto* plot = app.add_subcommand("plot", "SVG compass plots from attr records");
  plot->add_option("inputs", f.cfg.inputs, "compass record files or directories")->required();
  plot->add_option("-o,--out", f.cfg.out_dir, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  f.cfg.subcommand = app.get_subcommands().front()->get_name();
  if (!f.methods.empty()) f.cfg.methods = f.methods;
  f.cfg.polar.sigma_rule = f.sigma_rule == "distance" ? SigmaRule::DistanceScaled : SigmaRule::RadiusScaled;
  f.cfg.method.mode = f.mode == "gt" ? TargetMode::GtTargeted : TargetMode::PredTargeted;
  f.cfg.synth.family = *synth::parse_family(f.family);
  f.cfg.bounded_occlusion = !f.unbounded;
  f.cfg.method.creg.contrastive = !f.no_contrastive;

  try {
    const auto summary = cli::run(f.cfg);
    for (const auto& n : summary.notices) std::cerr << "note: " << n << '\n';
    for (const auto& s : summary.skipped) std::cerr << "skipped: " << s << '\n';
    std::cout << f.cfg.subcommand << ": " << summary.processed << " processed, " << summary.skipped.size()
              << " skipped, " << summary.written.size() << " files written to " << f.cfg.out_dir.string() << '\n';
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
