#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdlmri/commands.hpp"

using namespace cdlmri;

namespace {

struct Subcommand {
  CLI::App* app;
  std::map<std::string, std::string> flags;  // key -> value as typed
  std::string config;
};

const char* describe(const std::string& key) {
  static const std::map<std::string, const char*> help = {
      {"target", "target contrast image (PGM)"},
      {"guidance", "guidance contrast image (PGM)"},
      {"estimate", "image to score (PGM)"},
      {"mask_file", "use this mask instead of generating one"},
      {"measurements", "undersampled k-space from `simulate`"},
      {"dictionary", "dictionary file from `reconstruct`"},
      {"mask_kind", "cartesian1d or random2d"},
      {"fold", "undersampling factor"},
      {"mask_seed", "mask RNG seed"},
      {"density_power", "variable-density exponent"},
      {"center_fraction", "fully sampled central fraction"},
      {"rows", "image rows"},
      {"cols", "image columns"},
      {"phantom_seed", "phantom RNG seed"},
      {"output_dir", "directory for the outputs"},
      {"single_contrast", "ignore the guidance (ablation)"},
      {"gallery", "also write gallery.pgm"},
      {"trace_timing", "record wall-clock times in trace.csv"},
      {"threads", "worker threads, 0 = default"},
      {"patch_side", "patch side length"},
      {"K", "atoms per dictionary"},
      {"s_c", "common sparsity"},
      {"s_1", "target-unique sparsity"},
      {"s_2", "guidance-unique sparsity"},
      {"L", "dictionary-learning sweeps per cycle"},
      {"T", "reconstruction cycles"},
      {"stride", "patch stride"},
      {"nu1", "k-space consistency weight, inf = exact"},
      {"eps_c_start", "common threshold, first cycle"},
      {"eps_c_end", "common threshold, last cycle"},
      {"eps_1_start", "unique threshold, first cycle"},
      {"eps_1_end", "unique threshold, last cycle"},
      {"training_subset", "training patches per cycle, 0 = up to 10000"},
      {"seed", "training RNG seed"},
      {"omp_mode", "exact_ls or correlation"},
      {"warm_start", "reuse dictionaries across cycles"},
      {"single_sparsity", "single-contrast sparsity, 0 = s_c + s_1"},
  };
  const auto it = help.find(key);
  return it == help.end() ? "" : it->second;
}

Subcommand& add(CLI::App& root, std::vector<std::unique_ptr<Subcommand>>& subs, const std::string& name,
                const std::string& what, const std::vector<std::string>& keys) {
  auto& s = *subs.emplace_back(std::make_unique<Subcommand>());
  s.app = root.add_subcommand(name, what);
  s.app->add_option("--config", s.config, "key = value file; flags given here override it")->check(CLI::ExistingFile);
  const KeyValues defaults = to_key_values(ExperimentConfig{});
  for (const auto& key : keys) {
    auto* opt = s.app->add_option_function<std::string>(
        "--" + key, [&s, key](const std::string& v) { s.flags[key] = v; }, describe(key));
    opt->default_str(defaults.at(key));
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App root{"Guided MRI reconstruction with coupled dictionary learning"};
  root.require_subcommand(1);

  const std::vector<std::string> recon_keys = {
      "patch_side", "K", "s_c", "s_1", "s_2", "L", "T", "stride", "nu1", "eps_c_start", "eps_c_end",
      "eps_1_start", "eps_1_end", "training_subset", "seed", "omp_mode", "warm_start", "single_sparsity"};
  const std::vector<std::string> mask_keys = {"mask_file", "mask_kind", "fold", "mask_seed", "density_power",
                                              "center_fraction"};
  auto join = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  std::vector<std::unique_ptr<Subcommand>> subs;
  auto& simulate = add(root, subs, "simulate", "undersample a target image",
                       join({"target", "output_dir", "threads"}, mask_keys));
  auto& reconstruct =
      add(root, subs, "reconstruct", "reconstruct the target from undersampled k-space",
          join(join({"target", "guidance", "measurements", "output_dir", "single_contrast", "gallery", "trace_timing",
                     "threads"},
                    mask_keys),
               recon_keys));
  auto& evaluate = add(root, subs, "evaluate", "score an image against the target",
                       {"target", "estimate", "output_dir"});
  auto& mask_gen = add(root, subs, "mask-gen", "generate a sampling mask",
                       join({"rows", "cols", "output_dir"}, mask_keys));
  auto& phantom_gen = add(root, subs, "phantom-gen", "generate a synthetic target/guidance pair",
                          {"rows", "cols", "phantom_seed", "output_dir"});
  auto& gallery = add(root, subs, "gallery", "render the atoms of a dictionary file",
                      {"dictionary", "output_dir"});

  CLI11_PARSE(root, argc, argv);

  for (const auto& s : subs) {
    if (!s->app->parsed()) continue;
    return run_command(
        [&] {
          ExperimentConfig e;
          if (!s->config.empty()) load_config_file(e, s->config);
          KeyValues flags(s->flags.begin(), s->flags.end());
          if (const KeyValues rest = apply_key_values(e, flags); !rest.empty())
            throw std::invalid_argument("unknown option '" + rest.begin()->first + "'");
          if (s.get() == &simulate) cmd_simulate(e, std::cout);
          else if (s.get() == &reconstruct) cmd_reconstruct(e, std::cout);
          else if (s.get() == &evaluate) cmd_evaluate(e, std::cout);
          else if (s.get() == &mask_gen) cmd_mask_gen(e, std::cout);
          else if (s.get() == &phantom_gen) cmd_phantom_gen(e, std::cout);
          else if (s.get() == &gallery) cmd_gallery(e, std::cout);
        },
        std::cerr);
  }
  return kExitValidation;
}
