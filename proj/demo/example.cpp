// Fits the bundled tiny data set and prints risk summaries for a few new rows.
//   example <data dir>
#include <iostream>
#include <map>

#include "sdpm/inference.hpp"
#include "sdpm/sampler.hpp"

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data";
  try {
    const auto schema = sdpm::load_schema(dir + "/tiny_schema.json");
    const auto raw = sdpm::load_csv(dir + "/tiny.csv", schema);

    sdpm::SamplerConfig cfg;
    cfg.variant = sdpm::ModelVariant::sdpm_mnar;
    cfg.n_iter = 1000;
    cfg.burn_in = 300;
    cfg.thin = 5;
    cfg.mixture.H = 20;
    cfg.seed = 11;
    const auto data = sdpm::prepare_dataset(raw, cfg.variant);
    const auto chain = sdpm::run_chain(data, cfg, 0);

    const auto sel = sdpm::selection_metrics(chain);
    std::cout << "posterior inclusion probabilities\n";
    for (std::size_t k = 0; k < sel.names.size(); ++k)
      std::cout << "  " << sel.names[k] << "  " << sel.inclusion[k] << '\n';

    const sdpm::Predictor pred(chain);
    const std::vector<std::map<std::string, double>> rows = {
        {{"age", 70}, {"sex", 1}, {"stage", 2}},
        {{"age", 48}, {"sex", 0}, {"stage", 0}, {"biomarker", 0.9}},
    };
    for (const auto& r : rows) {
      const auto s = pred.predict_one(sdpm::prepare_row(r, chain.schema), 10, 3).summary();
      std::cout << "log-risk mean " << s.mean << ", 95% interval [" << s.lo << ", " << s.hi << "]\n";
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
